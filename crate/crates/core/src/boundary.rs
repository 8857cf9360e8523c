//! Controllability boundary fit in the reduced 2-D state space.
//!
//! Level 1: a max-margin conic classifier, i.e. a soft-margin linear SVM
//! over the explicit quadratic feature map, solved by deterministic
//! pairwise dual updates. The separating surface is rewritten as a
//! general conic and reduced to principal axes. Level 2: the smallest
//! centroid/rotation perturbation of that conic for which no sample
//! labeled uncontrollable is classified controllable.

use serde::{Deserialize, Serialize};

use crate::config::{Level2, Svm};
use crate::dataset::ReducedGuidanceState;
use crate::error::{Error, Result};
use crate::ops;

/// Reduced 2-D state: s1 = S/v (range over horizontal speed),
/// s2 = H/w (altitude over descent rate). Both in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState2 {
    pub s1: f64,
    pub s2: f64,
}

/// Maps the 4-D reduced guidance state down to 2-D. Requires the
/// descending regime (v > 0, w > 0).
pub fn reduce(state: &ReducedGuidanceState) -> Result<ReducedState2> {
    if state.v <= 0.0 || state.w <= 0.0 {
        return Err(Error::UndefinedReduction { v: state.v, w: state.w });
    }
    Ok(ReducedState2 { s1: state.s / state.v, s2: state.h / state.w })
}

/// Quadratic feature map, fixed order.
pub fn featurize(s: &ReducedState2) -> [f64; 5] {
    [s.s1, s.s2, s.s1 * s.s1, s.s2 * s.s2, s.s1 * s.s2]
}

/// Soft-margin classifier over the conic features, raw feature space.
#[derive(Debug, Clone)]
pub struct Level1Model {
    pub c: [f64; 5],
    pub b: f64,
    pub gamma: f64,
    pub support: Vec<usize>,
    pub slack: Vec<f64>,
}

impl Level1Model {
    pub fn decision(&self, z: &[f64; 5]) -> f64 {
        self.c.iter().zip(z).map(|(c, z)| c * z).sum::<f64>() + self.b
    }

    pub fn classify(&self, s: &ReducedState2) -> i8 {
        if self.decision(&featurize(s)) > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Fits the soft-margin problem min 1/2 |c|^2 + gamma sum zeta_i in the
/// 5-D feature space via its dual, using maximal-violating-pair updates
/// with a linear kernel on z-scored features. Deterministic: fixed scan
/// order, lowest-index tie break.
pub fn fit_level1(data: &[([f64; 5], i8)], gamma: f64, opts: &Svm) -> Result<Level1Model> {
    let n = data.len();
    if n < 6 {
        return Err(Error::InsufficientData { need: 6, got: n });
    }
    let pos = data.iter().filter(|(_, d)| *d > 0).count();
    if pos == 0 || pos == n {
        return Err(Error::DegenerateLabels(format!("{pos} of {n} positive")));
    }

    // Standardize features for conditioning; invert afterwards.
    let mut means = [0.0f64; 5];
    let mut stds = [1.0f64; 5];
    for j in 0..5 {
        let mu = data.iter().map(|(z, _)| z[j]).sum::<f64>() / n as f64;
        let var = data.iter().map(|(z, _)| (z[j] - mu).powi(2)).sum::<f64>() / n as f64;
        means[j] = mu;
        stds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let zs: Vec<[f64; 5]> = data
        .iter()
        .map(|(z, _)| {
            let mut out = [0.0; 5];
            for j in 0..5 {
                out[j] = (z[j] - means[j]) / stds[j];
            }
            out
        })
        .collect();
    let y: Vec<f64> = data.iter().map(|(_, d)| *d as f64).collect();

    let kernel = |a: &[f64; 5], b: &[f64; 5]| -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    };

    let c_box = gamma;
    let mut alpha = vec![0.0f64; n];
    // u_i = sum_k alpha_k y_k K(z_k, z_i), the margin without bias.
    let mut u = vec![0.0f64; n];
    let mut converged = false;
    let mut m_last = 0.0;
    let mut big_m_last = 0.0;

    for _iter in 0..opts.max_iters {
        // Maximal violating pair over -E_k = y_k - u_k.
        let mut i_sel = usize::MAX;
        let mut j_sel = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        let bound_eps = 1e-12 * c_box;
        for k in 0..n {
            let neg_e = y[k] - u[k];
            let free_up = alpha[k] < c_box - bound_eps;
            let free_dn = alpha[k] > bound_eps;
            let in_up = (y[k] > 0.0 && free_up) || (y[k] < 0.0 && free_dn);
            let in_low = (y[k] < 0.0 && free_up) || (y[k] > 0.0 && free_dn);
            if in_up && neg_e > m {
                m = neg_e;
                i_sel = k;
            }
            if in_low && neg_e < big_m {
                big_m = neg_e;
                j_sel = k;
            }
        }
        m_last = m;
        big_m_last = big_m;
        if m - big_m <= opts.kkt_tol {
            converged = true;
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let kii = kernel(&zs[i], &zs[i]);
        let kjj = kernel(&zs[j], &zs[j]);
        let kij = kernel(&zs[i], &zs[j]);
        let eta = (kii + kjj - 2.0 * kij).max(1e-12);

        let e_i = u[i] - y[i];
        let e_j = u[j] - y[j];
        let aj_old = alpha[j];
        let ai_old = alpha[i];
        let mut aj = aj_old + y[j] * (e_i - e_j) / eta;
        let (lo, hi) = if (y[i] - y[j]).abs() > 0.5 {
            ((aj_old - ai_old).max(0.0), (c_box + aj_old - ai_old).min(c_box))
        } else {
            ((ai_old + aj_old - c_box).max(0.0), (ai_old + aj_old).min(c_box))
        };
        aj = aj.clamp(lo, hi);
        let ai = ai_old + y[i] * y[j] * (aj_old - aj);
        if (aj - aj_old).abs() < 1e-16 {
            // Numerically stuck pair; treat the residual violation as
            // converged rather than spinning.
            converged = m - big_m <= opts.kkt_tol * 10.0;
            break;
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let di = (ai - ai_old) * y[i];
        let dj = (aj - aj_old) * y[j];
        for k in 0..n {
            u[k] += di * kernel(&zs[i], &zs[k]) + dj * kernel(&zs[j], &zs[k]);
        }
    }
    if !converged {
        return Err(Error::NonConvergence(opts.max_iters));
    }

    // Bias from free support vectors, else the violation midpoint.
    let mut b_sum = 0.0;
    let mut b_cnt = 0usize;
    for k in 0..n {
        if alpha[k] > 1e-9 * c_box && alpha[k] < c_box * (1.0 - 1e-9) {
            b_sum += y[k] - u[k];
            b_cnt += 1;
        }
    }
    let b_std = if b_cnt > 0 {
        b_sum / b_cnt as f64
    } else {
        0.5 * (m_last + big_m_last)
    };

    // Primal weights in standardized space, then unstandardize.
    let mut c_std = [0.0f64; 5];
    for k in 0..n {
        if alpha[k] > 0.0 {
            for j in 0..5 {
                c_std[j] += alpha[k] * y[k] * zs[k][j];
            }
        }
    }
    let mut c_raw = [0.0f64; 5];
    let mut b_raw = b_std;
    for j in 0..5 {
        c_raw[j] = c_std[j] / stds[j];
        b_raw -= c_std[j] * means[j] / stds[j];
    }

    let model = Level1Model {
        c: c_raw,
        b: b_raw,
        gamma,
        support: (0..n).filter(|&k| alpha[k] > 1e-9 * c_box).collect(),
        slack: data
            .iter()
            .map(|(z, d)| {
                let f: f64 = c_raw.iter().zip(z).map(|(c, z)| c * z).sum::<f64>() + b_raw;
                (1.0 - *d as f64 * f).max(0.0)
            })
            .collect(),
    };
    Ok(model)
}

/// Cross-validated gamma: k folds by index stride, balanced accuracy
/// maximized, ties toward the smaller gamma.
pub fn fit_level1_cv(data: &[([f64; 5], i8)], opts: &Svm) -> Result<Level1Model> {
    let folds = opts.cv_folds.max(2);
    let mut best: Option<(f64, f64)> = None; // (gamma, balanced accuracy)
    for &gamma in &opts.gamma_grid {
        let mut acc_sum = 0.0;
        let mut ok = true;
        for fold in 0..folds {
            let train: Vec<_> = data
                .iter()
                .enumerate()
                .filter(|(i, _)| i % folds != fold)
                .map(|(_, r)| *r)
                .collect();
            let valid: Vec<_> = data
                .iter()
                .enumerate()
                .filter(|(i, _)| i % folds == fold)
                .map(|(_, r)| *r)
                .collect();
            let model = match fit_level1(&train, gamma, opts) {
                Ok(m) => m,
                Err(_) => {
                    ok = false;
                    break;
                }
            };
            let (mut tp, mut tn, mut p, mut ng) = (0.0, 0.0, 0.0, 0.0);
            for (z, d) in &valid {
                let pred = if model.decision(z) > 0.0 { 1 } else { -1 };
                if *d > 0 {
                    p += 1.0;
                    if pred > 0 {
                        tp += 1.0;
                    }
                } else {
                    ng += 1.0;
                    if pred < 0 {
                        tn += 1.0;
                    }
                }
            }
            let tpr = if p > 0.0 { tp / p } else { 1.0 };
            let tnr = if ng > 0.0 { tn / ng } else { 1.0 };
            acc_sum += 0.5 * (tpr + tnr);
        }
        if !ok {
            continue;
        }
        let acc = acc_sum / folds as f64;
        let better = match best {
            None => true,
            Some((_, ba)) => acc > ba + 1e-12,
        };
        if better {
            best = Some((gamma, acc));
        }
    }
    let (gamma, _) = best.ok_or_else(|| Error::NonConvergence(opts.max_iters))?;
    fit_level1(data, gamma, opts)
}

/// General conic A s1^2 + B s1 s2 + C s2^2 + D s1 + E s2 + F = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

/// Reads the classifier's zero set as a general conic: the feature
/// order [s1, s2, s1^2, s2^2, s1 s2] maps c onto (D, E, A, C, B).
pub fn to_general_conic(model: &Level1Model) -> Result<ConicCoefficients> {
    let conic = ConicCoefficients {
        a: model.c[2],
        b: model.c[4],
        c: model.c[3],
        d: model.c[0],
        e: model.c[1],
        f: model.b,
    };
    let scale = model.c.iter().map(|v| v.abs()).fold(0.0, f64::max).max(model.b.abs());
    if conic.a.abs().max(conic.b.abs()).max(conic.c.abs()) <= 1e-14 * scale.max(1e-300) {
        return Err(Error::DegenerateConic);
    }
    Ok(conic)
}

/// Principal-axis form of a central conic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalConic {
    pub h: f64,
    pub k: f64,
    pub theta: f64,
    pub m1: f64,
    pub m2: f64,
    pub lambda: f64,
    pub a_bar: f64,
    pub b_bar: f64,
    pub c_bar: f64,
}

/// Translates to the center (h, k), normalizes by the center value
/// lambda, and rotates to principal axes. The surface becomes
/// M1 u1^2 + M2 u2^2 = 1 in the rotated frame.
pub fn canonicalize(conic: &ConicCoefficients) -> Result<CanonicalConic> {
    let (a, b, c, d, e, f) = (conic.a, conic.b, conic.c, conic.d, conic.e, conic.f);
    let den = b * b - 4.0 * a * c;
    let quad_scale = a * a + b * b + c * c;
    if den.abs() <= 1e-12 * quad_scale.max(1e-300) {
        return Err(Error::DegenerateCenter);
    }
    let h = (2.0 * c * d - b * e) / den;
    let k = (2.0 * a * e - b * d) / den;
    let lambda = a * h * h + b * h * k + c * k * k + d * h + e * k + f;
    let lam_scale = (a * h * h).abs()
        + (b * h * k).abs()
        + (c * k * k).abs()
        + (d * h).abs()
        + (e * k).abs()
        + f.abs();
    if lambda.abs() <= 1e-12 * lam_scale.max(1e-300) {
        return Err(Error::ZeroLambda);
    }
    let a_bar = -a / lambda;
    let b_bar = -b / lambda;
    let c_bar = -c / lambda;
    // Rotation removing the cross term; B_bar = 0 is already aligned.
    let theta = if b_bar.abs() <= 1e-14 * (a_bar.abs() + b_bar.abs() + c_bar.abs()) {
        0.0
    } else {
        let diff = c_bar - a_bar;
        ((diff + (b_bar * b_bar + diff * diff).sqrt()) / b_bar).atan()
    };
    let (s, co) = theta.sin_cos();
    let m1 = a_bar * co * co + b_bar * s * co + c_bar * s * s;
    let m2 = a_bar * s * s - b_bar * s * co + c_bar * co * co;
    Ok(CanonicalConic { h, k, theta, m1, m2, lambda, a_bar, b_bar, c_bar })
}

/// Rebuilds general-form coefficients from the canonical parameters,
/// up to the overall scale -lambda.
pub fn expand_canonical(can: &CanonicalConic) -> ConicCoefficients {
    let (s, co) = can.theta.sin_cos();
    let a_bar = can.m1 * co * co + can.m2 * s * s;
    let c_bar = can.m1 * s * s + can.m2 * co * co;
    let b_bar = 2.0 * s * co * (can.m1 - can.m2);
    let a = -can.lambda * a_bar;
    let b = -can.lambda * b_bar;
    let c = -can.lambda * c_bar;
    let d = -(2.0 * a * can.h + b * can.k);
    let e = -(b * can.h + 2.0 * c * can.k);
    let f = can.lambda + a * can.h * can.h + b * can.h * can.k + c * can.k * can.k;
    ConicCoefficients { a, b, c, d, e, f }
}

/// Fitted controllability boundary: canonical conic, Level-2 shift
/// delta = (dh, dk, dtheta), orientation flag (g > 0 means controllable)
/// and the Level-2 safety margin eta.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicBoundary {
    pub canonical: CanonicalConic,
    pub delta: [f64; 3],
    /// +1 or -1; fixes the orientation of g.
    pub sign: f64,
    pub eta: f64,
}

/// Perturbed principal parameters (h', k', theta', M1', M2').
/// M magnitudes are re-evaluated from (A_bar, B_bar, C_bar) at the
/// shifted angle; the axis lengths are not free parameters.
pub fn perturbed_params(can: &CanonicalConic, delta: &[f64; 3]) -> (f64, f64, f64, f64, f64) {
    let h = can.h + delta[0];
    let k = can.k + delta[1];
    let theta = can.theta + delta[2];
    let (s, co) = theta.sin_cos();
    let m1 = can.a_bar * co * co + can.b_bar * s * co + can.c_bar * s * s;
    let m2 = can.a_bar * s * s - can.b_bar * s * co + can.c_bar * co * co;
    (h, k, theta, m1, m2)
}

const EVAL_G_OPS: u64 = 24;

impl ConicBoundary {
    /// Decision function; positive means controllable.
    pub fn eval_g(&self, s: &ReducedState2) -> f64 {
        let (h, k, theta, m1, m2) = perturbed_params(&self.canonical, &self.delta);
        let (sn, cs) = theta.sin_cos();
        let dx = s.s1 - h;
        let dy = s.s2 - k;
        let u1 = cs * dx + sn * dy;
        let u2 = -sn * dx + cs * dy;
        ops::add(EVAL_G_OPS);
        self.sign * (m1 * u1 * u1 + m2 * u2 * u2 - 1.0)
    }

    /// Points on the zero set, for export and testing. Elliptic case
    /// only (both perturbed principal coefficients positive).
    pub fn polyline(&self, n: usize) -> Vec<ReducedState2> {
        let (h, k, theta, m1, m2) = perturbed_params(&self.canonical, &self.delta);
        if m1 <= 0.0 || m2 <= 0.0 {
            return Vec::new();
        }
        let (sn, cs) = theta.sin_cos();
        let (r1, r2) = (1.0 / m1.sqrt(), 1.0 / m2.sqrt());
        (0..=n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let u1 = r1 * t.cos();
                let u2 = r2 * t.sin();
                ReducedState2 {
                    s1: h + cs * u1 - sn * u2,
                    s2: k + sn * u1 + cs * u2,
                }
            })
            .collect()
    }
}

/// Orientation flag from training data: the sign under which the
/// unperturbed conic agrees with the labels most often. For a conic
/// derived from a Level-1 model this equals -sign(lambda).
pub fn resolve_sign(can: &CanonicalConic, data: &[(ReducedState2, i8)]) -> f64 {
    let probe = ConicBoundary { canonical: *can, delta: [0.0; 3], sign: 1.0, eta: 0.0 };
    let mut agree = 0i64;
    for (s, d) in data {
        let g = probe.eval_g(s);
        if (g > 0.0) == (*d > 0) {
            agree += 1;
        } else {
            agree -= 1;
        }
    }
    if agree >= 0 {
        1.0
    } else {
        -1.0
    }
}

fn zero_loss(boundary: &ConicBoundary, neg: &[ReducedState2], eta: f64) -> bool {
    neg.iter().all(|s| boundary.eval_g(s) <= -eta)
}

fn norm3(d: &[f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn lex_less(a: &[f64; 3], b: &[f64; 3]) -> bool {
    for i in 0..3 {
        if a[i] < b[i] - 1e-15 {
            return true;
        }
        if a[i] > b[i] + 1e-15 {
            return false;
        }
    }
    false
}

/// Level-2 fit: the minimal-norm (dh, dk, dtheta) for which every
/// uncontrollable sample satisfies g <= -eta. Coarse grid over bounds
/// scaled to the data extent, then deterministic shrinking refinement:
/// a ray search toward zero and per-coordinate line searches.
pub fn fit_level2(
    boundary0: &ConicBoundary,
    data: &[(ReducedState2, i8)],
    eta: f64,
    cfg: &Level2,
) -> Result<ConicBoundary> {
    let neg: Vec<ReducedState2> = data.iter().filter(|(_, d)| *d < 0).map(|(s, _)| *s).collect();
    let with_delta = |delta: [f64; 3]| ConicBoundary {
        canonical: boundary0.canonical,
        delta,
        sign: boundary0.sign,
        eta,
    };
    if zero_loss(&with_delta([0.0; 3]), &neg, eta) {
        return Ok(with_delta([0.0; 3]));
    }

    let (mut s1_min, mut s1_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut s2_min, mut s2_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, _) in data {
        s1_min = s1_min.min(s.s1);
        s1_max = s1_max.max(s.s1);
        s2_min = s2_min.min(s.s2);
        s2_max = s2_max.max(s.s2);
    }
    let bounds = [
        cfg.bound_scale * (s1_max - s1_min).max(1e-9),
        cfg.bound_scale * (s2_max - s2_min).max(1e-9),
        cfg.theta_bound,
    ];

    // Coarse grid, odd point count so zero is included.
    let np = cfg.grid_points.max(3) | 1;
    let axis = |bound: f64| -> Vec<f64> {
        (0..np)
            .map(|i| bound * (2.0 * i as f64 / (np - 1) as f64 - 1.0))
            .collect()
    };
    let (ax0, ax1, ax2) = (axis(bounds[0]), axis(bounds[1]), axis(bounds[2]));
    let mut best: Option<[f64; 3]> = None;
    for &dh in &ax0 {
        for &dk in &ax1 {
            for &dt in &ax2 {
                let cand = [dh, dk, dt];
                if let Some(b) = best {
                    let (nb, nc) = (norm3(&b), norm3(&cand));
                    if nc > nb + 1e-15 || (nc >= nb - 1e-15 && !lex_less(&cand, &b)) {
                        continue;
                    }
                }
                if zero_loss(&with_delta(cand), &neg, eta) {
                    best = Some(cand);
                }
            }
        }
    }
    let mut delta = best.ok_or(Error::NoFeasiblePerturbation)?;

    // Ray shrink toward zero: smallest feasible scaling of delta.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let cand = [delta[0] * mid, delta[1] * mid, delta[2] * mid];
        if zero_loss(&with_delta(cand), &neg, eta) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    delta = [delta[0] * hi, delta[1] * hi, delta[2] * hi];

    // Coordinate shrinking line search to 1e-6 on the norm.
    let mut step_scale = 0.5f64;
    while step_scale * norm3(&bounds) > 1e-7 {
        let mut improved = false;
        for c in 0..3 {
            let step = step_scale * bounds[c];
            for dir in [-1.0, 1.0] {
                let mut cand = delta;
                cand[c] += dir * step;
                if norm3(&cand) < norm3(&delta) - 1e-12
                    && zero_loss(&with_delta(cand), &neg, eta)
                {
                    delta = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step_scale *= 0.5;
        }
    }

    // Final ray tightening for the minimality certificate.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let cand = [delta[0] * mid, delta[1] * mid, delta[2] * mid];
        if zero_loss(&with_delta(cand), &neg, eta) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    delta = [delta[0] * hi, delta[1] * hi, delta[2] * hi];

    Ok(with_delta(delta))
}

/// Fraction of controllable-labeled samples lost to the Level-2 shift
/// (classified uncontrollable by the shifted boundary).
pub fn shrinkage(boundary: &ConicBoundary, data: &[(ReducedState2, i8)]) -> f64 {
    let pos: Vec<_> = data.iter().filter(|(_, d)| *d > 0).collect();
    if pos.is_empty() {
        return 0.0;
    }
    let lost = pos.iter().filter(|(s, _)| boundary.eval_g(s) <= 0.0).count();
    lost as f64 / pos.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn svm_opts() -> Svm {
        Svm::default()
    }

    #[test]
    fn featurize_examples() {
        assert_eq!(featurize(&ReducedState2 { s1: 0.0, s2: 0.0 }), [0.0; 5]);
        assert_eq!(
            featurize(&ReducedState2 { s1: 1.0, s2: 2.0 }),
            [1.0, 2.0, 1.0, 4.0, 2.0]
        );
        assert_eq!(
            featurize(&ReducedState2 { s1: -3.0, s2: 0.5 }),
            [-3.0, 0.5, 9.0, 0.25, -1.5]
        );
    }

    #[test]
    fn reduce_requires_descending_regime() {
        let bad = ReducedGuidanceState { s: 1.0, h: 1.0, w: 0.0, v: 1.0 };
        assert!(matches!(reduce(&bad), Err(Error::UndefinedReduction { .. })));
        let ok = reduce(&ReducedGuidanceState { s: 26_000.0, h: 4000.0, w: 54.0, v: 344.0 }).unwrap();
        assert!((ok.s1 - 26_000.0 / 344.0).abs() < 1e-12);
        assert!((ok.s2 - 4000.0 / 54.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_svm_is_perpendicular_bisector() {
        // Six points, two clusters collapsed to two locations so the
        // n >= 6 precondition holds while geometry stays two-point.
        let za = [1.0, 0.5, 1.0, 0.25, 0.5];
        let zb = [-1.0, -0.5, 1.0, 0.25, 0.5];
        let data: Vec<([f64; 5], i8)> = vec![
            (za, 1),
            (za, 1),
            (za, 1),
            (zb, -1),
            (zb, -1),
            (zb, -1),
        ];
        let model = fit_level1(&data, 1e6, &svm_opts()).unwrap();
        assert!((model.decision(&za) - 1.0).abs() < 1e-6);
        assert!((model.decision(&zb) + 1.0).abs() < 1e-6);
        let mid = [0.0, 0.0, 1.0, 0.25, 0.5];
        assert!(model.decision(&mid).abs() < 1e-6);
    }

    #[test]
    fn xor_separable_through_conic_features() {
        let pts = [
            (ReducedState2 { s1: 1.0, s2: 1.0 }, 1i8),
            (ReducedState2 { s1: -1.0, s2: -1.0 }, 1),
            (ReducedState2 { s1: 1.0, s2: -1.0 }, -1),
            (ReducedState2 { s1: -1.0, s2: 1.0 }, -1),
            (ReducedState2 { s1: 0.8, s2: 0.9 }, 1),
            (ReducedState2 { s1: -0.9, s2: 0.8 }, -1),
        ];
        let data: Vec<([f64; 5], i8)> = pts.iter().map(|(s, d)| (featurize(s), *d)).collect();
        let model = fit_level1(&data, 1e4, &svm_opts()).unwrap();
        for (s, d) in &pts {
            assert_eq!(model.classify(s), *d);
        }
        for z in model.slack.iter() {
            assert!(*z < 1e-4, "slack {z}");
        }
    }

    #[test]
    fn svm_constraints_hold_at_solution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data: Vec<([f64; 5], i8)> = (0..120)
            .map(|_| {
                let s = ReducedState2 {
                    s1: rng.gen_range(-2.0..2.0),
                    s2: rng.gen_range(-2.0..2.0),
                };
                // Ellipse interior positive, small label noise excluded.
                let d = if s.s1 * s.s1 / 2.25 + s.s2 * s.s2 < 1.0 { 1 } else { -1 };
                (featurize(&s), d)
            })
            .collect();
        let model = fit_level1(&data, 10.0, &svm_opts()).unwrap();
        for (i, (z, d)) in data.iter().enumerate() {
            let f = model.decision(z);
            // Primal feasibility with the stored slacks.
            assert!(
                *d as f64 * f >= 1.0 - model.slack[i] - 1e-6,
                "row {i}: margin {} slack {}",
                *d as f64 * f,
                model.slack[i]
            );
            assert!(model.slack[i] >= 0.0);
        }
    }

    #[test]
    fn conic_mapping_examples() {
        let mk = |c: [f64; 5], b: f64| Level1Model {
            c,
            b,
            gamma: 1.0,
            support: vec![],
            slack: vec![],
        };
        let circle = to_general_conic(&mk([0.0, 0.0, 1.0, 1.0, 0.0], -1.0)).unwrap();
        assert_eq!(
            (circle.a, circle.b, circle.c, circle.d, circle.e, circle.f),
            (1.0, 0.0, 1.0, 0.0, 0.0, -1.0)
        );
        let gen = to_general_conic(&mk([2.0, -3.0, 1.0, 4.0, 5.0], 6.0)).unwrap();
        assert_eq!(
            (gen.a, gen.b, gen.c, gen.d, gen.e, gen.f),
            (1.0, 5.0, 4.0, 2.0, -3.0, 6.0)
        );
        assert!(matches!(
            to_general_conic(&mk([1.0, 1.0, 0.0, 0.0, 0.0], 1.0)),
            Err(Error::DegenerateConic)
        ));
    }

    #[test]
    fn canonicalize_known_circle() {
        // (x-2)^2 + (y+1)^2 = 4 expanded.
        let conic = ConicCoefficients { a: 1.0, b: 0.0, c: 1.0, d: -4.0, e: 2.0, f: 1.0 };
        let can = canonicalize(&conic).unwrap();
        assert!((can.h - 2.0).abs() < 1e-12);
        assert!((can.k + 1.0).abs() < 1e-12);
        assert_eq!(can.theta, 0.0);
        assert!((can.m1 - 0.25).abs() < 1e-12);
        assert!((can.m2 - 0.25).abs() < 1e-12);
        assert!((can.lambda + 4.0).abs() < 1e-12);
    }

    #[test]
    fn canonicalize_axis_aligned_ellipse() {
        let conic = ConicCoefficients {
            a: 1.0 / 9.0,
            b: 0.0,
            c: 0.25,
            d: 0.0,
            e: 0.0,
            f: -1.0,
        };
        let can = canonicalize(&conic).unwrap();
        assert_eq!((can.h, can.k, can.theta), (0.0, 0.0, 0.0));
        assert!((can.m1 - 1.0 / 9.0).abs() < 1e-12);
        assert!((can.m2 - 0.25).abs() < 1e-12);
    }

    fn relative_match(a: &ConicCoefficients, b: &ConicCoefficients, tol: f64) -> bool {
        // Compare up to overall scale using the largest coefficient.
        let av = [a.a, a.b, a.c, a.d, a.e, a.f];
        let bv = [b.a, b.b, b.c, b.d, b.e, b.f];
        let (mut i_max, mut m) = (0, 0.0);
        for (i, v) in av.iter().enumerate() {
            if v.abs() > m {
                m = v.abs();
                i_max = i;
            }
        }
        let scale = bv[i_max] / av[i_max];
        av.iter()
            .zip(bv.iter())
            .all(|(x, y)| (x * scale - y).abs() <= tol * m * scale.abs())
    }

    #[test]
    fn canonicalize_rotated_ellipse_round_trips() {
        // x^2/9 + y^2/4 = 1 rotated by 30 degrees, centered at (1, -2).
        let th = 30f64.to_radians();
        let (s, c) = th.sin_cos();
        let (m1, m2) = (1.0 / 9.0, 0.25);
        let a_bar = m1 * c * c + m2 * s * s;
        let c_bar = m1 * s * s + m2 * c * c;
        let b_bar = 2.0 * s * c * (m1 - m2);
        let (h, k) = (1.0, -2.0);
        let a = a_bar;
        let b = b_bar;
        let cc = c_bar;
        let d = -(2.0 * a * h + b * k);
        let e = -(b * h + 2.0 * cc * k);
        let f = a * h * h + b * h * k + cc * k * k - 1.0;
        let conic = ConicCoefficients { a, b, c: cc, d, e, f };
        let can = canonicalize(&conic).unwrap();
        assert!((can.h - h).abs() < 1e-9);
        assert!((can.k - k).abs() < 1e-9);
        // Angle recovered modulo the axis swap symmetry.
        let th_mod = |x: f64| x.rem_euclid(std::f64::consts::PI);
        let direct = (th_mod(can.theta) - th_mod(th)).abs() < 1e-9;
        let swapped = (th_mod(can.theta) - th_mod(th + std::f64::consts::FRAC_PI_2)).abs() < 1e-9
            && (can.m1 - m2).abs() < 1e-9
            && (can.m2 - m1).abs() < 1e-9;
        assert!(direct || swapped, "theta {} vs {}", can.theta, th);
        assert!(relative_match(&conic, &expand_canonical(&can), 1e-9));
    }

    #[test]
    fn canonicalize_round_trip_random() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut done = 0;
        while done < 1000 {
            let conic = ConicCoefficients {
                a: rng.gen_range(-2.0..2.0),
                b: rng.gen_range(-2.0..2.0),
                c: rng.gen_range(-2.0..2.0),
                d: rng.gen_range(-2.0..2.0),
                e: rng.gen_range(-2.0..2.0),
                f: rng.gen_range(-2.0..2.0),
            };
            let can = match canonicalize(&conic) {
                Ok(c) => c,
                Err(_) => continue,
            };
            assert!(
                relative_match(&conic, &expand_canonical(&can), 1e-9),
                "{conic:?} vs {:?}",
                expand_canonical(&can)
            );
            done += 1;
        }
    }

    fn unit_circle_boundary(sign: f64) -> ConicBoundary {
        ConicBoundary {
            canonical: CanonicalConic {
                h: 0.0,
                k: 0.0,
                theta: 0.0,
                m1: 1.0,
                m2: 1.0,
                lambda: 1.0,
                a_bar: 1.0,
                b_bar: 0.0,
                c_bar: 1.0,
            },
            delta: [0.0; 3],
            sign,
            eta: 0.01,
        }
    }

    #[test]
    fn eval_g_zero_on_parametrized_boundary() {
        let conic = ConicCoefficients { a: 0.3, b: 0.1, c: 0.5, d: -1.0, e: 2.0, f: -3.0 };
        let can = canonicalize(&conic).unwrap();
        let boundary = ConicBoundary { canonical: can, delta: [0.0; 3], sign: 1.0, eta: 0.0 };
        for p in boundary.polyline(64) {
            assert!(boundary.eval_g(&p).abs() <= 1e-9);
        }
        // Zero set of g agrees with the source conic: f = -lambda * g_raw.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s = ReducedState2 {
                s1: rng.gen_range(-10.0..10.0),
                s2: rng.gen_range(-10.0..10.0),
            };
            let f = conic.a * s.s1 * s.s1
                + conic.b * s.s1 * s.s2
                + conic.c * s.s2 * s.s2
                + conic.d * s.s1
                + conic.e * s.s2
                + conic.f;
            let g = boundary.eval_g(&s);
            assert!((f + can.lambda * g).abs() < 1e-9 * f.abs().max(1.0));
        }
    }

    #[test]
    fn sign_resolution_matches_lambda() {
        // Classifier 1 - x^2 - y^2: positive (controllable) inside the
        // unit circle, matching the labels below.
        let conic = ConicCoefficients { a: -1.0, b: 0.0, c: -1.0, d: 0.0, e: 0.0, f: 1.0 };
        let can = canonicalize(&conic).unwrap();
        let data = vec![
            (ReducedState2 { s1: 0.1, s2: 0.0 }, 1i8),
            (ReducedState2 { s1: 0.0, s2: 0.3 }, 1),
            (ReducedState2 { s1: 2.0, s2: 0.0 }, -1),
            (ReducedState2 { s1: 0.0, s2: -2.0 }, -1),
        ];
        let sign = resolve_sign(&can, &data);
        assert_eq!(sign, -can.lambda.signum());
        let boundary = ConicBoundary { canonical: can, delta: [0.0; 3], sign, eta: 0.0 };
        assert!(boundary.eval_g(&ReducedState2 { s1: 0.0, s2: 0.0 }) > 0.0);
    }

    fn level2_cfg() -> Level2 {
        Level2::default()
    }

    #[test]
    fn level2_zero_loss_data_keeps_zero_delta() {
        let b0 = unit_circle_boundary(-1.0); // inside controllable
        let data = vec![
            (ReducedState2 { s1: 0.2, s2: 0.0 }, 1i8),
            (ReducedState2 { s1: 1.8, s2: 0.0 }, -1),
            (ReducedState2 { s1: 0.0, s2: -1.6 }, -1),
        ];
        let out = fit_level2(&b0, &data, 0.01, &level2_cfg()).unwrap();
        assert_eq!(out.delta, [0.0; 3]);
    }

    #[test]
    fn level2_covers_single_violator_with_near_minimal_shift() {
        // Interior controllable; one -1 point sits inside at (0.9, 0).
        let b0 = unit_circle_boundary(-1.0);
        let eta = 0.01;
        let bad = ReducedState2 { s1: 0.9, s2: 0.0 };
        let data = vec![
            (ReducedState2 { s1: -0.5, s2: 0.0 }, 1i8),
            (ReducedState2 { s1: 0.0, s2: 0.5 }, 1),
            (bad, -1),
            (ReducedState2 { s1: 2.0, s2: 0.0 }, -1),
            (ReducedState2 { s1: -2.0, s2: 0.0 }, -1),
            (ReducedState2 { s1: 0.0, s2: 2.0 }, -1),
            (ReducedState2 { s1: 0.0, s2: -2.0 }, -1),
        ];
        let out = fit_level2(&b0, &data, eta, &level2_cfg()).unwrap();
        assert!(out.eval_g(&bad) <= -eta + 1e-9);
        // Pure-translation geometry bound: the point is 0.1 inside the
        // circle, so a shift slightly above 0.1 suffices. Allow the
        // eta margin on top.
        let n = norm3(&out.delta);
        assert!(n > 0.0 && n < 0.25, "|delta| = {n}");
        // Dense grid oracle: no feasible delta with clearly smaller norm.
        let mut oracle_best = f64::INFINITY;
        let m = 40;
        for i in 0..=m {
            for j in 0..=m {
                let dh = -0.3 + 0.6 * i as f64 / m as f64;
                let dk = -0.3 + 0.6 * j as f64 / m as f64;
                let cand = ConicBoundary { delta: [dh, dk, 0.0], ..b0.clone() };
                let ok = data
                    .iter()
                    .filter(|(_, d)| *d < 0)
                    .all(|(s, _)| cand.eval_g(s) <= -eta);
                if ok {
                    oracle_best = oracle_best.min((dh * dh + dk * dk).sqrt());
                }
            }
        }
        assert!(n <= oracle_best + 0.05, "fit {n} vs oracle {oracle_best}");
        // Minimality certificate: a 5% shrink breaks a constraint.
        let shrunk = ConicBoundary {
            delta: [out.delta[0] * 0.95, out.delta[1] * 0.95, out.delta[2] * 0.95],
            ..out.clone()
        };
        let neg: Vec<_> = data.iter().filter(|(_, d)| *d < 0).map(|(s, _)| *s).collect();
        assert!(!zero_loss(&shrunk, &neg, eta));
    }

    #[test]
    fn level2_infeasible_bounds_error() {
        let b0 = unit_circle_boundary(-1.0);
        // Violator at the center: no translation within tiny bounds
        // can push it out.
        let data = vec![
            (ReducedState2 { s1: 0.0, s2: 0.0 }, -1i8),
            (ReducedState2 { s1: 0.5, s2: 0.0 }, 1),
        ];
        let cfg = Level2 { bound_scale: 0.01, theta_bound: 0.01, ..Level2::default() };
        assert!(matches!(
            fit_level2(&b0, &data, 0.01, &cfg),
            Err(Error::NoFeasiblePerturbation)
        ));
    }

    #[test]
    fn shrinkage_reports_lost_positive_fraction() {
        let b = unit_circle_boundary(-1.0);
        let data = vec![
            (ReducedState2 { s1: 0.1, s2: 0.0 }, 1i8),
            (ReducedState2 { s1: 1.5, s2: 0.0 }, 1), // outside: lost
            (ReducedState2 { s1: 2.0, s2: 0.0 }, -1),
        ];
        assert!((shrinkage(&b, &data) - 0.5).abs() < 1e-12);
    }
}
