//! Time-to-go policy: a sparse quadratic model over the reduced guidance
//! state, fit by lasso regression with cyclic coordinate descent and
//! soft-thresholding.

use crate::config::Lasso;
use crate::dataset::{ReducedGuidanceState, TgoDataset};
use crate::error::{Error, Result};

/// Monomial terms of the degree-2 feature map over (H, S, w, v), in
/// fixed order. The leading constant carries the intercept.
pub const TERM_NAMES: [&str; 15] = [
    "1", "H", "S", "w", "v", "H2", "S2", "w2", "v2", "HS", "Hw", "Hv", "Sw", "Sv", "wv",
];

pub const N_TERMS: usize = 15;

/// Evaluates the feature map on raw (unscaled) state values.
pub fn features(x: &ReducedGuidanceState) -> [f64; N_TERMS] {
    let (h, s, w, v) = (x.h, x.s, x.w, x.v);
    [
        1.0,
        h,
        s,
        w,
        v,
        h * h,
        s * s,
        w * w,
        v * v,
        h * s,
        h * w,
        h * v,
        s * w,
        s * v,
        w * v,
    ]
}

/// Fitted time-to-go policy.
///
/// `k` are coefficients over the raw feature map (k[0] is the intercept);
/// `means`/`stds` record the standardization used during fitting.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TgoPolicy {
    pub k: [f64; N_TERMS],
    pub means: [f64; N_TERMS],
    pub stds: [f64; N_TERMS],
    pub mu: f64,
    pub rmse: f64,
    pub sparsity: usize,
    /// Output clamp range, from the dataset generation bracket.
    pub tgo_min: f64,
    pub tgo_max: f64,
}

impl TgoPolicy {
    /// Standardized-space coefficients (excluding the intercept slot).
    pub fn beta_std(&self) -> [f64; N_TERMS] {
        let mut b = [0.0; N_TERMS];
        for j in 1..N_TERMS {
            b[j] = self.k[j] * self.stds[j];
        }
        b
    }
}

/// Evaluates the policy, clamped to the dataset's t_go bracket.
pub fn eval_tgo(policy: &TgoPolicy, state: &ReducedGuidanceState) -> f64 {
    let phi = features(state);
    let mut y = 0.0;
    for j in 0..N_TERMS {
        y += policy.k[j] * phi[j];
    }
    y.clamp(policy.tgo_min, policy.tgo_max)
}

struct Standardized {
    xs: Vec<[f64; N_TERMS]>,
    yc: Vec<f64>,
    y_mean: f64,
    means: [f64; N_TERMS],
    stds: [f64; N_TERMS],
}

fn standardize(data: &TgoDataset) -> Standardized {
    let n = data.records.len();
    let raw: Vec<[f64; N_TERMS]> = data.records.iter().map(|(x, _)| features(x)).collect();
    let y: Vec<f64> = data.records.iter().map(|(_, t)| *t).collect();
    let mut means = [0.0; N_TERMS];
    let mut stds = [1.0; N_TERMS];
    for j in 1..N_TERMS {
        let mu = raw.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = raw.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n as f64;
        means[j] = mu;
        stds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xs = raw
        .iter()
        .map(|r| {
            let mut out = [0.0; N_TERMS];
            for j in 1..N_TERMS {
                out[j] = (r[j] - means[j]) / stds[j];
            }
            out
        })
        .collect();
    let yc = y.iter().map(|v| v - y_mean).collect();
    Standardized { xs, yc, y_mean, means, stds }
}

/// Fits the lasso objective 1/2 sum (t_i - K^T phi_i)^2 + mu |K|_1 with
/// an unpenalized intercept, by cyclic coordinate descent on z-scored
/// features. Deterministic: fixed coordinate order.
pub fn fit_lasso(data: &TgoDataset, mu: f64, opts: &Lasso) -> Result<TgoPolicy> {
    fit_lasso_clamped(data, mu, opts, None)
}

fn fit_lasso_clamped(
    data: &TgoDataset,
    mu: f64,
    opts: &Lasso,
    clamp: Option<(f64, f64)>,
) -> Result<TgoPolicy> {
    let n = data.records.len();
    if n < N_TERMS {
        return Err(Error::InsufficientData { need: N_TERMS, got: n });
    }
    let std = standardize(data);
    let beta = coordinate_descent(&std.xs, &std.yc, mu, opts)?;

    // Map back to raw feature space.
    let mut k = [0.0; N_TERMS];
    let mut intercept = std.y_mean;
    for j in 1..N_TERMS {
        k[j] = beta[j] / std.stds[j];
        intercept -= beta[j] * std.means[j] / std.stds[j];
    }
    k[0] = intercept;

    let mut sse = 0.0;
    for (x, t) in &data.records {
        let phi = features(x);
        let pred: f64 = (0..N_TERMS).map(|j| k[j] * phi[j]).sum();
        sse += (pred - t).powi(2);
    }
    let sparsity = k.iter().filter(|v| v.abs() > 1e-12).count();
    let (lo, hi) = clamp.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    Ok(TgoPolicy {
        k,
        means: std.means,
        stds: std.stds,
        mu,
        rmse: (sse / n as f64).sqrt(),
        sparsity,
        tgo_min: lo,
        tgo_max: hi,
    })
}

fn coordinate_descent(
    xs: &[[f64; N_TERMS]],
    yc: &[f64],
    mu: f64,
    opts: &Lasso,
) -> Result<[f64; N_TERMS]> {
    let n = xs.len();
    let mut beta = [0.0f64; N_TERMS];
    let mut resid: Vec<f64> = yc.to_vec();
    // Column sums of squares (z-scored: ~n unless degenerate).
    let mut col_sq = [0.0f64; N_TERMS];
    for row in xs {
        for j in 1..N_TERMS {
            col_sq[j] += row[j] * row[j];
        }
    }
    let y_scale = (yc.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1.0);
    let tol = opts.kkt_tol * n as f64 * y_scale;

    for _sweep in 0..opts.max_sweeps {
        for j in 1..N_TERMS {
            if col_sq[j] <= 0.0 {
                continue;
            }
            let mut rho = 0.0;
            for (row, r) in xs.iter().zip(resid.iter()) {
                rho += row[j] * r;
            }
            rho += col_sq[j] * beta[j];
            let new = soft_threshold(rho, mu) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (row, r) in xs.iter().zip(resid.iter_mut()) {
                    *r -= delta * row[j];
                }
                beta[j] = new;
            }
        }
        if kkt_residual(xs, &resid, &beta, mu) <= tol {
            return Ok(beta);
        }
    }
    Err(Error::NonConvergence(opts.max_sweeps))
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Worst-coordinate KKT violation of the lasso optimality conditions.
pub fn kkt_residual(xs: &[[f64; N_TERMS]], resid: &[f64], beta: &[f64; N_TERMS], mu: f64) -> f64 {
    let mut worst = 0.0f64;
    for j in 1..N_TERMS {
        let mut grad = 0.0;
        for (row, r) in xs.iter().zip(resid.iter()) {
            grad -= row[j] * r;
        }
        let viol = if beta[j].abs() > 0.0 {
            (grad + mu * beta[j].signum()).abs()
        } else {
            (grad.abs() - mu).max(0.0)
        };
        worst = worst.max(viol);
    }
    worst
}

/// Standardized residual/gradient data for external KKT checks.
pub fn kkt_report(data: &TgoDataset, policy: &TgoPolicy) -> (f64, f64) {
    let std = standardize(data);
    let beta = policy.beta_std();
    let mut resid = std.yc.clone();
    for (row, r) in std.xs.iter().zip(resid.iter_mut()) {
        for j in 1..N_TERMS {
            *r -= row[j] * beta[j];
        }
    }
    let n = std.xs.len() as f64;
    let y_scale = (std.yc.iter().map(|v| v * v).sum::<f64>() / n).sqrt().max(1.0);
    (kkt_residual(&std.xs, &resid, &beta, policy.mu), n * y_scale)
}

/// Cross-validated fit: log-spaced grid on normalized regularization
/// strength, one-standard-error rule toward sparsity, refit on all data.
/// The grid value mu~ maps to the objective's mu as mu~ * n * sigma_y.
pub fn fit_lasso_cv(data: &TgoDataset, opts: &Lasso, clamp: (f64, f64)) -> Result<TgoPolicy> {
    let n = data.records.len();
    if n < N_TERMS + opts.cv_folds {
        return Err(Error::InsufficientData { need: N_TERMS + opts.cv_folds, got: n });
    }
    let y: Vec<f64> = data.records.iter().map(|(_, t)| *t).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_sigma = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        .max(1e-12);

    let grid: Vec<f64> = (0..opts.mu_grid_points)
        .map(|i| {
            let f = i as f64 / (opts.mu_grid_points - 1).max(1) as f64;
            opts.mu_grid_min * (opts.mu_grid_max / opts.mu_grid_min).powf(f)
        })
        .collect();

    let folds = opts.cv_folds;
    let mut stats: Vec<(f64, f64, f64)> = Vec::new(); // (mu_norm, mean rmse, se)
    for &mu_norm in &grid {
        let mut fold_rmse = Vec::with_capacity(folds);
        for fold in 0..folds {
            let train = TgoDataset {
                records: data
                    .records
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % folds != fold)
                    .map(|(_, r)| *r)
                    .collect(),
            };
            let valid: Vec<_> = data
                .records
                .iter()
                .enumerate()
                .filter(|(i, _)| i % folds == fold)
                .map(|(_, r)| *r)
                .collect();
            let mu = mu_norm * train.records.len() as f64 * y_sigma;
            let policy = fit_lasso(&train, mu, opts)?;
            let sse: f64 = valid
                .iter()
                .map(|(x, t)| {
                    let phi = features(x);
                    let pred: f64 = (0..N_TERMS).map(|j| policy.k[j] * phi[j]).sum();
                    (pred - t).powi(2)
                })
                .sum();
            fold_rmse.push((sse / valid.len() as f64).sqrt());
        }
        let mean = fold_rmse.iter().sum::<f64>() / folds as f64;
        let var = fold_rmse.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / folds as f64;
        let se = (var / folds as f64).sqrt();
        stats.push((mu_norm, mean, se));
    }

    let best = stats
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .copied()
        .unwrap();
    // Largest mu with mean RMSE within one SE of the best.
    let chosen = stats
        .iter()
        .filter(|(_, mean, _)| *mean <= best.1 + best.2)
        .map(|(m, _, _)| *m)
        .fold(f64::NEG_INFINITY, f64::max);

    fit_lasso_clamped(data, chosen * n as f64 * y_sigma, opts, Some(clamp))
}
