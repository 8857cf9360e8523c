//! Cubic-polynomial base guidance policy.
//!
//! Each cycle the net-acceleration polynomial coefficients are re-solved
//! from the current state and the remaining time-to-go through a 4x4
//! linear system per guidance-frame axis. The in-plane command is the
//! polynomial value at the current time; the out-of-plane axis is driven
//! to zero by a finite-horizon double-integrator regulation law.

use crate::error::{Error, Result};
use crate::frames::{GuidanceFrame, Vec3};
use crate::sim::{
    convergence_indicator, step, ConstraintId, ConstraintSet, LanderState, RolloutResult,
    StepRecord, TerminalTarget, TerminalTolerances,
};

/// Boundary conditions of one guidance phase, navigation frame.
/// Accelerations are net (gravity included).
#[derive(Debug, Clone, Copy)]
pub struct GuidanceProblem {
    pub r0: Vec3,
    pub v0: Vec3,
    pub a0: Vec3,
    pub rf: Vec3,
    pub vf: Vec3,
    pub af: Vec3,
}

/// Per-axis cubic coefficients of the net acceleration in the guidance
/// frame: a_i(t) = C0 + C1 t + C2 t^2 + C3 t^3.
#[derive(Debug, Clone, Copy)]
pub struct PolyCoeffs {
    pub axes: [[f64; 4]; 3],
}

impl PolyCoeffs {
    pub fn eval(&self, t: f64) -> Vec3 {
        Vec3::new(
            eval_axis(&self.axes[0], t),
            eval_axis(&self.axes[1], t),
            eval_axis(&self.axes[2], t),
        )
    }

    /// First antiderivative (velocity change from 0 to t).
    pub fn integral(&self, t: f64) -> Vec3 {
        let f = |c: &[f64; 4]| c[0] * t + c[1] * t * t / 2.0 + c[2] * t.powi(3) / 3.0 + c[3] * t.powi(4) / 4.0;
        Vec3::new(f(&self.axes[0]), f(&self.axes[1]), f(&self.axes[2]))
    }

    /// Second antiderivative (position change beyond v0*t).
    pub fn double_integral(&self, t: f64) -> Vec3 {
        let f = |c: &[f64; 4]| {
            c[0] * t * t / 2.0 + c[1] * t.powi(3) / 6.0 + c[2] * t.powi(4) / 12.0 + c[3] * t.powi(5) / 20.0
        };
        Vec3::new(f(&self.axes[0]), f(&self.axes[1]), f(&self.axes[2]))
    }
}

fn eval_axis(c: &[f64; 4], t: f64) -> f64 {
    c[0] + t * (c[1] + t * (c[2] + t * c[3]))
}

/// Solves the per-axis 4x4 system for the cubic coefficients.
///
/// Boundary data is expressed in the guidance frame. The rows enforce
/// a(0) = a0, a(t_go) = af, the velocity change and the position change
/// over [0, t_go].
pub fn solve_cubic_coeffs(
    r0: Vec3,
    v0: Vec3,
    a0: Vec3,
    rf: Vec3,
    vf: Vec3,
    af: Vec3,
    t_go: f64,
) -> Result<PolyCoeffs> {
    if t_go <= 0.0 {
        return Err(Error::SingularSystem(format!("t_go = {t_go}")));
    }
    let t = t_go;
    let mat = [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, t, t * t, t * t * t],
        [t, t * t / 2.0, t.powi(3) / 3.0, t.powi(4) / 4.0],
        [t * t / 2.0, t.powi(3) / 6.0, t.powi(4) / 12.0, t.powi(5) / 20.0],
    ];
    let mut axes = [[0.0; 4]; 3];
    for i in 0..3 {
        let rhs = [
            a0[i],
            af[i],
            vf[i] - v0[i],
            rf[i] - r0[i] - v0[i] * t,
        ];
        axes[i] = solve4(mat, rhs)?;
    }
    Ok(PolyCoeffs { axes })
}

/// Gaussian elimination with partial pivoting on a 4x4 system.
fn solve4(a: [[f64; 4]; 4], b: [f64; 4]) -> Result<[f64; 4]> {
    let mut m = a;
    let mut x = b;
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    for col in 0..4 {
        let mut p = col;
        for row in col + 1..4 {
            if m[row][col].abs() > m[p][col].abs() {
                p = row;
            }
        }
        if m[p][col].abs() < scale * 1e-14 {
            return Err(Error::SingularSystem("pivot below conditioning floor".into()));
        }
        m.swap(col, p);
        x.swap(col, p);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..4).rev() {
        for k in col + 1..4 {
            x[col] -= m[col][k] * x[k];
        }
        x[col] /= m[col][col];
    }
    Ok(x)
}

/// Output of one guidance cycle, navigation frame.
#[derive(Debug, Clone, Copy)]
pub struct CycleOutput {
    /// Net acceleration command to hold over the coming cycle: the refit
    /// polynomial one cycle ahead (the solve pins a(0) to the current
    /// acceleration, so the t = 0 value carries no new information).
    pub a_net: Vec3,
}

/// Runs one guidance cycle: frame construction, state transformation,
/// coefficient solve and command extraction.
///
/// `problem.a0` must hold the net acceleration at the current time (the
/// achieved acceleration under the applied thrust, or the phase boundary
/// value at start).
pub fn guidance_cycle(
    state: &LanderState,
    problem: &GuidanceProblem,
    t_go: f64,
    dt: f64,
    frame_ref_depth: f64,
) -> Result<CycleOutput> {
    if t_go < dt {
        return Err(Error::NearTerminal(t_go));
    }
    // Positions are taken from a reference point one body radius below
    // the target so the two frame-defining vectors stay non-parallel.
    let reference = problem.rf - Vec3::new(0.0, 0.0, frame_ref_depth);
    let frame = match GuidanceFrame::build(state.r - reference, problem.rf - reference) {
        Ok(f) => f,
        // On-target: the frame is undefined and the terminal boundary
        // acceleration is the fixed point of the polynomial law.
        Err(Error::DegenerateFrame(_)) => return Ok(CycleOutput { a_net: problem.af }),
        Err(e) => return Err(e),
    };

    let r_g0 = frame.to_guidance(state.r - problem.rf);
    let r_gf = Vec3::zeros();
    let v_g0 = frame.to_guidance(state.v);
    let v_gf = frame.to_guidance(problem.vf);
    let a_g0 = frame.to_guidance(problem.a0);
    let a_gf = frame.to_guidance(problem.af);

    let coeffs = solve_cubic_coeffs(r_g0, v_g0, a_g0, r_gf, v_gf, a_gf, t_go)?;

    // Out-of-plane regulation: minimum-effort double-integrator law
    // driving position and velocity to zero at t_go.
    let a_reg = -(6.0 / (t_go * t_go)) * r_g0.z - (4.0 / t_go) * v_g0.z;

    let planned = coeffs.eval(dt);
    let cmd_g = Vec3::new(planned.x, planned.y, a_reg);

    Ok(CycleOutput { a_net: frame.to_navigation(cmd_g) })
}

/// Closed-loop rollout configuration.
#[derive(Debug, Clone)]
pub struct RolloutConfig {
    pub dt: f64,
    pub substeps: usize,
    /// Below this time-to-go the terminal boundary acceleration is held.
    pub tgo_floor: f64,
    pub tol: TerminalTolerances,
    pub limits: ConstraintSet,
    pub frame_ref_depth: f64,
    pub record_trace: bool,
    /// Abort on the first path-constraint violation (feasibility probes).
    pub early_exit: bool,
}

/// Rolls the base policy out over a fixed flight time `t_go`.
pub fn run_closed_loop(
    initial: &LanderState,
    problem: &GuidanceProblem,
    t_go: f64,
    cfg: &RolloutConfig,
) -> Result<RolloutResult> {
    if t_go <= 0.0 {
        return Err(Error::Config(format!("non-positive rollout duration {t_go}")));
    }
    // The executive issues commands at the fixed cycle rate; a
    // fractional-cycle duration is not executable and would leave a
    // degenerate final step (microsecond dt blows up the rate check).
    let t_go = (t_go / cfg.dt).round().max(1.0) * cfg.dt;
    let mut s = *initial;
    let mut prob = *problem;
    let mut t_prev = (initial.m * (problem.a0 - cfg.limits.g).norm())
        .clamp(cfg.limits.rho_min, cfg.limits.rho_max);
    let mut t_go_rem = t_go;
    let mut trace: Vec<StepRecord> = Vec::new();
    let mut violated: Vec<(ConstraintId, f64)> = Vec::new();
    let mut aborted = false;

    while t_go_rem > 1e-9 {
        let dt = cfg.dt.min(t_go_rem);
        let a_net = if t_go_rem < cfg.tgo_floor || t_go_rem < dt {
            prob.af
        } else {
            guidance_cycle(&s, &prob, t_go_rem, dt, cfg.frame_ref_depth)?.a_net
        };
        let (ns, rec) = step(&s, a_net, dt, &cfg.limits, t_prev, prob.rf, cfg.substeps)?;
        // Next-cycle initial acceleration is the one the lander actually
        // pulls under the applied thrust (what navigation reports), so
        // clamping and rate limiting feed back into the replan.
        let a_prop = a_net - cfg.limits.g;
        let dir = if a_prop.norm() > 1e-12 {
            a_prop / a_prop.norm()
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        prob.a0 = cfg.limits.g + dir * (rec.t_c / ns.m);
        for id in &rec.violations {
            if !violated.iter().any(|(v, _)| v == id) {
                violated.push((*id, ns.t));
            }
        }
        t_prev = rec.t_c;
        s = ns;
        if cfg.record_trace {
            trace.push(rec);
        }
        t_go_rem -= dt;
        if cfg.early_exit && !violated.is_empty() {
            aborted = true;
            break;
        }
    }

    let mut result = RolloutResult {
        trace,
        terminal: s,
        fuel_used: initial.m - s.m,
        converged: false,
        violated,
    };
    if !aborted {
        let target = TerminalTarget { rf: problem.rf, vf: problem.vf };
        result.converged = convergence_indicator(&result, &target, &cfg.tol, &cfg.limits);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn homogeneous_system_is_zero() {
        let z = Vec3::zeros();
        let c = solve_cubic_coeffs(z, z, z, z, z, z, 137.0).unwrap();
        for axis in &c.axes {
            for v in axis {
                assert_eq!(*v, 0.0);
            }
        }
    }

    /// Cramer's-rule oracle for the 4x4 solve.
    fn cramer4(a: [[f64; 4]; 4], b: [f64; 4]) -> [f64; 4] {
        fn det4(m: [[f64; 4]; 4]) -> f64 {
            let mut d = 0.0;
            for c in 0..4 {
                let mut sub = [[0.0; 3]; 3];
                for (ri, row) in m.iter().enumerate().skip(1) {
                    let mut cj = 0;
                    for (ci, v) in row.iter().enumerate() {
                        if ci != c {
                            sub[ri - 1][cj] = *v;
                            cj += 1;
                        }
                    }
                }
                let det3 = sub[0][0] * (sub[1][1] * sub[2][2] - sub[1][2] * sub[2][1])
                    - sub[0][1] * (sub[1][0] * sub[2][2] - sub[1][2] * sub[2][0])
                    + sub[0][2] * (sub[1][0] * sub[2][1] - sub[1][1] * sub[2][0]);
                d += if c % 2 == 0 { 1.0 } else { -1.0 } * m[0][c] * det3;
            }
            d
        }
        let d = det4(a);
        let mut x = [0.0; 4];
        for i in 0..4 {
            let mut m = a;
            for row in 0..4 {
                m[row][i] = b[row];
            }
            x[i] = det4(m) / d;
        }
        x
    }

    #[test]
    fn rest_to_rest_matches_cramer_oracle() {
        let t = 120.0;
        let d = 5000.0;
        let z = Vec3::zeros();
        let c = solve_cubic_coeffs(z, z, z, Vec3::new(d, 0.0, 0.0), z, z, t).unwrap();
        // Independent solve via Cramer's rule.
        let mat = [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, t, t * t, t * t * t],
            [t, t * t / 2.0, t.powi(3) / 3.0, t.powi(4) / 4.0],
            [t * t / 2.0, t.powi(3) / 6.0, t.powi(4) / 12.0, t.powi(5) / 20.0],
        ];
        let oracle = cramer4(mat, [0.0, 0.0, 0.0, d]);
        for k in 0..4 {
            assert!((c.axes[0][k] - oracle[k]).abs() <= 1e-10 * oracle[k].abs().max(1.0));
        }
        // Displacement reproduced by double integration.
        assert!((c.double_integral(t).x - d).abs() < 1e-9 * d);
    }

    #[test]
    fn boundary_condition_exactness_random() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let rnd = |rng: &mut rand_chacha::ChaCha8Rng, s: f64| {
                Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
            };
            let t_go = rng.gen_range(20.0..400.0);
            let r0 = rnd(&mut rng, 3e4);
            let v0 = rnd(&mut rng, 400.0);
            let a0 = rnd(&mut rng, 5.0);
            let rf = rnd(&mut rng, 1e3);
            let vf = rnd(&mut rng, 5.0);
            let af = rnd(&mut rng, 5.0);
            let c = solve_cubic_coeffs(r0, v0, a0, rf, vf, af, t_go).unwrap();
            let rel = |x: Vec3, y: Vec3| (x - y).norm() / y.norm().max(1.0);
            assert!(rel(c.eval(0.0), a0) <= 1e-9);
            assert!(rel(c.eval(t_go), af) <= 1e-9);
            assert!(rel(c.integral(t_go), vf - v0) <= 1e-9);
            assert!(rel(c.double_integral(t_go), rf - r0 - v0 * t_go) <= 1e-9);
        }
    }

    fn wide_open_limits() -> ConstraintSet {
        ConstraintSet {
            rho_min: 0.0,
            rho_max: 1e12,
            thrust_rate_max: 1e12,
            theta_lim: std::f64::consts::PI,
            vh_max: 1e12,
            m_terminal_min: 0.0,
            g: Vec3::new(0.0, 0.0, -1.68),
            alpha: 0.00035,
            subsurface_margin: 1e12,
        }
    }

    fn nominal_problem() -> (LanderState, GuidanceProblem) {
        let g = Vec3::new(0.0, 0.0, -1.68);
        let problem = GuidanceProblem {
            r0: Vec3::new(-28_500.0, 0.0, 6800.0),
            v0: Vec3::new(336.0, 0.0, -59.0),
            a0: Vec3::new(-2.26, 0.0, 1.91) + g,
            rf: Vec3::new(0.0, 0.0, 1300.0),
            vf: Vec3::zeros(),
            af: Vec3::new(0.0, 0.0, 3.2) + g,
        };
        let state = LanderState { t: 0.0, r: problem.r0, v: problem.v0, m: 1050.0 };
        (state, problem)
    }

    #[test]
    fn closed_loop_matches_open_loop_polynomial() {
        // Unclamped thrust: replanning each cycle must reproduce the
        // open-loop polynomial trajectory.
        let (state, problem) = nominal_problem();
        let t_go = 160.0;
        let cfg = RolloutConfig {
            dt: 0.1,
            substeps: 2,
            tgo_floor: 0.0,
            tol: TerminalTolerances { pos: 10.0, vel: 0.5 },
            limits: wide_open_limits(),
            frame_ref_depth: 1_737_400.0,
            record_trace: false,
            early_exit: false,
        };
        let result = run_closed_loop(&state, &problem, t_go, &cfg).unwrap();
        // Open-loop prediction from the initial solve in the initial
        // guidance frame.
        let reference = problem.rf - Vec3::new(0.0, 0.0, cfg.frame_ref_depth);
        let frame = GuidanceFrame::build(state.r - reference, problem.rf - reference).unwrap();
        let c = solve_cubic_coeffs(
            frame.to_guidance(state.r - problem.rf),
            frame.to_guidance(state.v),
            frame.to_guidance(problem.a0),
            Vec3::zeros(),
            frame.to_guidance(problem.vf),
            frame.to_guidance(problem.af),
            t_go,
        )
        .unwrap();
        let r_pred_g = frame.to_guidance(state.r - problem.rf)
            + frame.to_guidance(state.v) * t_go
            + c.double_integral(t_go);
        let r_pred = problem.rf + frame.to_navigation(r_pred_g);
        assert!((result.terminal.r - r_pred).norm() < 0.5, "terminal gap {}", (result.terminal.r - r_pred).norm());
        assert!((result.terminal.r - problem.rf).norm() < 0.5);
        assert!((result.terminal.v - problem.vf).norm() < 0.05);
    }

    #[test]
    fn flight_time_quantized_to_whole_cycles() {
        // A duration a hair off a cycle multiple must not produce a
        // microsecond trailing step (which would blow up the rate
        // check); it rounds to the same executable plan.
        let (state, problem) = nominal_problem();
        let cfg = RolloutConfig {
            dt: 0.1,
            substeps: 2,
            tgo_floor: 0.0,
            tol: TerminalTolerances { pos: 10.0, vel: 0.5 },
            limits: wide_open_limits(),
            frame_ref_depth: 1_737_400.0,
            record_trace: false,
            early_exit: false,
        };
        let a = run_closed_loop(&state, &problem, 160.0, &cfg).unwrap();
        let b = run_closed_loop(&state, &problem, 160.0 + 6.4e-5, &cfg).unwrap();
        assert_eq!(a.terminal.t, b.terminal.t);
        assert_eq!(a.terminal.r, b.terminal.r);
        assert_eq!(a.violated, b.violated);
    }

    #[test]
    fn planar_confinement() {
        let (state, problem) = nominal_problem();
        let cfg = RolloutConfig {
            dt: 0.1,
            substeps: 2,
            tgo_floor: 2.0,
            tol: TerminalTolerances { pos: 10.0, vel: 0.5 },
            limits: wide_open_limits(),
            frame_ref_depth: 1_737_400.0,
            record_trace: true,
            early_exit: false,
        };
        let result = run_closed_loop(&state, &problem, 160.0, &cfg).unwrap();
        for rec in &result.trace {
            assert!(rec.state.r.y.abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_point_command_is_af() {
        let (_, problem) = nominal_problem();
        let on_target = LanderState { t: 0.0, r: problem.rf, v: Vec3::zeros(), m: 900.0 };
        let prob = GuidanceProblem { a0: problem.af, ..problem };
        let out = guidance_cycle(&on_target, &prob, 50.0, 0.1, 1_737_400.0).unwrap();
        assert!((out.a_net - problem.af).norm() < 1e-9);
    }

    #[test]
    fn near_terminal_rejected() {
        let (state, problem) = nominal_problem();
        assert!(matches!(
            guidance_cycle(&state, &problem, 0.05, 0.1, 1_737_400.0),
            Err(Error::NearTerminal(_))
        ));
    }
}
