//! Real-time retargeting layer.
//!
//! At phase start the reduced state is checked against the fitted
//! controllability boundary. Infeasible states are projected
//! horizontally onto the boundary (altitude and rates untouched), which
//! amounts to shifting the landing site along the ground track. The base
//! policy then runs unchanged against the shifted target.

use serde::{Deserialize, Serialize};

use crate::boundary::{perturbed_params, reduce, ConicBoundary, ReducedState2};
use crate::dataset::ReducedGuidanceState;
use crate::error::{Error, Result};
use crate::frames::Vec3;
use crate::guidance::{run_closed_loop, GuidanceProblem, RolloutConfig};
use crate::ops;
use crate::sim::{safe_landing, LanderState, RolloutResult, TerminalTarget};
use crate::tgo::{eval_tgo, TgoPolicy};

/// One-shot retargeting decision taken at phase start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetargetDecision {
    pub feasible: bool,
    pub s: ReducedState2,
    pub s_projected: ReducedState2,
    /// Signed downrange shift of the landing site [m]; positive moves
    /// the target farther along the direction of travel.
    pub target_shift: f64,
    pub new_target: Vec3,
}

/// Reduced guidance state of a full lander state relative to a target.
pub fn reduce_full(r: &Vec3, v: &Vec3, target: &Vec3) -> Result<ReducedGuidanceState> {
    let dr = target - r;
    let s = (dr.x * dr.x + dr.y * dr.y).sqrt();
    let h = r.z - target.z;
    let w = -v.z;
    let vh = (v.x * v.x + v.y * v.y).sqrt();
    if w <= 0.0 || vh <= 0.0 {
        return Err(Error::UndefinedReduction { v: vh, w });
    }
    Ok(ReducedGuidanceState { s, h, w, v: vh })
}

/// True when the state lies strictly inside the controllable region.
pub fn assess_feasibility(boundary: &ConicBoundary, state: &ReducedGuidanceState) -> Result<bool> {
    let s = reduce(state)?;
    Ok(boundary.eval_g(&s) > 0.0)
}

const PROJECT_OPS: u64 = 22;

/// Solves g((s1', s2)) = 0 for s1' with s2 held fixed: one scalar
/// quadratic. Returns the root minimizing |s1' - s1|; equidistant roots
/// resolve toward the larger s1' (target kept farther downrange).
pub fn project_to_boundary(boundary: &ConicBoundary, s: &ReducedState2) -> Result<ReducedState2> {
    let (h, k, theta, m1, m2) = perturbed_params(&boundary.canonical, &boundary.delta);
    let (sn, cs) = theta.sin_cos();
    let q = s.s2 - k;
    let a = m1 * cs * cs + m2 * sn * sn;
    let b = 2.0 * cs * sn * (m1 - m2) * q;
    let c0 = (m1 * sn * sn + m2 * cs * cs) * q * q - 1.0;
    let disc = b * b - 4.0 * a * c0;
    ops::add(PROJECT_OPS);
    if disc < 0.0 || a.abs() < 1e-300 {
        return Err(Error::NoHorizontalIntersection(s.s2));
    }
    let root = disc.sqrt();
    let p1 = (-b + root) / (2.0 * a);
    let p2 = (-b - root) / (2.0 * a);
    let (c1, c2) = (h + p1, h + p2);
    let (d1, d2) = ((c1 - s.s1).abs(), (c2 - s.s1).abs());
    let s1p = if (d1 - d2).abs() <= 1e-12 * (d1.max(d2).max(1.0)) {
        c1.max(c2)
    } else if d1 < d2 {
        c1
    } else {
        c2
    };
    Ok(ReducedState2 { s1: s1p, s2: s.s2 })
}

/// Assess, and when infeasible compute the shifted landing site.
/// `travel_dir` is the unit horizontal velocity direction used to place
/// the new target; the shift is along the ground track only.
///
/// Runs in a fixed number of arithmetic operations: one decision
/// function evaluation plus one quadratic solve.
pub fn compute_retarget(
    boundary: &ConicBoundary,
    state: &ReducedGuidanceState,
    current_target: &Vec3,
    travel_dir: &Vec3,
    eps_inset: f64,
) -> Result<RetargetDecision> {
    let s = reduce(state)?;
    if boundary.eval_g(&s) > 0.0 {
        return Ok(RetargetDecision {
            feasible: true,
            s,
            s_projected: s,
            target_shift: 0.0,
            new_target: *current_target,
        });
    }
    let mut proj = project_to_boundary(boundary, &s).map_err(|e| match e {
        Error::NoHorizontalIntersection(s2) => {
            Error::RetargetInfeasible(format!("horizontal line s2 = {s2} misses the boundary"))
        }
        other => other,
    })?;
    if eps_inset != 0.0 {
        // Conservative inset: nudge the projected range toward the
        // feasible side (the direction increasing g).
        let step = 1e-6 * proj.s1.abs().max(1.0);
        let g_plus = boundary.eval_g(&ReducedState2 { s1: proj.s1 + step, ..proj });
        let g_minus = boundary.eval_g(&ReducedState2 { s1: proj.s1 - step, ..proj });
        proj.s1 += if g_plus > g_minus { eps_inset } else { -eps_inset };
    }
    let s_new = proj.s1 * state.v;
    let shift = s_new - state.s;
    ops::add(2);
    Ok(RetargetDecision {
        feasible: false,
        s,
        s_projected: proj,
        target_shift: shift,
        new_target: current_target + travel_dir * shift,
    })
}

/// Flight-layer options for `guided_descent`.
#[derive(Debug, Clone, Copy)]
pub struct FlightOptions {
    /// Inward offset applied to the projected range coordinate.
    pub eps_inset: f64,
    /// Half-width of the commanded-time validation search [s]; 0
    /// disables the predictive check.
    pub tgo_search_span: f64,
    /// Step of the commanded-time validation search [s].
    pub tgo_search_step: f64,
}

impl Default for FlightOptions {
    fn default() -> Self {
        Self {
            eps_inset: 0.0,
            tgo_search_span: 10.0,
            tgo_search_step: 1.0,
        }
    }
}

/// Bounded predictive check of the commanded flight time.
///
/// The learned time is a regression output; near the edge of a feasible
/// window a sub-second error puts the plan outside it. Candidate times
/// fan out from the prediction in `step` increments (nearest first). A
/// candidate whose predicted rollout passes the full convergence
/// indicator wins outright; failing that, the nearest candidate whose
/// flown trajectory still lands safely is kept; failing that too, the
/// raw prediction stands.
fn validate_tgo(
    initial: &LanderState,
    problem: &GuidanceProblem,
    t_base: f64,
    cfg: &RolloutConfig,
    opts: &FlightOptions,
) -> Result<f64> {
    if opts.tgo_search_span <= 0.0 || opts.tgo_search_step <= 0.0 {
        return Ok(t_base);
    }
    let target = TerminalTarget {
        rf: problem.rf,
        vf: problem.vf,
    };
    let n = (opts.tgo_search_span / opts.tgo_search_step).floor() as i64;
    let mut fallback = None;
    for i in 0..=(2 * n) {
        // 0, +1, -1, +2, -2, ... in units of the step; the longer
        // (more conservative) time is tried first at each distance.
        let k = if i % 2 == 1 { (i + 1) / 2 } else { -(i / 2) };
        let t = t_base + k as f64 * opts.tgo_search_step;
        if t <= 0.0 {
            continue;
        }
        let probe = run_closed_loop(initial, problem, t, cfg)?;
        if probe.converged {
            return Ok(t);
        }
        if fallback.is_none() && safe_landing(&probe, &target, &cfg.tol, &cfg.limits) {
            fallback = Some(t);
        }
    }
    Ok(fallback.unwrap_or(t_base))
}

/// Full guided rollout: one retargeting decision at t_0, then the base
/// policy runs to completion against the (possibly shifted) target with
/// t_go from the learned policy, validated by a bounded predictive
/// check when the retargeting layer is active.
pub fn guided_descent(
    initial: &LanderState,
    problem: &GuidanceProblem,
    tgo: &TgoPolicy,
    boundary: &ConicBoundary,
    cfg: &RolloutConfig,
    allow_retarget: bool,
    opts: &FlightOptions,
) -> Result<(RolloutResult, RetargetDecision)> {
    let reduced = reduce_full(&initial.r, &initial.v, &problem.rf)?;
    let vh = (initial.v.x * initial.v.x + initial.v.y * initial.v.y).sqrt();
    let travel_dir = Vec3::new(initial.v.x / vh, initial.v.y / vh, 0.0);

    let decision = if allow_retarget {
        compute_retarget(boundary, &reduced, &problem.rf, &travel_dir, opts.eps_inset)?
    } else {
        let s = reduce(&reduced)?;
        RetargetDecision {
            feasible: boundary.eval_g(&s) > 0.0,
            s,
            s_projected: s,
            target_shift: 0.0,
            new_target: problem.rf,
        }
    };

    let mut prob = *problem;
    prob.rf = decision.new_target;
    let reduced_final = reduce_full(&initial.r, &initial.v, &prob.rf)?;
    let mut t_go = eval_tgo(tgo, &reduced_final);
    if allow_retarget {
        t_go = validate_tgo(initial, &prob, t_go, cfg, opts)?;
    }
    let rollout = run_closed_loop(initial, &prob, t_go, cfg)?;
    Ok((rollout, decision))
}
