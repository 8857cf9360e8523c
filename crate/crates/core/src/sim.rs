//! 3-DOF translational lander simulator.
//!
//! Integrates position, velocity and mass under a commanded net
//! acceleration, with thrust magnitude clamping, a thrust-rate limit and
//! path-constraint monitoring. The frame is surface-fixed: x downrange
//! toward the target, y crossrange, z altitude; gravity points along -z.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::Vec3;

/// Translational state of the lander.
#[derive(Debug, Clone, Copy)]
pub struct LanderState {
    pub t: f64,
    pub r: Vec3,
    pub v: Vec3,
    pub m: f64,
}

impl LanderState {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.r.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.m.is_finite()
            && self.m > 0.0
    }
}

/// Path-constraint limits and physical constants.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    /// Minimum total thrust [N].
    pub rho_min: f64,
    /// Maximum total thrust [N].
    pub rho_max: f64,
    /// Thrust rate bound [N/s].
    pub thrust_rate_max: f64,
    /// Thrust-off-vertical limit [rad].
    pub theta_lim: f64,
    /// Horizontal speed limit [m/s].
    pub vh_max: f64,
    /// Terminal mass floor [kg].
    pub m_terminal_min: f64,
    /// Gravity vector [m/s^2].
    pub g: Vec3,
    /// Fuel consumption rate constant [kg/(N s)].
    pub alpha: f64,
    /// Allowed dip below the target plane before the sub-surface
    /// constraint trips [m].
    pub subsurface_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    ThrustBounds,
    ThrustRate,
    SubSurface,
    AttitudeLimit,
    HorizontalSpeed,
}

impl std::fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConstraintId::ThrustBounds => "ThrustBounds",
            ConstraintId::ThrustRate => "ThrustRate",
            ConstraintId::SubSurface => "SubSurface",
            ConstraintId::AttitudeLimit => "AttitudeLimit",
            ConstraintId::HorizontalSpeed => "HorizontalSpeed",
        };
        f.write_str(s)
    }
}

/// A violated constraint with its margin (how far past the limit).
#[derive(Debug, Clone, Copy)]
pub struct Violation {
    pub id: ConstraintId,
    pub margin: f64,
}

/// One guidance-cycle step as recorded in a trajectory trace.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub state: LanderState,
    /// Commanded net acceleration [m/s^2].
    pub a_cmd: Vec3,
    /// Applied total thrust after clamping and rate limiting [N].
    pub t_c: f64,
    /// Commanded thrust magnitude before clamping [N]. The thrust-bound
    /// constraint is judged on this value: a demand the actuator cannot
    /// meet marks the trajectory infeasible even though the applied
    /// thrust is clamped into range.
    pub t_demand: f64,
    /// Thrust-off-vertical angle [rad].
    pub theta: f64,
    pub violations: Vec<ConstraintId>,
}

/// Terminal position/velocity tolerances for the convergence indicator.
#[derive(Debug, Clone, Copy)]
pub struct TerminalTolerances {
    pub pos: f64,
    pub vel: f64,
}

/// Outcome of a closed-loop rollout.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub trace: Vec<StepRecord>,
    pub terminal: LanderState,
    pub fuel_used: f64,
    pub converged: bool,
    /// First-violation time per constraint.
    pub violated: Vec<(ConstraintId, f64)>,
}

const EPS: f64 = 1e-9;

/// Advances the state by one guidance cycle under a commanded net
/// acceleration.
///
/// The propulsive command is `a_net - g`; its magnitude maps to thrust,
/// which is clamped to `[rho_min, rho_max]` and rate-limited against
/// `t_prev`. The achieved acceleration is recomputed from the applied
/// thrust along the commanded direction, and the state is advanced by
/// `substeps` RK4 substeps with the mass flow held constant.
pub fn step(
    state: &LanderState,
    a_net: Vec3,
    dt: f64,
    limits: &ConstraintSet,
    t_prev: f64,
    target_r: Vec3,
    substeps: usize,
) -> Result<(LanderState, StepRecord)> {
    debug_assert!(dt > 0.0 && substeps >= 1);
    let a_prop = a_net - limits.g;
    let mag = a_prop.norm();
    // Undefined direction for a near-zero propulsive command: thrust
    // vertical, minimum magnitude.
    let dir = if mag > 1e-12 {
        a_prop / mag
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let t_demand = state.m * mag;
    let t_cmd = t_demand.clamp(limits.rho_min, limits.rho_max);
    let d_max = limits.thrust_rate_max * dt;
    let t_c = t_cmd.clamp(t_prev - d_max, t_prev + d_max);

    let mut s = *state;
    let h = dt / substeps as f64;
    for _ in 0..substeps {
        s = rk4_substep(&s, limits.g, t_c, dir, limits.alpha, h);
    }
    if !s.is_finite() {
        return Err(Error::NonFiniteState(state.t));
    }

    let theta = dir.z.clamp(-1.0, 1.0).acos();
    let mut rec = StepRecord {
        state: s,
        a_cmd: a_net,
        t_c,
        t_demand,
        theta,
        violations: Vec::new(),
    };
    rec.violations = check_constraints(&rec, target_r, limits, t_prev, dt)
        .into_iter()
        .map(|v| v.id)
        .collect();
    Ok((s, rec))
}

fn rk4_substep(s: &LanderState, g: Vec3, t_c: f64, dir: Vec3, alpha: f64, h: f64) -> LanderState {
    let mdot = -alpha * t_c;
    let acc = |m: f64| g + dir * (t_c / m);

    // k1
    let a1 = acc(s.m);
    // k2 at h/2
    let m2 = s.m + 0.5 * h * mdot;
    let v2 = s.v + 0.5 * h * a1;
    let a2 = acc(m2);
    // k3 at h/2
    let v3 = s.v + 0.5 * h * a2;
    let a3 = acc(m2);
    // k4 at h
    let m4 = s.m + h * mdot;
    let v4 = s.v + h * a3;
    let a4 = acc(m4);

    LanderState {
        t: s.t + h,
        r: s.r + (s.v + 2.0 * v2 + 2.0 * v3 + v4) * (h / 6.0),
        v: s.v + (a1 + 2.0 * a2 + 2.0 * a3 + a4) * (h / 6.0),
        m: s.m + h * mdot,
    }
}

/// Ballistic propagation with thrust off (test mode): RK4 is exact for
/// constant acceleration.
pub fn propagate_ballistic(state: &LanderState, g: Vec3, dt: f64, substeps: usize) -> LanderState {
    let mut s = *state;
    let h = dt / substeps as f64;
    for _ in 0..substeps {
        let a = g;
        let v2 = s.v + 0.5 * h * a;
        let v4 = s.v + h * a;
        s = LanderState {
            t: s.t + h,
            r: s.r + (s.v + 4.0 * v2 + v4) * (h / 6.0),
            v: s.v + h * a,
            m: s.m,
        };
    }
    s
}

/// Fixed-thrust propagation used by the integrator-order test.
pub fn propagate_const_thrust(
    state: &LanderState,
    g: Vec3,
    t_c: f64,
    dir: Vec3,
    alpha: f64,
    duration: f64,
    n_steps: usize,
) -> LanderState {
    let mut s = *state;
    let h = duration / n_steps as f64;
    for _ in 0..n_steps {
        s = rk4_substep(&s, g, t_c, dir, alpha, h);
    }
    s
}

/// Evaluates the path constraints at a recorded step.
pub fn check_constraints(
    rec: &StepRecord,
    target_r: Vec3,
    limits: &ConstraintSet,
    t_prev: f64,
    dt: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if rec.t_demand < limits.rho_min - EPS || rec.t_demand > limits.rho_max + EPS {
        let margin = (limits.rho_min - rec.t_demand).max(rec.t_demand - limits.rho_max);
        out.push(Violation { id: ConstraintId::ThrustBounds, margin });
    }
    let rate = (rec.t_c - t_prev).abs() / dt;
    if rate > limits.thrust_rate_max + EPS {
        out.push(Violation {
            id: ConstraintId::ThrustRate,
            margin: rate - limits.thrust_rate_max,
        });
    }
    let altitude = rec.state.r.z - target_r.z;
    if altitude < -limits.subsurface_margin {
        out.push(Violation {
            id: ConstraintId::SubSurface,
            margin: -limits.subsurface_margin - altitude,
        });
    }
    if rec.theta > limits.theta_lim + 1e-12 {
        out.push(Violation {
            id: ConstraintId::AttitudeLimit,
            margin: rec.theta - limits.theta_lim,
        });
    }
    let vh = rec.state.v.xy().norm();
    if vh >= limits.vh_max {
        out.push(Violation {
            id: ConstraintId::HorizontalSpeed,
            margin: vh - limits.vh_max,
        });
    }
    out
}

/// Terminal boundary data needed by the convergence indicator.
#[derive(Debug, Clone, Copy)]
pub struct TerminalTarget {
    pub rf: Vec3,
    pub vf: Vec3,
}

/// Algorithm-level convergence indicator: no path violations and the
/// terminal state within tolerance of the boundary conditions.
pub fn convergence_indicator(
    result: &RolloutResult,
    target: &TerminalTarget,
    tol: &TerminalTolerances,
    limits: &ConstraintSet,
) -> bool {
    result.violated.is_empty()
        && (result.terminal.r - target.rf).norm() <= tol.pos
        && (result.terminal.v - target.vf).norm() <= tol.vel
        && result.terminal.m >= limits.m_terminal_min
}

/// Flight-outcome indicator: judges only the flown trajectory. Thrust
/// bounds are checked against the commanded demand, which the actuator
/// clamps into its physical range before it ever acts on the vehicle,
/// so a demand excursion alone does not make the flight unsafe. Every
/// other path constraint holds on the actual state and still applies,
/// as do the terminal conditions.
pub fn safe_landing(
    result: &RolloutResult,
    target: &TerminalTarget,
    tol: &TerminalTolerances,
    limits: &ConstraintSet,
) -> bool {
    result
        .violated
        .iter()
        .all(|(id, _)| matches!(id, ConstraintId::ThrustBounds))
        && (result.terminal.r - target.rf).norm() <= tol.pos
        && (result.terminal.v - target.vf).norm() <= tol.vel
        && result.terminal.m >= limits.m_terminal_min
}
