//! Run configuration: one versioned artifact holding every physical
//! constant, constraint limit and solver hyperparameter. Unknown keys
//! are rejected so a stale config fails loudly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::Vec3;
use crate::guidance::{GuidanceProblem, RolloutConfig};
use crate::sim::{ConstraintSet, LanderState, TerminalTolerances};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub physics: Physics,
    pub constraints: Constraints,
    pub guidance: Guidance,
    pub scenario: Scenario,
    pub nominal: NominalState,
    pub dispersion: Dispersion,
    pub algorithm1: Algorithm1,
    pub dataset: Dataset,
    pub lasso: Lasso,
    pub svm: Svm,
    pub level2: Level2,
    pub retarget: Retarget,
    pub montecarlo: MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    /// Gravity vector [m/s^2].
    pub g: [f64; 3],
    /// Wet mass at phase start [kg].
    pub m_wet: f64,
    /// Fuel rate constant [kg/(N s)].
    pub alpha: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { g: [0.0, 0.0, -1.68], m_wet: 1050.0, alpha: 0.00035 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constraints {
    pub rho_min: f64,
    pub rho_max: f64,
    pub thrust_rate_max: f64,
    pub theta_lim_deg: f64,
    pub vh_max: f64,
    pub m_terminal_min: f64,
    pub subsurface_margin: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            rho_min: 1480.0,
            rho_max: 3120.0,
            thrust_rate_max: 200.0,
            // The nominal initial thrust vector sits ~50 deg off vertical
            // (horizontal braking dominates early), so the attitude limit
            // must clear that with margin for dispersed states.
            theta_lim_deg: 75.0,
            vh_max: 400.0,
            m_terminal_min: 850.0,
            subsurface_margin: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Guidance {
    /// Guidance cycle [s].
    pub dt: f64,
    /// RK4 substeps per cycle.
    pub substeps: usize,
    /// Terminal hold threshold on t_go [s].
    pub tgo_floor: f64,
    pub tol_pos: f64,
    pub tol_vel: f64,
    /// Frame reference depth below the target [m].
    pub frame_ref_depth: f64,
}

impl Default for Guidance {
    fn default() -> Self {
        Self {
            dt: 0.1,
            substeps: 2,
            tgo_floor: 2.0,
            tol_pos: 10.0,
            tol_vel: 0.5,
            frame_ref_depth: 1_737_400.0,
        }
    }
}

/// Nominal simulation scenario: navigation-frame boundary data.
/// Accelerations are propulsive; net values add gravity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub target: [f64; 3],
    pub r0: [f64; 3],
    pub v0: [f64; 3],
    pub a0_prop: [f64; 3],
    pub af_prop: [f64; 3],
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            target: [0.0, 0.0, 1300.0],
            r0: [-28_500.0, 0.0, 6800.0],
            v0: [336.0, 0.0, -59.0],
            a0_prop: [-2.26, 0.0, 1.91],
            af_prop: [0.0, 0.0, 3.2],
        }
    }
}

/// Nominal reduced guidance state for dataset generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NominalState {
    /// Downrange to target [m].
    pub s: f64,
    /// Altitude above target [m].
    pub h: f64,
    /// Descent rate [m/s].
    pub w: f64,
    /// Horizontal speed [m/s].
    pub v: f64,
}

impl Default for NominalState {
    fn default() -> Self {
        // Altitude is height above the 1.3 km target site, not absolute.
        Self { s: 28_500.0, h: 5500.0, w: 59.0, v: 336.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dispersion {
    /// Uniform half-widths for controllable-set generation.
    pub bound_s: f64,
    pub bound_h: f64,
    pub bound_w: f64,
    pub bound_v: f64,
    /// 3-sigma values for flight Monte Carlo sampling.
    pub sigma3_s: f64,
    pub sigma3_h: f64,
    pub sigma3_w: f64,
    pub sigma3_v: f64,
}

impl Default for Dispersion {
    fn default() -> Self {
        Self {
            bound_s: 3000.0,
            bound_h: 3000.0,
            bound_w: 17.0,
            bound_v: 17.0,
            sigma3_s: 750.0,
            sigma3_h: 900.0,
            sigma3_w: 2.5,
            sigma3_v: 1.75,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Algorithm1 {
    pub tgo_min: f64,
    pub tgo_max: f64,
    /// Bisection bracket tolerance [s].
    pub eps_t: f64,
    /// Sweep step [s].
    pub delta_tgo: f64,
}

impl Default for Algorithm1 {
    fn default() -> Self {
        Self { tgo_min: 100.0, tgo_max: 300.0, eps_t: 0.5, delta_tgo: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dataset {
    /// Number of sampled states for boundary construction.
    pub n_states: usize,
}

impl Default for Dataset {
    fn default() -> Self {
        Self { n_states: 2000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lasso {
    /// Log-spaced regularization grid on standardized data.
    pub mu_grid_min: f64,
    pub mu_grid_max: f64,
    pub mu_grid_points: usize,
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    pub cv_folds: usize,
}

impl Default for Lasso {
    fn default() -> Self {
        Self {
            mu_grid_min: 1e-4,
            mu_grid_max: 10.0,
            mu_grid_points: 11,
            kkt_tol: 1e-8,
            max_sweeps: 100_000,
            cv_folds: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Svm {
    pub gamma_grid: Vec<f64>,
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub cv_folds: usize,
}

impl Default for Svm {
    fn default() -> Self {
        Self {
            gamma_grid: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            kkt_tol: 1e-6,
            max_iters: 2_000_000,
            cv_folds: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Level2 {
    /// Safety margin on the decision function for uncontrollable samples.
    pub eta: f64,
    /// Grid resolution per perturbation axis.
    pub grid_points: usize,
    /// Centroid-shift search bound as a fraction of the data extent.
    pub bound_scale: f64,
    /// Rotation search bound [rad].
    pub theta_bound: f64,
}

impl Default for Level2 {
    fn default() -> Self {
        Self { eta: 0.01, grid_points: 21, bound_scale: 0.5, theta_bound: 0.35 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Retarget {
    /// Inward offset applied to the projected range coordinate.
    pub eps_inset: f64,
    /// Half-width of the commanded-time validation search [s]; 0 turns
    /// the predictive check off.
    pub tgo_search_span: f64,
    /// Step of the commanded-time validation search [s].
    pub tgo_search_step: f64,
}

impl Default for Retarget {
    fn default() -> Self {
        Self {
            eps_inset: 0.0,
            tgo_search_span: 10.0,
            tgo_search_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarlo {
    pub runs: usize,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self { runs: 500 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed: 20_230_823,
            physics: Physics::default(),
            constraints: Constraints::default(),
            guidance: Guidance::default(),
            scenario: Scenario::default(),
            nominal: NominalState::default(),
            dispersion: Dispersion::default(),
            algorithm1: Algorithm1::default(),
            dataset: Dataset::default(),
            lasso: Lasso::default(),
            svm: Svm::default(),
            level2: Level2::default(),
            retarget: Retarget::default(),
            montecarlo: MonteCarlo::default(),
        }
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.constraints;
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(0.0 < c.rho_min && c.rho_min < c.rho_max) {
            return Err(Error::Config("need 0 < rho_min < rho_max".into()));
        }
        if c.thrust_rate_max <= 0.0 || c.vh_max <= 0.0 {
            return Err(Error::Config("thrust_rate_max and vh_max must be positive".into()));
        }
        if !(0.0 < c.theta_lim_deg && c.theta_lim_deg < 90.0) {
            return Err(Error::Config("theta_lim_deg must be in (0, 90)".into()));
        }
        if self.physics.alpha <= 0.0 || self.physics.m_wet <= 0.0 {
            return Err(Error::Config("alpha and m_wet must be positive".into()));
        }
        if self.guidance.dt <= 0.0 || self.guidance.substeps == 0 {
            return Err(Error::Config("dt must be positive and substeps >= 1".into()));
        }
        let a = &self.algorithm1;
        if !(a.tgo_min < a.tgo_max) || a.eps_t <= 0.0 || a.delta_tgo <= 0.0 {
            return Err(Error::Config("algorithm1 requires tgo_min < tgo_max and positive eps_t, delta_tgo".into()));
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vec3 {
        vec3(self.physics.g)
    }

    pub fn constraint_set(&self) -> ConstraintSet {
        ConstraintSet {
            rho_min: self.constraints.rho_min,
            rho_max: self.constraints.rho_max,
            thrust_rate_max: self.constraints.thrust_rate_max,
            theta_lim: self.constraints.theta_lim_deg.to_radians(),
            vh_max: self.constraints.vh_max,
            m_terminal_min: self.constraints.m_terminal_min,
            g: self.gravity(),
            alpha: self.physics.alpha,
            subsurface_margin: self.constraints.subsurface_margin,
        }
    }

    pub fn tolerances(&self) -> TerminalTolerances {
        TerminalTolerances { pos: self.guidance.tol_pos, vel: self.guidance.tol_vel }
    }

    pub fn flight_options(&self) -> crate::retarget::FlightOptions {
        crate::retarget::FlightOptions {
            eps_inset: self.retarget.eps_inset,
            tgo_search_span: self.retarget.tgo_search_span,
            tgo_search_step: self.retarget.tgo_search_step,
        }
    }

    pub fn rollout_config(&self) -> RolloutConfig {
        RolloutConfig {
            dt: self.guidance.dt,
            substeps: self.guidance.substeps,
            tgo_floor: self.guidance.tgo_floor,
            tol: self.tolerances(),
            limits: self.constraint_set(),
            frame_ref_depth: self.guidance.frame_ref_depth,
            record_trace: false,
            early_exit: false,
        }
    }

    /// Nominal scenario boundary problem (net accelerations).
    pub fn scenario_problem(&self) -> GuidanceProblem {
        let g = self.gravity();
        GuidanceProblem {
            r0: vec3(self.scenario.r0),
            v0: vec3(self.scenario.v0),
            a0: vec3(self.scenario.a0_prop) + g,
            rf: vec3(self.scenario.target),
            vf: Vec3::zeros(),
            af: vec3(self.scenario.af_prop) + g,
        }
    }

    pub fn scenario_initial_state(&self) -> LanderState {
        LanderState {
            t: 0.0,
            r: vec3(self.scenario.r0),
            v: vec3(self.scenario.v0),
            m: self.physics.m_wet,
        }
    }
}
