//! Controllable-set dataset generation.
//!
//! Samples perturbed reduced guidance states, computes each state's
//! feasibility set (time-to-go / terminal-mass pairs that converge under
//! the base policy) via bisection plus a downward sweep, and assembles
//! the supervised time-to-go dataset and the labeled controllability
//! dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm1, RunConfig};
use crate::error::{Error, Result};
use crate::frames::Vec3;
use crate::guidance::{run_closed_loop, GuidanceProblem, RolloutConfig};
use crate::sim::LanderState;

/// Reduced guidance state: downrange, altitude above target, descent
/// rate and horizontal speed, all positive in the descending regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedGuidanceState {
    pub s: f64,
    pub h: f64,
    pub w: f64,
    pub v: f64,
}

/// Feasible (t_go, terminal mass) pairs for one state, ascending in t_go.
/// Empty means uncontrollable.
#[derive(Debug, Clone)]
pub struct FeasibilitySet {
    pub state: ReducedGuidanceState,
    pub entries: Vec<(f64, f64)>,
}

impl FeasibilitySet {
    /// Fuel-optimal entry: argmax of terminal mass, ties toward smaller
    /// t_go.
    pub fn optimal(&self) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for &(t, m) in &self.entries {
            match best {
                None => best = Some((t, m)),
                Some((bt, bm)) => {
                    if m > bm || (m == bm && t < bt) {
                        best = Some((t, m));
                    }
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub state: ReducedGuidanceState,
    /// +1 controllable, -1 uncontrollable.
    pub label: i8,
}

/// Supervised dataset mapping reduced states to fuel-optimal t_go.
#[derive(Debug, Clone, Default)]
pub struct TgoDataset {
    pub records: Vec<(ReducedGuidanceState, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Uniform within nominal +/- half-width (controllable-set bounds).
    Uniform,
    /// Gaussian with sigma = half-width / 3 (flight dispersions).
    Gaussian,
}

/// Draws `n` perturbed reduced states around the nominal. Deterministic
/// given the seed; positivity of all four coordinates is enforced by
/// redrawing.
pub fn sample_states(
    nominal: &ReducedGuidanceState,
    half_widths: &[f64; 4],
    n: usize,
    seed: u64,
    mode: SampleMode,
) -> Vec<ReducedGuidanceState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let nom = [nominal.s, nominal.h, nominal.w, nominal.v];
    while out.len() < n {
        let mut x = [0.0f64; 4];
        let mut ok = true;
        for k in 0..4 {
            let val = match mode {
                SampleMode::Uniform => {
                    if half_widths[k] > 0.0 {
                        rng.gen_range(nom[k] - half_widths[k]..=nom[k] + half_widths[k])
                    } else {
                        nom[k]
                    }
                }
                SampleMode::Gaussian => {
                    let sigma = half_widths[k] / 3.0;
                    if sigma > 0.0 {
                        Normal::new(nom[k], sigma).unwrap().sample(&mut rng)
                    } else {
                        nom[k]
                    }
                }
            };
            if val <= 0.0 {
                ok = false;
                break;
            }
            x[k] = val;
        }
        if ok {
            out.push(ReducedGuidanceState { s: x[0], h: x[1], w: x[2], v: x[3] });
        }
    }
    out
}

/// Reconstruction of the full guidance problem from a reduced state:
/// position (-S, 0, H) and velocity (+v, 0, -w) relative to the target,
/// boundary accelerations from the nominal scenario.
#[derive(Debug, Clone)]
pub struct ProblemTemplate {
    pub target: Vec3,
    pub a0_prop: Vec3,
    pub af_prop: Vec3,
    pub g: Vec3,
    pub m_wet: f64,
}

impl ProblemTemplate {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let g = cfg.gravity();
        Self {
            target: Vec3::new(cfg.scenario.target[0], cfg.scenario.target[1], cfg.scenario.target[2]),
            a0_prop: Vec3::new(cfg.scenario.a0_prop[0], cfg.scenario.a0_prop[1], cfg.scenario.a0_prop[2]),
            af_prop: Vec3::new(cfg.scenario.af_prop[0], cfg.scenario.af_prop[1], cfg.scenario.af_prop[2]),
            g,
            m_wet: cfg.physics.m_wet,
        }
    }

    pub fn instantiate(&self, x: &ReducedGuidanceState) -> (LanderState, GuidanceProblem) {
        let r0 = self.target + Vec3::new(-x.s, 0.0, x.h);
        let v0 = Vec3::new(x.v, 0.0, -x.w);
        let problem = GuidanceProblem {
            r0,
            v0,
            a0: self.a0_prop + self.g,
            rf: self.target,
            vf: Vec3::zeros(),
            af: self.af_prop + self.g,
        };
        let state = LanderState { t: 0.0, r: r0, v: v0, m: self.m_wet };
        (state, problem)
    }
}

/// Feasibility-set computation against an arbitrary probe. The probe
/// returns the terminal mass when the rollout converges.
///
/// Phase 1 bisects toward the lower feasibility edge; phase 2 sweeps
/// downward from the upper end recording every feasible probe. If phase 1
/// never hits a feasible point the sweep covers the full range, so narrow
/// feasibility windows that dodge the bisection midpoints are still found.
pub fn compute_feasibility_set_with<F>(
    state: &ReducedGuidanceState,
    alg: &Algorithm1,
    mut probe: F,
) -> FeasibilitySet
where
    F: FnMut(f64) -> Option<f64>,
{
    let mut entries: Vec<(f64, f64)> = Vec::new();
    let mut lo = alg.tgo_min;
    let mut hi = alg.tgo_max;
    let mut last_feasible: Option<(f64, f64)> = None;
    while hi - lo > alg.eps_t {
        let mid = 0.5 * (lo + hi);
        match probe(mid) {
            Some(mf) => {
                last_feasible = Some((mid, mf));
                hi = mid;
            }
            None => lo = mid,
        }
    }
    if let Some(rec) = last_feasible {
        entries.push(rec);
    }

    let sweep_floor = if last_feasible.is_some() { lo } else { alg.tgo_min };
    let mut t = alg.tgo_max;
    while t - sweep_floor > alg.eps_t {
        if let Some(mf) = probe(t) {
            entries.push((t, mf));
        }
        t -= alg.delta_tgo;
    }

    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    entries.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9);
    FeasibilitySet { state: *state, entries }
}

/// Rollout-backed feasibility set under the base policy.
pub fn compute_feasibility_set(
    state: &ReducedGuidanceState,
    alg: &Algorithm1,
    template: &ProblemTemplate,
    rollout: &RolloutConfig,
) -> FeasibilitySet {
    let (initial, problem) = template.instantiate(state);
    let mut cfg = rollout.clone();
    cfg.record_trace = false;
    cfg.early_exit = true;
    compute_feasibility_set_with(state, alg, |t_go| {
        match run_closed_loop(&initial, &problem, t_go, &cfg) {
            Ok(res) if res.converged => Some(res.terminal.m),
            _ => None,
        }
    })
}

/// One record per nonempty set: the fuel-optimal t_go.
pub fn extract_tgo_dataset(sets: &[FeasibilitySet]) -> TgoDataset {
    let mut records = Vec::new();
    for set in sets {
        if let Some((t, _)) = set.optimal() {
            records.push((set.state, t));
        }
    }
    TgoDataset { records }
}

/// Labels each state by feasibility-set emptiness. Errors when only one
/// class is present: the sampling bounds failed to expose the boundary.
pub fn label_dataset(sets: &[FeasibilitySet]) -> Result<Vec<LabeledSample>> {
    let labels: Vec<LabeledSample> = sets
        .iter()
        .map(|s| LabeledSample {
            state: s.state,
            label: if s.entries.is_empty() { -1 } else { 1 },
        })
        .collect();
    let pos = labels.iter().filter(|l| l.label == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "{pos} controllable out of {} samples",
            labels.len()
        )));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal() -> ReducedGuidanceState {
        ReducedGuidanceState { s: 28_500.0, h: 6800.0, w: 59.0, v: 336.0 }
    }

    #[test]
    fn zero_bounds_reproduce_nominal() {
        let out = sample_states(&nominal(), &[0.0; 4], 1, 5, SampleMode::Uniform);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0], nominal());
    }

    #[test]
    fn same_seed_same_samples() {
        let b = [3000.0, 3000.0, 17.0, 17.0];
        let a1 = sample_states(&nominal(), &b, 100, 9, SampleMode::Uniform);
        let a2 = sample_states(&nominal(), &b, 100, 9, SampleMode::Uniform);
        assert_eq!(a1, a2);
        let g1 = sample_states(&nominal(), &b, 100, 9, SampleMode::Gaussian);
        let g2 = sample_states(&nominal(), &b, 100, 9, SampleMode::Gaussian);
        assert_eq!(g1, g2);
        assert_ne!(a1, g1);
    }

    #[test]
    fn samples_stay_in_uniform_bounds() {
        let b = [3000.0, 3000.0, 17.0, 17.0];
        for x in sample_states(&nominal(), &b, 500, 3, SampleMode::Uniform) {
            assert!((x.s - 28_500.0).abs() <= 3000.0);
            assert!((x.h - 6800.0).abs() <= 3000.0);
            assert!((x.w - 59.0).abs() <= 17.0);
            assert!((x.v - 336.0).abs() <= 17.0);
        }
    }

    #[test]
    fn bisection_finds_monotone_edge() {
        let alg = Algorithm1 { tgo_min: 100.0, tgo_max: 300.0, eps_t: 0.5, delta_tgo: 2.0 };
        let mut probes = 0usize;
        let set = compute_feasibility_set_with(&nominal(), &alg, |t| {
            probes += 1;
            if t >= 180.0 {
                Some(900.0 - 0.1 * t)
            } else {
                None
            }
        });
        let min_t = set.entries.first().unwrap().0;
        assert!((min_t - 180.0).abs() <= alg.eps_t, "edge at {min_t}");
        // Bisection bracket: ceil(log2(200/0.5)) = 9 probes, plus the sweep.
        let sweep = ((300.0 - 180.0) / 2.0) as usize + 1;
        assert!(probes <= 9 + sweep + 2, "{probes} probes");
        // Entries sorted ascending.
        assert!(set.entries.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn infeasible_everywhere_yields_empty_set_with_full_sweep() {
        let alg = Algorithm1 { tgo_min: 100.0, tgo_max: 120.0, eps_t: 0.5, delta_tgo: 2.0 };
        let set = compute_feasibility_set_with(&nominal(), &alg, |_| None);
        assert!(set.entries.is_empty());
    }

    #[test]
    fn narrow_window_caught_by_sweep_fallback() {
        // Feasible only on [139, 143]: every bisection midpoint of
        // [100, 300] misses it, the fallback sweep does not.
        let alg = Algorithm1 { tgo_min: 100.0, tgo_max: 300.0, eps_t: 0.5, delta_tgo: 2.0 };
        let set = compute_feasibility_set_with(&nominal(), &alg, |t| {
            if (139.0..=143.0).contains(&t) {
                Some(880.0)
            } else {
                None
            }
        });
        assert!(!set.entries.is_empty());
    }

    #[test]
    fn argmax_and_tie_rules() {
        let mk = |entries: Vec<(f64, f64)>| FeasibilitySet { state: nominal(), entries };
        let sets = vec![
            mk(vec![(150.0, 880.0), (170.0, 890.0), (200.0, 870.0)]),
            mk(vec![]),
            mk(vec![(120.0, 860.0), (140.0, 860.0)]),
        ];
        let ds = extract_tgo_dataset(&sets);
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.records[0].1, 170.0);
        assert_eq!(ds.records[1].1, 120.0);
    }

    #[test]
    fn labels_match_emptiness() {
        let mk = |entries: Vec<(f64, f64)>| FeasibilitySet { state: nominal(), entries };
        let sets = vec![mk(vec![(150.0, 880.0)]), mk(vec![])];
        let labels = label_dataset(&sets).unwrap();
        assert_eq!(labels[0].label, 1);
        assert_eq!(labels[1].label, -1);
        // All one class is degenerate.
        let all_pos = vec![mk(vec![(150.0, 880.0)]), mk(vec![(160.0, 870.0)])];
        assert!(matches!(label_dataset(&all_pos), Err(Error::DegenerateLabels(_))));
    }
}
