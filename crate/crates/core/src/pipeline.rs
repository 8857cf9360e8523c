//! Offline pipeline: sampled states -> feasibility sets -> time-to-go
//! policy and controllability boundary. Deterministic for a fixed
//! config; parallelism only fans out the independent per-state rollouts.

use std::path::Path;

use rayon::prelude::*;

use crate::artifacts;
use crate::boundary::{
    canonicalize, featurize, fit_level1_cv, fit_level2, reduce, resolve_sign, shrinkage,
    to_general_conic, ConicBoundary, Level1Model, ReducedState2,
};
use crate::config::RunConfig;
use crate::dataset::{
    compute_feasibility_set, extract_tgo_dataset, label_dataset, sample_states,
    FeasibilitySet, LabeledSample, ProblemTemplate, ReducedGuidanceState, SampleMode, TgoDataset,
};
use crate::error::Result;
use crate::tgo::{fit_lasso_cv, TgoPolicy};

#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub sets: Vec<FeasibilitySet>,
    pub labels: Vec<LabeledSample>,
    pub reduced: Vec<(ReducedState2, i8)>,
    pub tgo_dataset: TgoDataset,
    pub tgo_policy: TgoPolicy,
    pub level1: Level1Model,
    pub boundary: ConicBoundary,
    /// Training samples the unperturbed conic gets wrong.
    pub level1_misclassified: usize,
    /// Fraction of controllable samples lost to the Level-2 shift.
    pub shrinkage: f64,
}

/// Runs the offline stages on `n_states` sampled initial conditions.
/// `workers = 0` keeps the global thread pool.
pub fn run_pipeline(cfg: &RunConfig, n_states: usize, workers: usize) -> Result<PipelineArtifacts> {
    cfg.validate()?;
    let nominal = ReducedGuidanceState {
        s: cfg.nominal.s,
        h: cfg.nominal.h,
        w: cfg.nominal.w,
        v: cfg.nominal.v,
    };
    let bounds = [
        cfg.dispersion.bound_s,
        cfg.dispersion.bound_h,
        cfg.dispersion.bound_w,
        cfg.dispersion.bound_v,
    ];
    let states = sample_states(&nominal, &bounds, n_states, cfg.master_seed, SampleMode::Uniform);
    let template = ProblemTemplate::from_config(cfg);
    let rollout = cfg.rollout_config();

    let compute = || -> Vec<FeasibilitySet> {
        states
            .par_iter()
            .map(|x| compute_feasibility_set(x, &cfg.algorithm1, &template, &rollout))
            .collect()
    };
    let sets = if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::error::Error::Config(format!("thread pool: {e}")))?
            .install(compute)
    } else {
        compute()
    };

    let labels = label_dataset(&sets)?;
    let tgo_dataset = extract_tgo_dataset(&sets);
    let tgo_policy = fit_lasso_cv(
        &tgo_dataset,
        &cfg.lasso,
        (cfg.algorithm1.tgo_min, cfg.algorithm1.tgo_max),
    )?;

    let reduced: Vec<(ReducedState2, i8)> = labels
        .iter()
        .map(|l| Ok((reduce(&l.state)?, l.label)))
        .collect::<Result<_>>()?;
    let features: Vec<([f64; 5], i8)> = reduced.iter().map(|(s, d)| (featurize(s), *d)).collect();
    let level1 = fit_level1_cv(&features, &cfg.svm)?;
    let conic = to_general_conic(&level1)?;
    let canonical = canonicalize(&conic)?;
    let sign = resolve_sign(&canonical, &reduced);
    let boundary0 = ConicBoundary {
        canonical,
        delta: [0.0; 3],
        sign,
        eta: cfg.level2.eta,
    };
    let level1_misclassified = reduced
        .iter()
        .filter(|(s, d)| (boundary0.eval_g(s) > 0.0) != (*d > 0))
        .count();
    let boundary = fit_level2(&boundary0, &reduced, cfg.level2.eta, &cfg.level2)?;
    let shrink = shrinkage(&boundary, &reduced);

    Ok(PipelineArtifacts {
        sets,
        labels,
        reduced,
        tgo_dataset,
        tgo_policy,
        level1,
        boundary,
        level1_misclassified,
        shrinkage: shrink,
    })
}

pub const DATASET_FILE: &str = "dataset.csv";
pub const FEASIBILITY_FILE: &str = "feasibility.csv";
pub const TGO_MODEL_FILE: &str = "tgo.model";
pub const BOUNDARY_MODEL_FILE: &str = "boundary.model";
pub const BOUNDARY_POLYLINE_FILE: &str = "boundary_polyline.csv";

/// Persists the pipeline outputs. Files are staged with a .tmp suffix
/// and renamed at the end so a failed run leaves no partial artifact
/// under the final names.
pub fn persist_artifacts(dir: &Path, artifacts: &PipelineArtifacts) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stage = |name: &str| dir.join(format!("{name}.tmp"));
    artifacts::write_dataset(&stage(DATASET_FILE), &artifacts.sets)?;
    artifacts::write_feasibility_long(&stage(FEASIBILITY_FILE), &artifacts.sets)?;
    artifacts::write_tgo_policy(&stage(TGO_MODEL_FILE), &artifacts.tgo_policy)?;
    artifacts::write_boundary(&stage(BOUNDARY_MODEL_FILE), &artifacts.boundary)?;
    artifacts::write_polyline(&stage(BOUNDARY_POLYLINE_FILE), &artifacts.boundary.polyline(256))?;
    for name in [
        DATASET_FILE,
        FEASIBILITY_FILE,
        TGO_MODEL_FILE,
        BOUNDARY_MODEL_FILE,
        BOUNDARY_POLYLINE_FILE,
    ] {
        std::fs::rename(stage(name), dir.join(name))?;
    }
    Ok(())
}
