//! Training loop, evaluation, cross-validation and the full-model gradient
//! check.

pub mod metrics;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::TrainConfig;
use crate::data_io::{stratified_split, DatasetManifest, RoiTimeSeries, SplitPlan};
use crate::diffcore::{gradcheck, AdamState, GradcheckReport, ParamStore};
use crate::error::{Error, Result};
use crate::model::{batch_loss, subject_step, InputConfig, ModelConfig, SubjectInput};
use crate::synthgen::{self, SynthKind, SynthSpec};

pub use metrics::{auc, Confusion, EvalReport, MeanStd, Metric, Summary};

/// One line of the per-epoch JSON Lines log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub bce: f64,
    pub info_loss: f64,
}

pub fn epoch_log_jsonl(log: &[EpochLog]) -> String {
    log.iter()
        .map(|e| serde_json::to_string(e).expect("epoch log serializes") + "\n")
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: ModelConfig,
    pub input: InputConfig,
    pub params: ParamStore,
    pub log: Vec<EpochLog>,
}

/// Windows and adjacencies for every subject, computed in parallel.
pub fn prepare_inputs(subjects: &[RoiTimeSeries], input: &InputConfig) -> Result<Vec<SubjectInput>> {
    subjects.par_iter().map(|s| SubjectInput::prepare(s, input)).collect()
}

/// Model shape implied by `cfg` and the prepared subjects; also enforces the
/// window budget of the contrastive term.
pub fn model_for(cfg: &TrainConfig, inputs: &[SubjectInput]) -> Result<ModelConfig> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Manifest("dataset has no subjects".into()))?;
    let rois = first.signals.cols();
    if let Some(bad) = inputs.iter().find(|s| s.signals.cols() != rois) {
        return Err(Error::Shape(format!(
            "subject `{}` has {} ROIs, `{}` has {rois}",
            bad.subject_id,
            bad.signals.cols(),
            first.subject_id
        )));
    }
    if cfg.alpha > 0.0 {
        let required = cfg.delta + 1;
        if let Some(s) = inputs.iter().find(|s| s.windows.len() < required) {
            return Err(Error::WindowBudget {
                subject: s.subject_id.clone(),
                windows: s.windows.len(),
                required,
            });
        }
    }
    let min_windows = inputs.iter().map(|s| s.windows.len()).min().unwrap_or(1);
    cfg.model_config(rois, min_windows)
}

/// Seeded mini-batch training on prepared inputs: parameters are initialized
/// from `seed`, and each epoch visits the subjects in a fresh seeded order.
pub fn train_prepared(
    inputs: &[SubjectInput],
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ParamStore, Vec<EpochLog>)> {
    if inputs.is_empty() {
        return Err(Error::Manifest("no training subjects".into()));
    }
    let mut params = model.init_params(seed)?;
    let mut adam = AdamState::new(cfg.lr, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let n = inputs.len() as f64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut bce, mut info) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SubjectInput> = chunk.iter().map(|&i| &inputs[i]).collect();
            params.zero_grad();
            let parts = batch_loss(&mut params, model, &batch, true)?;
            adam.step(&mut params)?;
            let w = batch.len() as f64 / n;
            loss += parts.loss * w;
            bce += parts.bce * w;
            info += parts.info * w;
        }
        log.push(EpochLog {
            epoch,
            mean_loss: loss,
            bce,
            info_loss: info,
        });
    }
    params.zero_grad();
    Ok((params, log))
}

pub fn train(subjects: &[RoiTimeSeries], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let input = cfg.input_config()?;
    let inputs = prepare_inputs(subjects, &input)?;
    let model = model_for(cfg, &inputs)?;
    let (params, log) = train_prepared(&inputs, &model, cfg, cfg.seed)?;
    Ok(TrainedModel {
        model,
        input,
        params,
        log,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub subject_id: String,
    pub label: u8,
    pub prob: f64,
}

pub fn predict(params: &ParamStore, model: &ModelConfig, inputs: &[SubjectInput]) -> Result<Vec<Prediction>> {
    let mut params = params.clone();
    inputs
        .iter()
        .map(|s| {
            let parts = subject_step(&mut params, model, s, None)?;
            Ok(Prediction {
                subject_id: s.subject_id.clone(),
                label: s.label,
                prob: parts.prob,
            })
        })
        .collect()
}

pub fn report_of(predictions: &[Prediction]) -> EvalReport {
    let scores: Vec<f64> = predictions.iter().map(|p| p.prob).collect();
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    EvalReport::from_scores(&scores, &labels)
}

pub fn evaluate(params: &ParamStore, model: &ModelConfig, inputs: &[SubjectInput]) -> Result<EvalReport> {
    if inputs.is_empty() {
        return Err(Error::Manifest("evaluation set is empty".into()));
    }
    Ok(report_of(&predict(params, model, inputs)?))
}

fn select(inputs: &[SubjectInput], index: &HashMap<&str, usize>, ids: &[String]) -> Vec<SubjectInput> {
    ids.iter().map(|id| inputs[index[id.as_str()]].clone()).collect()
}

fn index_of(inputs: &[SubjectInput]) -> HashMap<&str, usize> {
    inputs.iter().enumerate().map(|(i, s)| (s.subject_id.as_str(), i)).collect()
}

fn split_for(manifest: &DatasetManifest, cfg: &TrainConfig) -> Result<SplitPlan> {
    stratified_split(manifest, cfg.test_fraction, cfg.folds, cfg.seed)
}

/// Result of training on the non-test subjects and scoring the held-out test
/// subjects.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoldoutReport {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub train: EvalReport,
    pub test: EvalReport,
    pub test_predictions: Vec<Prediction>,
    pub final_loss: f64,
}

pub fn train_holdout(
    manifest: &DatasetManifest,
    subjects: &[RoiTimeSeries],
    cfg: &TrainConfig,
) -> Result<(TrainedModel, HoldoutReport)> {
    cfg.validate()?;
    let plan = split_for(manifest, cfg)?;
    let input = cfg.input_config()?;
    let inputs = prepare_inputs(subjects, &input)?;
    let model = model_for(cfg, &inputs)?;
    let index = index_of(&inputs);
    let train_set = select(&inputs, &index, &plan.train_ids);
    let test_set = select(&inputs, &index, &plan.test_ids);
    let (params, log) = train_prepared(&train_set, &model, cfg, cfg.seed)?;
    let test_predictions = predict(&params, &model, &test_set)?;
    let report = HoldoutReport {
        seed: cfg.seed,
        train_ids: plan.train_ids,
        test_ids: plan.test_ids,
        train: evaluate(&params, &model, &train_set)?,
        test: report_of(&test_predictions),
        test_predictions,
        final_loss: log.last().map_or(f64::NAN, |e| e.mean_loss),
    };
    Ok((
        TrainedModel {
            model,
            input,
            params,
            log,
        },
        report,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub val: EvalReport,
    /// The fold model scored on the held-out test subjects.
    pub test: EvalReport,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    pub test_ids: Vec<String>,
    pub per_fold: Vec<FoldResult>,
    /// Over validation folds.
    pub summary: Summary,
    /// Over the fold models' held-out test scores.
    pub test_summary: Summary,
}

#[derive(Clone, Debug)]
pub struct FoldArtifacts {
    pub params: ParamStore,
    pub log: Vec<EpochLog>,
}

/// Stratified k-fold cross-validation over the non-test subjects. Fold `i`
/// trains with seed `cfg.seed + i`; folds run on up to `jobs` threads and
/// results come back in fold order.
pub fn cross_validate(
    manifest: &DatasetManifest,
    subjects: &[RoiTimeSeries],
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<(CvReport, ModelConfig, Vec<FoldArtifacts>)> {
    cfg.validate()?;
    let plan = split_for(manifest, cfg)?;
    let input = cfg.input_config()?;
    let inputs = prepare_inputs(subjects, &input)?;
    let model = model_for(cfg, &inputs)?;
    let index = index_of(&inputs);
    let test_set = select(&inputs, &index, &plan.test_ids);

    let run_fold = |(fold, (train_ids, val_ids)): (usize, &(Vec<String>, Vec<String>))| -> Result<(FoldResult, FoldArtifacts)> {
        let wrap = |e: Error| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let seed = cfg.seed + fold as u64;
        let train_set = select(&inputs, &index, train_ids);
        let val_set = select(&inputs, &index, val_ids);
        let (params, log) = train_prepared(&train_set, &model, cfg, seed).map_err(wrap)?;
        let val = evaluate(&params, &model, &val_set).map_err(wrap)?;
        let test = evaluate(&params, &model, &test_set).map_err(wrap)?;
        let result = FoldResult {
            fold,
            seed,
            train_ids: train_ids.clone(),
            val_ids: val_ids.clone(),
            val,
            test,
            final_loss: log.last().map_or(f64::NAN, |e| e.mean_loss),
        };
        Ok((result, FoldArtifacts { params, log }))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<(FoldResult, FoldArtifacts)>> =
        pool.install(|| plan.folds.par_iter().enumerate().map(run_fold).collect());

    let mut per_fold = Vec::with_capacity(outcomes.len());
    let mut artifacts = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let (r, a) = o?;
        per_fold.push(r);
        artifacts.push(a);
    }
    let summary = Summary::of(&per_fold.iter().map(|f| &f.val).collect::<Vec<_>>());
    let test_summary = Summary::of(&per_fold.iter().map(|f| &f.test).collect::<Vec<_>>());
    let report = CvReport {
        folds: cfg.folds,
        seed: cfg.seed,
        test_ids: plan.test_ids,
        per_fold,
        summary,
        test_summary,
    };
    Ok((report, model, artifacts))
}

/// Small configuration for gradient checks: windows of 10 with stride 5,
/// `D = 8`, two layers, `alpha = 0.1`, `delta = 1`.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        layers: 2,
        window_size: 10,
        stride: 5,
        hidden_dim: 8,
        alpha: 0.1,
        delta: 1,
        ..TrainConfig::default()
    }
}

/// Minimum number of sampled coordinates for [`gradcheck_model`].
pub const GRADCHECK_COORDINATES: usize = 200;
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Central-difference check of the total loss on a two-subject synthetic
/// batch (6 ROIs, 40 timepoints), parameters initialized from `seed`.
pub fn gradcheck_model(cfg: &TrainConfig, seed: u64) -> Result<GradcheckReport> {
    cfg.validate()?;
    let spec = SynthSpec {
        kind: SynthKind::Correlation,
        n_subjects: 2,
        rois: 6,
        timepoints: 40,
        noise_std: 0.3,
        seed,
        ..SynthSpec::default()
    };
    let subjects = synthgen::generate(&spec)?;
    let inputs = prepare_inputs(&subjects, &cfg.input_config()?)?;
    let model = model_for(cfg, &inputs)?;
    let params = model.init_params(seed)?;
    let batch: Vec<&SubjectInput> = inputs.iter().collect();
    let coords = gradcheck::sample_coordinates(&params, GRADCHECK_COORDINATES, seed);
    gradcheck::check(&params, &coords, GRADCHECK_STEP, |store, with_grad| {
        batch_loss(store, &model, &batch, with_grad).map(|p| p.loss)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::generate;

    fn toy(kind: SynthKind, n: usize, noise: f64) -> Vec<RoiTimeSeries> {
        generate(&SynthSpec {
            kind,
            n_subjects: n,
            rois: 6,
            timepoints: 40,
            noise_std: noise,
            seed: 5,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 2,
            lr: 1e-2,
            ..tiny_config()
        }
    }

    #[test]
    fn training_is_reproducible() {
        let data = toy(SynthKind::Correlation, 4, 0.3);
        let a = train(&data, &small_cfg()).unwrap();
        let b = train(&data, &small_cfg()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(
            crate::diffcore::checkpoint::encode(&a.params),
            crate::diffcore::checkpoint::encode(&b.params)
        );
    }

    #[test]
    fn separable_pair_fits() {
        let data = toy(SynthKind::Correlation, 2, 0.1);
        let cfg = TrainConfig {
            epochs: 200,
            alpha: 0.0,
            batch_size: 2,
            lr: 1e-2,
            ..tiny_config()
        };
        let trained = train(&data, &cfg).unwrap();
        let last = trained.log.last().unwrap().mean_loss;
        assert!(last < 0.1, "final loss {last}");
    }

    #[test]
    fn window_larger_than_scan_is_a_budget_error() {
        let data = toy(SynthKind::Correlation, 2, 0.1);
        let cfg = TrainConfig {
            window_size: 41,
            ..small_cfg()
        };
        assert!(matches!(train(&data, &cfg), Err(Error::WindowBudget { .. })));
    }

    #[test]
    fn single_window_needs_alpha_zero() {
        let data = toy(SynthKind::Correlation, 2, 0.1);
        let cfg = TrainConfig {
            window_size: 40,
            ..small_cfg()
        };
        match train(&data, &cfg) {
            Err(Error::WindowBudget { subject, windows, required }) => {
                assert_eq!(subject, "sub-000");
                assert_eq!((windows, required), (1, 2));
            }
            other => panic!("expected WindowBudget, got {other:?}"),
        }
        assert!(train(&data, &TrainConfig { alpha: 0.0, ..cfg }).is_ok());
    }

    #[test]
    fn evaluate_reports_all_metrics() {
        let data = toy(SynthKind::Correlation, 4, 0.3);
        let trained = train(&data, &small_cfg()).unwrap();
        let inputs = prepare_inputs(&data, &trained.input).unwrap();
        let r = evaluate(&trained.params, &trained.model, &inputs).unwrap();
        assert_eq!(r.n, 4);
        assert_eq!(r.confusion.total(), 4);
        assert!(r.auc.0.is_some());
    }

    #[test]
    fn tiny_gradcheck_passes() {
        let report = gradcheck_model(&tiny_config(), 1).unwrap();
        assert!(report.coordinates_checked >= GRADCHECK_COORDINATES);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
