//! Seeded stationary and class-incremental experiments.

pub mod dataset;
pub mod report;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::learner::{Instrumentation, LearnerError, ModelState, Variant};
use crate::metrics::{ami, ari, avg_inc, bwt, MetricError, StageScoreMatrix};
use crate::rng::SeededRng;

pub use dataset::{load_dataset, Dataset, LabelColumn, MinMaxScaler};
pub use report::{emit_report, read_run_file, RunRecord};

const ORDER_STREAM: u64 = 1;
const CLASS_STREAM: u64 = 2;
const STAGE_STREAM: u64 = 3;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("nonstationary mode needs at least two classes, dataset has {0}")]
    SingleClass(usize),
    #[error("no seeds given")]
    NoSeeds,
    #[error("invalid seed list `{0}`")]
    BadSeeds(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamMode {
    Stationary,
    Nonstationary,
}

impl StreamMode {
    pub fn name(self) -> &'static str {
        match self {
            StreamMode::Stationary => "stationary",
            StreamMode::Nonstationary => "nonstationary",
        }
    }
}

impl fmt::Display for StreamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stationary" => Ok(StreamMode::Stationary),
            "nonstationary" => Ok(StreamMode::Nonstationary),
            _ => Err(format!("unknown mode `{s}` (expected stationary or nonstationary)")),
        }
    }
}

/// `"30"` means seeds `0..30`; `"1,5,9"` lists seeds explicitly.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::BadSeeds(s.to_string());
    let seeds: Vec<u64> = if s.contains(',') {
        s.split(',')
            .map(|t| t.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    } else {
        (0..s.trim().parse::<u64>().map_err(|_| bad())?).collect()
    };
    if seeds.is_empty() {
        return Err(HarnessError::NoSeeds);
    }
    Ok(seeds)
}

/// Sample order of a stationary run.
pub fn stationary_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::with_stream(seed, ORDER_STREAM).shuffle(&mut order);
    order
}

/// One class per stage, in a seeded class order, each stage in a seeded sample order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagedStream {
    pub stages: Vec<Vec<usize>>,
    pub class_order: Vec<usize>,
    pub seed: u64,
}

pub fn build_stages(dataset: &Dataset, seed: u64) -> Result<StagedStream, HarnessError> {
    let c = dataset.class_count();
    if c < 2 {
        return Err(HarnessError::SingleClass(c));
    }
    let mut class_order: Vec<usize> = (0..c).collect();
    SeededRng::with_stream(seed, CLASS_STREAM).shuffle(&mut class_order);
    let mut within = SeededRng::with_stream(seed, STAGE_STREAM);
    let stages = class_order
        .iter()
        .map(|&class| {
            let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == class).collect();
            within.shuffle(&mut members);
            members
        })
        .collect();
    Ok(StagedStream {
        stages,
        class_order,
        seed,
    })
}

/// Metrics of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub final_ari: f64,
    pub final_ami: f64,
    /// Per-stage scores on all data seen so far (nonstationary only).
    pub stage_ari: Vec<f64>,
    pub stage_ami: Vec<f64>,
    pub avg_inc_ari: Option<f64>,
    pub avg_inc_ami: Option<f64>,
    pub bwt_ari: Option<f64>,
    pub bwt_ami: Option<f64>,
    pub node_count: usize,
    pub cluster_count: usize,
    pub instrumentation: Instrumentation,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Ok(RunResult),
    Failed { seed: u64, error: String },
}

impl RunOutcome {
    pub fn seed(&self) -> u64 {
        match self {
            RunOutcome::Ok(r) => r.seed,
            RunOutcome::Failed { seed, .. } => *seed,
        }
    }

    pub fn result(&self) -> Option<&RunResult> {
        match self {
            RunOutcome::Ok(r) => Some(r),
            RunOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub dataset: String,
    pub mode: StreamMode,
    pub variant: Variant,
    pub runs: Vec<RunOutcome>,
}

impl RunReport {
    pub fn successes(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter_map(RunOutcome::result)
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result().is_none()).count()
    }

    /// Mean over successful runs of `metric`, if any run has it.
    pub fn mean(&self, metric: impl Fn(&RunResult) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.successes().filter_map(metric).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn predict_all(model: &ModelState, dataset: &Dataset, idx: &[usize]) -> Result<Vec<usize>, LearnerError> {
    idx.iter().map(|&i| model.predict(&dataset.features[i])).collect()
}

fn truth_of(dataset: &Dataset, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| dataset.labels[i]).collect()
}

/// Train one seed and return its metrics together with the finalised model.
pub fn run_single(
    dataset: &Dataset,
    mode: StreamMode,
    seed: u64,
    variant: Variant,
) -> Result<(RunResult, ModelState), HarnessError> {
    let start = Instant::now();
    let mut model = ModelState::new(dataset.dim(), variant.flags());
    let all: Vec<usize> = (0..dataset.len()).collect();
    let mut stage_ari = Vec::new();
    let mut stage_ami = Vec::new();
    let mut bwt_pair = (None, None);

    match mode {
        StreamMode::Stationary => {
            for i in stationary_order(dataset.len(), seed) {
                model.process_sample(&dataset.features[i])?;
            }
            model.finalize()?;
        }
        StreamMode::Nonstationary => {
            let stream = build_stages(dataset, seed)?;
            let j = stream.stages.len();
            let mut r_ari = StageScoreMatrix::new(j);
            let mut r_ami = StageScoreMatrix::new(j);
            let mut seen = Vec::new();
            for (stage, members) in stream.stages.iter().enumerate() {
                for &i in members {
                    model.process_sample(&dataset.features[i])?;
                }
                seen.extend_from_slice(members);
                let mut snapshot = model.clone();
                snapshot.finalize()?;
                for (earlier, idx) in stream.stages[..=stage].iter().enumerate() {
                    let pred = predict_all(&snapshot, dataset, idx)?;
                    let truth = truth_of(dataset, idx);
                    r_ari.set(earlier, stage, ari(&truth, &pred)?);
                    r_ami.set(earlier, stage, ami(&truth, &pred)?);
                }
                let pred = predict_all(&snapshot, dataset, &seen)?;
                let truth = truth_of(dataset, &seen);
                stage_ari.push(ari(&truth, &pred)?);
                stage_ami.push(ami(&truth, &pred)?);
            }
            model.finalize()?;
            bwt_pair = (Some(bwt(&r_ari)?), Some(bwt(&r_ami)?));
        }
    }

    let pred = predict_all(&model, dataset, &all)?;
    let final_ari = ari(&dataset.labels, &pred)?;
    let final_ami = ami(&dataset.labels, &pred)?;
    let view = model.view().expect("finalised model has a view");
    let result = RunResult {
        seed,
        final_ari,
        final_ami,
        avg_inc_ari: (!stage_ari.is_empty()).then(|| avg_inc(&stage_ari)).transpose()?,
        avg_inc_ami: (!stage_ami.is_empty()).then(|| avg_inc(&stage_ami)).transpose()?,
        stage_ari,
        stage_ami,
        bwt_ari: bwt_pair.0,
        bwt_ami: bwt_pair.1,
        node_count: model.node_count(),
        cluster_count: view.cluster_count(),
        instrumentation: model.instrumentation().clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, model))
}

/// Run every seed in parallel; failures are recorded, not propagated.
pub fn run_experiment(dataset: &Dataset, mode: StreamMode, seeds: &[u64], variant: Variant) -> RunReport {
    run_experiment_with_models(dataset, mode, seeds, variant).0
}

/// As [`run_experiment`], also returning the finalised model of every successful seed.
pub fn run_experiment_with_models(
    dataset: &Dataset,
    mode: StreamMode,
    seeds: &[u64],
    variant: Variant,
) -> (RunReport, Vec<(u64, ModelState)>) {
    let outcomes: Vec<(RunOutcome, Option<ModelState>)> = seeds
        .par_iter()
        .map(|&seed| match run_single(dataset, mode, seed, variant) {
            Ok((r, m)) => (RunOutcome::Ok(r), Some(m)),
            Err(e) => (
                RunOutcome::Failed {
                    seed,
                    error: e.to_string(),
                },
                None,
            ),
        })
        .collect();
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut models = Vec::new();
    for (outcome, model) in outcomes {
        if let Some(m) = model {
            models.push((outcome.seed(), m));
        }
        runs.push(outcome);
    }
    let report = RunReport {
        dataset: dataset.name.clone(),
        mode,
        variant,
        runs,
    };
    (report, models)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(classes: usize, per: usize) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for i in 0..per {
                features.push(vec![c as f64 * 10.0 + i as f64 * 0.1, (i % 3) as f64 * 0.1]);
                labels.push(c);
            }
        }
        Dataset {
            name: "toy".into(),
            feature_names: vec!["a".into(), "b".into()],
            features,
            labels,
            class_names: (0..classes).map(|c| c.to_string()).collect(),
        }
    }

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9,1").unwrap(), vec![4, 9, 1]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn stages_partition_and_are_deterministic() {
        let d = toy(3, 7);
        let s = build_stages(&d, 5).unwrap();
        assert_eq!(s, build_stages(&d, 5).unwrap());
        assert_eq!(s.stages.len(), 3);
        let mut all: Vec<usize> = s.stages.concat();
        all.sort();
        assert_eq!(all, (0..21).collect::<Vec<_>>());
        for (stage, &class) in s.stages.iter().zip(&s.class_order) {
            assert!(stage.iter().all(|&i| d.labels[i] == class));
        }
        assert!(matches!(build_stages(&toy(1, 4), 0), Err(HarnessError::SingleClass(1))));
    }

    #[test]
    fn class_orders_vary_with_seed() {
        let d = toy(3, 2);
        let orders: std::collections::HashSet<Vec<usize>> =
            (0..60).map(|s| build_stages(&d, s).unwrap().class_order).collect();
        assert_eq!(orders.len(), 6);
    }

    #[test]
    fn two_stage_bwt_is_single_difference() {
        let d = toy(2, 20);
        let (r, _) = run_single(&d, StreamMode::Nonstationary, 3, Variant::Full).unwrap();
        assert_eq!(r.stage_ari.len(), 2);
        assert!((r.avg_inc_ari.unwrap() - (r.stage_ari[0] + r.stage_ari[1]) / 2.0).abs() < 1e-15);
        assert!(r.bwt_ari.is_some());
    }

    #[test]
    fn experiment_is_deterministic() {
        let d = toy(2, 15);
        let a = run_experiment(&d, StreamMode::Stationary, &[1, 2], Variant::NoPh);
        let b = run_experiment(&d, StreamMode::Stationary, &[1, 2], Variant::NoPh);
        let strip = |r: &RunReport| -> Vec<(f64, f64, usize)> {
            r.successes().map(|x| (x.final_ari, x.final_ami, x.node_count)).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.variant.name(), "noPH");
        assert_eq!(a.failures(), 0);
    }
}
