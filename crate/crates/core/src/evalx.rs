//! Experiment orchestration: stratified splits, the four-witness
//! training loop, metrics, ROC curves and the (α × split) sweep.
//!
//! "Split 0.2" always means 20% of each stratum is used for TRAINING.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drsvm::{train_roew_binary, RobustParams, SolverConfig, SvmModel};
use crate::error::{Error, Result};
use crate::measure::{measure_states, MomentSample, NoiseModel};
use crate::states::{generate_states, BellLabel, DatasetSpec, Label};
use crate::witness::{witness_from_model, WitnessOperator};

pub const DEFAULT_ALPHAS: [f64; 8] = [0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.95];
pub const DEFAULT_SPLITS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const DEFAULT_C: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of every stratum placed in the training set.
    pub train_fraction: f64,
    pub seed: u64,
    /// If set, each class is first subsampled to this many items, spread
    /// evenly over its strata.
    pub per_class_n: Option<usize>,
}

impl SplitConfig {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            per_class_n: None,
        }
    }
}

type Stratum = (i8, Option<BellLabel>);

/// Stratified train/test partition of indices `0..keys.len()`, each side
/// in ascending order.
pub fn split_indices(
    keys: &[(Label, Option<BellLabel>)],
    cfg: &SplitConfig,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::OutOfRange(format!(
            "train fraction {} outside (0, 1)",
            cfg.train_fraction
        )));
    }
    if keys.is_empty() {
        return Err(Error::EmptyStratum("dataset is empty".into()));
    }
    let mut strata: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
    for (i, (label, group)) in keys.iter().enumerate() {
        strata
            .entry((i8::from(*label), *group))
            .or_default()
            .push(i);
    }
    let mut per_class: BTreeMap<i8, usize> = BTreeMap::new();
    for (label, _) in strata.keys() {
        *per_class.entry(*label).or_default() += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (key, members) in strata.iter_mut() {
        members.shuffle(&mut rng);
        if let Some(n) = cfg.per_class_n {
            let share = n / per_class[&key.0];
            members.truncate(share);
        }
        let n = members.len();
        let n_train = (cfg.train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::EmptyStratum(format!(
                "stratum (label {}, group {}) of size {n} leaves an empty side",
                key.0,
                key.1.map_or("-", |g| g.code())
            )));
        }
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(
    dataset: &[MomentSample],
    cfg: &SplitConfig,
) -> Result<(Vec<MomentSample>, Vec<MomentSample>)> {
    let keys: Vec<_> = dataset.iter().map(|s| (s.label, s.group)).collect();
    let (tr, te) = split_indices(&keys, cfg)?;
    Ok((
        tr.into_iter().map(|i| dataset[i].clone()).collect(),
        te.into_iter().map(|i| dataset[i].clone()).collect(),
    ))
}

/// Confusion counts with "positive" = separable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let Confusion { tp, fp, tn, fn_ } = confusion;
        let accuracy = (tp + tn) as f64 / confusion.total() as f64;
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            accuracy,
            precision,
            recall,
            f1,
            confusion,
        }
    }
}

pub fn metrics(predictions: &[Label], truth: &[Label]) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(predictions.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyStratum("no predictions".into()));
    }
    let mut c = Confusion::default();
    for (p, t) in predictions.iter().zip(truth) {
        match (p, t) {
            (Label::Separable, Label::Separable) => c.tp += 1,
            (Label::Separable, Label::Entangled) => c.fp += 1,
            (Label::Entangled, Label::Entangled) => c.tn += 1,
            (Label::Entangled, Label::Separable) => c.fn_ += 1,
        }
    }
    Ok(MetricsReport::from_confusion(c))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `≥ threshold` are called separable; the first point uses
    /// `+∞`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// In order of decreasing threshold, from (0,0) to (1,1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            writeln!(
                out,
                "{},{},{}",
                fmt17(p.threshold),
                fmt17(p.fpr),
                fmt17(p.tpr)
            )
            .unwrap();
        }
        out
    }
}

/// Trapezoidal area under a polyline of `(fpr, tpr)` points.
pub fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// ROC of `scores` (higher = more separable) against `truth`; tied scores
/// move together, giving diagonal segments.
pub fn roc(scores: &[f64], truth: &[Label]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch(scores.len(), truth.len()));
    }
    let n_pos = truth.iter().filter(|&&t| t == Label::Separable).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::OutOfRange("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            match truth[order[i]] {
                Label::Separable => tp += 1,
                Label::Entangled => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: thr,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

/// One Bell-group subproblem of witness training.
#[derive(Clone, Debug)]
pub struct GroupWitness {
    pub group: BellLabel,
    pub model: SvmModel,
    /// Trace-normalized when the trained bias is positive.
    pub witness: WitnessOperator,
}

impl GroupWitness {
    /// Expectation of the (normalized) witness at feature vector `x`.
    pub fn score(&self, x: &[f64]) -> f64 {
        let c = self.witness.matrix_coeffs();
        let v = c.v();
        v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c.b()
    }
}

/// Trains one witness per Bell group against all separable samples, in
/// group-code order.
pub fn train_witnesses(
    dataset: &[MomentSample],
    params: &RobustParams,
    cfg: &SolverConfig,
) -> Result<Vec<GroupWitness>> {
    let sep: Vec<MomentSample> = dataset
        .iter()
        .filter(|s| s.label == Label::Separable)
        .cloned()
        .collect();
    if sep.is_empty() {
        return Err(Error::EmptyStratum("separable".into()));
    }
    BellLabel::ALL
        .par_iter()
        .map(|&group| {
            let ent: Vec<MomentSample> = dataset
                .iter()
                .filter(|s| s.label == Label::Entangled && s.group == Some(group))
                .cloned()
                .collect();
            if ent.is_empty() {
                return Err(Error::EmptyStratum(format!(
                    "entangled group {}",
                    group.code()
                )));
            }
            let model = train_roew_binary(&sep, &ent, params, cfg)?;
            let witness = witness_from_model(&model, model.b > 0.0)?;
            Ok(GroupWitness {
                group,
                model,
                witness,
            })
        })
        .collect()
}

/// Intersection-rule score: the smallest witness expectation.
pub fn min_score(witnesses: &[GroupWitness], x: &[f64]) -> f64 {
    witnesses
        .iter()
        .map(|w| w.score(x))
        .fold(f64::INFINITY, f64::min)
}

/// Separable iff every witness is non-negative.
pub fn classify_intersection(witnesses: &[GroupWitness], x: &[f64]) -> Label {
    Label::from_sign(min_score(witnesses, x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    /// Each witness alone on the separable test samples plus its own group.
    pub per_group: BTreeMap<String, MetricsReport>,
    pub roc: RocCurve,
}

/// Scores `test` with the trained witnesses, using the measured means.
pub fn evaluate(witnesses: &[GroupWitness], test: &[MomentSample]) -> Result<Evaluation> {
    let scores: Vec<f64> = test.iter().map(|s| min_score(witnesses, &s.mu)).collect();
    let truth: Vec<Label> = test.iter().map(|s| s.label).collect();
    let pred: Vec<Label> = scores.iter().map(|&s| Label::from_sign(s)).collect();
    let mut per_group = BTreeMap::new();
    for w in witnesses {
        let subset: Vec<&MomentSample> = test
            .iter()
            .filter(|s| s.label == Label::Separable || s.group == Some(w.group))
            .collect();
        let p: Vec<Label> = subset
            .iter()
            .map(|s| Label::from_sign(w.score(&s.mu)))
            .collect();
        let t: Vec<Label> = subset.iter().map(|s| s.label).collect();
        per_group.insert(w.group.code().to_string(), metrics(&p, &t)?);
    }
    Ok(Evaluation {
        metrics: metrics(&pred, &truth)?,
        per_group,
        roc: roc(&scores, &truth)?,
    })
}

/// Generates states and estimates their feature moments.
pub fn build_dataset(
    spec: &DatasetSpec,
    noise: NoiseModel,
    repeats: usize,
    seed: u64,
) -> Result<Vec<MomentSample>> {
    measure_states(&generate_states(spec, seed)?, noise, repeats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub c: f64,
    pub solver: SolverConfig,
    /// Seed of every split.
    pub split_seed: u64,
    /// Worker cap; `None` uses all cores.
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Infeasible {
        group: Option<String>,
        max_violation: f64,
    },
    Diverged {
        iters: usize,
    },
    Error {
        message: String,
    },
}

impl CellStatus {
    fn from_error(e: &Error) -> Self {
        match e {
            Error::Infeasible {
                group,
                max_violation,
                ..
            } => CellStatus::Infeasible {
                group: group.clone(),
                max_violation: *max_violation,
            },
            Error::SolverDiverged { iters, .. } => CellStatus::Diverged { iters: *iters },
            other => CellStatus::Error {
                message: other.to_string(),
            },
        }
    }

    pub fn tag(&self) -> String {
        match self {
            CellStatus::Ok => "ok".into(),
            CellStatus::Infeasible { group, .. } => {
                format!("infeasible:{}", group.as_deref().unwrap_or("-"))
            }
            CellStatus::Diverged { .. } => "diverged".into(),
            CellStatus::Error { .. } => "error".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub split: f64,
    pub seed: u64,
    pub status: CellStatus,
    pub evaluation: Option<Evaluation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// α-major, then split, in grid order.
    pub cells: Vec<SweepCell>,
}

pub const SWEEP_METRICS: [&str; 3] = ["accuracy", "precision", "f1"];

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,split,metric,value,seed,cell_status\n");
        for cell in &self.cells {
            for name in SWEEP_METRICS {
                let value = cell.evaluation.as_ref().map_or(f64::NAN, |e| match name {
                    "accuracy" => e.metrics.accuracy,
                    "precision" => e.metrics.precision,
                    _ => e.metrics.f1,
                });
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    fmt17(cell.alpha),
                    fmt17(cell.split),
                    name,
                    fmt17(value),
                    cell.seed,
                    cell.status.tag()
                )
                .unwrap();
            }
        }
        out
    }

    pub fn cell(&self, alpha: f64, split: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.split == split)
    }
}

fn run_cell(
    dataset: &[MomentSample],
    alpha: f64,
    split_frac: f64,
    cfg: &SweepConfig,
) -> Result<Evaluation> {
    let params = RobustParams::new(alpha, cfg.c)?;
    let (train, test) = split(dataset, &SplitConfig::new(split_frac, cfg.split_seed))?;
    let witnesses = train_witnesses(&train, &params, &cfg.solver)?;
    evaluate(&witnesses, &test)
}

/// Trains and scores every (α, split) cell. A failing cell is recorded
/// and the sweep continues.
pub fn run_sweep(
    alphas: &[f64],
    splits: &[f64],
    dataset: &[MomentSample],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if alphas.is_empty() || splits.is_empty() {
        return Err(Error::OutOfRange("empty sweep grid".into()));
    }
    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| splits.iter().map(move |&s| (a, s)))
        .collect();
    let work = || -> Vec<SweepCell> {
        grid.par_iter()
            .map(|&(alpha, split)| {
                let (status, evaluation) = match run_cell(dataset, alpha, split, cfg) {
                    Ok(e) => (CellStatus::Ok, Some(e)),
                    Err(e) => (CellStatus::from_error(&e), None),
                };
                SweepCell {
                    alpha,
                    split,
                    seed: cfg.split_seed,
                    status,
                    evaluation,
                }
            })
            .collect()
    };
    let cells = match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::OutOfRange(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(SweepResult { cells })
}

/// Shortest representation that round-trips; at most 17 significant
/// digits.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}
