//! SVM trainers: the classical soft-margin SVM, the hinge-power/L1
//! variant, and the distributionally robust chance-constrained SVM in
//! its second-order cone form.
//!
//! For a sample with feature mean `μ`, covariance `Σ` and label `λ`, the
//! worst case over all distributions with those moments of
//! `P[λ(vᵀx + b) ≥ 1 − β] ≥ α` is the cone constraint
//!
//! ```text
//! λ(vᵀμ + b) ≥ 1 − β + κ(α)·‖Σ^{1/2} v‖,    κ(α) = √(α / (1 − α)).
//! ```
//!
//! [`train_robust`] slacks every constraint. [`train_roew_binary`] keeps
//! the separable-class constraints hard and handles them with an exact
//! penalty: their slacks are priced at a weight that grows until the
//! worst violation is below `tol_feas`.

mod barrier;
mod hinge;
mod smo;

pub use hinge::hinge_l1_loss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MomentSample;
use crate::states::{BellLabel, Label};
use crate::tolerances;

/// Confidence level and penalty weight of the robust program.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustParams {
    pub alpha: f64,
    pub c: f64,
}

impl RobustParams {
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        let p = Self { alpha, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::OutOfRange(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::OutOfRange(format!("C {} must be positive", self.c)));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        kappa(self.alpha).expect("validated alpha")
    }
}

/// Solver knobs shared by the robust trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Cap on Newton iterations per barrier solve.
    pub max_iters: usize,
    pub tol_feas: f64,
    pub tol_obj: f64,
    /// First penalty weight on hard-constraint slacks, as a multiple of C.
    pub penalty_init: f64,
    pub penalty_growth: f64,
    /// Number of penalty increases before declaring infeasibility.
    pub max_penalty_rounds: usize,
    /// Recorded in manifests; the deterministic solvers do not consume it.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 2_000,
            tol_feas: tolerances::FEAS,
            tol_obj: tolerances::OBJ,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            max_penalty_rounds: 10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_feas > 0.0 && self.tol_obj > 0.0) {
            return Err(Error::OutOfRange(
                "solver tolerances must be positive".into(),
            ));
        }
        if !(self.penalty_growth > 1.0 && self.penalty_init > 0.0) {
            return Err(Error::OutOfRange(
                "penalty_init > 0 and penalty_growth > 1 required".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::OutOfRange("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// A trained linear classifier `sign(vᵀx + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub v: Vec<f64>,
    pub b: f64,
    /// Slacks of the slacked constraints, in input order.
    pub beta: Vec<f64>,
    pub objective: f64,
    pub feasibility_residual: f64,
    pub iters: usize,
    /// Final hard-constraint penalty weight (0 when none were present).
    pub penalty_final: f64,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.v, x) + self.b
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        Label::from_sign(self.decision(x))
    }
}

/// `√(α / (1 − α))`.
pub fn kappa(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok((alpha / (1.0 - alpha)).sqrt())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `λ(vᵀμ + b) − 1 − κ(α)‖Σ^{1/2}v‖`; the constraint holds with slack β
/// iff this is at least `−β`.
pub fn robust_margin(sample: &MomentSample, v: &[f64], b: f64, alpha: f64) -> Result<f64> {
    if v.len() != sample.dim() {
        return Err(Error::DimMismatch(format!(
            "v has {} entries, sample {}",
            v.len(),
            sample.dim()
        )));
    }
    Ok(margin_with_kappa(sample, sample.label, v, b, kappa(alpha)?))
}

fn margin_with_kappa(sample: &MomentSample, label: Label, v: &[f64], b: f64, kappa: f64) -> f64 {
    let spread = if kappa == 0.0 {
        0.0
    } else {
        kappa * norm(&sample.sigma_sqrt().matvec(v))
    };
    label.sign() * (dot(v, &sample.mu) + b) - 1.0 - spread
}

fn check_dims(samples: &[&MomentSample]) -> Result<usize> {
    let d = samples
        .first()
        .map(|s| s.dim())
        .ok_or_else(|| Error::EmptyStratum("training set".into()))?;
    if let Some(bad) = samples.iter().find(|s| s.dim() != d) {
        return Err(Error::DimMismatch(format!(
            "sample dims {d} and {}",
            bad.dim()
        )));
    }
    Ok(d)
}

/// Classical soft-margin SVM
/// `min ½‖v‖² + C Σ sⱼ  s.t.  sⱼ ≥ 1 − yⱼ(vᵀxⱼ + b), s ≥ 0`.
pub fn train_soft_margin(samples: &[(Vec<f64>, Label)], c: f64) -> Result<SvmModel> {
    if !(c > 0.0) {
        return Err(Error::OutOfRange(format!("C {c} must be positive")));
    }
    if !samples.iter().any(|s| s.1 == Label::Separable)
        || !samples.iter().any(|s| s.1 == Label::Entangled)
    {
        return Err(Error::SingleClass);
    }
    let x: Vec<&[f64]> = samples.iter().map(|s| s.0.as_slice()).collect();
    let d = x[0].len();
    if x.iter().any(|xi| xi.len() != d) {
        return Err(Error::DimMismatch("ragged feature vectors".into()));
    }
    let y: Vec<f64> = samples.iter().map(|s| s.1.sign()).collect();
    let sol = smo::solve(&x, &y, c)?;
    let beta: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| (1.0 - yi * (dot(&sol.v, xi) + sol.b)).max(0.0))
        .collect();
    let objective = 0.5 * dot(&sol.v, &sol.v) + c * beta.iter().sum::<f64>();
    Ok(SvmModel {
        v: sol.v,
        b: sol.b,
        beta,
        objective,
        feasibility_residual: sol.kkt_gap.max(0.0),
        iters: sol.iters,
        penalty_final: 0.0,
    })
}

/// Minimizes the hinge-power loss with L1 penalty on `(v, b)`.
pub fn train_hinge_l1(
    samples: &[(Vec<f64>, Label)],
    c: f64,
    m: u32,
    max_iters: usize,
) -> Result<SvmModel> {
    if m == 0 {
        return Err(Error::OutOfRange("hinge power m must be >= 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyStratum("training set".into()));
    }
    let x: Vec<&[f64]> = samples.iter().map(|s| s.0.as_slice()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1.sign()).collect();
    let sol = hinge::solve(&x, &y, c, m, max_iters)?;
    Ok(SvmModel {
        v: sol.v,
        b: sol.b,
        beta: Vec::new(),
        objective: sol.loss,
        feasibility_residual: sol.stationarity,
        iters: sol.iters,
        penalty_final: 0.0,
    })
}

/// Exact objective and per-constraint bookkeeping for a candidate `(v, b)`.
struct Evaluation {
    beta: Vec<f64>,
    hard_violation: f64,
    objective: f64,
}

fn evaluate(
    hard: &[&MomentSample],
    soft: &[(&MomentSample, Label)],
    hard_label: Label,
    v: &[f64],
    b: f64,
    params: &RobustParams,
) -> Evaluation {
    let kappa = params.kappa();
    let beta: Vec<f64> = soft
        .iter()
        .map(|(s, l)| (-margin_with_kappa(s, *l, v, b, kappa)).max(0.0))
        .collect();
    let hard_violation = hard
        .iter()
        .map(|s| (-margin_with_kappa(s, hard_label, v, b, kappa)).max(0.0))
        .fold(0.0, f64::max);
    let objective = 0.5 * dot(v, v) + params.c * beta.iter().sum::<f64>();
    Evaluation {
        beta,
        hard_violation,
        objective,
    }
}

fn barrier_settings(cfg: &SolverConfig) -> barrier::Settings {
    barrier::Settings {
        max_newton: cfg.max_iters,
        rel_gap: 0.5 * cfg.tol_obj,
    }
}

fn build_problem<'a>(
    dim: usize,
    kappa: f64,
    rows: impl Iterator<Item = (&'a MomentSample, Label, f64)>,
) -> barrier::Problem<'a> {
    let rows = rows
        .map(|(s, label, weight)| {
            let l = label.sign();
            let mut a: Vec<f64> = s.mu.iter().map(|m| l * m).collect();
            a.push(l);
            barrier::Row {
                a,
                sigma: s.sigma(),
                weight,
            }
        })
        .collect();
    barrier::Problem { dim, kappa, rows }
}

/// Robust SVM with every constraint slacked.
pub fn train_robust(
    samples: &[MomentSample],
    params: &RobustParams,
    cfg: &SolverConfig,
) -> Result<SvmModel> {
    params.validate()?;
    cfg.validate()?;
    let refs: Vec<&MomentSample> = samples.iter().collect();
    let d = check_dims(&refs)?;
    if !samples.iter().any(|s| s.label == Label::Separable)
        || !samples.iter().any(|s| s.label == Label::Entangled)
    {
        return Err(Error::SingleClass);
    }
    let problem = build_problem(
        d,
        params.kappa(),
        samples.iter().map(|s| (s, s.label, params.c)),
    );
    let sol = barrier::solve(&problem, &barrier_settings(cfg))?;
    let (v, b) = (sol.w[..d].to_vec(), sol.w[d]);
    let soft: Vec<(&MomentSample, Label)> = samples.iter().map(|s| (s, s.label)).collect();
    let ev = evaluate(&[], &soft, Label::Separable, &v, b, params);
    Ok(SvmModel {
        v,
        b,
        beta: ev.beta,
        objective: ev.objective,
        feasibility_residual: 0.0,
        iters: sol.newton_iters,
        penalty_final: 0.0,
    })
}

/// One Bell-group subproblem: separable constraints hard (label +1),
/// entangled constraints slacked (label −1). The objective charges only
/// the entangled slacks.
pub fn train_roew_binary(
    sep: &[MomentSample],
    ent: &[MomentSample],
    params: &RobustParams,
    cfg: &SolverConfig,
) -> Result<SvmModel> {
    params.validate()?;
    cfg.validate()?;
    if sep.is_empty() {
        return Err(Error::EmptyStratum("separable".into()));
    }
    if ent.is_empty() {
        return Err(Error::EmptyStratum("entangled".into()));
    }
    let group: Option<BellLabel> = ent[0].group;
    if ent.iter().any(|s| s.group != group) {
        return Err(Error::OutOfRange(
            "entangled samples span several Bell groups".into(),
        ));
    }
    let refs: Vec<&MomentSample> = sep.iter().chain(ent).collect();
    let d = check_dims(&refs)?;
    let kappa = params.kappa();
    let sep_refs: Vec<&MomentSample> = sep.iter().collect();
    let soft: Vec<(&MomentSample, Label)> = ent.iter().map(|s| (s, Label::Entangled)).collect();

    let mut penalty = cfg.penalty_init * params.c;
    let mut total_iters = 0;
    let mut last_violation = f64::INFINITY;
    for _round in 0..=cfg.max_penalty_rounds {
        let rows = sep
            .iter()
            .map(|s| (s, Label::Separable, penalty))
            .chain(ent.iter().map(|s| (s, Label::Entangled, params.c)));
        let problem = build_problem(d, kappa, rows);
        let sol = barrier::solve(&problem, &barrier_settings(cfg))?;
        total_iters += sol.newton_iters;
        let (v, b) = (sol.w[..d].to_vec(), sol.w[d]);
        let ev = evaluate(&sep_refs, &soft, Label::Separable, &v, b, params);
        if ev.hard_violation <= cfg.tol_feas {
            return Ok(SvmModel {
                v,
                b,
                beta: ev.beta,
                objective: ev.objective,
                feasibility_residual: ev.hard_violation,
                iters: total_iters,
                penalty_final: penalty,
            });
        }
        last_violation = ev.hard_violation;
        penalty *= cfg.penalty_growth;
    }
    Err(Error::Infeasible {
        group: group.map(|g| g.code().to_string()),
        max_violation: last_violation,
        penalty: penalty / cfg.penalty_growth,
    })
}

/// Per-constraint diagnostics for a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Robust margins of the hard constraints, then the slacked ones.
    pub margins: Vec<f64>,
    /// Violation of each constraint (hard: `max(0, −margin)`, slacked:
    /// `max(0, −margin − β)`), same order.
    pub violations: Vec<f64>,
    pub max_violation: f64,
    /// Indices with `|margin| ≤ ACTIVE_MARGIN`.
    pub active: Vec<usize>,
    pub objective: f64,
    pub objective_gap: f64,
}

/// Recomputes constraint margins and the objective for `model`.
/// `hard` samples are constrained with their own labels and no slack;
/// `soft` samples use `model.beta` in order.
pub fn kkt_report(
    model: &SvmModel,
    hard: &[MomentSample],
    soft: &[MomentSample],
    params: &RobustParams,
) -> Result<KktReport> {
    params.validate()?;
    if model.beta.len() != soft.len() {
        return Err(Error::LengthMismatch(model.beta.len(), soft.len()));
    }
    let kappa = params.kappa();
    let mut margins = Vec::with_capacity(hard.len() + soft.len());
    let mut violations = Vec::with_capacity(hard.len() + soft.len());
    for s in hard {
        let m = margin_with_kappa(s, s.label, &model.v, model.b, kappa);
        margins.push(m);
        violations.push((-m).max(0.0));
    }
    for (s, &beta) in soft.iter().zip(&model.beta) {
        let m = margin_with_kappa(s, s.label, &model.v, model.b, kappa);
        margins.push(m);
        violations.push((-m - beta).max(0.0).max(-beta));
    }
    let active = margins
        .iter()
        .enumerate()
        .filter(|(_, m)| m.abs() <= tolerances::ACTIVE_MARGIN)
        .map(|(i, _)| i)
        .collect();
    let objective = 0.5 * dot(&model.v, &model.v) + params.c * model.beta.iter().sum::<f64>();
    Ok(KktReport {
        max_violation: violations.iter().copied().fold(0.0, f64::max),
        margins,
        violations,
        active,
        objective_gap: (objective - model.objective).abs(),
        objective,
    })
}

/// Model export record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub v: Vec<f64>,
    pub b: f64,
    pub alpha: f64,
    pub c: f64,
    pub objective: f64,
    pub feasibility_residual: f64,
    pub solver: SolverStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iters: usize,
    pub penalty_final: f64,
}

impl ModelRecord {
    pub fn new(model: &SvmModel, params: &RobustParams) -> Self {
        Self {
            v: model.v.clone(),
            b: model.b,
            alpha: params.alpha,
            c: params.c,
            objective: model.objective,
            feasibility_residual: model.feasibility_residual,
            solver: SolverStats {
                iters: model.iters,
                penalty_final: model.penalty_final,
            },
        }
    }
}
