//! Brute-force reference for two-dimensional robust SVM instances:
//! coarse-to-fine grid search over `(v₁, v₂, b)`.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roew_core::measure::MomentSample;
use roew_core::qlin::RealSymMatrix;
use roew_core::states::{BellLabel, Label};

#[derive(Clone, Debug)]
pub struct Instance {
    pub mu: Vec<[f64; 2]>,
    /// Isotropic standard deviation of each point.
    pub std: Vec<f64>,
    pub labels: Vec<Label>,
    /// Separable points are constrained without slack.
    pub hard_separable: bool,
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub v: [f64; 2],
    pub b: f64,
    pub objective: f64,
    pub margins: Vec<f64>,
}

const POINTS: usize = 41;
const LEVELS: usize = 40;

pub fn random_instance(seed: u64, n: usize, hard_separable: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inst = Instance {
        mu: Vec::new(),
        std: Vec::new(),
        labels: Vec::new(),
        hard_separable,
    };
    for i in 0..n {
        let label = if i % 2 == 0 {
            Label::Separable
        } else {
            Label::Entangled
        };
        let shift = 0.9 * label.sign();
        inst.mu.push([
            rng.random_range(-1.0..1.0) + shift,
            rng.random_range(-1.0..1.0),
        ]);
        inst.std.push(rng.random_range(0.0..0.25));
        inst.labels.push(label);
    }
    inst
}

pub fn to_samples(inst: &Instance) -> Vec<MomentSample> {
    inst.mu
        .iter()
        .zip(&inst.std)
        .zip(&inst.labels)
        .map(|((m, s), &l)| {
            let group = (l == Label::Entangled).then_some(BellLabel::PsiMinus);
            MomentSample::new(
                m.to_vec(),
                RealSymMatrix::identity(2).scale(s * s),
                l,
                group,
            )
            .unwrap()
        })
        .collect()
}

/// `λ(vᵀμ + b) − 1 − κ·std·‖v‖` per point.
pub fn margins(inst: &Instance, kappa: f64, v: [f64; 2], b: f64) -> Vec<f64> {
    let nv = v[0].hypot(v[1]);
    inst.mu
        .iter()
        .zip(&inst.std)
        .zip(&inst.labels)
        .map(|((m, s), l)| l.sign() * (v[0] * m[0] + v[1] * m[1] + b) - 1.0 - kappa * s * nv)
        .collect()
}

fn is_hard(inst: &Instance, i: usize) -> bool {
    inst.hard_separable && inst.labels[i] == Label::Separable
}

/// `None` when a hard constraint is violated.
pub fn objective(inst: &Instance, kappa: f64, c: f64, v: [f64; 2], b: f64) -> Option<f64> {
    let mut f = 0.5 * (v[0] * v[0] + v[1] * v[1]);
    for (i, m) in margins(inst, kappa, v, b).into_iter().enumerate() {
        if is_hard(inst, i) {
            if m < 0.0 {
                return None;
            }
        } else {
            f += c * (-m).max(0.0);
        }
    }
    Some(f)
}

pub fn solve(inst: &Instance, kappa: f64, c: f64) -> OracleResult {
    // (0, 0, b₀) with b₀ large enough for every hard constraint bounds
    // the optimum, hence ‖v‖ ≤ √(2·f₀)
    let b0 = if inst.hard_separable { 1.0 } else { 0.0 };
    let f0 = objective(inst, kappa, c, [0.0, 0.0], b0).unwrap();
    let r_v = (2.0 * f0).sqrt();
    let max_mu = inst.mu.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
    let max_std = inst.std.iter().copied().fold(0.0, f64::max);
    let r_b = 2.0 + r_v * (2.0 * max_mu + kappa * max_std);
    let mut center = [0.0, 0.0, 0.0];
    let mut half = [r_v, r_v, r_b];
    let mut best = (f64::INFINITY, center);
    for _ in 0..LEVELS {
        let step: Vec<f64> = half.iter().map(|h| 2.0 * h / (POINTS - 1) as f64).collect();
        for i in 0..POINTS {
            let v0 = center[0] - half[0] + i as f64 * step[0];
            for j in 0..POINTS {
                let v1 = center[1] - half[1] + j as f64 * step[1];
                for k in 0..POINTS {
                    let b = center[2] - half[2] + k as f64 * step[2];
                    if let Some(f) = objective(inst, kappa, c, [v0, v1], b) {
                        if f < best.0 {
                            best = (f, [v0, v1, b]);
                        }
                    }
                }
            }
        }
        center = best.1;
        for (h, s) in half.iter_mut().zip(&step) {
            *h = 10.0 * s;
        }
    }
    let [v0, v1, b] = best.1;
    OracleResult {
        v: [v0, v1],
        b,
        objective: best.0,
        margins: margins(inst, kappa, [v0, v1], b),
    }
}

/// Indices with `|margin| ≤ tol`.
pub fn binding(margins: &[f64], tol: f64) -> Vec<usize> {
    margins
        .iter()
        .enumerate()
        .filter(|(_, m)| m.abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// The quadratic term fixes `v`; `b` is unique unless the objective is flat
/// in `b` at the optimum.
pub fn has_unique_optimum(inst: &Instance, kappa: f64, c: f64, sol: &OracleResult) -> bool {
    const DB: f64 = 1e-2;
    [-DB, DB].iter().all(|db| {
        objective(inst, kappa, c, sol.v, sol.b + db)
            .is_none_or(|f| f - sol.objective > 1e-4 * DB * (1.0 + sol.objective))
    })
}

/// First instance drawn from seeds `seed·1000 + k` whose optimum is unique.
pub fn unique_instance(
    seed: u64,
    n: usize,
    hard: bool,
    kappa: f64,
    c: f64,
) -> (Instance, OracleResult) {
    (0..1000)
        .map(|k| random_instance(seed * 1000 + k, n, hard))
        .find_map(|inst| {
            let sol = solve(&inst, kappa, c);
            has_unique_optimum(&inst, kappa, c, &sol).then_some((inst, sol))
        })
        .expect("no instance with a unique optimum")
}
