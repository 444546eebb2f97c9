//! Hinge-power loss with L1 penalty, minimized by subgradient descent.

use crate::error::{Error, Result};

/// `(1/N) Σ max(0, 1 − y(vᵀx + b))^m + C (Σ|vₖ| + |b|)`.
pub fn hinge_l1_loss(x: &[&[f64]], y: &[f64], v: &[f64], b: f64, c: f64, m: u32) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let score: f64 = xi.iter().zip(v).map(|(a, w)| a * w).sum::<f64>() + b;
            (1.0 - yi * score).max(0.0).powi(m as i32)
        })
        .sum::<f64>()
        / n;
    data + c * (v.iter().map(|w| w.abs()).sum::<f64>() + b.abs())
}

pub(crate) struct HingeSolution {
    pub v: Vec<f64>,
    pub b: f64,
    pub loss: f64,
    pub iters: usize,
    pub stationarity: f64,
}

/// Gradient of the data term, and the minimum-norm element of the full
/// subdifferential given that gradient.
fn data_grad(x: &[&[f64]], y: &[f64], v: &[f64], b: f64, m: u32) -> Vec<f64> {
    let d = v.len();
    let n = x.len() as f64;
    let mut g = vec![0.0; d + 1];
    for (xi, yi) in x.iter().zip(y) {
        let score: f64 = xi.iter().zip(v).map(|(a, w)| a * w).sum::<f64>() + b;
        let slack = 1.0 - yi * score;
        if slack > 0.0 {
            let coef = -(m as f64) * slack.powi(m as i32 - 1) * yi / n;
            for k in 0..d {
                g[k] += coef * xi[k];
            }
            g[d] += coef;
        }
    }
    g
}

fn min_norm_subgradient(g: &[f64], params: &[f64], c: f64) -> Vec<f64> {
    g.iter()
        .zip(params)
        .map(|(&gk, &p)| {
            if p != 0.0 {
                gk + c * p.signum()
            } else {
                (gk.abs() - c).max(0.0) * gk.signum()
            }
        })
        .collect()
}

pub(crate) fn solve(
    x: &[&[f64]],
    y: &[f64],
    c: f64,
    m: u32,
    max_iters: usize,
) -> Result<HingeSolution> {
    let d = x[0].len();
    let mut params = vec![0.0; d + 1];
    let loss_at = |p: &[f64]| hinge_l1_loss(x, y, &p[..d], p[d], c, m);
    let mut best = params.clone();
    let mut best_loss = loss_at(&params);
    let step0 = 1.0;
    for k in 0..max_iters {
        let g = data_grad(x, y, &params[..d], params[d], m);
        let sub = min_norm_subgradient(&g, &params, c);
        let norm = sub.iter().map(|s| s * s).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = step0 / ((k + 1) as f64).sqrt();
        for (p, s) in params.iter_mut().zip(&sub) {
            *p -= step * s / norm.max(1.0);
        }
        let loss = loss_at(&params);
        if !loss.is_finite() {
            return Err(Error::SolverDiverged {
                iters: k,
                residual: loss,
            });
        }
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&params);
        }
    }
    let g = data_grad(x, y, &best[..d], best[d], m);
    let stationarity = min_norm_subgradient(&g, &best, c)
        .iter()
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt();
    Ok(HingeSolution {
        v: best[..d].to_vec(),
        b: best[d],
        loss: best_loss,
        iters: max_iters,
        stationarity,
    })
}
