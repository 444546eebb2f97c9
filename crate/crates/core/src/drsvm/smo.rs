//! Soft-margin linear SVM by sequential minimal optimization on the dual,
//! with second-order working-set selection. The primal normal is kept
//! explicit, so each gradient entry costs one dot product.

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;
const KKT_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 2_000_000;

pub(crate) struct SmoSolution {
    pub v: Vec<f64>,
    pub b: f64,
    pub iters: usize,
    /// Final maximal-violating-pair gap.
    pub kkt_gap: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn solve(x: &[&[f64]], y: &[f64], c: f64) -> Result<SmoSolution> {
    let n = x.len();
    let d = x[0].len();
    let kdiag: Vec<f64> = x.iter().map(|xi| dot(xi, xi)).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut grad = vec![-1.0; n];
    let mut iters = 0;
    let mut gap;

    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    loop {
        // G_t = y_t wᵀx_t − 1
        for t in 0..n {
            grad[t] = y[t] * dot(&w, x[t]) - 1.0;
        }
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let val = -y[t] * grad[t];
            gmin = gmin.min(val);
            if i != usize::MAX {
                let diff = gmax - val;
                if diff > 0.0 {
                    let mut quad = kdiag[i] + kdiag[t] - 2.0 * dot(x[i], x[t]);
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -diff * diff / quad;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap <= KKT_TOL {
            break;
        }
        if iters >= MAX_ITERS {
            return Err(Error::SolverDiverged {
                iters,
                residual: gap,
            });
        }
        iters += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let kij = dot(x[i], x[j]);
        if y[i] != y[j] {
            let mut quad = kdiag[i] + kdiag[j] + 2.0 * (y[i] * y[j] * kij);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kdiag[i] + kdiag[j] - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = (alpha[i] - ai_old) * y[i];
        let dj = (alpha[j] - aj_old) * y[j];
        for k in 0..d {
            w[k] += di * x[i][k] + dj * x[j][k];
        }
    }

    // rebuild the normal from α to shed accumulated drift
    let mut v = vec![0.0; d];
    for t in 0..n {
        for k in 0..d {
            v[k] += alpha[t] * y[t] * x[t][k];
        }
    }
    let b = best_bias(x, y, &v, c);
    Ok(SmoSolution {
        v,
        b,
        iters,
        kkt_gap: gap,
    })
}

/// Exact minimizer over `b` of the convex piecewise-linear hinge term for
/// a fixed normal; the minimum sits at a breakpoint `b = yᵢ − vᵀxᵢ`.
fn best_bias(x: &[&[f64]], y: &[f64], v: &[f64], c: f64) -> f64 {
    let z: Vec<f64> = x.iter().map(|xi| dot(v, xi)).collect();
    let cost = |b: f64| -> f64 {
        z.iter()
            .zip(y)
            .map(|(zi, yi)| (1.0 - yi * (zi + b)).max(0.0))
            .sum::<f64>()
            * c
    };
    let mut best_b = 0.0;
    let mut best = f64::INFINITY;
    for (zi, yi) in z.iter().zip(y) {
        let b = yi - zi;
        let f = cost(b);
        if f < best {
            best = f;
            best_b = b;
        }
    }
    best_b
}
