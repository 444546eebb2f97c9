//! Log-barrier interior-point solver for the slacked second-order cone
//! SVM
//!
//! ```text
//! minimize    ½‖v‖² + Σᵢ wᵢ βᵢ
//! subject to  λᵢ(μᵢᵀv + b) − 1 + βᵢ ≥ κ √(vᵀΣᵢv),   βᵢ ≥ 0
//! ```
//!
//! Each cone row contributes `−log(sᵢ² − κ² vᵀΣᵢv)` and each slack
//! `−log βᵢ`. Slacks couple only to their own row, so every Newton system
//! is reduced by a Schur complement to a dense `(d+1)×(d+1)` solve in
//! `(v, b)`. Summation order is fixed, which makes solves bit-reproducible.

use crate::error::{Error, Result};
use crate::qlin::RealSymMatrix;

pub(crate) struct Row<'a> {
    /// `λ·(μ, 1)`
    pub a: Vec<f64>,
    pub sigma: &'a RealSymMatrix,
    /// Objective weight on this row's slack.
    pub weight: f64,
}

pub(crate) struct Problem<'a> {
    pub dim: usize,
    pub kappa: f64,
    pub rows: Vec<Row<'a>>,
}

pub(crate) struct Settings {
    pub max_newton: usize,
    /// Target duality-gap bound, relative to the objective.
    pub rel_gap: f64,
}

#[derive(Debug)]
pub(crate) struct Solution {
    /// `(v, b)`
    pub w: Vec<f64>,
    pub newton_iters: usize,
}

const BARRIER_GROWTH: f64 = 12.0;
const CENTERING_TOL: f64 = 1e-10;
const ARMIJO: f64 = 0.25;
const STALL_TOL: f64 = 1e-15;

struct RowState {
    s: f64,
    sv: Vec<f64>,
    disc: f64,
}

impl<'a> Problem<'a> {
    fn n(&self) -> usize {
        self.dim + 1
    }

    fn row_state(&self, row: &Row, w: &[f64], beta: f64) -> RowState {
        let v = &w[..self.dim];
        let s = dot(&row.a, w) - 1.0 + beta;
        let sv = row.sigma.matvec(v);
        let q = self.kappa * self.kappa * dot(v, &sv);
        RowState {
            s,
            sv,
            disc: s * s - q.max(0.0),
        }
    }

    fn objective(&self, w: &[f64], beta: &[f64]) -> f64 {
        let v = &w[..self.dim];
        0.5 * dot(v, v)
            + self
                .rows
                .iter()
                .zip(beta)
                .map(|(r, b)| r.weight * b)
                .sum::<f64>()
    }

    /// Barrier-augmented objective, `None` outside the open feasible set.
    fn barrier_value(&self, t: f64, w: &[f64], beta: &[f64]) -> Option<f64> {
        let mut f = t * self.objective(w, beta);
        for (row, &b) in self.rows.iter().zip(beta) {
            if !(b > 0.0) {
                return None;
            }
            let v = &w[..self.dim];
            let s = dot(&row.a, w) - 1.0 + b;
            let q = self.kappa * self.kappa * row.sigma.quad_form(v);
            let disc = s * s - q.max(0.0);
            if !(s > 0.0 && disc > 0.0) {
                return None;
            }
            f -= disc.ln() + b.ln();
        }
        f.is_finite().then_some(f)
    }

    /// Newton direction and squared decrement at `(w, beta)` for barrier
    /// parameter `t`.
    fn newton_direction(
        &self,
        t: f64,
        w: &[f64],
        beta: &[f64],
    ) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let d = self.dim;
        let n = self.n();
        let k2 = self.kappa * self.kappa;
        let mut h = vec![0.0; n * n];
        let mut g = vec![0.0; n];
        for i in 0..d {
            h[i * n + i] = t;
            g[i] = t * w[i];
        }
        let mut rhs_corr = vec![0.0; n];
        let mut cross = Vec::with_capacity(self.rows.len());
        let mut e = vec![0.0; n];
        for (row, &b) in self.rows.iter().zip(beta) {
            let st = self.row_state(row, w, b);
            let inv_d = 1.0 / st.disc;
            for j in 0..n {
                e[j] = 2.0 * st.s * row.a[j];
            }
            for j in 0..d {
                e[j] -= 2.0 * k2 * st.sv[j];
            }
            for j in 0..n {
                g[j] -= e[j] * inv_d;
            }
            // −(2aaᵀ − 2κ²Σ)/D + eeᵀ/D²
            for r in 0..n {
                let ar = row.a[r];
                let er = e[r] * inv_d * inv_d;
                for c in 0..n {
                    h[r * n + c] += -2.0 * ar * row.a[c] * inv_d + er * e[c];
                }
            }
            if k2 > 0.0 {
                let scale = 2.0 * k2 * inv_d;
                for r in 0..d {
                    for c in 0..d {
                        h[r * n + c] += scale * row.sigma.get(r, c);
                    }
                }
            }
            let hb: Vec<f64> = (0..n)
                .map(|j| -2.0 * row.a[j] * inv_d + 2.0 * st.s * inv_d * inv_d * e[j])
                .collect();
            let hbb = -2.0 * inv_d + 4.0 * st.s * st.s * inv_d * inv_d + 1.0 / (b * b);
            let gb = t * row.weight - 2.0 * st.s * inv_d - 1.0 / b;
            for r in 0..n {
                rhs_corr[r] += hb[r] * gb / hbb;
                for c in 0..n {
                    h[r * n + c] -= hb[r] * hb[c] / hbb;
                }
            }
            cross.push((hb, hbb, gb));
        }
        let reduced = RealSymMatrix::from_rows(n, &h).ok()?;
        let rhs: Vec<f64> = (0..n).map(|j| -g[j] + rhs_corr[j]).collect();
        let dw = solve_spd(&reduced, &rhs)?;
        let mut dbeta = Vec::with_capacity(beta.len());
        let mut slope = dot(&g, &dw);
        for (hb, hbb, gb) in &cross {
            let db = (-gb - dot(hb, &dw)) / hbb;
            slope += gb * db;
            dbeta.push(db);
        }
        Some((dw, dbeta, -slope))
    }
}

/// Cholesky with escalating diagonal jitter for nearly singular systems.
fn solve_spd(m: &RealSymMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
    if let Some(x) = m.cholesky_solve(rhs) {
        return Some(x);
    }
    let scale = m.max_abs().max(1.0);
    let mut jitter = 1e-14 * scale;
    for _ in 0..8 {
        let mut shifted = m.clone();
        for i in 0..m.dim() {
            shifted.set(i, i, m.get(i, i) + jitter);
        }
        if let Some(x) = shifted.cholesky_solve(rhs) {
            return Some(x);
        }
        jitter *= 100.0;
    }
    None
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn solve(problem: &Problem, settings: &Settings) -> Result<Solution> {
    let n = problem.n();
    let k = problem.rows.len();
    // s = 1 at v = 0, b = 0 with β = 2
    let mut w = vec![0.0; n];
    let mut beta = vec![2.0; k];
    let nu = 3.0 * k as f64;
    // the start value and the stopping rule are both relative to the
    // objective, which keeps the iterates equivariant under rescaling
    let f0 = problem.objective(&w, &beta);
    let mut t = nu / f0;
    let mut iters = 0usize;

    loop {
        // centering
        loop {
            if iters >= settings.max_newton {
                return Err(Error::SolverDiverged {
                    iters,
                    residual: nu / t,
                });
            }
            let Some((dw, dbeta, decrement)) = problem.newton_direction(t, &w, &beta) else {
                return Err(Error::SolverDiverged {
                    iters,
                    residual: f64::NAN,
                });
            };
            iters += 1;
            if !(decrement.is_finite()) {
                return Err(Error::SolverDiverged {
                    iters,
                    residual: decrement,
                });
            }
            if decrement / 2.0 <= CENTERING_TOL {
                break;
            }
            let f_cur = problem
                .barrier_value(t, &w, &beta)
                .expect("iterate stays strictly feasible");
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-16 {
                let w_new: Vec<f64> = w.iter().zip(&dw).map(|(x, d)| x + step * d).collect();
                let b_new: Vec<f64> = beta.iter().zip(&dbeta).map(|(x, d)| x + step * d).collect();
                if let Some(f_new) = problem.barrier_value(t, &w_new, &b_new) {
                    if f_new <= f_cur - ARMIJO * step * decrement {
                        w = w_new;
                        beta = b_new;
                        accepted = f_cur - f_new > STALL_TOL * f_cur.abs().max(1.0);
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // no further progress is representable at this t
                break;
            }
        }
        let gap = nu / t;
        if gap <= settings.rel_gap * problem.objective(&w, &beta) {
            break;
        }
        t *= BARRIER_GROWTH;
    }
    Ok(Solution {
        w,
        newton_iters: iters,
    })
}
