//! Witness operators built from trained hyperplanes, and their
//! verification against product states and Bell states.
//!
//! A hyperplane `(v, b)` over the 15 Pauli features is the operator
//! `W = Σ v₍ᵢⱼ₎ σᵢ⊗σⱼ + b·I`, so that `tr(Wρ) = vᵀx(ρ) + b`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drsvm::SvmModel;
use crate::error::{Error, Result};
use crate::measure::N_FEATURES;
use crate::qlin::{herm_eigvals, kron, trace_prod, ComplexMatrix, Pauli};
use crate::states::{bell_state, qubit_vector, BellLabel, DensityMatrix, Label};
use crate::tolerances;

pub const DEFAULT_GRID_N: usize = 20;
pub const MIN_GRID_N: usize = 8;

const REFINE_MIN_STEP: f64 = 1e-9;
const REFINE_MAX_EVALS: usize = 20_000;

/// Pauli coefficients `χᵢⱼ`, indices over `(σx, σy, σz, I)`; `χ[3][3]`
/// is the bias.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessCoefficients {
    pub chi: [[f64; 4]; 4],
}

impl WitnessCoefficients {
    pub fn from_hyperplane(v: &[f64], b: f64) -> Result<Self> {
        if v.len() != N_FEATURES {
            return Err(Error::DimMismatch(format!(
                "expected {N_FEATURES} weights, got {}",
                v.len()
            )));
        }
        if !b.is_finite() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::OutOfRange("non-finite hyperplane".into()));
        }
        let mut chi = [[0.0; 4]; 4];
        for (k, &x) in v.iter().enumerate() {
            chi[k / 4][k % 4] = x;
        }
        chi[3][3] = b;
        Ok(Self { chi })
    }

    /// `χᵢⱼ = tr(W σᵢ⊗σⱼ) / 4`.
    pub fn from_matrix(w: &ComplexMatrix) -> Result<Self> {
        if w.rows() != 4 || w.cols() != 4 {
            return Err(Error::DimMismatch(format!(
                "witness must be 4x4, got {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        let mut chi = [[0.0; 4]; 4];
        for (i, pi) in Pauli::ALL.iter().enumerate() {
            for (j, pj) in Pauli::ALL.iter().enumerate() {
                chi[i][j] = trace_prod(w, &kron(&pi.matrix(), &pj.matrix()))?.re / 4.0;
            }
        }
        Ok(Self { chi })
    }

    pub fn v(&self) -> Vec<f64> {
        (0..N_FEATURES).map(|k| self.chi[k / 4][k % 4]).collect()
    }

    pub fn b(&self) -> f64 {
        self.chi[3][3]
    }

    pub fn operator(&self) -> ComplexMatrix {
        let mut w = ComplexMatrix::zeros(4, 4);
        for (i, pi) in Pauli::ALL.iter().enumerate() {
            for (j, pj) in Pauli::ALL.iter().enumerate() {
                let c = self.chi[i][j];
                if c != 0.0 {
                    w = &w + &kron(&pi.matrix(), &pj.matrix()).scale_real(c);
                }
            }
        }
        w
    }
}

/// A Hermitian two-qubit operator together with its Pauli coefficients.
/// The coefficients are those of the hyperplane it came from, before any
/// trace normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessOperator {
    w: ComplexMatrix,
    coeffs: WitnessCoefficients,
    normalized: bool,
}

impl WitnessOperator {
    /// Wraps an explicit matrix; coefficients are read off the matrix.
    pub fn from_matrix(w: ComplexMatrix, normalized: bool) -> Result<Self> {
        let coeffs = WitnessCoefficients::from_matrix(&w)?;
        let defect = w.hermitian_defect();
        if defect > tolerances::HERMITIAN {
            return Err(Error::NotHermitian(defect));
        }
        if normalized {
            let tr = w.trace().re;
            if (tr - 1.0).abs() > tolerances::HERMITIAN {
                return Err(Error::OutOfRange(format!(
                    "normalized witness has trace {tr}"
                )));
            }
        }
        Ok(Self {
            w,
            coeffs,
            normalized,
        })
    }

    /// Builds `Σ χ σᵢ⊗σⱼ`, divided by its trace `4b` when `normalize`.
    pub fn from_coefficients(coeffs: WitnessCoefficients, normalize: bool) -> Result<Self> {
        let mut w = coeffs.operator();
        if normalize {
            let tr = w.trace().re;
            if tr.abs() < tolerances::TRACE_ZERO || tr < 0.0 {
                return Err(Error::NormalizationUndefined(tr));
            }
            w = w.scale_real(1.0 / tr);
        }
        Ok(Self {
            w,
            coeffs,
            normalized: normalize,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.w
    }

    pub fn coeffs(&self) -> &WitnessCoefficients {
        &self.coeffs
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Coefficients of the stored matrix itself (differs from
    /// [`coeffs`](Self::coeffs) by the normalization factor).
    pub fn matrix_coeffs(&self) -> WitnessCoefficients {
        WitnessCoefficients::from_matrix(&self.w).expect("4x4 by construction")
    }

    pub fn negated(&self) -> Self {
        let mut chi = self.coeffs.chi;
        chi.iter_mut().flatten().for_each(|c| *c = -*c);
        Self {
            w: self.w.scale_real(-1.0),
            coeffs: WitnessCoefficients { chi },
            normalized: false,
        }
    }
}

pub fn witness_from_model(model: &SvmModel, normalize: bool) -> Result<WitnessOperator> {
    WitnessOperator::from_coefficients(
        WitnessCoefficients::from_hyperplane(&model.v, model.b)?,
        normalize,
    )
}

/// `Re tr(Wρ)`.
pub fn expectation(w: &WitnessOperator, rho: &DensityMatrix) -> f64 {
    trace_prod(w.matrix(), rho.matrix()).expect("both 4x4").re
}

pub fn classify(w: &WitnessOperator, rho: &DensityMatrix) -> Label {
    if expectation(w, rho) >= 0.0 {
        Label::Separable
    } else {
        Label::Entangled
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub min_eig: f64,
    pub n_negative_eigs: usize,
    /// Smallest expectation found over the product-state grid, after local
    /// refinement.
    pub grid_min: f64,
    /// `(θA, φA, θB, φB)` of `grid_min`.
    pub grid_argmin: [f64; 4],
    pub grid_n: usize,
    /// Expectation on each Bell state, keyed by group code.
    pub detected: BTreeMap<String, f64>,
}

impl VerificationReport {
    /// At least one negative eigenvalue and no product state below `−tol`.
    pub fn is_witness(&self, tol: f64) -> bool {
        self.n_negative_eigs >= 1 && self.grid_min >= -tol
    }

    pub fn bell(&self, tag: BellLabel) -> Option<f64> {
        self.detected.get(tag.code()).copied()
    }
}

/// `⟨ψ|W|ψ⟩` for unit `ψ`.
fn quad(w: &ComplexMatrix, psi: &[Complex64; 4]) -> f64 {
    let mut acc = 0.0;
    for r in 0..4 {
        let mut row = Complex64::new(0.0, 0.0);
        for c in 0..4 {
            row += w[(r, c)] * psi[c];
        }
        acc += (psi[r].conj() * row).re;
    }
    acc
}

fn product_vector(a: &[Complex64; 2], b: &[Complex64; 2]) -> [Complex64; 4] {
    [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
}

fn product_expectation(w: &ComplexMatrix, angles: &[f64; 4]) -> f64 {
    let a = qubit_vector(angles[0], angles[1]);
    let b = qubit_vector(angles[2], angles[3]);
    quad(w, &product_vector(&a, &b))
}

/// Grid angles for index `k` of `n`: `θ = π(k+½)/n`, `φ = 2πk/n`.
fn grid_theta(k: usize, n: usize) -> f64 {
    PI * (k as f64 + 0.5) / n as f64
}

fn grid_phi(k: usize, n: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

/// Minimum of `⟨ψ_A ψ_B|W|ψ_A ψ_B⟩` over the `grid_n⁴` grid, refined
/// locally starting from step `π/(4·grid_n)`.
fn product_grid_min(w: &ComplexMatrix, n: usize) -> (f64, [f64; 4]) {
    let singles: Vec<(usize, usize, [Complex64; 2])> = (0..n)
        .flat_map(|t| (0..n).map(move |p| (t, p)))
        .map(|(t, p)| (t, p, qubit_vector(grid_theta(t, n), grid_phi(p, n))))
        .collect();
    let m = singles.len();
    let (best, idx) = (0..m)
        .into_par_iter()
        .map(|ia| {
            let a = &singles[ia].2;
            let mut best = (f64::INFINITY, usize::MAX);
            for (ib, sb) in singles.iter().enumerate() {
                let e = quad(w, &product_vector(a, &sb.2));
                if e < best.0 {
                    best = (e, ia * m + ib);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, usize::MAX),
            |x, y| {
                if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) {
                    y
                } else {
                    x
                }
            },
        );
    let (sa, sb) = (&singles[idx / m], &singles[idx % m]);
    let mut angles = [
        grid_theta(sa.0, n),
        grid_phi(sa.1, n),
        grid_theta(sb.0, n),
        grid_phi(sb.1, n),
    ];
    let mut value = best;
    let mut step = PI / (4.0 * n as f64);
    // coordinate descent from the argmin; the step halves whenever a full
    // sweep stalls, so different grids settle on the same local minimum
    let mut evals = 0;
    while step > REFINE_MIN_STEP && evals < REFINE_MAX_EVALS {
        let mut moved = false;
        for coord in 0..4 {
            for dir in [-1.0, 1.0] {
                let mut trial = angles;
                trial[coord] += dir * step;
                let e = product_expectation(w, &trial);
                evals += 1;
                if e < value {
                    value = e;
                    angles = trial;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (value, angles)
}

/// Eigenvalue census, product-state positivity scan and Bell-state
/// expectations.
pub fn verify_witness(w: &WitnessOperator, grid_n: usize) -> Result<VerificationReport> {
    if grid_n < MIN_GRID_N {
        return Err(Error::OutOfRange(format!(
            "grid_n must be >= {MIN_GRID_N}, got {grid_n}"
        )));
    }
    let eig = herm_eigvals(w.matrix())?;
    let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let n_negative_eigs = eig.iter().filter(|&&e| e < -tolerances::WITNESS).count();
    let (grid_min, grid_argmin) = product_grid_min(w.matrix(), grid_n);
    let detected = BellLabel::ALL
        .iter()
        .map(|&tag| (tag.code().to_string(), expectation(w, &bell_state(tag))))
        .collect();
    Ok(VerificationReport {
        min_eig,
        n_negative_eigs,
        grid_min,
        grid_argmin,
        grid_n,
        detected,
    })
}

/// Witness export/import record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessRecord {
    pub chi: [[f64; 4]; 4],
    pub w_re: Vec<f64>,
    pub w_im: Vec<f64>,
    pub normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<VerificationReport>,
}

impl WitnessRecord {
    pub fn new(w: &WitnessOperator, report: Option<VerificationReport>) -> Self {
        Self {
            chi: w.coeffs.chi,
            w_re: w.w.re_parts(),
            w_im: w.w.im_parts(),
            normalized: w.normalized,
            report,
        }
    }

    /// The matrix is authoritative; `chi` must be the coefficients of the
    /// matrix, or of its un-normalized form when `normalized`.
    pub fn to_witness(&self) -> Result<WitnessOperator> {
        let w = ComplexMatrix::from_parts(4, 4, &self.w_re, &self.w_im)?;
        let mut op = WitnessOperator::from_matrix(w, self.normalized)?;
        let scale = if self.normalized {
            4.0 * self.chi[3][3]
        } else {
            1.0
        };
        let drift = op
            .coeffs
            .chi
            .iter()
            .flatten()
            .zip(self.chi.iter().flatten())
            .map(|(a, b)| (a * scale - b).abs())
            .fold(0.0, f64::max);
        if !(drift <= 1e-9 * scale.abs().max(1.0)) {
            return Err(Error::OutOfRange(format!(
                "chi disagrees with matrix by {drift}"
            )));
        }
        op.coeffs = WitnessCoefficients { chi: self.chi };
        Ok(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::pauli_features;
    use crate::states::{product_state, random_separable, werner_state};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const REFERENCE_WITNESS: &str = include_str!("../fixtures/reference_witness.json");
    const IDENTITY: &str = include_str!("../fixtures/identity.json");

    /// Reference α = 0.7 coefficients, columns χ₁₁ … χ₄₄.
    const REFERENCE_ROW: [f64; 16] = [
        8.3, -0.2, -0.4, 0.3, 0.3, 8.3, 0.4, 0.4, 0.5, -0.3, 8.1, 0.3, 0.3, 0.4, 0.3, 10.4,
    ];

    fn reference_witness() -> WitnessOperator {
        serde_json::from_str::<WitnessRecord>(REFERENCE_WITNESS)
            .unwrap()
            .to_witness()
            .unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn model(v: Vec<f64>, b: f64) -> SvmModel {
        SvmModel {
            v,
            b,
            beta: vec![],
            objective: 0.0,
            feasibility_residual: 0.0,
            iters: 0,
            penalty_final: 0.0,
        }
    }

    fn complement_of_singlet() -> WitnessOperator {
        let w =
            &ComplexMatrix::identity(4).scale_real(0.5) - bell_state(BellLabel::PsiMinus).matrix();
        WitnessOperator::from_matrix(w, false).unwrap()
    }

    #[test]
    fn zero_normal_unit_bias_is_maximally_mixed() {
        let w = witness_from_model(&model(vec![0.0; 15], 1.0), true).unwrap();
        assert!(
            w.matrix()
                .max_abs_diff(&ComplexMatrix::identity(4).scale_real(0.25))
                < 1e-15
        );
        assert_eq!(w.coeffs().b(), 1.0);
    }

    #[test]
    fn reference_row_normalizes_to_reference_matrix() {
        let w = witness_from_model(
            &model(REFERENCE_ROW[..15].to_vec(), REFERENCE_ROW[15]),
            true,
        )
        .unwrap();
        let expected = [
            [
                c(0.459, 0.0),
                c(0.019, -0.002),
                c(-0.002, -0.019),
                c(0.0, -0.002),
            ],
            [
                c(0.019, 0.002),
                c(0.055, 0.0),
                c(0.399, -0.012),
                c(0.017, 0.0),
            ],
            [
                c(-0.002, 0.019),
                c(0.399, 0.012),
                c(0.055, 0.0),
                c(-0.005, -0.017),
            ],
            [
                c(0.0, 0.002),
                c(0.017, 0.0),
                c(-0.005, 0.017),
                c(0.430, 0.0),
            ],
        ];
        for r in 0..4 {
            for col in 0..4 {
                let d = (w.matrix()[(r, col)] - expected[r][col]).norm();
                assert!(d <= 0.005, "entry ({r},{col}) off by {d}");
            }
        }
    }

    #[test]
    fn normalization_needs_positive_trace() {
        assert!(matches!(
            witness_from_model(&model(vec![0.3; 15], 0.0), true),
            Err(Error::NormalizationUndefined(_))
        ));
        assert!(witness_from_model(&model(vec![0.3; 15], -1.0), true).is_err());
        assert!(witness_from_model(&model(vec![0.3; 15], -1.0), false).is_ok());
        assert!(witness_from_model(&model(vec![0.3; 14], 1.0), false).is_err());
    }

    #[test]
    fn fixture_matches_reference_entries_and_singlet_value() {
        let w = reference_witness();
        assert!((w.matrix()[(1, 2)] - c(0.399, -0.012)).norm() < 1e-15);
        let e = expectation(&w, &bell_state(BellLabel::PsiMinus));
        assert!((e + 0.344).abs() <= 0.002, "{e}");
        assert_eq!(
            classify(&w, &bell_state(BellLabel::PsiMinus)),
            Label::Entangled
        );
        assert_eq!(
            classify(&w, &product_state(0.0, 0.0, 0.0, 0.0)),
            Label::Separable
        );
    }

    #[test]
    fn fixture_verifies_as_witness() {
        let r = verify_witness(&reference_witness(), 12).unwrap();
        assert_eq!(r.n_negative_eigs, 1);
        assert!(r.grid_min > 0.0, "{}", r.grid_min);
        assert!(r.is_witness(tolerances::WITNESS));
        assert!((r.bell(BellLabel::PsiMinus).unwrap() + 0.344).abs() <= 0.002);
    }

    #[test]
    fn identity_fixture_is_not_a_witness() {
        let w = serde_json::from_str::<WitnessRecord>(IDENTITY)
            .unwrap()
            .to_witness()
            .unwrap();
        let r = verify_witness(&w, 8).unwrap();
        assert_eq!(r.n_negative_eigs, 0);
        assert!((r.grid_min - 0.25).abs() < 1e-14);
        assert!(!r.is_witness(tolerances::WITNESS));
        let rho = werner_state(0.37).unwrap();
        assert!((expectation(&w, &rho) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn singlet_complement_is_tight_but_nonnegative() {
        let w = complement_of_singlet();
        let r = verify_witness(&w, 12).unwrap();
        // a⊗a⊥ has overlap ½ with the singlet and lies on any even grid,
        // so the infimum 0 is reached up to rounding
        assert!(r.grid_min.abs() <= 1e-12, "{}", r.grid_min);
        assert_eq!(r.n_negative_eigs, 1);
        assert!((r.bell(BellLabel::PsiMinus).unwrap() + 0.5).abs() < 1e-14);
        let e = expectation(&w, &product_state(0.0, 0.0, PI, 0.0));
        assert!(e.abs() < 1e-15);
    }

    #[test]
    fn coefficient_round_trip() {
        let v: Vec<f64> = (0..15).map(|k| (k as f64 * 0.37).sin()).collect();
        let w = witness_from_model(&model(v.clone(), 0.8), false).unwrap();
        let back = w.matrix_coeffs();
        for (a, b) in back.v().iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((back.b() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn grid_min_does_not_increase_with_resolution() {
        for w in [reference_witness(), complement_of_singlet()] {
            let mins: Vec<f64> = [8, 12, 16]
                .iter()
                .map(|&n| verify_witness(&w, n).unwrap().grid_min)
                .collect();
            assert!(
                mins[1] <= mins[0] + 1e-12 && mins[2] <= mins[1] + 1e-12,
                "{mins:?}"
            );
        }
    }

    #[test]
    fn small_grids_rejected() {
        assert!(verify_witness(&reference_witness(), 7).is_err());
    }

    #[test]
    fn negation_flips_decisions() {
        let w = reference_witness();
        let neg = w.negated();
        for tag in BellLabel::ALL {
            let rho = bell_state(tag);
            assert_eq!(classify(&neg, &rho), classify(&w, &rho).flipped());
        }
    }

    #[test]
    fn record_round_trip() {
        let v: Vec<f64> = (0..15).map(|k| 0.1 * k as f64 - 0.7).collect();
        let w = witness_from_model(&model(v, 2.5), true).unwrap();
        let report = verify_witness(&w, 8).unwrap();
        let rec = WitnessRecord::new(&w, Some(report));
        let text = serde_json::to_string(&rec).unwrap();
        let back: WitnessRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
        let w2 = back.to_witness().unwrap();
        assert_eq!(w2, w);
    }

    #[test]
    fn dual_path_identity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..1000 {
            use rand::Rng;
            let v: Vec<f64> = (0..15).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: f64 = rng.random_range(-3.0..3.0);
            let w = witness_from_model(&model(v.clone(), b), false).unwrap();
            let rho = if i % 2 == 0 {
                random_separable(&mut rng, 4).unwrap()
            } else {
                crate::states::random_entangled(&mut rng, BellLabel::ALL[i % 4], 0.4).unwrap()
            };
            let x = pauli_features(&rho).unwrap();
            let lin: f64 = v.iter().zip(x.as_slice()).map(|(a, b)| a * b).sum::<f64>() + b;
            assert!((expectation(&w, &rho) - lin).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn operator_is_hermitian(v in prop::collection::vec(-10.0..10.0f64, 15), b in -10.0..10.0f64) {
            let w = witness_from_model(&model(v, b), false).unwrap();
            prop_assert!(w.matrix().hermitian_defect() <= 1e-12);
        }

        #[test]
        fn expectation_is_affine(g1 in 0.0..1.0f64, g2 in 0.0..1.0f64, p in 0.0..1.0f64) {
            let w = reference_witness();
            let r1 = werner_state(g1).unwrap();
            let r2 = bell_state(BellLabel::PhiPlus).mix(&werner_state(g2).unwrap(), 0.3).unwrap();
            let mixed = r1.mix(&r2, p).unwrap();
            let lhs = expectation(&w, &mixed);
            let rhs = p * expectation(&w, &r1) + (1.0 - p) * expectation(&w, &r2);
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn normalization_keeps_decisions(
            v in prop::collection::vec(-2.0..2.0f64, 15),
            b in 0.1..5.0f64,
            ta in 0.0..PI, pa in 0.0..2.0 * PI, tb in 0.0..PI, pb in 0.0..2.0 * PI,
        ) {
            let raw = witness_from_model(&model(v.clone(), b), false).unwrap();
            let unit = witness_from_model(&model(v, b), true).unwrap();
            prop_assert!((unit.matrix().trace().re - 1.0).abs() <= 1e-10);
            let rho = product_state(ta, pa, tb, pb).mix(&bell_state(BellLabel::PsiPlus), 0.5).unwrap();
            let (e1, e2) = (expectation(&raw, &rho), expectation(&unit, &rho));
            prop_assume!(e1.abs() > 1e-9);
            prop_assert_eq!(e1 > 0.0, e2 > 0.0);
        }
    }
}
