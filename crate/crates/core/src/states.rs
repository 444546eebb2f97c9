//! Two-qubit states: Bell, Werner, product and random mixtures, plus the
//! partial-transpose labeler used as ground truth.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{herm_eigvals, kron, ComplexMatrix};
use crate::tolerances;

/// A validated 4×4 two-qubit density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        check_density(&mat)?;
        Ok(Self(mat))
    }

    /// Wraps a matrix the caller has built to be a state by construction.
    pub(crate) fn new_unchecked(mat: ComplexMatrix) -> Self {
        debug_assert!(check_density(&mat).is_ok(), "{:?}", check_density(&mat));
        Self(mat)
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_parts(4, 4, re, im)?)
    }

    pub fn maximally_mixed() -> Self {
        Self(ComplexMatrix::identity(4).scale_real(0.25))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    /// Convex combination `p·self + (1 − p)·other`.
    pub fn mix(&self, other: &Self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange(format!("mixing weight {p}")));
        }
        Ok(Self(&self.0.scale_real(p) + &other.0.scale_real(1.0 - p)))
    }

    /// Partial transpose over the second qubit.
    pub fn partial_transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(4, 4, |i, j| {
            let (a, b) = (i / 2, i % 2);
            let (a2, b2) = (j / 2, j % 2);
            self.0[(2 * a + b2, 2 * a2 + b)]
        })
    }
}

fn check_density(m: &ComplexMatrix) -> Result<()> {
    if m.rows() != 4 || m.cols() != 4 {
        return Err(Error::DimMismatch(format!(
            "{}x{} density matrix",
            m.rows(),
            m.cols()
        )));
    }
    let defect = m.hermitian_defect();
    if defect > tolerances::DENSITY {
        return Err(Error::InvalidDensity(format!(
            "Hermitian defect {defect:.3e}"
        )));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > tolerances::DENSITY || tr.im.abs() > tolerances::DENSITY {
        return Err(Error::InvalidDensity(format!("trace {tr}")));
    }
    let min = herm_eigvals(m)?[0];
    if min < -tolerances::DENSITY {
        return Err(Error::InvalidDensity(format!("min eigenvalue {min:.3e}")));
    }
    Ok(())
}

pub fn is_valid_density(m: &ComplexMatrix) -> bool {
    check_density(m).is_ok()
}

/// The four Bell states with their two-bit group codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BellLabel {
    /// `(|00⟩ + |11⟩)/√2`, code `00`
    PhiPlus,
    /// `(|00⟩ − |11⟩)/√2`, code `01`
    PhiMinus,
    /// `(|01⟩ + |10⟩)/√2`, code `10`
    PsiPlus,
    /// `(|01⟩ − |10⟩)/√2`, code `11`
    PsiMinus,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [
        BellLabel::PhiPlus,
        BellLabel::PhiMinus,
        BellLabel::PsiPlus,
        BellLabel::PsiMinus,
    ];

    pub fn code(self) -> &'static str {
        match self {
            BellLabel::PhiPlus => "00",
            BellLabel::PhiMinus => "01",
            BellLabel::PsiPlus => "10",
            BellLabel::PsiMinus => "11",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.code() == code)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn vector(self) -> [Complex64; 4] {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        match self {
            BellLabel::PhiPlus => [h, z, z, h],
            BellLabel::PhiMinus => [h, z, z, -h],
            BellLabel::PsiPlus => [z, h, h, z],
            BellLabel::PsiMinus => [z, h, -h, z],
        }
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl TryFrom<String> for BellLabel {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Self::from_code(&s).ok_or_else(|| format!("unknown Bell group `{s}`"))
    }
}

impl From<BellLabel> for String {
    fn from(b: BellLabel) -> String {
        b.code().to_string()
    }
}

/// Class label: `+1` separable, `−1` entangled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Separable,
    Entangled,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Separable => 1.0,
            Label::Entangled => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Separable => Label::Entangled,
            Label::Entangled => Label::Separable,
        }
    }

    pub fn from_sign(x: f64) -> Self {
        if x >= 0.0 {
            Label::Separable
        } else {
            Label::Entangled
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(x: i8) -> std::result::Result<Self, String> {
        match x {
            1 => Ok(Label::Separable),
            -1 => Ok(Label::Entangled),
            other => Err(format!("label must be +1 or -1, got {other}")),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Separable => 1,
            Label::Entangled => -1,
        }
    }
}

/// A state with its class and, for entangled states, its Bell group.
#[derive(Clone, Debug)]
pub struct LabeledState {
    pub rho: DensityMatrix,
    pub label: Label,
    pub group: Option<BellLabel>,
}

impl LabeledState {
    pub fn new(rho: DensityMatrix, label: Label, group: Option<BellLabel>) -> Result<Self> {
        if (label == Label::Entangled) != group.is_some() {
            return Err(Error::OutOfRange(
                "a Bell group is required exactly for entangled states".into(),
            ));
        }
        Ok(Self { rho, label, group })
    }
}

pub fn bell_state(tag: BellLabel) -> DensityMatrix {
    DensityMatrix::new_unchecked(ComplexMatrix::projector(&tag.vector()))
}

/// `γ|Ψ⁻⟩⟨Ψ⁻| + (1 − γ)/4 · I`, for γ in [−1/3, 1].
pub fn werner_state(gamma: f64) -> Result<DensityMatrix> {
    bell_mixture(BellLabel::PsiMinus, gamma)
}

/// Werner-like state `γ|B⟩⟨B| + (1 − γ)/4 · I` around any Bell vector.
pub fn bell_mixture(tag: BellLabel, gamma: f64) -> Result<DensityMatrix> {
    if !(-1.0 / 3.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfRange(format!(
            "gamma {gamma} outside [-1/3, 1]"
        )));
    }
    let bell = ComplexMatrix::projector(&tag.vector()).scale_real(gamma);
    let noise = ComplexMatrix::identity(4).scale_real((1.0 - gamma) / 4.0);
    Ok(DensityMatrix::new_unchecked(&bell + &noise))
}

/// `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩`.
pub fn qubit_vector(theta: f64, phi: f64) -> [Complex64; 2] {
    [
        Complex64::new((theta / 2.0).cos(), 0.0),
        Complex64::from_polar((theta / 2.0).sin(), phi),
    ]
}

/// Bloch vector of [`qubit_vector`].
pub fn bloch_vector(theta: f64, phi: f64) -> [f64; 3] {
    [
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    ]
}

/// Projector onto `|Φ_A⟩ ⊗ |Φ_B⟩`.
pub fn product_state(theta_a: f64, phi_a: f64, theta_b: f64, phi_b: f64) -> DensityMatrix {
    let a = ComplexMatrix::projector(&qubit_vector(theta_a, phi_a));
    let b = ComplexMatrix::projector(&qubit_vector(theta_b, phi_b));
    DensityMatrix::new_unchecked(kron(&a, &b))
}

/// Haar-random pure product state.
fn random_product<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let mut angles = || {
        let cos_theta: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        (cos_theta.acos(), phi)
    };
    let (ta, pa) = angles();
    let (tb, pb) = angles();
    product_state(ta, pa, tb, pb)
}

/// Mixture of `1..=max_terms` random product projectors with flat
/// Dirichlet weights.
pub fn random_separable<R: Rng + ?Sized>(rng: &mut R, max_terms: usize) -> Result<DensityMatrix> {
    if max_terms == 0 {
        return Err(Error::OutOfRange("max_terms must be at least 1".into()));
    }
    let terms = rng.random_range(1..=max_terms);
    let weights: Vec<f64> = (0..terms).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = ComplexMatrix::zeros(4, 4);
    for w in weights {
        let p = random_product(rng);
        acc = &acc + &p.matrix().scale_real(w / total);
    }
    Ok(DensityMatrix::new_unchecked(acc))
}

const ENTANGLED_RETRIES: usize = 100;

/// Werner-like state around the group's Bell vector with
/// γ ~ Uniform(gamma_min, 1].
pub fn random_entangled<R: Rng + ?Sized>(
    rng: &mut R,
    group: BellLabel,
    gamma_min: f64,
) -> Result<DensityMatrix> {
    if !(gamma_min > 1.0 / 3.0 && gamma_min <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "gamma_min {gamma_min} must lie in (1/3, 1]"
        )));
    }
    for _ in 0..ENTANGLED_RETRIES {
        let u: f64 = rng.random();
        let gamma = 1.0 - (1.0 - gamma_min) * u;
        let rho = bell_mixture(group, gamma)?;
        if !ppt_separable(&rho) {
            return Ok(rho);
        }
    }
    Err(Error::RetryExhausted(ENTANGLED_RETRIES))
}

/// Smallest eigenvalue of the partial transpose.
pub fn ppt_min_eigenvalue(rho: &DensityMatrix) -> f64 {
    herm_eigvals(&rho.partial_transpose()).expect("partial transpose of a state is Hermitian")[0]
}

/// Peres–Horodecki test; exact separability criterion for two qubits.
pub fn ppt_separable(rho: &DensityMatrix) -> bool {
    ppt_min_eigenvalue(rho) >= -tolerances::PPT
}

/// Sizes and sampler parameters for a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub n_separable: usize,
    pub n_per_group: usize,
    pub gamma_min: f64,
    pub max_terms: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_separable: 2000,
            n_per_group: 500,
            gamma_min: 0.4,
            max_terms: 4,
        }
    }
}

/// One generated sample and the seed that reproduces it.
#[derive(Clone, Debug)]
pub struct SeededState {
    pub state: LabeledState,
    pub seed: u64,
}

/// Per-sample generator, seeded with `base_seed + index`.
pub fn sample_rng(base_seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(index as u64))
}

/// Generates separable samples first, then each Bell group in code order.
/// Labels come from the PPT test, not from the sampler that produced them.
pub fn generate_states(spec: &DatasetSpec, base_seed: u64) -> Result<Vec<SeededState>> {
    let mut plan: Vec<Option<BellLabel>> = vec![None; spec.n_separable];
    for g in BellLabel::ALL {
        plan.extend(std::iter::repeat_n(Some(g), spec.n_per_group));
    }
    plan.iter()
        .enumerate()
        .map(|(i, group)| {
            let seed = base_seed.wrapping_add(i as u64);
            let mut rng = sample_rng(base_seed, i);
            let rho = match group {
                None => random_separable(&mut rng, spec.max_terms)?,
                Some(g) => random_entangled(&mut rng, *g, spec.gamma_min)?,
            };
            let label = if ppt_separable(&rho) {
                Label::Separable
            } else {
                Label::Entangled
            };
            let group = if label == Label::Entangled {
                *group
            } else {
                None
            };
            let group = match (label, group) {
                // an entangled draw from the separable sampler cannot happen
                (Label::Entangled, None) => {
                    return Err(Error::InvalidDensity(
                        "separable sampler produced NPT state".into(),
                    ))
                }
                (_, g) => g,
            };
            Ok(SeededState {
                state: LabeledState::new(rho, label, group)?,
                seed,
            })
        })
        .collect()
}

/// Dataset export record (one JSON object per line).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub rho_re: Vec<f64>,
    pub rho_im: Vec<f64>,
    pub label: Label,
    pub group: Option<BellLabel>,
    pub seed: u64,
}

impl From<&SeededState> for StateRecord {
    fn from(s: &SeededState) -> Self {
        let m = s.state.rho.matrix();
        Self {
            rho_re: m.re_parts(),
            rho_im: m.im_parts(),
            label: s.state.label,
            group: s.state.group,
            seed: s.seed,
        }
    }
}

impl TryFrom<&StateRecord> for SeededState {
    type Error = Error;

    fn try_from(r: &StateRecord) -> Result<Self> {
        Ok(Self {
            state: LabeledState::new(
                DensityMatrix::from_parts(&r.rho_re, &r.rho_im)?,
                r.label,
                r.group,
            )?,
            seed: r.seed,
        })
    }
}
