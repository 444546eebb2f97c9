//! Pauli-expectation features, measurement noise, and per-sample moments.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{kron, trace_prod, ComplexMatrix, Pauli, RealSymMatrix};
use crate::states::{BellLabel, DensityMatrix, Label, SeededState};
use crate::tolerances;

/// Number of non-trivial two-qubit Pauli observables.
pub const N_FEATURES: usize = 15;

/// Pauli pair `(σᵢ, σⱼ)` measured by feature `k`, row-major over
/// {X, Y, Z, I}² with (I, I) dropped.
pub fn feature_paulis(k: usize) -> (Pauli, Pauli) {
    assert!(k < N_FEATURES);
    (Pauli::ALL[k / 4], Pauli::ALL[k % 4])
}

/// `σᵢ ⊗ σⱼ` for every feature, built once.
pub fn feature_operators() -> &'static [ComplexMatrix; N_FEATURES] {
    static OPS: OnceLock<[ComplexMatrix; N_FEATURES]> = OnceLock::new();
    OPS.get_or_init(|| {
        std::array::from_fn(|k| {
            let (a, b) = feature_paulis(k);
            kron(&a.matrix(), &b.matrix())
        })
    })
}

/// The 15 Pauli expectations of a two-qubit state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Component for Pauli pair `(i, j)`, 1-based with 1 = X … 4 = I.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!((1..=4).contains(&i) && (1..=4).contains(&j) && (i, j) != (4, 4));
        self.0[4 * (i - 1) + (j - 1)]
    }
}

/// Exact expectations `Re tr(ρ σᵢ⊗σⱼ)`.
pub fn pauli_features(rho: &DensityMatrix) -> Result<FeatureVector> {
    let mut x = [0.0; N_FEATURES];
    for (k, op) in feature_operators().iter().enumerate() {
        let t = trace_prod(rho.matrix(), op)?;
        if t.im.abs() > tolerances::NON_REAL {
            return Err(Error::NonRealExpectation(t.im));
        }
        x[k] = t.re;
    }
    Ok(FeatureVector(x))
}

/// Measurement noise on each Pauli expectation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Additive i.i.d. `N(0, sigma²)` per component.
    Gaussian { sigma: f64 },
    /// Each expectation estimated from `n_shots` ±1 outcomes.
    Shot { n_shots: u64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(Error::OutOfRange(format!("noise sigma {sigma}")))
            }
            NoiseModel::Shot { n_shots: 0 } => {
                Err(Error::OutOfRange("n_shots must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Gaussian { sigma: 0.05 }
    }
}

/// Applies one draw of `noise` to exact features. Results are not clipped.
pub fn perturb<R: Rng + ?Sized>(
    exact: &FeatureVector,
    noise: NoiseModel,
    rng: &mut R,
) -> FeatureVector {
    let mut x = exact.0;
    match noise {
        NoiseModel::Gaussian { sigma } => {
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                for xi in &mut x {
                    *xi += normal.sample(rng);
                }
            }
        }
        NoiseModel::Shot { n_shots } => {
            let n = n_shots as f64;
            for xi in &mut x {
                let p = ((1.0 + *xi) / 2.0).clamp(0.0, 1.0);
                let plus = Binomial::new(n_shots, p)
                    .expect("probability in [0, 1]")
                    .sample(rng) as f64;
                *xi = (2.0 * plus - n) / n;
            }
        }
    }
    FeatureVector(x)
}

/// One noisy measurement of all 15 features.
pub fn noisy_features<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    noise: NoiseModel,
    rng: &mut R,
) -> Result<FeatureVector> {
    noise.validate()?;
    Ok(perturb(&pauli_features(rho)?, noise, rng))
}

/// First and second moments of one training point's noisy features.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSample {
    pub mu: Vec<f64>,
    sigma: RealSymMatrix,
    sigma_sqrt: RealSymMatrix,
    pub label: Label,
    pub group: Option<BellLabel>,
}

impl MomentSample {
    /// Clamps `sigma` onto the PSD cone and caches its square root.
    /// Works for any feature dimension.
    pub fn new(
        mu: Vec<f64>,
        sigma: RealSymMatrix,
        label: Label,
        group: Option<BellLabel>,
    ) -> Result<Self> {
        if sigma.dim() != mu.len() {
            return Err(Error::DimMismatch(format!(
                "mu has {} entries, sigma is {}x{}",
                mu.len(),
                sigma.dim(),
                sigma.dim()
            )));
        }
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::OutOfRange("non-finite mean".into()));
        }
        let min = sigma.min_eigenvalue();
        if min < -tolerances::PSD_REJECT {
            return Err(Error::NotPsd(min));
        }
        let sigma = sigma.clamp_psd();
        let sigma_sqrt = sigma.psd_sqrt()?;
        Ok(Self {
            mu,
            sigma,
            sigma_sqrt,
            label,
            group,
        })
    }

    /// Noise-free sample (`Σ = 0`).
    pub fn exact(mu: Vec<f64>, label: Label, group: Option<BellLabel>) -> Self {
        let d = mu.len();
        Self::new(mu, RealSymMatrix::zeros(d), label, group).expect("zero covariance is PSD")
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> &RealSymMatrix {
        &self.sigma
    }

    pub fn sigma_sqrt(&self) -> &RealSymMatrix {
        &self.sigma_sqrt
    }

    /// Same sample with a different covariance.
    pub fn with_sigma(&self, sigma: RealSymMatrix) -> Result<Self> {
        Self::new(self.mu.clone(), sigma, self.label, self.group)
    }
}

/// Sample mean and unbiased covariance of `repeats` noisy draws.
pub fn estimate_moments<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    noise: NoiseModel,
    repeats: usize,
    rng: &mut R,
    label: Label,
    group: Option<BellLabel>,
) -> Result<MomentSample> {
    if repeats < 2 {
        return Err(Error::OutOfRange(format!(
            "repeats must be >= 2, got {repeats}"
        )));
    }
    noise.validate()?;
    let exact = pauli_features(rho)?;
    let draws: Vec<FeatureVector> = (0..repeats).map(|_| perturb(&exact, noise, rng)).collect();
    let r = repeats as f64;
    let mut mu = vec![0.0; N_FEATURES];
    for d in &draws {
        for (m, x) in mu.iter_mut().zip(d.0) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= r);
    let sigma = RealSymMatrix::from_fn(N_FEATURES, |i, j| {
        draws
            .iter()
            .map(|d| (d.0[i] - mu[i]) * (d.0[j] - mu[j]))
            .sum::<f64>()
            / (r - 1.0)
    });
    MomentSample::new(mu, sigma, label, group)
}

/// Generator for the measurement draws of sample `seed`; a separate stream
/// from the one that produced the state.
pub fn measurement_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Estimates moments for every state, in input order.
pub fn measure_states(
    states: &[SeededState],
    noise: NoiseModel,
    repeats: usize,
) -> Result<Vec<MomentSample>> {
    states
        .par_iter()
        .map(|s| {
            let mut rng = measurement_rng(s.seed);
            estimate_moments(
                &s.state.rho,
                noise,
                repeats,
                &mut rng,
                s.state.label,
                s.state.group,
            )
        })
        .collect()
}

/// Replaces every covariance by the average covariance of its class.
pub fn pool_by_class(samples: &[MomentSample]) -> Result<Vec<MomentSample>> {
    let pooled = |label: Label| -> Option<RealSymMatrix> {
        let members: Vec<&MomentSample> = samples.iter().filter(|s| s.label == label).collect();
        let first = members.first()?;
        let d = first.dim();
        let n = members.len() as f64;
        Some(RealSymMatrix::from_fn(d, |i, j| {
            members.iter().map(|s| s.sigma.get(i, j)).sum::<f64>() / n
        }))
    };
    let sep = pooled(Label::Separable);
    let ent = pooled(Label::Entangled);
    samples
        .iter()
        .map(|s| {
            let sigma = match s.label {
                Label::Separable => sep.clone(),
                Label::Entangled => ent.clone(),
            }
            .expect("class present");
            s.with_sigma(sigma)
        })
        .collect()
}

/// Moment dataset export record (one JSON object per line).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub label: Label,
    pub group: Option<BellLabel>,
    pub seed: u64,
}

impl MomentRecord {
    pub fn new(sample: &MomentSample, seed: u64) -> Self {
        Self {
            mu: sample.mu.clone(),
            sigma: sample.sigma.as_slice().to_vec(),
            label: sample.label,
            group: sample.group,
            seed,
        }
    }

    pub fn to_sample(&self) -> Result<MomentSample> {
        let d = self.mu.len();
        MomentSample::new(
            self.mu.clone(),
            RealSymMatrix::from_rows(d, &self.sigma)?,
            self.label,
            self.group,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{bell_state, bloch_vector, product_state, werner_state};
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn feature_ordering() {
        assert_eq!(feature_paulis(0), (Pauli::X, Pauli::X));
        assert_eq!(feature_paulis(3), (Pauli::X, Pauli::I));
        assert_eq!(feature_paulis(5), (Pauli::Y, Pauli::Y));
        assert_eq!(feature_paulis(10), (Pauli::Z, Pauli::Z));
        assert_eq!(feature_paulis(12), (Pauli::I, Pauli::X));
        assert_eq!(feature_paulis(14), (Pauli::I, Pauli::Z));
    }

    #[test]
    fn maximally_mixed_has_zero_features() {
        let f = pauli_features(&DensityMatrix::maximally_mixed()).unwrap();
        assert!(f.0.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn psi_minus_features() {
        let f = pauli_features(&bell_state(BellLabel::PsiMinus)).unwrap();
        for k in 0..N_FEATURES {
            let want = if [0, 5, 10].contains(&k) { -1.0 } else { 0.0 };
            assert!((f.0[k] - want).abs() < 1e-14, "k={k}");
        }
        assert_eq!(f.get(2, 2), f.0[5]);
    }

    #[test]
    fn werner_features_scale_with_gamma() {
        for gamma in [0.2, 0.6, 1.0] {
            let f = pauli_features(&werner_state(gamma).unwrap()).unwrap();
            for k in 0..N_FEATURES {
                let want = if [0, 5, 10].contains(&k) { -gamma } else { 0.0 };
                assert!((f.0[k] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn product_features_factorize() {
        let (ta, pa, tb, pb) = (0.7, 1.9, 2.3, 4.4);
        let f = pauli_features(&product_state(ta, pa, tb, pb)).unwrap();
        let a = bloch_vector(ta, pa);
        let b = bloch_vector(tb, pb);
        for i in 0..3 {
            for j in 0..3 {
                assert!((f.0[4 * i + j] - a[i] * b[j]).abs() < 1e-10);
            }
            assert!((f.0[4 * i + 3] - a[i]).abs() < 1e-10);
            assert!((f.0[12 + i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_noise_is_exact() {
        let rho = werner_state(0.7).unwrap();
        let exact = pauli_features(&rho).unwrap();
        let noisy = noisy_features(&rho, NoiseModel::Gaussian { sigma: 0.0 }, &mut rng(1)).unwrap();
        assert_eq!(exact, noisy);
        let m = estimate_moments(
            &rho,
            NoiseModel::Gaussian { sigma: 0.0 },
            10,
            &mut rng(1),
            Label::Entangled,
            Some(BellLabel::PsiMinus),
        )
        .unwrap();
        assert_eq!(m.mu, exact.0.to_vec());
        assert!(m.sigma().max_abs() <= 1e-14);
    }

    #[test]
    fn shot_noise_statistics() {
        // |00⟩: ZZ = +1 is deterministic, XX = 0 has variance 1/n
        let rho = product_state(0.0, 0.0, 0.0, 0.0);
        let n = 100u64;
        let noise = NoiseModel::Shot { n_shots: n };
        let mut r = rng(3);
        let trials = 10_000;
        let mut xs = Vec::with_capacity(trials);
        for _ in 0..trials {
            let f = noisy_features(&rho, noise, &mut r).unwrap();
            assert_eq!(f.0[10], 1.0);
            xs.push(f.0[0]);
        }
        let mean = xs.iter().sum::<f64>() / trials as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
        let se_mean = (1.0 / n as f64 / trials as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se_mean, "mean {mean}");
        // variance of the sample variance for a ±-symmetric binomial is ≈ 2σ⁴/(T-1)
        let target = 1.0 / n as f64;
        let se_var = target * (2.0 / (trials as f64 - 1.0)).sqrt();
        assert!((var - target).abs() <= 3.0 * se_var, "var {var}");
    }

    #[test]
    fn shot_noise_is_unbiased() {
        let rho = product_state(1.1, 0.4, 2.0, 5.0);
        let exact = pauli_features(&rho).unwrap();
        let n = 50u64;
        let trials = 10_000;
        let mut r = rng(8);
        let mut sum = [0.0; N_FEATURES];
        for _ in 0..trials {
            let f = noisy_features(&rho, NoiseModel::Shot { n_shots: n }, &mut r).unwrap();
            for (s, x) in sum.iter_mut().zip(f.0) {
                *s += x;
            }
        }
        for k in 0..N_FEATURES {
            let mean = sum[k] / trials as f64;
            let x = exact.0[k];
            let bound = 4.0 * ((1.0 - x * x) / (n as f64 * trials as f64)).sqrt();
            assert!((mean - x).abs() <= bound.max(1e-12), "k={k}: {mean} vs {x}");
        }
    }

    #[test]
    fn gaussian_moments_converge() {
        let sigma = 0.05;
        let repeats = 10_000;
        let m = estimate_moments(
            &werner_state(0.5).unwrap(),
            NoiseModel::Gaussian { sigma },
            repeats,
            &mut rng(21),
            Label::Entangled,
            Some(BellLabel::PsiMinus),
        )
        .unwrap();
        for i in 0..N_FEATURES {
            let d = m.sigma().get(i, i);
            assert!(
                (d - sigma * sigma).abs() <= 0.1 * sigma * sigma,
                "diag {i}: {d}"
            );
            for j in (i + 1)..N_FEATURES {
                // correlation scale: entries are σ²·ρᵢⱼ with |ρᵢⱼ| ~ 1/√R
                let corr = m.sigma().get(i, j) / (sigma * sigma);
                assert!(
                    corr.abs() <= 3.0 / (repeats as f64).sqrt(),
                    "({i},{j}): {corr}"
                );
            }
        }
    }

    #[test]
    fn estimate_moments_validates_repeats() {
        let r = estimate_moments(
            &DensityMatrix::maximally_mixed(),
            NoiseModel::default(),
            1,
            &mut rng(0),
            Label::Separable,
            None,
        );
        assert!(matches!(r, Err(Error::OutOfRange(_))));
        assert!(NoiseModel::Gaussian { sigma: -1.0 }.validate().is_err());
        assert!(NoiseModel::Shot { n_shots: 0 }.validate().is_err());
    }

    #[test]
    fn pooling_averages_per_class() {
        let a = MomentSample::new(
            vec![0.0; 2],
            RealSymMatrix::diag(&[1.0, 1.0]),
            Label::Separable,
            None,
        )
        .unwrap();
        let b = MomentSample::new(
            vec![0.0; 2],
            RealSymMatrix::diag(&[3.0, 1.0]),
            Label::Separable,
            None,
        )
        .unwrap();
        let c = MomentSample::new(
            vec![0.0; 2],
            RealSymMatrix::diag(&[5.0, 5.0]),
            Label::Entangled,
            Some(BellLabel::PhiPlus),
        )
        .unwrap();
        let pooled = pool_by_class(&[a, b, c]).unwrap();
        assert_eq!(pooled[0].sigma().get(0, 0), 2.0);
        assert_eq!(pooled[1].sigma().get(0, 0), 2.0);
        assert_eq!(pooled[2].sigma().get(0, 0), 5.0);
    }

    #[test]
    fn moment_record_round_trip() {
        let m = estimate_moments(
            &werner_state(0.9).unwrap(),
            NoiseModel::default(),
            5,
            &mut rng(2),
            Label::Entangled,
            Some(BellLabel::PsiMinus),
        )
        .unwrap();
        let rec = MomentRecord::new(&m, 77);
        let line = serde_json::to_string(&rec).unwrap();
        let back: MomentRecord = serde_json::from_str(&line).unwrap();
        let m2 = back.to_sample().unwrap();
        assert_eq!(m.mu, m2.mu);
        assert!(m
            .sigma()
            .as_slice()
            .iter()
            .zip(m2.sigma().as_slice())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn features_are_linear(p in 0.0f64..1.0, g in -0.33f64..1.0, t in 0.0f64..3.14, ph in 0.0f64..6.28) {
            let r1 = werner_state(g).unwrap();
            let r2 = product_state(t, ph, 3.14 - t, ph / 2.0);
            let mixed = r1.mix(&r2, p).unwrap();
            let f = pauli_features(&mixed).unwrap();
            let f1 = pauli_features(&r1).unwrap();
            let f2 = pauli_features(&r2).unwrap();
            for k in 0..N_FEATURES {
                prop_assert!((f.0[k] - (p * f1.0[k] + (1.0 - p) * f2.0[k])).abs() < 1e-12);
            }
        }
    }
}
