//! Noise-robust entanglement witnesses for two-qubit states.
//!
//! The pipeline generates labeled two-qubit states, measures their Pauli
//! expectations under noise, summarizes each training point by its first
//! two moments, and trains a distributionally robust chance-constrained
//! SVM per Bell group. Each learned hyperplane is read back as a Hermitian
//! witness operator `W = Σ χᵢⱼ σᵢ ⊗ σⱼ`.
//!
//! Modules, bottom-up:
//!
//! - [`qlin`]: complex/real-symmetric matrix kernel
//! - [`states`]: Bell, Werner, product and random states; PPT labeling
//! - [`measure`]: Pauli features, noise models, moment estimation
//! - [`drsvm`]: soft-margin, hinge/L1 and robust cone SVM trainers
//! - [`witness`]: witness construction, expectation, verification
//! - [`evalx`]: splits, metrics, ROC, per-group training and sweeps

pub mod drsvm;
pub mod error;
pub mod evalx;
pub mod measure;
pub mod qlin;
pub mod states;
pub mod tolerances;
pub mod witness;

pub use error::{Error, Result};
