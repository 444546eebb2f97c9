//! Numerical tolerances shared by the kernels, solvers and tests.
//!
//! Every threshold that decides a pass/fail outcome lives here so the
//! library, its tests and the CLI report the same numbers.

/// Elementwise asymmetry allowed before a matrix is rejected as non-Hermitian.
pub const HERMITIAN: f64 = 1e-10;

/// Eigenvalues in `[-PSD_CLAMP, 0)` are treated as zero.
pub const PSD_CLAMP: f64 = 1e-10;

/// Eigenvalues below `-PSD_REJECT` make a matrix fail the PSD check.
pub const PSD_REJECT: f64 = 1e-6;

/// Trace / Hermiticity / positivity tolerance for density matrices.
pub const DENSITY: f64 = 1e-10;

/// Minimum partial-transpose eigenvalue still counted as PPT.
pub const PPT: f64 = 1e-10;

/// Imaginary residual above which a Pauli expectation is rejected.
pub const NON_REAL: f64 = 1e-8;

/// `|margin|` at or below which a constraint is reported as active.
pub const ACTIVE_MARGIN: f64 = 1e-5;

/// Product-state expectation floor for the valid-witness flag.
pub const WITNESS: f64 = 1e-9;

/// Traces smaller than this cannot be normalized.
pub const TRACE_ZERO: f64 = 1e-12;

/// Default primal feasibility tolerance for the robust trainers.
pub const FEAS: f64 = 1e-6;

/// Default relative objective tolerance for the robust trainers.
pub const OBJ: f64 = 1e-6;
