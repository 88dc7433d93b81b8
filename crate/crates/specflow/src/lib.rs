//! Spectral classification of special flows built over circle rotations.
//!
//! The pipeline: describe a rotation number through its continued-fraction
//! expansion (`diophantine`), describe the roof function through its Fourier
//! coefficients (`roof`), check the standing decay/comparability hypotheses,
//! reduce the roof cocycle by explicit coboundaries (`cohomology`), and then
//! either certify an eigenfunction candidate or certify weak mixing through
//! Birkhoff-sum lower bounds (`birkhoff`) and a lacunary CLT harness
//! (`lacunary`).

pub mod bigfloat;
pub mod birkhoff;
pub mod cohomology;
pub mod diophantine;
pub mod exec;
pub mod primes;
pub mod roof;

pub use bigfloat::{BigFloat, FloatCtx};
pub use diophantine::{
    EngineOptions, GrowthRule, NormValue, PartialQuotients, RotationNumber,
};

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A requested quantity needs more partial quotients than the expansion
    /// provides (finite expansions) or than the bit budget allows (rules).
    #[error("continued-fraction expansion exhausted at level {level}: {reason}")]
    QuotientsExhausted { level: usize, reason: String },

    /// Two quantities that must be separated for a decision overlap within
    /// their tracked error bounds; raise the working precision to proceed.
    #[error("precision exhausted: {context} (working precision {prec} bits)")]
    PrecisionExhausted { context: String, prec: u32 },

    /// The input fails a structural requirement (bad quotient, empty roof,
    /// malformed table entry, out-of-range parameter).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A certification routine cannot produce a sound answer for this input
    /// (for example a spectral parameter too large for the truncation).
    #[error("certificate unsatisfiable: {0}")]
    CertificateUnsatisfiable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
