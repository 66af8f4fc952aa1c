//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains non-finite entries ({0})")]
    NonFinite(String),

    #[error("matrix is not Hermitian: deviation {deviation:.3e} exceeds {tol:.3e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },

    #[error(
        "GSVD reconstruction residual {residual:.3e} exceeds {tol:.3e}; \
         rank decisions are unstable near the threshold — adjust tol"
    )]
    GsvdReconstruction { residual: f64, tol: f64 },

    #[error(
        "subspace dimensions inconsistent: set-theoretic {set_theoretic} vs \
         rank-identity {rank_identity} for {quantity}; tol is too loose or too tight"
    )]
    SubspaceDims {
        quantity: &'static str,
        set_theoretic: usize,
        rank_identity: usize,
    },

    #[error("constellation kind {kind} requires M = {expected}, got {got}")]
    ConstellationMismatch {
        kind: &'static str,
        expected: String,
        got: usize,
    },

    #[error(
        "joint dimension {n} exceeds the cap {cap}: evaluation cost scales as M^(2N) \
         = {m}^(2*{n}) additions"
    )]
    MiCapExceeded { n: usize, cap: usize, m: usize },

    #[error(
        "high-SNR pairing infeasible: (k - N_2)*N_s = ({k} - {n2})*{n_s} = {product} < N_t = {n_t}"
    )]
    PairingInfeasible {
        k: usize,
        n2: usize,
        n_s: usize,
        product: usize,
        n_t: usize,
    },

    #[error(
        "group decoupling residual {residual:.3e} exceeds {tol:.3e}: \
         permutation or block-unitary assembly is malformed"
    )]
    DecouplingResidual { residual: f64, tol: f64 },

    #[error("whitening matrix W is singular (min eigenvalue {min_eig:.3e})")]
    SingularWhitening { min_eig: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
