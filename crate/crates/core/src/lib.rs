//! Sparse factor chains for powers of SDDM matrices, and Gaussian random
//! field sampling built on the inverse square-root factor.

pub mod chain;
pub mod container;
pub mod error;
pub mod factor;
pub mod gen;
pub mod gremban;
pub mod maclaurin;
pub mod mtx;
pub mod operator;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod sddm;
pub mod sparsify;
pub mod sparse;

pub use chain::{build_chain, FactorChain};
pub use container::{read_factor_file, write_factor_file, FactorArtifact};
pub use error::{Error, Result};
pub use factor::{
    build_factor, edge_factor, refine_inverse_factor, solve, EdgeFactor, Factor, FactorConfig, FactorKind,
    FactorOperator,
};
pub use gremban::{gremban_lift, gremban_project, lift_vector, unlift, GrembanLift};
pub use maclaurin::{coeffs, degree_for, MaclaurinPoly};
pub use operator::LinearOperator;
pub use oracle::{dense_power, loewner_check, spectral_radius, DenseSym, LoewnerReport};
pub use sampler::{covariance_check, prepare, GaussianField, PreparedSampler, SampleBatch};
pub use sddm::{kappa_estimate, normalize, validate_sddm, SddmCertificate, Splitting};
pub use sparse::SparseSymMatrix;
