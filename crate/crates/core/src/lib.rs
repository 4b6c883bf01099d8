//! Spectral analysis of inflation tilings via Fourier cocycles.

pub mod correlations;
pub mod error;
pub mod catalogue;
pub mod fourier;
pub mod inflation;
pub mod lyapunov;
pub mod mahler;
pub mod measures;
pub mod qmc;
pub mod riesz;
pub mod roots;
pub mod rulefile;
pub mod trigpoly;

pub use error::{Error, Result};
pub use trigpoly::{ExpansionMap, ExponentVector, FrequencyBasis, GenTrigPoly, Multiplier, TorusPoly};
pub use measures::{DiracComb, LinearMap, Weight};
pub use inflation::{InflationRule, Patch, PfData, PlacedTile, Prototile, StoneReport, SubstitutionRule1D};
pub use rulefile::{load_rule, parse_rule, rule_to_json};
pub use fourier::{binary_block_decomposition, BlockDecomposition, CMatrix, FourierMatrix};
pub use mahler::{MahlerMethod, MahlerResult};
pub use qmc::{QmcEstimate, QmcOptions};
pub use catalogue::{builtin, CatalogueEntry, Shift};
pub use lyapunov::{
    assess, birkhoff_exponent, hermitian_rank_one_split, singularity_verdict, upper_bound_ladder,
    BirkhoffOptions, BoundLadder, ChiBound, Conclusion, LadderOptions, LyapunovEstimate, Verdict,
};
pub use correlations::{empirical_pair_correlation, renormalisation_residual, PairCorrelation, ResidualReport};
pub use riesz::{distribution_function, riesz_product_comb, CocycleDensity, Distribution, FactorFamily, Quadrature};
