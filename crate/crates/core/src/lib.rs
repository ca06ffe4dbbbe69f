pub mod analytics;
pub mod commands;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod spatial;
pub mod survey;
pub mod thinning;
pub mod validation;

pub use data::{DesignMatrix, DirectEstimateSet};
pub use error::{Error, Result};
pub use gibbs::{gibbs_fit, GibbsConfig, PosteriorDraws};
pub use model::{blup, shrinkage_factor, wls_beta, BlupFitter, FayHerriotFit, FitKind, Fitter, GibbsFitter};
pub use rng::Seed;
