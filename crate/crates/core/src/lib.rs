pub mod boc;
pub mod covmodel;
pub mod error;
pub mod fliplab;
pub mod gchi2;
pub mod linalg;
pub mod matio;
pub mod quadnet;
pub mod sampler;
pub mod scalar;
pub mod seed;

pub use error::{Error, ErrorClass, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use scalar::Real;

pub use boc::QuadraticRule;
pub use covmodel::{Basis, CovarianceModel, Spectrum};
pub use fliplab::{FlipAxis, FlipSweepResult};
pub use gchi2::GChi2Params;
pub use quadnet::QuadNetParams;
pub use sampler::GmmDataset;

pub type CovarianceModelF64 = CovarianceModel<f64>;
pub type CovarianceModelF32 = CovarianceModel<f32>;
pub type QuadraticRuleF64 = QuadraticRule<f64>;
pub type QuadraticRuleF32 = QuadraticRule<f32>;
pub type QuadNetParamsF64 = QuadNetParams<f64>;
pub type QuadNetParamsF32 = QuadNetParams<f32>;
pub type GmmDatasetF64 = GmmDataset<f64>;
pub type GmmDatasetF32 = GmmDataset<f32>;
