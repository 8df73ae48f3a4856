//! Synaptic memory schemes, an access-energy model and a quantized spiking network trainer.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the
//! precision for callers that do not need the choice.

pub mod energy;
pub mod matrix;
pub mod quant;
pub mod rng;
pub mod snn;
mod scalar;
pub mod store;
pub mod trace;

pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type SynapseMatrixF32 = matrix::SynapseMatrix<f32>;
pub type SynapseMatrixF64 = matrix::SynapseMatrix<f64>;
pub type CrossbarStoreF64 = store::CrossbarStore<f64>;
pub type CsrStoreF64 = store::CsrStore<f64>;
pub type BitmapStoreF64 = store::BitmapStore<f64>;
pub type FunctionalStoreF64 = store::FunctionalStore<f64>;
