//! Downlink massive MIMO with low-resolution DACs and ADCs under RZF
//! precoding: converter models, correlated channels, precoders, large-system
//! analysis and Monte-Carlo simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod channel;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod optimize;
pub mod precoding;
pub mod quant;
pub mod rng;
pub mod units;

pub use asymptotics::{asymptotic_siqnr, AsymptoticPoint, AsymptoticSolution, Moments, Scenario};
pub use channel::{exp_toeplitz, sample_channel, ChannelRealization, CorrelationModel};
pub use error::{Error, Result};
pub use montecarlo::{simulate_ber, simulate_siqnr, Backend, MonteCarloReport, RhoPolicy, SystemConfig};
pub use precoding::{build_precoder, optimal_rho, PrecodedSystem, PrecoderKind, PrecoderSpec};
pub use quant::{QuantizerModel, Resolution};
