//! Information-bottleneck building blocks: the gated stochastic encoder, the
//! Gaussian decoder, mixup, and Monte Carlo estimates of the relevance and
//! compression terms.

mod decoder;
mod encoder;
mod mixup;
mod model;

pub use decoder::GaussianDecoder;
pub use encoder::{EncodedVar, Encoder};
pub use mixup::{mixup_batch, mixup_with, sample_lambda, MixupConfig};
pub use model::{IbConfig, IbModel, IbTerms, PredictiveDistribution};

pub(crate) use encoder::{diag_gaussian_log_prob, diag_gaussian_log_prob_var, net_widths};
pub(crate) use model::{checked_terms, compression_var, join, split_usize, MomentAccumulator};

#[cfg(test)]
mod tests;
