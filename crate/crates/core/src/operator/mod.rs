//! IB-DeepONet: a gated stochastic encoder on the sensor values feeds the
//! branch of a two-channel DeepONet that outputs `(μ, log σ)` at any query
//! location `(x, t)`.

mod eval;
mod head;
mod model;

pub use eval::{
    rmse_by_length, write_cuts_csv, write_field_csv, write_length_csv, LengthRow,
    LengthStudyConfig, CUT_TIMES,
};
pub use head::{onet_eval, DeepONetHead};
pub use model::{
    predict_field, predict_fields, train_operator, train_operator_with, FieldPrediction,
    IbOnetConfig, IbOnetModel, OperatorModel, OperatorSample, OperatorTrainConfig, TrainedOperator,
};

#[cfg(test)]
mod tests;
