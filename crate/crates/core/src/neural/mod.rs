//! Recurrent encoders, tensor fusion models, gradients and training.
//!
//! Four variants share the same LSTM encoders and a single-logit linear
//! head; they differ only in how the encodings are fused (see [`Variant`]).
//! Gradients are computed by hand-written backpropagation through time.

mod grad;
mod lstm;
mod model;
mod optim;
mod train;

pub use grad::{
    accumulate_example, batch_loss, bce_with_logits, gradients, loss, regularizer_value, LossParts,
};
pub use lstm::{lstm_forward, LstmParams, LstmTrace};
pub use model::{
    baseline_forward, classifier_input_dim, concat_features, predict_logit, t2fn_forward,
    tfn_fused, Classifier, FusedTensor, ModelDims, ModelParams, Variant,
};
pub use optim::{clip_grad_norm, Optimizer, OptimizerState};
pub use train::{
    accuracy_from_logits, evaluate, evaluate_detailed, evaluate_noisy, predicts_positive, train, EpochMetrics,
    TrainConfig, TrainOutcome,
};
