//! Pretraining: MSE regression of the normalized climatology with Adam.

mod adam;
mod loss;
mod pretrain;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use loss::mse_loss;
pub use pretrain::{
    evaluate_loss, pretrain, train_step, write_history_csv, EarlyStopping, EpochRecord, PretrainOutcome, TrainConfig,
};
