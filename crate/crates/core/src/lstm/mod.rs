//! Deep LSTM estimator of VEOG/HEOG from normalized EEG.

mod adam;
mod model;
pub mod serialize;
mod train;

pub use adam::{adam_step, AdamState};
pub use model::{
    cell_step, mse_loss, predict_eog, DeepLstmModel, ForwardCache, Gate, LstmLayerParams,
    LstmState, Mode, SequenceBatch, N_OUTPUTS, DEFAULT_DROPOUT, DEFAULT_HIDDEN,
};
pub use train::{
    evaluate_loss, split_subjects, train, train_with_observer, EarlyStopping, EpochRecord,
    StopDecision, TrainConfig, TrainHistory, TrainingExample,
};
