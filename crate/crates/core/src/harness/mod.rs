//! Train, evaluate, predict and report workflows behind the command line.

mod config;
mod eval;
mod filters;
mod history;
mod train;

pub use config::{SplitMode, TrainingConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS};
pub use eval::{
    argmax, evaluate, evaluate_samples, format_misclassified, predict, predict_image, probabilities, report_file_name,
    report_misclassified, write_report, EvalSplit, EvaluationReport, Misclassified, Prediction,
};
pub use filters::{export_filter_grid, filter_tiles, render_grid, TILE_SCALE};
pub use history::{EpochRecord, TrainingHistory, HISTORY_HEADER};
pub use train::{
    derive_seed, epoch_checkpoint_name, l2_loss, measure, train, train_on, train_step, TrainOutcome, BEST_CHECKPOINT,
    CONFIG_FILE, HISTORY_FILE, LAST_CHECKPOINT, MANIFEST_FILE, SPLIT_FILE,
};
