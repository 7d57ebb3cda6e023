//! Encoder-decoder transformer over the flowsheet token vocabulary, written
//! against flat parameter buffers so it trains on a plain CPU.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod grid;
pub mod linalg;
pub mod params;
pub mod train;
pub mod transformer;

pub use config::{ConfigError, ModelConfig, TrainConfig};
pub use params::{count_params, Params};
pub use transformer::{cross_entropy, forward_backward, forward_logits, Batch, LossStats, ModelError};
pub use decode::{beam_decode, greedy_decode, max_decode_len, Decoder, Hypothesis};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointError, TrainingState};
pub use train::{clip_grad_norm, evaluate_loss, ids_to_string, tokenize_pairs, train, CurvePoint, Example, StopReason, TrainError, TrainOutcome};
pub use grid::{grid_search, report_table, Cell, CellResult, GridSpace};
