//! Recurrent networks: the two-block eigenvalue-normalized cell and an LSTM baseline.

mod activation;
mod batch;
mod enrnn;
mod loss;
mod lstm;
pub(crate) mod ops;

pub use activation::{modrelu, Activation};
pub use batch::SequenceBatch;
pub use enrnn::{
    cell_forward, sequence_backward, sequence_forward, CellStep, EnrnnConfig, EnrnnParams, EnrnnTensors,
    ForwardTape, GradientSet, OutputMode,
};
pub use loss::{loss_mse_terminal, loss_xent_sequence};
pub use lstm::{lstm_backward, lstm_cell_forward, lstm_forward, LstmParams, LstmStep, LstmTape};
pub use ops::{clip_global_norm, global_norm};
