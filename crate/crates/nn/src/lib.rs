//! Small dense neural-network toolkit for windowed CNN-LSTM sequence
//! classification: layers with explicit forward/backward passes, Adam,
//! cross-entropy and a checkpoint format. Everything is `f64` and
//! deterministic given a seed.

pub mod activation;
pub mod checkpoint;
pub mod error;
pub mod gemm;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use activation::Activation;
pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use init::glorot_uniform_init;
pub use layers::batchnorm::batchnorm;
pub use layers::conv::conv2d;
pub use layers::dense::dense;
pub use layers::dropout::dropout;
pub use layers::lstm::lstm_layer;
pub use layers::masking::window_mask;
pub use layers::pool::maxpool2d;
pub use loss::softmax_crossentropy;
pub use network::{LayerSpec, BranchSpec, Mode, Network, NetworkSpec, SequenceBatch, StepOutput};
pub use optim::{adam_step, AdamConfig, OptimizerState};
pub use tensor::Tensor;
