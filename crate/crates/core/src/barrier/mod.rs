//! Neural barrier function, its loss, and training.

pub mod loss;
pub mod net;
pub mod train;

pub use loss::{barrier_loss, barrier_loss_with_margin, loss_and_grad, BarrierData, BarrierLossConfig, Margins};
pub use net::{lie_fd, tanh, BarrierFile, BarrierNet};
pub use train::{train_barrier, TrainOutcome};
