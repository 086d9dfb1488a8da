//! Minimal dense-network stack: matrices, a reverse-mode tape, tanh MLPs,
//! Adam and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod matrix;
pub mod tape;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{load_net, read_net, save_net, write_net};
pub use dense::{Activation, Dense, DenseNet, RecordedNet};
pub use matrix::Matrix;
pub use tape::{Gradients, Tape, Var};
