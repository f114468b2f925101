//! Reverse-mode differentiation and the desk-scale segmentation network.

pub mod checkpoint;
mod net;
mod optim;
mod tape;
mod tensor;

pub use net::{
    field_to_tensor, logits_to_field, Architecture, GradBundle, Layer, Recording, TinyNet,
};
pub use optim::Sgd;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Real, Tensor};
