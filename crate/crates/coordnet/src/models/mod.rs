//! Model definitions: the digit classifier and the convolutional VAE.

pub mod classifier;
pub mod layers;
pub mod vae;

pub use classifier::{build_classifier, predict, Network, NetworkSpec, INPUT_EXTENT};
pub use layers::{Conv2dLayer, DenseLayer};
pub use vae::{build_vae, joint_position_matrix, vae_loss, Vae, VaeLoss, VaeSpec};
