//! From-scratch dense and convolutional layers, Adam, and finite-difference
//! gradient checking. Everything runs in `f64` on the calling thread.

mod adam;
mod gradcheck;
mod layers;
mod models;

pub use adam::Adam;
pub use gradcheck::{gradient_check, GradCheck};
pub use layers::{LayerSpec, Sequential, Trace};
pub use models::{hidden_width, QNetwork, RewardModel, RewardSample};
