//! Layers with explicit forward/backward passes.
//!
//! Every layer caches what its backward pass needs during a training-mode
//! forward call. Backward accumulates into parameter gradients and returns
//! the gradient with respect to the layer input.

pub mod activation;
pub mod conv;
pub mod dropout;
pub mod linear;
pub mod norm;
pub mod pool;
pub mod circular;

pub use activation::{relu_backward, relu_inplace, sigmoid, softplus, softplus_grad};
pub use circular::CircularConv1d;
pub use conv::{Conv2d, ConvGeometry};
pub use dropout::Dropout;
pub use linear::Linear;
pub use norm::{BatchNorm2d, LayerNorm};
pub use pool::{global_avg_pool, global_avg_pool_backward, MaxPool2d};
