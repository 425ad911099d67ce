//! Dense numeric engine: layer kernels with exact gradients, a layer
//! graph, losses, Adam and the learning-rate schedule.

pub mod gradcheck;
pub mod graph;
pub mod layer;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod schedule;

pub use graph::{Grads, Graph, Node, Trace};
pub use layer::{conv21d_mid_channels, Cache, Layer, LayerSpec, Mode, BN_EPS, BN_MOMENTUM};
pub use loss::{cross_entropy, mse_loss};
pub use optim::{adam_step, OptimState};
pub use schedule::LrSchedule;
