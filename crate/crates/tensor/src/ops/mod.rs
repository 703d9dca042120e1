mod conv;
mod elementwise;
mod linear;
mod norm;
mod pool;
mod reduce;

pub use conv::{conv2d_reference, Conv2dSpec};
pub use norm::plane_stats;
