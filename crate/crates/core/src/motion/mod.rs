//! Motion estimation and compensation for the foreground priors.

mod compensate;
mod flow;
mod frame;
mod render;

pub use compensate::{compensate, generate_priors};
pub use flow::{estimate_flow, FlowConfig, FlowField};
pub use frame::Frame2D;
pub use render::{flow_to_color, read_flow, write_flow, RgbImage};
