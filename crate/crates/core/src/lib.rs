//! Compressive online robust PCA for video foreground/background separation,
//! with optional motion-compensated foreground priors.
//!
//! Each frame is observed through a random measurement operator,
//! `y_t = Φ(x_t + v_t)`, and split into a sparse foreground `x_t` and a
//! low-rank background `v_t` using the previously recovered foregrounds and a
//! compact background factorization as prior information.

pub mod engine;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod motion;
pub mod pipeline;
pub mod prox;
pub mod rng;

pub use engine::{
    init_from_training, separate, separate_with_flow_priors, EngineState, SeparationMode, SeparatorConfig,
};
pub use error::{Error, Result};
pub use measurement::MeasurementOperator;
