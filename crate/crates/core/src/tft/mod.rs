//! The temporal fusion forecasting model.

mod attention;
mod blocks;
mod checkpoint;
mod loss;
mod lstm;
mod model;
mod params;

pub use attention::causal_mask;
pub use checkpoint::{Checkpoint, ParamEntry};
pub use loss::quantile_loss;
pub use model::{Batch, ForwardOutput, InterpretabilityRecord, Mode, TftModel};
pub use params::{BoundParams, ParameterSet};

// the model configuration's semantics belong to this module
pub use crate::config::ModelConfig;
