//! Layer specifications, architecture presets and model construction.

mod config;
mod model;

pub use config::{
    ArchConfig, BlockSpec, BnHyper, LayerSpec, ResidualBlockSpec, DEFAULT_BN_EPS,
    DEFAULT_BN_MOMENTUM, PRESETS,
};
pub use model::{build_model, LayerInfo, LayerRole, Model};
