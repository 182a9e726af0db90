//! Synthetic claims with known strata and injected policy effects.

mod config;
mod generate;
mod truth;

pub use config::SimConfig;
pub use generate::{
    generate, simulate, GroundTruth, InjectedEffect, ProviderTruth, SimData, GROUND_TRUTH_FILE,
    SIM_CONFIG_ECHO_FILE,
};
pub use truth::{load_ground_truth, truth_check, TruthRow, TruthStatus};
