//! Distribution feeder model, load profiles and power flow.

pub mod feeder;
pub mod flow;
pub mod profiles;

pub use feeder::{build_default_feeder, FeederModel, Node, NodeKind};
pub use flow::{node_voltage_rms, solve_power_flow, solve_power_flow_with, FlowOptions, PowerFlowSolution};
pub use profiles::{default_recipe, LoadProfileSet, ProfileRecipe, Series};
