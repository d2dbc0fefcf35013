//! Scenario files, CSV traces and the command-line entry point.

mod cli;
mod file;
mod traces;

pub use cli::{cli_main, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME};
pub use file::{
    load_scenario, load_scenario_str, save_scenario, AreaSection, BatterySection, ChannelSection, EnergySection,
    RateSection, ScenarioFile, SearchSection, SolverSection, TimeSection,
};
pub use traces::{emit_traces, render_traces, TRACE_FILES};
