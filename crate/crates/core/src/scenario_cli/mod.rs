//! Scenario files, market presets, table output and the `rentbuy` command
//! line.

mod commands;
mod config;
mod presets;
mod table;

pub use commands::{run, run_with_io, EXIT_DEGENERATE, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
pub use config::{
    load_scenario, load_scenario_str, parse_scenario_file, HouseholdSection, Market,
    MarketSection, OutputSection, RatioSection, Scenario, ScenarioFile, SimSection, Syntax,
};
pub use presets::{all_presets, builtin_preset, MarketPreset, Provenance, PRESET_NAMES};
pub use table::{fmt_g9, write_table, Format, Table, Value};
