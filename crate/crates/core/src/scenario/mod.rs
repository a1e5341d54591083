mod format;
mod generate;

pub use format::{
    load_schedule, load_scenario, save_schedule, save_scenario, scenario_to_string, FormatError,
    FORMAT_VERSION,
};
pub use generate::{generate, GeneratorConfig, MAX_SLEW_ANGLE};
