//! Shipped experiment presets, embedded at compile time. Each preset is a
//! complete config document; `--preset NAME` is equivalent to `--config` with
//! the corresponding JSON file.

use crate::config::{CliError, CliResult, Config};

pub const PRESETS: &[(&str, &str)] = &[
    ("pulse-ellipses", include_str!("../presets/pulse-ellipses.json")),
    ("space-ladder", include_str!("../presets/space-ladder.json")),
    ("time-ladder", include_str!("../presets/time-ladder.json")),
    ("joint-ladder", include_str!("../presets/joint-ladder.json")),
    ("inflow-ellipses", include_str!("../presets/inflow-ellipses.json")),
    ("inflow-slabs", include_str!("../presets/inflow-slabs.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(name, _)| *name).collect()
}

pub fn load_preset(name: &str) -> CliResult<Config> {
    match PRESETS.iter().find(|(n, _)| *n == name) {
        Some((_, text)) => Config::from_json(text),
        None => Err(CliError::Usage(format!(
            "unknown preset {name:?}; available: {}",
            preset_names().join(", ")
        ))),
    }
}
