#![allow(dead_code)]

use std::path::PathBuf;

use tasim_core::scenario::load_scenario;
use tasim_core::Scenario;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn bundled_scenario_path() -> PathBuf {
    workspace_root().join("scenarios/monday_meeting/scenario.toml")
}

pub fn bundled_scenario() -> Scenario {
    load_scenario(&bundled_scenario_path()).expect("bundled scenario loads")
}

pub fn reference_dir() -> PathBuf {
    workspace_root().join("fixtures/reference_counts")
}
