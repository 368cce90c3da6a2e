#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use infeasloc::netmodel::{parse_matpower, scale_loading_with, Network, ScalingMode};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(format!("{name}.m"))
}

pub fn has_case(name: &str) -> bool {
    data_path(name).exists()
}

pub fn load_case(name: &str, alpha: f64, mode: ScalingMode) -> Network {
    let text = std::fs::read_to_string(data_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let net = parse_matpower(&text).expect("case parses");
    scale_loading_with(&net, alpha, mode).expect("valid alpha")
}

/// case14 with the loading convention that matches the reference
/// least-squares magnitudes.
pub fn case14(alpha: f64) -> Network {
    load_case("case14", alpha, ScalingMode::LoadsAndGeneration)
}
