//! Fixtures shared by the criterion benches.

use std::path::PathBuf;

use infeasloc::netmodel::{parse_matpower, scale_loading, Network};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Parses `data/<name>.m` and applies the loading factor.
pub fn load_case(name: &str, alpha: f64) -> Network {
    let text =
        std::fs::read_to_string(data_dir().join(format!("{name}.m"))).expect("case file present");
    let net = parse_matpower(&text).expect("case parses");
    scale_loading(&net, alpha).expect("valid alpha")
}
