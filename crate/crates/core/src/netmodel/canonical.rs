//! Canonical JSON dump of a [`Network`].
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "network": {
//!     "name": "case14", "base_mva": 100.0, "alpha": 1.0,
//!     "buses":      [{"id", "kind": "slack"|"pv"|"pq", "v_set", "theta_set",
//!                     "shunt_g", "shunt_b", "base_kv", "vm", "va"}],
//!     "branches":   [{"from_bus", "to_bus", "r", "x", "b_charging", "tap",
//!                     "shift", "in_service"}],
//!     "generators": [{"bus", "p_set", "q_init", "v_set", "q_min", "q_max",
//!                     "in_service"}],
//!     "loads":      [{"bus", "p", "q"}]
//!   }
//! }
//! ```
//!
//! All electrical quantities are per unit on `base_mva`; angles are radians.

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

pub const CANONICAL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    schema_version: u32,
    network: Network,
}

pub fn to_canonical_json(net: &Network) -> String {
    #[derive(Serialize)]
    struct EnvelopeRef<'a> {
        schema_version: u32,
        network: &'a Network,
    }
    serde_json::to_string_pretty(&EnvelopeRef {
        schema_version: CANONICAL_SCHEMA_VERSION,
        network: net,
    })
    .expect("network serialization is infallible")
}

pub fn from_canonical_json(text: &str) -> Result<Network> {
    let env: Envelope = serde_json::from_str(text)?;
    if env.schema_version != CANONICAL_SCHEMA_VERSION {
        return Err(Error::MalformedCase(format!(
            "unsupported canonical schema version {}",
            env.schema_version
        )));
    }
    Ok(env.network)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::two_bus;

    #[test]
    fn round_trip() {
        let net = two_bus(0.5, 0.1);
        let text = to_canonical_json(&net);
        assert_eq!(from_canonical_json(&text).unwrap(), net);
    }

    #[test]
    fn wrong_version_rejected() {
        let text = to_canonical_json(&two_bus(0.5, 0.1))
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(from_canonical_json(&text).is_err());
    }
}
