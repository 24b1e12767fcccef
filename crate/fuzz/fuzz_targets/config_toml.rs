// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use oqs_chain::cli::config::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = ScenarioConfig::from_toml_str(s) {
            // Accepted scenarios serialize and reparse to the same value.
            let text = cfg.to_toml_string();
            let back = ScenarioConfig::from_toml_str(&text).expect("serialized scenarios reparse");
            assert_eq!(back, cfg);
        }
    }
});
