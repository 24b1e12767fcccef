// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use oqs_chain::generators::GeneratorCoefficients;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = GeneratorCoefficients::from_json_str(s) {
            let text = c.to_json_string();
            let back = GeneratorCoefficients::from_json_str(&text).expect("serialized coefficients reparse");
            assert_eq!(back, c);
        }
    }
});
