// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use oqs_chain::dynamics::CovarianceState;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(state) = CovarianceState::from_json_str(s) {
            let back = CovarianceState::from_json_str(&state.to_json_string()).expect("serialized states reparse");
            assert_eq!(back, state);
        }
    }
});
