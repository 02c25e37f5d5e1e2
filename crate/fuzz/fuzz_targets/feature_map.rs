#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| lite_mot_fuzz::check_feature_map(data));
