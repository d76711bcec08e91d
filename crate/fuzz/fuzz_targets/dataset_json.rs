#![no_main]

use libfuzzer_sys::fuzz_target;
use mls2mc::inverse_problem::SyntheticDataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(d) = SyntheticDataset::from_json(text) {
        let again = SyntheticDataset::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(d.y, again.y);
        assert_eq!(d.theta_true, again.theta_true);
    }
});
