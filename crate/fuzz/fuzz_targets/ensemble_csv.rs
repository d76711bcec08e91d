#![no_main]

use libfuzzer_sys::fuzz_target;
use mls2mc::smc::read_ensemble_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_ensemble_csv(data) {
        let total: f64 = t.weights.iter().sum();
        assert!((total - 1.0).abs() <= 1e-9);
        assert!(t.thetas.iter().all(|th| th.len() == t.dim()));
    }
});
