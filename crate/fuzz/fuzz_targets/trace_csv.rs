#![no_main]

use libfuzzer_sys::fuzz_target;
use mls2mc::scheduler::{read_trace_csv, write_trace_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_trace_csv(data) {
        let n_levels = rows.first().map_or(1, |r| r.solves.len());
        let mut out = Vec::new();
        write_trace_csv(&rows, n_levels, &mut out).unwrap();
        assert_eq!(read_trace_csv(&out[..]).unwrap(), rows);
    }
});
