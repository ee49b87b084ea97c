#![no_main]

use libfuzzer_sys::fuzz_target;
use wqed_core::io::parse_spectrum_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_spectrum_csv(data) {
        assert_eq!(table.values.len(), table.flags.len());
        for row in &table.values {
            assert_eq!(row.len(), table.columns.len());
        }
        if let Some((x, y)) = table.series("omega") {
            assert_eq!(x.len(), y.len());
        }
    }
});
