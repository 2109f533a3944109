#![no_main]

use libfuzzer_sys::fuzz_target;
use stigmergy::harness::parse_bitmap;

fuzz_target!(|text: &str| {
    if let Ok(shape) = parse_bitmap(text) {
        // the display form parses back to the same shape
        let again = parse_bitmap(&shape.to_string()).expect("rendered shape parses");
        assert_eq!(again, shape);
    }
});
