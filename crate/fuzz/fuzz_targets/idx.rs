//! IDX image decoding with an index and threshold taken from the input.

#![no_main]

use libfuzzer_sys::fuzz_target;
use stigmergy::harness::parse_idx;

fuzz_target!(|data: &[u8]| {
    let Some((&[index, threshold], bytes)) = data.split_first_chunk::<2>() else {
        return;
    };
    if let Ok(shape) = parse_idx(bytes, usize::from(index), threshold) {
        assert!(shape.agent_count() > 0);
        assert!(shape.labeled_cells().all(|c| shape.contains(c)));
    }
});
