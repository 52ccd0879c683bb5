#![no_main]

use lexsyl_core::syllogism::{parse_response, render_path};
use lexsyl_core::MarkerSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for markers in [MarkerSet::default(), MarkerSet::chinese()] {
        if let Ok(path) = parse_response(text, &markers) {
            // a parsed path renders and parses back to itself
            let rendered = render_path(&path, &markers).expect("parsed bodies render");
            assert_eq!(parse_response(&rendered, &markers), Ok(path));
        }
    }
});
