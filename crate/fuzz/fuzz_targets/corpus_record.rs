#![no_main]

use lexsyl_core::corpus::{parse_records, serialize_records, Record};
use lexsyl_core::{Case, QaPair, Statute};
use libfuzzer_sys::fuzz_target;

fn round_trip<R: Record + PartialEq + std::fmt::Debug>(text: &str) {
    if let Ok(records) = parse_records::<R>(text) {
        let again =
            parse_records::<R>(&serialize_records(&records)).expect("serialized records parse");
        assert_eq!(again, records);
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    round_trip::<Statute>(text);
    round_trip::<Case>(text);
    round_trip::<QaPair>(text);
});
