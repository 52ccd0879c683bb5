#![no_main]

use lexsyl_core::policy::Mlp;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = Mlp::from_bytes(data) {
        let again = Mlp::from_bytes(&params.to_bytes()).expect("saved checkpoint loads");
        assert_eq!(again, params);
    }
});
