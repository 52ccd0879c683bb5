#![no_main]

use lexsyl_core::corpus::embed::parse_embed_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let expected = data.first().map_or(0, |b| usize::from(b % 4));
    if let Ok(vectors) = parse_embed_response(data, expected) {
        assert_eq!(vectors.len(), expected);
        for v in &vectors {
            let norm: f64 = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-3, "norm {norm}");
        }
    }
});
