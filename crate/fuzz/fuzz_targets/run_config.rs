#![no_main]

use lexsyl::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse_str(text) {
        // accepted configs always yield valid stage configurations
        assert!(cfg.ppo_config().validate().is_ok());
        assert!(cfg.embedding_provider().is_ok());
        let _ = (
            cfg.sft_config(),
            cfg.reward_config(),
            cfg.hyper(16),
            cfg.vocab_path(),
        );
    }
});
