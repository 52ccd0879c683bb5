#![no_main]

use lexsyl_core::KnowledgeTree;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tree) = KnowledgeTree::from_bytes(data) {
        assert!(tree.validate().is_ok());
        let again = KnowledgeTree::from_bytes(&tree.to_bytes()).expect("saved index loads");
        assert_eq!(again, tree);
    }
});
