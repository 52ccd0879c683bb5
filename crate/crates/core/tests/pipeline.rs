//! Library-level pipeline: corpus → tree → warm-up → PPO, with persistence.

use lexsyl_core::corpus::gen_synthetic;
use lexsyl_core::policy::{
    build_warmup_dataset, greedy_decode, sft_train, Hyper, Mlp, SftConfig, TemplatePathGen, Vocab,
    MAX_RESPONSE_LEN, TEMPLATE_WORDS,
};
use lexsyl_core::ppo::{self, EnvItem, Environment, PpoConfig};
use lexsyl_core::reward::RewardConfig;
use lexsyl_core::syllogism::parse_response;
use lexsyl_core::{HashEmbedder, KnowledgeTree, MarkerSet};

#[test]
fn warm_up_then_ppo_round_trips_through_files() {
    let world = gen_synthetic(2, 4, 6, 12).unwrap();
    let emb = HashEmbedder::new(1024).unwrap();
    let tree = KnowledgeTree::build(&world.statutes, &world.cases, &emb, 5).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("tree.idx");
    tree.save(&index).unwrap();
    let tree = KnowledgeTree::load(&index).unwrap();

    let mut texts: Vec<String> = world.statutes.iter().map(|s| s.text.clone()).collect();
    texts.extend(world.cases.iter().map(|c| c.text.clone()));
    texts.extend(
        world
            .qa
            .iter()
            .flat_map(|q| [q.question.clone(), q.answer.clone()]),
    );
    texts.extend(TEMPLATE_WORDS.iter().map(|w| w.to_string()));
    let vocab = Vocab::build(&texts, &MarkerSet::default()).unwrap();
    assert_eq!(Vocab::from_text(&vocab.to_text()).unwrap(), vocab);

    let (train, test) = world.qa.split_at(6);
    let mut data = Vec::new();
    for family in [0, 1] {
        data.extend(
            build_warmup_dataset(train, &tree, &emb, &TemplatePathGen { family }, 5, &vocab)
                .unwrap(),
        );
    }
    assert_eq!(data.len(), 60);
    let init = Mlp::init(Hyper::policy(vocab.len()), 0).unwrap();
    let (warm, losses) = sft_train(init, &data, &SftConfig::default()).unwrap();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");

    let ckpt = dir.path().join("warm.ckpt");
    warm.save(&ckpt).unwrap();
    let warm = Mlp::load(&ckpt).unwrap();

    let items: Vec<EnvItem> = test
        .iter()
        .map(|q| {
            let k = tree.retrieve(&q.question, &emb, 1, 3).unwrap().remove(0);
            EnvItem::new(&q.id, &q.question, &q.answer, k, &vocab)
        })
        .collect();
    let valid = items
        .iter()
        .filter(|it| {
            let out = greedy_decode(&warm, &it.prompt, MAX_RESPONSE_LEN).unwrap();
            parse_response(&vocab.decode(&out), vocab.markers()).is_ok()
        })
        .count();
    assert!(valid >= 5, "{valid}/6 valid after warm-up");

    let env = Environment {
        items: &items,
        vocab: &vocab,
        embedder: &emb,
        reward: RewardConfig::default(),
    };
    let config = PpoConfig {
        epochs: 2,
        ..Default::default()
    };
    let (policy, value, history) = ppo::train(&warm, &env, &config).unwrap();
    assert_eq!(history.len(), 2);
    assert!(policy.is_finite() && value.is_finite());
    assert_ne!(policy, warm);
    let (again, _, history_again) = ppo::train(&warm, &env, &config).unwrap();
    assert_eq!(policy, again);
    assert_eq!(history, history_again);
}
