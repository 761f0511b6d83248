use proptest::prelude::*;

use verichain::backend::{cache_key, ChatMessage, FinishReason, Generation, SamplingParams};
use verichain::entailment::{
    EntailmentConfig, EntailmentLabel, Entailer, MockJudge, MockNliTable, MockPair, SemanticPartition,
};
use verichain::entropy::{
    length_normalized_entropy, predictive_entropy, rouge_l_f1, semantic_entropy, SampleSet,
};
use verichain::evaluation::{auroc, ScoredItem};

/// Score sets holding both classes.
fn scored() -> impl Strategy<Value = Vec<ScoredItem>> {
    prop::collection::vec((0u8..20, any::<bool>()), 2..60).prop_map(|raw| {
        let mut items: Vec<ScoredItem> = raw.into_iter().map(|(u, c)| ScoredItem::new(u as f64 / 4.0, c)).collect();
        items[0].correct = true;
        items[1].correct = false;
        items
    })
}

fn sample_set(logprobs: &[Vec<f64>]) -> SampleSet {
    SampleSet {
        question_id: "q".into(),
        question_text: "Q?".into(),
        generations: logprobs
            .iter()
            .map(|l| Generation {
                text: "x".into(),
                tokens: l.iter().map(|_| "t".to_string()).collect(),
                token_logprobs: Some(l.clone()),
                finish_reason: FinishReason::Stop,
            })
            .collect(),
    }
}

fn logprob_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-20.0f64..=0.0, 1..12), 2..8)
}

fn label() -> impl Strategy<Value = EntailmentLabel> {
    prop_oneof![
        Just(EntailmentLabel::Entailment),
        Just(EntailmentLabel::Neutral),
        Just(EntailmentLabel::Contradiction),
    ]
}

proptest! {
    #[test]
    fn auroc_is_bounded_and_invariant_to_monotone_maps(items in scored()) {
        let a = auroc(&items).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let stretched: Vec<ScoredItem> =
            items.iter().map(|i| ScoredItem::new((i.uncertainty * 3.0).exp() - 7.0, i.correct)).collect();
        prop_assert!((auroc(&stretched).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn auroc_label_flip_complements(items in scored()) {
        let a = auroc(&items).unwrap();
        let flipped: Vec<ScoredItem> = items.iter().map(|i| ScoredItem::new(i.uncertainty, !i.correct)).collect();
        prop_assert!((auroc(&flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
        let negated: Vec<ScoredItem> = items.iter().map(|i| ScoredItem::new(-i.uncertainty, i.correct)).collect();
        prop_assert!((auroc(&negated).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn auroc_ignores_order(items in scored(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((auroc(&shuffled).unwrap() - auroc(&items).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cache_key_tracks_every_input(
        content in "[a-zA-Z ?]{1,40}",
        extra in "[a-z]{1,3}",
        max_tokens in 1u32..2048,
        temperature in 0.0f64..2.0,
    ) {
        let msgs = vec![ChatMessage::system("sys"), ChatMessage::user(content.clone())];
        let mut params = SamplingParams::greedy(max_tokens);
        params.temperature = temperature;
        let key = cache_key(&msgs, &params, "mock:1");
        prop_assert_eq!(&key, &cache_key(&msgs.clone(), &params.clone(), "mock:1"));
        prop_assert_eq!(key.len(), 64);

        let edited = vec![ChatMessage::system("sys"), ChatMessage::user(format!("{content}{extra}"))];
        prop_assert_ne!(&key, &cache_key(&edited, &params, "mock:1"));
        prop_assert_ne!(&key, &cache_key(&msgs, &params, "mock:2"));
        let mut more = params.clone();
        more.max_tokens += 1;
        prop_assert_ne!(&key, &cache_key(&msgs, &more, "mock:1"));
        let mut seeded = params.clone();
        seeded.seed = Some(1);
        prop_assert_ne!(&key, &cache_key(&msgs, &seeded, "mock:1"));
        let as_assistant = vec![ChatMessage::system("sys"), ChatMessage::assistant(content.clone())];
        prop_assert_ne!(&key, &cache_key(&as_assistant, &params, "mock:1"));
    }

    #[test]
    fn rouge_is_bounded_and_symmetric(a in prop::collection::vec(0u8..5, 0..15), b in prop::collection::vec(0u8..5, 0..15)) {
        let f = rouge_l_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, rouge_l_f1(&b, &a));
        if !a.is_empty() {
            prop_assert_eq!(rouge_l_f1(&a, &a), 1.0);
        }
    }

    #[test]
    fn entropies_are_non_negative(lps in logprob_sets(), labels in prop::collection::vec(0usize..4, 8)) {
        let set = sample_set(&lps);
        prop_assert!(predictive_entropy(&set).unwrap() >= 0.0);
        prop_assert!(length_normalized_entropy(&set).unwrap() >= 0.0);

        let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); 4];
        for i in 0..lps.len() {
            clusters[labels[i]].push(i);
        }
        clusters.retain(|c| !c.is_empty());
        let k = clusters.len();
        let partition = SemanticPartition { clusters, context: "Q?".into() };
        let se = semantic_entropy(&set, &partition).unwrap();
        prop_assert!(se >= 0.0 && se <= (k as f64).ln(), "SE {} with {} clusters", se, k);
    }

    #[test]
    fn clustering_always_partitions(n in 1usize..7, table in prop::collection::vec(label(), 36)) {
        let texts: Vec<String> = (0..n).map(|i| format!("answer {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let pairs = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| MockPair { premise: texts[i].clone(), hypothesis: texts[j].clone(), label: table[i * 6 + j] })
            .collect();
        let judge = MockJudge::new(MockNliTable { pairs, ..Default::default() });
        let p = Entailer::new(&judge, EntailmentConfig::default()).cluster_semantically(&refs, "Q?").unwrap();
        prop_assert!(p.validate(n).is_ok());
        let mut seen: Vec<usize> = p.clusters.concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        prop_assert!(p.clusters.iter().all(|c| !c.is_empty()));
    }
}
