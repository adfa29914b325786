//! Randomized property tests over the pure building blocks.

use std::io::Write as _;

use proptest::prelude::*;

use docre::corpus::{Document, Entity, GoldLabel, Mention, PairInstance};
use docre::encoding;
use docre::metrics::{self, Averaging};
use docre::model;
use docre::tokenizer::{self, Vocab};

fn test_vocab(n_words: usize) -> Vocab {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for i in 0..n_words {
        writeln!(f, "w{i}").unwrap();
    }
    Vocab::load(f.path()).unwrap()
}

fn word_doc(doc_id: &str, words: &[String]) -> Document {
    let mention = |pos: usize| Mention {
        surface: vec![words[pos].clone()],
        sent_id: 0,
        span: (pos, pos + 1),
        ent_type: String::new(),
    };
    Document {
        doc_id: doc_id.into(),
        sentences: vec![words.to_vec()],
        entities: vec![
            Entity::from_mentions(vec![mention(0)]),
            Entity::from_mentions(vec![mention(words.len() - 1)]),
        ],
        gold_labels: vec![GoldLabel {
            head_idx: 0,
            tail_idx: 1,
            relation_id: 1,
            evidence: vec![0],
        }],
    }
}

proptest! {
    #[test]
    fn encoding_layout_holds(
        n in 1usize..400,
        m1 in 1usize..6,
        m2 in 1usize..6,
        extra in 0usize..200,
    ) {
        let vocab = test_vocab(20);
        let max_len = m1 + m2 + 5 + extra;
        let word = |k: usize| format!("w{}", k % 20);
        let instance = PairInstance {
            doc_id: "p".into(),
            doc_tokens: (0..n).map(word).collect(),
            head_tokens: (0..m1).map(word).collect(),
            tail_tokens: (0..m2).map(word).collect(),
            relation_id: 0,
        };
        let enc = encoding::assemble(&instance, &vocab, max_len).unwrap();
        let n_trunc = n.min(max_len - (m1 + m2 + 4));
        prop_assert_eq!(enc.real_len(), n_trunc + m1 + m2 + 4);
        prop_assert_eq!(enc.token_ids.len(), max_len);
        let real = &enc.token_ids[..enc.real_len()];
        prop_assert_eq!(real.iter().filter(|&&t| t == 3).count(), 3);
        prop_assert!(enc.segment_ids[..=n_trunc].iter().all(|&s| s == 0));
        prop_assert!(enc.segment_ids[n_trunc + 1..].iter().all(|&s| s == 1));
    }

    #[test]
    fn argmax_shift_invariant(
        logits in prop::collection::vec(-50.0f64..50.0, 2..10),
        shift in -100.0f64..100.0,
    ) {
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        prop_assert_eq!(
            model::predict(&logits).unwrap().0,
            model::predict(&shifted).unwrap().0
        );
    }

    #[test]
    fn metrics_invariant_under_permutation(
        pairs in prop::collection::vec((0usize..6, 0usize..6), 1..80),
        seed in 0u64..1000,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let golds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let preds2: Vec<usize> = shuffled.iter().map(|p| p.0).collect();
        let golds2: Vec<usize> = shuffled.iter().map(|p| p.1).collect();
        for avg in [Averaging::Micro, Averaging::Macro] {
            let a = metrics::score_with_na(&preds, &golds, 0, avg).unwrap();
            let b = metrics::score_with_na(&preds2, &golds2, 0, avg).unwrap();
            prop_assert_eq!((a.precision, a.recall, a.f1, a.accuracy),
                            (b.precision, b.recall, b.f1, b.accuracy));
        }
    }

    #[test]
    fn vocab_free_of_document_order(
        word_ids in prop::collection::vec(prop::collection::vec(0usize..15, 2..10), 1..6),
        seed in 0u64..1000,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let docs: Vec<Document> = word_ids
            .iter()
            .enumerate()
            .map(|(i, ids)| {
                let words: Vec<String> = ids.iter().map(|k| format!("w{k}")).collect();
                word_doc(&format!("d{i}"), &words)
            })
            .collect();
        let mut shuffled = docs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = tokenizer::build_vocab(&docs, 1).unwrap();
        let b = tokenizer::build_vocab(&shuffled, 1).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for id in 0..a.len() {
            prop_assert_eq!(a.token_of(id), b.token_of(id));
        }
    }
}
