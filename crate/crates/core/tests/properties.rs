use std::collections::BTreeMap;

use dualspace::corpus::{decode, encode, SentenceStream, Vocabulary};
use dualspace::embedding::cosine;
use dualspace::eval::{
    eval_analogy, eval_association, eval_similarity, pearson, AnalogyOptions, AnalogyQuestion, CueResponseSet,
    ResultRecord, SimilarityPair, Task,
};
use dualspace::glove::{accumulate_cooc, accumulate_cooc_sharded, train_glove_params, weight_fn, GloveConfig};
use dualspace::report::{consolidate, render_csv, render_markdown, Grid};
use dualspace::sgns::{log_sigmoid, sigmoid, train_sgns, SgnsConfig, SgnsMethod};
use dualspace::{CompareMethod, DualEmbedding, Matrix};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["ant", "bee", "cat", "dog", "eel", "fox", "gnu", "hen", "ibis", "jay"])
        .prop_map(str::to_owned)
}

fn sentences(max: usize) -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec(word(), 0..12), 1..max)
}

fn embedding(n: usize, dim: usize, values: Vec<f32>) -> DualEmbedding {
    let entries = (0..n).map(|i| (format!("t{i}"), (n - i) as u64)).collect();
    let vocab = Vocabulary::from_entries(entries, (n * n) as u64).unwrap();
    let w = Matrix::from_vec(n, dim, values[..n * dim].to_vec()).unwrap();
    let c = Matrix::from_vec(n, dim, values[n * dim..].to_vec()).unwrap();
    DualEmbedding::new(vocab, w, c).unwrap()
}

/// A small dual embedding whose entries are drawn from a coarse grid, so
/// exact ties and zero rows both occur.
fn arb_embedding() -> impl Strategy<Value = DualEmbedding> {
    (3usize..14, 1usize..6).prop_flat_map(|(n, dim)| {
        let value = prop_oneof![Just(0.0f32), (-4i8..=4).prop_map(|k| k as f32 * 0.25), -1.0f32..1.0];
        prop::collection::vec(value, 2 * n * dim).prop_map(move |v| embedding(n, dim, v))
    })
}

fn token(n: usize) -> impl Strategy<Value = String> {
    // Includes ids past the vocabulary so out-of-vocabulary paths run.
    (0..n + 2).prop_map(|i| format!("t{i}"))
}

fn arb_sgns_config() -> impl Strategy<Value = SgnsConfig> {
    (any::<bool>(), 2usize..8, 1usize..4, any::<u64>()).prop_map(|(cbow, dim, window, seed)| SgnsConfig {
        method: if cbow { SgnsMethod::Cbow } else { SgnsMethod::SkipGram },
        dim,
        window,
        epochs: 2,
        seed,
        threads: 1,
        ..SgnsConfig::default()
    })
}

fn record(trainer: &str, task: Task, cm: CompareMethod, dim: usize, dataset: &str, value: f64) -> ResultRecord {
    ResultRecord {
        trainer: trainer.into(),
        window: 5,
        dim,
        compare: cm,
        task,
        dataset: dataset.into(),
        value,
        aux: BTreeMap::new(),
        embedding: format!("{trainer}-w5-d{dim}.dualemb"),
        config_hash: "h".into(),
    }
}

fn arb_records() -> impl Strategy<Value = Vec<ResultRecord>> {
    let one = (
        prop::sample::select(vec!["sgns-cbow", "sgns-sg", "glove"]),
        prop::sample::select(Task::ALL.to_vec()),
        prop::sample::select(CompareMethod::ALL.to_vec()),
        prop::sample::select(vec![50usize, 100, 200]),
        prop::sample::select(vec!["d1", "d2"]),
        -1.0f64..1.0,
    )
        .prop_map(|(t, task, cm, dim, ds, v)| record(t, task, cm, dim, ds, v));
    // Deduplicate on the cell key so each (model, task, dataset) scores once.
    prop::collection::vec(one, 1..40).prop_map(|rs| {
        let mut seen = std::collections::BTreeSet::new();
        rs.into_iter()
            .filter(|r| seen.insert((r.trainer.clone(), r.task, r.compare, r.dim, r.dataset.clone())))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decode_inverts_encode_up_to_oov(text in sentences(30), min_count in 1u64..4) {
        let Ok(vocab) = Vocabulary::build(&text, min_count) else { return Ok(()) };
        let decoded = decode(&encode(&text, &vocab), &vocab);
        let expected: Vec<Vec<String>> = text
            .iter()
            .map(|s| s.iter().filter(|t| vocab.id(t).is_some()).cloned().collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        prop_assert_eq!(decoded, expected);
    }

    #[test]
    fn vocabulary_is_deterministic_and_ordered(text in sentences(30), min_count in 1u64..4) {
        let (Ok(a), Ok(b)) = (Vocabulary::build(&text, min_count), Vocabulary::build(&text, min_count)) else {
            return Ok(());
        };
        prop_assert_eq!(&a, &b);
        for i in 1..a.len() {
            let (prev, cur) = ((a.counts()[i - 1], &a.tokens()[i - 1]), (a.counts()[i], &a.tokens()[i]));
            prop_assert!(prev.0 > cur.0 || (prev.0 == cur.0 && prev.1 < cur.1));
        }
        prop_assert!(a.counts().iter().sum::<u64>() <= a.total_tokens());
        prop_assert!(a.counts().iter().all(|&c| c >= min_count));
    }

    #[test]
    fn log_sigmoid_is_stable_and_sigmoid_symmetric(x in -200.0f64..200.0) {
        let ls = log_sigmoid(x);
        prop_assert!(ls.is_finite() && ls <= 0.0);
        if x.abs() >= 30.0 {
            // Saturated regime: log σ(x) ≈ min(x, 0) with no overflow.
            prop_assert!((ls - x.min(0.0)).abs() < 1e-12);
        }
        prop_assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-15);
        prop_assert!((log_sigmoid(x as f32) as f64 - ls).abs() <= 1e-5 * ls.abs().max(1.0));
    }

    #[test]
    fn cooc_is_symmetric_under_reversal_and_sharding(
        text in prop::collection::vec(prop::collection::vec(0u32..8, 0..15), 1..20),
        window in 1usize..6,
        dw in any::<bool>(),
        shards in 1usize..5,
    ) {
        let stream = SentenceStream { sentences: text.clone() };
        let reversed = SentenceStream { sentences: text.iter().map(|s| s.iter().rev().copied().collect()).collect() };
        let base = accumulate_cooc(&stream, 8, window, dw).unwrap();
        prop_assert_eq!(&base, &accumulate_cooc(&reversed, 8, window, dw).unwrap());
        prop_assert_eq!(&base, &accumulate_cooc_sharded(&stream, 8, window, dw, shards).unwrap());
        prop_assert!(base.is_symmetric());
    }

    #[test]
    fn weight_fn_is_bounded_and_monotone(x in 0.0f64..500.0, dx in 0.0f64..50.0, x_max in 1.0f64..200.0, alpha in 0.05f64..1.0) {
        let (a, b) = (weight_fn(x, x_max, alpha), weight_fn(x + dx, x_max, alpha));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(a <= b);
    }

    #[test]
    fn cosine_is_scale_invariant(
        v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..30),
        k in 1e-3f64..1e3,
    ) {
        let (u, w): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let Ok(base) = cosine(&u, &w) else { return Ok(()) };
        let scaled: Vec<f64> = u.iter().map(|x| x * k).collect();
        prop_assert!((cosine(&scaled, &w).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn pearson_is_affine_invariant(
        xy in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 3..50),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let Ok(r) = pearson(&x, &y) else { return Ok(()) };
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r2 = pearson(&ax, &y).unwrap();
        prop_assert!((r - r2).abs() < 1e-12, "{r} vs {r2}");
        prop_assert!((-1.0..=1.0).contains(&r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resolved_spaces_match_w_shape(emb in arb_embedding()) {
        for cm in CompareMethod::ALL {
            let (cue, cand) = emb.resolve_spaces(cm);
            for m in [cue, cand] {
                prop_assert_eq!((m.rows(), m.cols()), (emb.w().rows(), emb.w().cols()));
            }
        }
    }

    #[test]
    fn aa_and_ss_neighbors_agree(emb in arb_embedding(), cue in 0usize..14, n in 1usize..20) {
        let cue = format!("t{}", cue % emb.vocab().len());
        let aa = emb.nearest(CompareMethod::AA, &cue, n, &[]);
        let ss = emb.nearest(CompareMethod::SS, &cue, n, &[]);
        match (aa, ss) {
            (Ok(a), Ok(s)) => prop_assert_eq!(a, s),
            (Err(a), Err(s)) => prop_assert_eq!(a.to_string(), s.to_string()),
            (a, s) => prop_assert!(false, "AA {a:?} vs SS {s:?}"),
        }
    }

    #[test]
    fn aa_and_ss_similarity_scores_agree(
        emb in arb_embedding(),
        pairs in prop::collection::vec((token(14), token(14), 0.0f64..10.0), 2..20),
    ) {
        let pairs: Vec<SimilarityPair> = pairs.into_iter().map(|(w1, w2, gold)| SimilarityPair { w1, w2, gold }).collect();
        let aa = eval_similarity(&emb, CompareMethod::AA, &pairs).map_err(|e| e.to_string());
        let ss = eval_similarity(&emb, CompareMethod::SS, &pairs).map_err(|e| e.to_string());
        prop_assert_eq!(aa, ss);
    }

    #[test]
    fn association_score_grows_with_n(
        emb in arb_embedding(),
        sets in prop::collection::vec((token(14), prop::collection::vec(token(14), 1..5)), 1..8),
        cm in prop::sample::select(CompareMethod::ALL.to_vec()),
    ) {
        let sets: Vec<CueResponseSet> = sets
            .into_iter()
            .map(|(cue, rs)| CueResponseSet { cue, responses: rs.into_iter().map(|r| (r, 0.5)).collect() })
            .collect();
        if let (Ok(a), Ok(b)) = (eval_association(&emb, cm, &sets, 10), eval_association(&emb, cm, &sets, 20)) {
            prop_assert!(a.value <= b.value);
            prop_assert!(a.aux["hit_ratio"] <= b.aux["hit_ratio"]);
            prop_assert!(a.aux["coverage"] <= b.aux["coverage"]);
        }
    }

    #[test]
    fn evaluators_are_pure(
        emb in arb_embedding(),
        q in prop::collection::vec((token(14), token(14), token(14), token(14)), 1..8),
        cm in prop::sample::select(CompareMethod::ALL.to_vec()),
    ) {
        let before = emb.clone();
        let questions: Vec<AnalogyQuestion> = q
            .into_iter()
            .map(|(a, a_star, b, b_star)| AnalogyQuestion { a, a_star, b, b_star, category: None })
            .collect();
        let opts = AnalogyOptions::default();
        let first = eval_analogy(&emb, cm, &questions, &opts).map_err(|e| e.to_string());
        let second = eval_analogy(&emb, cm, &questions, &opts).map_err(|e| e.to_string());
        prop_assert_eq!(first, second);
        prop_assert_eq!(&before, &emb);
        prop_assert_eq!(before.metadata(), emb.metadata());
    }

    #[test]
    fn consolidation_ignores_record_order(records in arb_records(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let grid = Grid::from_results(&records).unwrap();
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let again = Grid::from_results(&shuffled).unwrap();
        prop_assert_eq!(&grid, &again);
        prop_assert_eq!(render_markdown(&grid).unwrap(), render_markdown(&again).unwrap());
        prop_assert_eq!(render_csv(&grid).unwrap(), render_csv(&again).unwrap());
        for cells in grid.rows.values() {
            for cell in cells.values() {
                prop_assert!(cell.n_scores >= 1 && !cell.dims.is_empty() && !cell.datasets.is_empty());
                prop_assert!(cell.avg_score <= cell.max_score + 1e-12);
            }
        }
    }

    #[test]
    fn consolidate_is_max_and_mean(scores in prop::collection::btree_map(1usize..1000, -1.0f64..1.0, 1..10)) {
        let cell = consolidate(&scores).unwrap();
        let max = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = scores.values().sum::<f64>() / scores.len() as f64;
        prop_assert_eq!(cell.max_score, max);
        prop_assert!((cell.avg_score - mean).abs() < 1e-12);
        prop_assert_eq!(cell.n_dims, scores.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sgns_training_is_deterministic(text in sentences(40), config in arb_sgns_config()) {
        let Ok(vocab) = Vocabulary::build(&text, 1) else { return Ok(()) };
        let stream = encode(&text, &vocab);
        let a = train_sgns(&stream, &vocab, &config);
        let b = train_sgns(&stream, &vocab, &config);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a.embedding, &b.embedding);
                prop_assert_eq!(&a.epoch_losses, &b.epoch_losses);
                // W and C are distinct buffers and stay distinct.
                let (w, c) = (a.embedding.w().as_slice(), a.embedding.c().as_slice());
                prop_assert_ne!(w.as_ptr(), c.as_ptr());
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "one run failed and the other did not"),
        }
    }

    #[test]
    fn adagrad_accumulators_stay_positive(
        text in prop::collection::vec(prop::collection::vec(0u32..6, 2..12), 1..12),
        seed in any::<u64>(),
    ) {
        let stream = SentenceStream { sentences: text };
        let cooc = accumulate_cooc(&stream, 6, 3, true).unwrap();
        let config = GloveConfig { dim: 4, window: 3, epochs: 5, seed, threads: 1, ..GloveConfig::default() };
        let (params, losses) = train_glove_params(&cooc, &config).unwrap();
        prop_assert!(params.is_finite());
        for acc in params.accumulators() {
            prop_assert!(acc.iter().all(|&g| g >= 1.0));
        }
        prop_assert!(losses.iter().all(|l| l.is_finite() && *l >= 0.0));
    }
}
