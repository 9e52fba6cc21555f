use std::path::Path;

use entlink::corpus::synthetic::{generate_synthetic_corpus, SyntheticSpec};
use entlink::corpus::{entity_frequencies, parse_corpus, FrequencyTable};
use entlink::gradcheck::{finite_diff_check, GradCheckConfig};
use entlink::kb::KnowledgeBase;
use entlink::models::{EntNetHead, ModelKind};
use entlink::probing::relation_scores;
use entlink::tape::Tape;
use entlink::tensor::{ParamStore, Tensor};
use entlink::training::{init_model, mention_weight, nll_loss, TrainConfig};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(xs in prop::collection::vec(-700.0f64..700.0, 1..12)) {
        let mut tape = Tape::new();
        let x = tape.input_vec(xs);
        let p = tape.softmax(x);
        let p = tape.value(p);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn row_cosine_is_bounded(m in matrix(4, 3), v in prop::collection::vec(-3.0f64..3.0, 3)) {
        let mut tape = Tape::new();
        let m = tape.input(&Tensor::new(vec![4, 3], m).unwrap());
        let v = tape.input_vec(v);
        let c = tape.row_cosine(m, v).unwrap();
        prop_assert!(tape.value(c).iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn normalize_rows_is_idempotent(m in matrix(3, 4)) {
        let mut tape = Tape::new();
        let m = tape.input(&Tensor::new(vec![3, 4], m).unwrap());
        let once = tape.normalize_rows(m);
        let twice = tape.normalize_rows(once);
        for (a, b) in tape.value(once).iter().zip(tape.value(twice)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn backward_of_sum_matches_finite_differences(a in matrix(3, 4), b in matrix(4, 2), v in prop::collection::vec(-2.0f64..2.0, 4)) {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::new(vec![3, 4], a).unwrap());
        store.insert("b", Tensor::new(vec![4, 2], b).unwrap());
        store.insert("v", Tensor::from_vec(v));
        let report = finite_diff_check(
            &store,
            |s, tape| {
                let a = tape.param(s, 0);
                let b = tape.param(s, 1);
                let v = tape.param(s, 2);
                let ab = tape.matmul(a, b)?;
                let ab = tape.tanh(ab);
                let cos = tape.row_cosine(a, v)?;
                let sm = tape.softmax(cos);
                let n = tape.normalize_rows(a);
                let parts = [tape.sum(ab), tape.sum(sm), tape.sum(n)];
                let sig = tape.sigmoid(v);
                let last = tape.sum(sig);
                Ok(tape.sum_scalars(&[parts[0], parts[1], parts[2], last]))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        prop_assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn penalization_keeps_loss_sign(p in 1e-6f64..1.0, count in 0u64..5000) {
        let freq = FrequencyTable::from_counts(vec![count, 3]);
        let plain = nll_loss(&[vec![p, 1.0 - p]], &[0], &freq, false).unwrap();
        let pen = nll_loss(&[vec![p, 1.0 - p]], &[0], &freq, true).unwrap();
        prop_assert!(mention_weight(&freq, 0, true) > 0.0);
        prop_assert_eq!(plain.signum(), pen.signum());
        prop_assert!(pen <= plain + 1e-15);
    }

    #[test]
    fn relation_scores_exclude_target(pairs in prop::collection::vec((0usize..5, 0usize..5), 2..6), emb in matrix(5, 3), pick in 0usize..6) {
        let mut kb = KnowledgeBase::new();
        for &(a, b) in &pairs {
            kb.add_relation(a, "r", b);
        }
        let emb = Tensor::new(vec![5, 3], emb).unwrap();
        let target = pairs[pick % pairs.len()];
        let scores = relation_scores(&emb, &kb, target).unwrap();
        let others: Vec<_> = kb.relations().map(|r| (r.subject, r.object)).filter(|p| *p != target).collect();
        if others.is_empty() {
            prop_assert!(scores.is_empty());
        } else {
            let diff = |a: usize, b: usize| -> Vec<f64> { emb.row(a).iter().zip(emb.row(b)).map(|(x, y)| x - y).collect() };
            let cos = |u: &[f64], v: &[f64]| {
                let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                let n = u.iter().map(|a| a * a).sum::<f64>().sqrt() * v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if n == 0.0 { 0.0 } else { d / n }
            };
            let t = diff(target.0, target.1);
            let want = others.iter().map(|&(x, y)| cos(&t, &diff(x, y))).sum::<f64>() / others.len() as f64;
            prop_assert_eq!(scores.len(), 1);
            prop_assert!((scores[0].1 - want).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn corpus_round_trips_and_buckets_cover_entities(seed in 0u64..1000, entities in 3usize..15) {
        let spec = SyntheticSpec { entities, scenes: 4, episodes: 2, mains: 2, ..SyntheticSpec::default() };
        let data = generate_synthetic_corpus(&spec, seed).unwrap();
        let back = parse_corpus(&data.corpus.to_jsonl(), data.corpus.catalog.clone(), Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &data.corpus);
        let freq = entity_frequencies(&data.corpus);
        prop_assert_eq!(freq.bucket_sizes().iter().sum::<usize>(), data.corpus.catalog.len());
    }

    #[test]
    fn entnet_values_stay_unit_norm(seed in 0u64..1000, steps in 1usize..15) {
        let spec = SyntheticSpec { entities: 6, scenes: 2, episodes: 1, mains: 2, ..SyntheticSpec::default() };
        let data = generate_synthetic_corpus(&spec, 1).unwrap();
        let cfg = TrainConfig { d_tok: 4, hidden: 3, k: 5, seed, ..TrainConfig::defaults(ModelKind::EntNet) };
        let model = init_model(&data.corpus, &cfg).unwrap();
        let mut tape = Tape::new();
        let head = EntNetHead::new(&mut tape, &model).unwrap();
        let mut state = head.start_scene(0);
        for i in 0..steps {
            let q = tape.input_vec((0..5).map(|j| ((i * 7 + j) as f64 * 0.37 + seed as f64).sin()).collect());
            head.step(&mut tape, q, &mut state, 0).unwrap();
            let v = tape.value(state.values).to_vec();
            for row in v.chunks(5) {
                let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() <= 1e-9);
            }
        }
    }
}
