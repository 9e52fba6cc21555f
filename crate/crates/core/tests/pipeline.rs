use entlink::corpus::synthetic::{generate_synthetic_corpus, SyntheticSpec};
use entlink::evaluation::predict;
use entlink::models::{load_model, save_model};
use entlink::models::ModelKind;
use entlink::training::{train, TrainConfig};

#[test]
fn saved_models_predict_identically() {
    let spec = SyntheticSpec { entities: 8, scenes: 6, episodes: 2, mains: 3, ..SyntheticSpec::default() };
    let data = generate_synthetic_corpus(&spec, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::BiLstm, ModelKind::EntLib, ModelKind::EntNet] {
        let cfg = TrainConfig { d_tok: 5, hidden: 4, k: 3, epochs: 2, seed: 9, ..TrainConfig::defaults(kind) };
        let out = train(&data.corpus, None, &cfg).unwrap();
        assert!(out.best_epoch >= 1 && out.best_epoch <= 2);
        let path = dir.path().join("m.bin");
        save_model(&out.model, &path).unwrap();
        let back = load_model(&path).unwrap();
        let a = predict(&out.model, &data.corpus, 25).unwrap();
        let b = predict(&back, &data.corpus, 25).unwrap();
        assert_eq!(a, b, "{kind:?}");
        assert_eq!(a.len(), data.corpus.num_mentions());
    }
}
