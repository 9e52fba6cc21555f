//! Loss, Adam, the batched training loop with early stopping, k-fold
//! cross-validation and a small grid search.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, entity_frequencies, Corpus, EntityId, FrequencyTable};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, gold_entities, macro_f1, predict, ClassGrouping};
use crate::kv::KeyValues;
use crate::models::{
    load_word_vectors, Dims, GateSimilarity, ModelBundle, ModelConfig, ModelKind, ModelMeta, SceneInput, VariantFlags,
};
use crate::tape::{Tape, Var};
use crate::tensor::ParamStore;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub learning_rate: f64,
    pub dropout_pre: f64,
    pub dropout_post: f64,
    pub weight_decay: f64,
    pub penalization: bool,
    pub epochs: usize,
    /// Consecutive non-improving validation epochs tolerated before
    /// stopping.
    pub patience: usize,
    pub scenes_per_batch: usize,
    pub chunk_len: usize,
    pub seed: u64,
    pub d_tok: usize,
    pub hidden: usize,
    pub k: usize,
    pub min_count: usize,
    pub flags: VariantFlags,
    pub pretrained_vectors: Option<PathBuf>,
}

pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "learning_rate",
    "dropout_pre",
    "dropout_post",
    "weight_decay",
    "penalization",
    "epochs",
    "patience",
    "scenes_per_batch",
    "chunk_len",
    "seed",
    "d_tok",
    "hidden",
    "k",
    "min_count",
    "tie_speaker_referent",
    "gate_similarity",
    "updates_enabled",
    "pretrained_vectors",
];

impl TrainConfig {
    pub fn defaults(kind: ModelKind) -> Self {
        let (learning_rate, dropout_pre, dropout_post, weight_decay, penalization, epochs) = match kind {
            ModelKind::BiLstm => (0.0080, 0.2, 0.0, 1.8e-6, false, 20),
            ModelKind::EntLib => (0.0011, 0.2, 0.02, 4.3e-6, true, 80),
            ModelKind::EntNet => (0.0014, 0.0, 0.08, 1.0e-5, true, 80),
        };
        TrainConfig {
            kind,
            learning_rate,
            dropout_pre,
            dropout_post,
            weight_decay,
            penalization,
            epochs,
            patience: 10,
            scenes_per_batch: 25,
            chunk_len: 750,
            seed: 0,
            d_tok: 300,
            hidden: 500,
            k: 150,
            min_count: 1,
            flags: VariantFlags::default(),
            pretrained_vectors: None,
        }
    }

    /// Parses `key=value` lines. `model` selects the per-architecture
    /// defaults, which the remaining keys override; unknown keys fail.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text, path)?;
        kv.reject_unknown(CONFIG_KEYS)?;
        let kind: ModelKind = kv
            .get("model")?
            .ok_or_else(|| Error::Config(format!("{}: missing required key \"model\"", path.display())))?;
        let mut c = TrainConfig::defaults(kind);
        for key in CONFIG_KEYS.iter().filter(|k| **k != "model") {
            if let Some(v) = kv.raw(key) {
                c.set(key, v)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Overrides one hyperparameter from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        fn boolean(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("bad boolean {v:?} for {key}"))),
            }
        }
        match key {
            "model" => {
                let kind: ModelKind = value.parse()?;
                if kind != self.kind {
                    return Err(Error::Config("the model kind cannot be overridden".into()));
                }
            }
            "learning_rate" => self.learning_rate = num(key, value)?,
            "dropout_pre" => self.dropout_pre = num(key, value)?,
            "dropout_post" => self.dropout_post = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "penalization" => self.penalization = boolean(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "scenes_per_batch" => self.scenes_per_batch = num(key, value)?,
            "chunk_len" => self.chunk_len = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "d_tok" => self.d_tok = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "min_count" => self.min_count = num(key, value)?,
            "tie_speaker_referent" => self.flags.tie_speaker_referent = boolean(key, value)?,
            "gate_similarity" => self.flags.gate_similarity = value.parse::<GateSimilarity>()?,
            "updates_enabled" => self.flags.updates_enabled = boolean(key, value)?,
            "pretrained_vectors" => {
                self.pretrained_vectors = if value.is_empty() { None } else { Some(PathBuf::from(value)) }
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?} (allowed: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {x}")))
            }
        };
        pos("learning_rate", self.learning_rate)?;
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("scenes_per_batch", self.scenes_per_batch),
            ("chunk_len", self.chunk_len),
            ("d_tok", self.d_tok),
            ("hidden", self.hidden),
            ("k", self.k),
            ("min_count", self.min_count),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, p) in [("dropout_pre", self.dropout_pre), ("dropout_post", self.dropout_post)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        Ok(())
    }

    /// Canonical `key=value` rendering, all keys in fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let f = &self.flags;
        let _ = writeln!(s, "model={}", self.kind);
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "dropout_pre={}", self.dropout_pre);
        let _ = writeln!(s, "dropout_post={}", self.dropout_post);
        let _ = writeln!(s, "weight_decay={}", self.weight_decay);
        let _ = writeln!(s, "penalization={}", self.penalization);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "patience={}", self.patience);
        let _ = writeln!(s, "scenes_per_batch={}", self.scenes_per_batch);
        let _ = writeln!(s, "chunk_len={}", self.chunk_len);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "d_tok={}", self.d_tok);
        let _ = writeln!(s, "hidden={}", self.hidden);
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "min_count={}", self.min_count);
        let _ = writeln!(s, "tie_speaker_referent={}", f.tie_speaker_referent);
        let _ = writeln!(s, "gate_similarity={}", f.gate_similarity);
        let _ = writeln!(s, "updates_enabled={}", f.updates_enabled);
        if let Some(p) = &self.pretrained_vectors {
            let _ = writeln!(s, "pretrained_vectors={}", p.display());
        }
        s
    }

    pub fn model_config(&self, vocab: usize, entities: usize) -> ModelConfig {
        ModelConfig {
            kind: self.kind,
            dims: Dims {
                vocab,
                d_tok: self.d_tok,
                hidden: self.hidden,
                k: self.k,
                entities,
            },
            flags: self.flags,
            dropout_pre: self.dropout_pre,
            dropout_post: self.dropout_post,
        }
    }
}

/// Per-mention loss weight: `1/sqrt(freq)` under penalization, frequency 0
/// counted as 1.
pub fn mention_weight(freq: &FrequencyTable, gold: EntityId, penalization: bool) -> f64 {
    if penalization {
        1.0 / (freq.count(gold).max(1) as f64).sqrt()
    } else {
        1.0
    }
}

/// Mean negative log-likelihood over mentions of already computed
/// distributions.
pub fn nll_loss(distributions: &[Vec<f64>], golds: &[EntityId], freq: &FrequencyTable, penalization: bool) -> Result<f64> {
    if distributions.len() != golds.len() || golds.is_empty() {
        return Err(Error::Invalid(format!(
            "{} distributions for {} gold mentions",
            distributions.len(),
            golds.len()
        )));
    }
    let mut total = 0.0;
    for (d, &g) in distributions.iter().zip(golds) {
        let p = d
            .get(g)
            .ok_or_else(|| Error::Invalid(format!("gold entity {g} out of range for {} outputs", d.len())))?;
        total += -p.ln() * mention_weight(freq, g, penalization);
    }
    Ok(total / golds.len() as f64)
}

/// The same loss on the tape, scaled by `1/denominator` so that per-scene
/// terms of one batch add up to the batch mean.
pub fn nll_loss_tape(
    tape: &mut Tape,
    outputs: &[Var],
    golds: &[EntityId],
    freq: &FrequencyTable,
    penalization: bool,
    denominator: f64,
) -> Result<Var> {
    if outputs.len() != golds.len() {
        return Err(Error::Invalid(format!("{} outputs for {} gold mentions", outputs.len(), golds.len())));
    }
    let terms = outputs
        .iter()
        .zip(golds)
        .map(|(&o, &g)| tape.neg_log_pick(o, g, mention_weight(freq, g, penalization) / denominator))
        .collect::<Result<Vec<_>>>()?;
    Ok(tape.sum_scalars(&terms))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        AdamState {
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.grad.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.grad.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update from the gradients stored in `params`,
/// with L2 weight decay added to the gradient. Nothing is updated when any
/// gradient is non-finite.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<()> {
    if state.m.len() != params.len() {
        *state = AdamState::new(params);
    }
    for p in params.iter() {
        if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {} at index {i}", p.name)));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let w = p.value.data_mut();
        for i in 0..w.len() {
            let g = p.grad[i] + weight_decay * w[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            w[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1_all: Option<f64>,
    pub val_acc_all: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelBundle,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Fresh model for `train`: vocabulary and frequencies from the training
/// split only.
pub fn init_model(train: &Corpus, config: &TrainConfig) -> Result<ModelBundle> {
    config.validate()?;
    let vocab = build_vocabulary(train, config.min_count)?;
    let meta = ModelMeta {
        train_freq: entity_frequencies(train),
        mains: train.catalog.mains(),
        unknown: train.catalog.unknown(),
    };
    let pretrained = match &config.pretrained_vectors {
        Some(p) => Some(load_word_vectors(p)?),
        None => None,
    };
    let mc = config.model_config(vocab.len(), train.catalog.len());
    ModelBundle::init(mc, vocab, meta, config.seed, pretrained.as_ref())
}

struct PreparedScene {
    input: SceneInput,
    golds: Vec<EntityId>,
}

fn prepare(model: &ModelBundle, corpus: &Corpus) -> Vec<PreparedScene> {
    corpus
        .scenes()
        .map(|s| {
            let (input, mentions) = SceneInput::from_scene(s, &model.vocab);
            PreparedScene {
                input,
                golds: mentions.iter().map(|m| m.mention.entity).collect(),
            }
        })
        .collect()
}

/// The training objective over all of `corpus` as one batch, without
/// dropout, on a single tape.
pub fn corpus_loss(tape: &mut Tape, model: &ModelBundle, corpus: &Corpus, config: &TrainConfig) -> Result<Var> {
    let scenes = prepare(model, corpus);
    let mentions: usize = scenes.iter().map(|s| s.golds.len()).sum();
    if mentions == 0 {
        return Err(Error::Invalid("corpus has no mentions".into()));
    }
    let mut terms = Vec::with_capacity(scenes.len());
    for (idx, scene) in scenes.iter().enumerate().filter(|(_, s)| !s.golds.is_empty()) {
        let trace = model.forward_scene(tape, &scene.input, config.chunk_len, idx, None, false)?;
        terms.push(nll_loss_tape(
            tape,
            &trace.outputs,
            &scene.golds,
            &model.meta.train_freq,
            config.penalization,
            mentions as f64,
        )?);
    }
    Ok(tape.sum_scalars(&terms))
}

/// One optimizer step over a batch of scenes; returns the batch loss.
fn train_batch(
    model: &mut ModelBundle,
    adam: &mut AdamState,
    scenes: &[(usize, &PreparedScene)],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mentions: usize = scenes.iter().map(|(_, s)| s.golds.len()).sum();
    if mentions == 0 {
        return Ok(0.0);
    }
    model.params.zero_grad();
    let mut loss = 0.0;
    let mut tape = Tape::new();
    for &(idx, scene) in scenes {
        if scene.golds.is_empty() {
            continue;
        }
        tape.clear();
        let trace = model.forward_scene(&mut tape, &scene.input, config.chunk_len, idx, Some(rng), false)?;
        let l = nll_loss_tape(
            &mut tape,
            &trace.outputs,
            &scene.golds,
            &model.meta.train_freq,
            config.penalization,
            mentions as f64,
        )?;
        loss += tape.scalar(l);
        tape.backward(l, &mut model.params)?;
    }
    adam_step(&mut model.params, adam, config.learning_rate, config.weight_decay)?;
    Ok(loss)
}

/// Trains on `train`, early-stopping on all-entities macro-F1 over `val`
/// when it has mentions; otherwise runs every epoch and keeps the last.
pub fn train(train: &Corpus, val: Option<&Corpus>, config: &TrainConfig) -> Result<TrainOutcome> {
    let model = init_model(train, config)?;
    train_model(model, train, val, config)
}

/// [`train`] from an already initialised model.
pub fn train_model(mut model: ModelBundle, train: &Corpus, val: Option<&Corpus>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let scenes = prepare(&model, train);
    let total_mentions: usize = scenes.iter().map(|s| s.golds.len()).sum();
    if total_mentions == 0 {
        return Err(Error::Invalid("training corpus has no mentions".into()));
    }
    let val = val.filter(|v| v.num_mentions() > 0);
    let grouping = val.map(|v| ClassGrouping::all(&gold_entities(train), &gold_entities(v)));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for batch in order.chunks(config.scenes_per_batch) {
            let items: Vec<(usize, &PreparedScene)> = batch.iter().map(|&i| (i, &scenes[i])).collect();
            let mentions: usize = items.iter().map(|(_, s)| s.golds.len()).sum();
            let l = train_batch(&mut model, &mut adam, &items, config, &mut rng)?;
            if !l.is_finite() {
                return Err(Error::Diverged { epoch, loss: l });
            }
            weighted += l * mentions as f64;
        }
        let train_loss = weighted / total_mentions as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: train_loss });
        }
        let (val_f1_all, val_acc_all) = match (val, &grouping) {
            (Some(v), Some(g)) => {
                let preds = predict(&model, v, config.chunk_len)?;
                (Some(macro_f1(&preds, g)?), Some(accuracy(&preds, g)?))
            }
            _ => (None, None),
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_f1_all,
            val_acc_all,
        });
        if let Some(f1) = val_f1_all {
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale > config.patience {
                    break;
                }
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => history.len(),
    };
    model.params.zero_grad();
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Scene-level partition into `folds` disjoint held-out sets, shuffled by
/// `seed`.
pub fn fold_partition(num_scenes: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if num_scenes < folds {
        return Err(Error::Invalid(format!("{num_scenes} scenes cannot fill {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..num_scenes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, s) in idx.into_iter().enumerate() {
        out[i % folds].push(s);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub held_out: Vec<usize>,
    pub best_epoch: usize,
    pub val_f1_all: f64,
    pub val_acc_all: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub mean_f1_all: f64,
    pub mean_acc_all: f64,
}

/// Trains one model per fold, validating (and early stopping) on the
/// held-out scenes.
pub fn cross_validate(corpus: &Corpus, config: &TrainConfig, folds: usize) -> Result<CrossValidation> {
    let parts = fold_partition(corpus.num_scenes(), folds, config.seed)?;
    let mut results = Vec::with_capacity(folds);
    for held in parts {
        let val = corpus.select_scenes(|i| held.binary_search(&i).is_ok());
        let tr = corpus.select_scenes(|i| held.binary_search(&i).is_err());
        let out = train(&tr, Some(&val), config)?;
        let rec = &out.history[out.best_epoch - 1];
        results.push(FoldResult {
            held_out: held,
            best_epoch: out.best_epoch,
            val_f1_all: rec.val_f1_all.unwrap_or(0.0),
            val_acc_all: rec.val_acc_all.unwrap_or(0.0),
        });
    }
    let n = results.len() as f64;
    Ok(CrossValidation {
        mean_f1_all: results.iter().map(|r| r.val_f1_all).sum::<f64>() / n,
        mean_acc_all: results.iter().map(|r| r.val_acc_all).sum::<f64>() / n,
        folds: results,
    })
}

/// Every combination of the listed overrides, scored by mean
/// cross-validated macro-F1; best first, ties in enumeration order.
pub fn grid_search(
    corpus: &Corpus,
    base: &TrainConfig,
    grid: &[(String, Vec<String>)],
    folds: usize,
) -> Result<Vec<(TrainConfig, CrossValidation)>> {
    let mut configs = vec![base.clone()];
    for (key, values) in grid {
        let mut next = Vec::new();
        for c in &configs {
            for v in values {
                let mut c = c.clone();
                c.set(key, v)?;
                c.validate()?;
                next.push(c);
            }
        }
        configs = next;
    }
    let mut out = configs
        .into_iter()
        .map(|c| cross_validate(corpus, &c, folds).map(|cv| (c, cv)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.1.mean_f1_all.total_cmp(&a.1.mean_f1_all));
    Ok(out)
}
