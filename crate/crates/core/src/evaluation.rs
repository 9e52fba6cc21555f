//! Macro-F1 and accuracy under class groupings, frequency-bucket and
//! mention-type breakdowns, and approximate randomization tests.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntityId, FrequencyBucket, FrequencyTable};
use crate::error::{Error, Result};
use crate::mention::{MentionTagger, MentionType};
use crate::models::ModelBundle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scene_id: String,
    pub utterance: usize,
    pub start: usize,
    pub end: usize,
    pub gold: EntityId,
    pub predicted: EntityId,
    pub mention_type: MentionType,
}

/// One record per gold mention.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictionSet {
    pub records: Vec<PredictionRecord>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn golds(&self) -> Vec<EntityId> {
        self.records.iter().map(|r| r.gold).collect()
    }

    pub fn predictions(&self) -> Vec<EntityId> {
        self.records.iter().map(|r| r.predicted).collect()
    }

    /// Records satisfying `keep`, in order.
    pub fn filter(&self, keep: impl Fn(&PredictionRecord) -> bool) -> PredictionSet {
        PredictionSet {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str, path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
        }
        Ok(PredictionSet { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text, path)
    }
}

/// Runs a model over every scene of `corpus` and tags each mention.
pub fn predict(model: &ModelBundle, corpus: &Corpus, chunk_len: usize) -> Result<PredictionSet> {
    let tagger = MentionTagger::new(&corpus.catalog);
    let mut records = Vec::with_capacity(corpus.num_mentions());
    for (si, scene) in corpus.scenes().enumerate() {
        for out in model.resolve_mentions(scene, si, chunk_len)? {
            let u = &scene.utterances[out.mention.utterance];
            let m = &out.mention.mention;
            let span: Vec<&str> = u.tokens[m.start..=m.end].iter().map(String::as_str).collect();
            records.push(PredictionRecord {
                scene_id: scene.id.clone(),
                utterance: out.mention.utterance,
                start: m.start,
                end: m.end,
                gold: m.entity,
                predicted: out.predicted,
                mention_type: tagger.tag(&span),
            });
        }
    }
    Ok(PredictionSet { records })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupingMode {
    All,
    Main,
}

impl FromStr for GroupingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(GroupingMode::All),
            "main" => Ok(GroupingMode::Main),
            _ => Err(Error::Config(format!("unknown grouping {s:?} (all, main)"))),
        }
    }
}

impl fmt::Display for GroupingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupingMode::All => "all",
            GroupingMode::Main => "main",
        })
    }
}

/// Maps entities to evaluation classes; unlisted entities share one
/// catch-all class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassGrouping {
    pub mode: GroupingMode,
    classes: HashMap<EntityId, usize>,
    catch_all: usize,
}

impl ClassGrouping {
    pub fn new(mode: GroupingMode, entities: impl IntoIterator<Item = EntityId>) -> Self {
        let set: BTreeSet<EntityId> = entities.into_iter().collect();
        let classes: HashMap<EntityId, usize> = set.into_iter().enumerate().map(|(c, e)| (e, c)).collect();
        let catch_all = classes.len();
        ClassGrouping { mode, classes, catch_all }
    }

    /// One class per entity with gold mentions in both `train` and `test`.
    pub fn all(train: &BTreeSet<EntityId>, test: &BTreeSet<EntityId>) -> Self {
        Self::new(GroupingMode::All, train.intersection(test).copied())
    }

    pub fn main(mains: &[EntityId]) -> Self {
        Self::new(GroupingMode::Main, mains.iter().copied())
    }

    pub fn class_of(&self, e: EntityId) -> usize {
        self.classes.get(&e).copied().unwrap_or(self.catch_all)
    }

    /// Including the catch-all.
    pub fn num_classes(&self) -> usize {
        self.catch_all + 1
    }
}

pub fn gold_entities(corpus: &Corpus) -> BTreeSet<EntityId> {
    corpus
        .scenes()
        .flat_map(|s| s.utterances.iter())
        .flat_map(|u| u.mentions.iter().map(|m| m.entity))
        .collect()
}

fn check_pairs(gold: &[EntityId], pred: &[EntityId]) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::Invalid("empty prediction set".into()));
    }
    if gold.len() != pred.len() {
        return Err(Error::Invalid(format!("{} golds but {} predictions", gold.len(), pred.len())));
    }
    Ok(())
}

/// Unweighted mean of per-class F1 over classes with at least one gold or
/// predicted mention.
pub fn macro_f1_pairs(gold: &[EntityId], pred: &[EntityId], grouping: &ClassGrouping) -> Result<f64> {
    check_pairs(gold, pred)?;
    let n = grouping.num_classes();
    let (mut tp, mut fp, mut fn_) = (vec![0u64; n], vec![0u64; n], vec![0u64; n]);
    for (&g, &p) in gold.iter().zip(pred) {
        let (g, p) = (grouping.class_of(g), grouping.class_of(p));
        if g == p {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let mut sum = 0.0;
    let mut count = 0;
    for c in 0..n {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            sum += 2.0 * tp[c] as f64 / denom as f64;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

pub fn accuracy_pairs(gold: &[EntityId], pred: &[EntityId], grouping: &ClassGrouping) -> Result<f64> {
    check_pairs(gold, pred)?;
    let hits = gold
        .iter()
        .zip(pred)
        .filter(|(&g, &p)| grouping.class_of(g) == grouping.class_of(p))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

pub fn macro_f1(preds: &PredictionSet, grouping: &ClassGrouping) -> Result<f64> {
    macro_f1_pairs(&preds.golds(), &preds.predictions(), grouping)
}

pub fn accuracy(preds: &PredictionSet, grouping: &ClassGrouping) -> Result<f64> {
    accuracy_pairs(&preds.golds(), &preds.predictions(), grouping)
}

/// Accuracy per gold-entity frequency bucket, exact entity match. Buckets
/// without mentions are omitted.
pub fn bucket_report(preds: &PredictionSet, freq: &FrequencyTable) -> Vec<BucketRow> {
    let mut rows = Vec::new();
    for b in FrequencyBucket::ALL {
        let sel: Vec<&PredictionRecord> = preds.records.iter().filter(|r| freq.bucket(r.gold) == b).collect();
        if sel.is_empty() {
            continue;
        }
        let hits = sel.iter().filter(|r| r.gold == r.predicted).count();
        rows.push(BucketRow {
            bucket: b,
            mentions: sel.len(),
            accuracy: hits as f64 / sel.len() as f64,
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub bucket: FrequencyBucket,
    pub mentions: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeRow {
    pub mention_type: MentionType,
    pub mentions: usize,
    pub f1: f64,
    pub accuracy: f64,
}

/// Macro-F1 restricted to each mention type present, with counts.
pub fn mention_type_report(preds: &PredictionSet, grouping: &ClassGrouping) -> Result<Vec<TypeRow>> {
    let mut rows = Vec::new();
    for t in MentionType::ALL {
        let sub = preds.filter(|r| r.mention_type == t);
        if sub.is_empty() {
            continue;
        }
        rows.push(TypeRow {
            mention_type: t,
            mentions: sub.len(),
            f1: macro_f1(&sub, grouping)?,
            accuracy: accuracy(&sub, grouping)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    MacroF1,
    Accuracy,
}

impl MetricKind {
    pub fn eval(self, gold: &[EntityId], pred: &[EntityId], grouping: &ClassGrouping) -> Result<f64> {
        match self {
            MetricKind::MacroF1 => macro_f1_pairs(gold, pred, grouping),
            MetricKind::Accuracy => accuracy_pairs(gold, pred, grouping),
        }
    }
}

pub const MIN_RANDOMIZATION_ITERATIONS: usize = 1000;

/// Two-sided approximate randomization test: each mention's pair of
/// predictions is swapped with probability 0.5;
/// `p = (#{|diff| >= observed} + 1) / (iterations + 1)`.
pub fn approx_randomization_test(
    a: &PredictionSet,
    b: &PredictionSet,
    metric: MetricKind,
    grouping: &ClassGrouping,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    if iterations < MIN_RANDOMIZATION_ITERATIONS {
        return Err(Error::Config(format!(
            "approximate randomization needs at least {MIN_RANDOMIZATION_ITERATIONS} iterations, got {iterations}"
        )));
    }
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("prediction sets have {} and {} mentions", a.len(), b.len())));
    }
    for (x, y) in a.records.iter().zip(&b.records) {
        if (&x.scene_id, x.utterance, x.start, x.end, x.gold) != (&y.scene_id, y.utterance, y.start, y.end, y.gold) {
            return Err(Error::Invalid(format!(
                "prediction sets are misaligned at scene {} utterance {} span {}..{}",
                x.scene_id, x.utterance, x.start, x.end
            )));
        }
    }
    let gold = a.golds();
    let (pa, pb) = (a.predictions(), b.predictions());
    let observed = (metric.eval(&gold, &pa, grouping)? - metric.eval(&gold, &pb, grouping)?).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sa, mut sb) = (pa.clone(), pb.clone());
    let mut count = 0usize;
    for _ in 0..iterations {
        for i in 0..gold.len() {
            if rng.gen::<bool>() {
                sa[i] = pb[i];
                sb[i] = pa[i];
            } else {
                sa[i] = pa[i];
                sb[i] = pb[i];
            }
        }
        let d = (metric.eval(&gold, &sa, grouping)? - metric.eval(&gold, &sb, grouping)?).abs();
        if d >= observed {
            count += 1;
        }
    }
    Ok((count + 1) as f64 / (iterations + 1) as f64)
}

/// Macro-F1 and accuracy in both grouping conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mentions: usize,
    pub f1_all: f64,
    pub acc_all: f64,
    pub f1_main: f64,
    pub acc_main: f64,
}

pub fn metric_report(preds: &PredictionSet, all: &ClassGrouping, main: &ClassGrouping) -> Result<MetricReport> {
    Ok(MetricReport {
        mentions: preds.len(),
        f1_all: macro_f1(preds, all)?,
        acc_all: accuracy(preds, all)?,
        f1_main: macro_f1(preds, main)?,
        acc_main: accuracy(preds, main)?,
    })
}

/// Mentions per gold entity.
pub fn gold_counts(preds: &PredictionSet) -> BTreeMap<EntityId, usize> {
    let mut m = BTreeMap::new();
    for r in &preds.records {
        *m.entry(r.gold).or_insert(0) += 1;
    }
    m
}
