//! Representation analyses over trained models: similarity structure
//! (RSA), same-referent mention similarity, memory drift, flag ablations
//! and 2D projections.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntityId, Scene};
use crate::error::{Error, Result};
use crate::evaluation::{metric_report, predict, ClassGrouping, MetricReport};
use crate::mention::{MentionTagger, MentionType};
use crate::models::{ModelBundle, ModelKind, SceneInput, VariantFlags};
use crate::tape::{cosine, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    H,
    Q,
}

impl std::str::FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(Layer::H),
            "q" => Ok(Layer::Q),
            _ => Err(Error::Config(format!("unknown layer {s:?} (h, q)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    pub mention_id: String,
    pub entity: EntityId,
    pub layer: Layer,
    pub vector: Vec<f64>,
}

/// Hidden state and query activations at mention-final tokens.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationDump {
    pub records: Vec<ActivationRecord>,
}

impl ActivationDump {
    pub fn layer(&self, layer: Layer) -> impl Iterator<Item = &ActivationRecord> {
        self.records.iter().filter(move |r| r.layer == layer)
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn parse_jsonl(text: &str, path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
            }
        }
        Ok(ActivationDump { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text, path)
    }
}

/// Runs `model` in evaluation mode and records `h` (and `q` where the model
/// has one) for every mention.
pub fn capture_activations(model: &ModelBundle, corpus: &Corpus, chunk_len: usize) -> Result<ActivationDump> {
    let mut records = Vec::new();
    for (si, scene) in corpus.scenes().enumerate() {
        let (input, mentions) = SceneInput::from_scene(scene, &model.vocab);
        if mentions.is_empty() {
            continue;
        }
        let mut tape = Tape::new();
        let tr = model.forward_scene(&mut tape, &input, chunk_len, si, None, false)?;
        for (i, m) in mentions.iter().enumerate() {
            let id = format!("{}:{}:{}-{}", scene.id, m.utterance, m.mention.start, m.mention.end);
            records.push(ActivationRecord {
                mention_id: id.clone(),
                entity: m.mention.entity,
                layer: Layer::H,
                vector: tape.value(tr.hidden[i]).to_vec(),
            });
            if let Some(q) = tr.queries[i] {
                records.push(ActivationRecord {
                    mention_id: id,
                    entity: m.mention.entity,
                    layer: Layer::Q,
                    vector: tape.value(q).to_vec(),
                });
            }
        }
    }
    Ok(ActivationDump { records })
}

/// For each entity, the proper-noun token most often used to refer to it
/// (the span's final token); ties go to the lexicographically smallest.
pub fn name_map(corpus: &Corpus) -> BTreeMap<EntityId, String> {
    let tagger = MentionTagger::new(&corpus.catalog);
    let mut counts: BTreeMap<EntityId, BTreeMap<&str, usize>> = BTreeMap::new();
    for s in corpus.scenes() {
        for u in &s.utterances {
            for m in &u.mentions {
                let span: Vec<&str> = u.tokens[m.start..=m.end].iter().map(String::as_str).collect();
                if tagger.tag(&span) == MentionType::ProperNoun {
                    *counts.entry(m.entity).or_default().entry(span[span.len() - 1]).or_insert(0) += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|(e, c)| {
            let (name, _) = c.into_iter().fold(("", 0), |best, (n, k)| if k > best.1 { (n, k) } else { best });
            (e, name.to_string())
        })
        .collect()
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx.sqrt() * syy.sqrt())
    }
}

/// Spearman rank correlation (Pearson over average ranks); 0 when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Invalid(format!("spearman needs two equal lists of length >= 2, got {} and {}", x.len(), y.len())));
    }
    if x == y {
        return Ok(1.0);
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsaResult {
    pub rho: f64,
    pub entities: usize,
    pub pairs: usize,
}

fn pairwise_cosines(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            out.push(cosine(&rows[i], &rows[j]));
        }
    }
    out
}

/// Spearman correlation between the pairwise cosine similarities of two
/// spaces whose rows are aligned by entity.
pub fn rsa(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<RsaResult> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("spaces have {} and {} rows", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::Invalid(format!("RSA needs at least 3 entities, got {}", a.len())));
    }
    for (side, rows) in [("first", a), ("second", b)] {
        if let Some(i) = rows.iter().position(|r| r.iter().all(|&x| x == 0.0)) {
            return Err(Error::Invalid(format!("row {i} of the {side} space is zero")));
        }
    }
    let (sa, sb) = (pairwise_cosines(a), pairwise_cosines(b));
    Ok(RsaResult {
        rho: spearman(&sa, &sb)?,
        entities: a.len(),
        pairs: sa.len(),
    })
}

/// RSA between entity embeddings and the token embeddings of their names,
/// over entities with an in-vocabulary name, optionally restricted to
/// `subset`.
pub fn rsa_entities_vs_names(
    model: &ModelBundle,
    names: &BTreeMap<EntityId, String>,
    subset: Option<&[EntityId]>,
) -> Result<RsaResult> {
    let (mut ents, mut toks) = (Vec::new(), Vec::new());
    for (&e, name) in names {
        if subset.is_some_and(|s| !s.contains(&e)) || e >= model.num_entities() {
            continue;
        }
        let Some(t) = model.vocab.get(name) else { continue };
        ents.push(model.entity_embeddings().row(e).to_vec());
        toks.push(model.token_embeddings().row(t).to_vec());
    }
    rsa(&ents, &toks)
}

/// Average over entities with at least two mentions of the mean cosine
/// between their mention vectors.
pub fn mention_pair_similarity(dump: &ActivationDump, layer: Layer) -> Result<f64> {
    let mut by_entity: BTreeMap<EntityId, Vec<&[f64]>> = BTreeMap::new();
    for r in dump.layer(layer) {
        by_entity.entry(r.entity).or_default().push(&r.vector);
    }
    let mut total = 0.0;
    let mut n = 0;
    for vs in by_entity.values().filter(|v| v.len() >= 2) {
        let mut s = 0.0;
        let mut pairs = 0;
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                s += cosine(vs[i], vs[j]);
                pairs += 1;
            }
        }
        total += s / pairs as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Invalid(format!("no entity has two or more {layer:?}-layer mentions")));
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftStep {
    pub max_abs: f64,
    pub frobenius: f64,
}

/// Change of the EntNet value matrix at every token, starting from
/// `V_0 = W_e`.
pub fn value_drift(model: &ModelBundle, scene: &Scene, scene_index: usize, chunk_len: usize) -> Result<Vec<DriftStep>> {
    if model.kind() != ModelKind::EntNet {
        return Err(Error::Unsupported(format!("{} has no entity memory", model.kind())));
    }
    let (input, _) = SceneInput::from_scene(scene, &model.vocab);
    let mut tape = Tape::new();
    let tr = model.forward_scene(&mut tape, &input, chunk_len, scene_index, None, true)?;
    Ok(tr
        .values
        .windows(2)
        .map(|w| {
            let (a, b) = (tape.value(w[0]), tape.value(w[1]));
            let (mut max_abs, mut sq) = (0.0f64, 0.0);
            for (x, y) in a.iter().zip(b) {
                let d = (y - x).abs();
                max_abs = max_abs.max(d);
                sq += d * d;
            }
            DriftStep {
                max_abs,
                frobenius: sq.sqrt(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub trained: MetricReport,
    pub overridden: MetricReport,
    pub flags: VariantFlags,
    /// The override differs from the flags the weights were trained with.
    pub mismatched: bool,
}

/// Scores the same weights with their trained flags and with `flags`.
pub fn ablation_eval(
    model: &ModelBundle,
    corpus: &Corpus,
    flags: VariantFlags,
    all: &ClassGrouping,
    main: &ClassGrouping,
    chunk_len: usize,
) -> Result<AblationReport> {
    let (alt, mismatched) = model.with_flags(flags)?;
    let trained = metric_report(&predict(model, corpus, chunk_len)?, all, main)?;
    let overridden = metric_report(&predict(&alt, corpus, chunk_len)?, all, main)?;
    Ok(AblationReport {
        trained,
        overridden,
        flags,
        mismatched,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub coords: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    /// Variance along each component.
    pub variances: [f64; 2],
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and unit eigenvectors as rows.
pub fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = order
        .iter()
        .map(|&i| {
            let mut e: Vec<f64> = v.iter().map(|row| row[i]).collect();
            let lead = e.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                e.iter_mut().for_each(|x| *x = -*x);
            }
            e
        })
        .collect();
    (vals, vecs)
}

/// Top two principal components of mean-centred `points`.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Pca2d> {
    if points.len() < 2 {
        return Err(Error::Invalid("PCA needs at least two points".into()));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Invalid("PCA points must share one positive dimension".into()));
    }
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let centred: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for p in &centred {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += p[i] * p[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    let (vals, mut vecs) = symmetric_eigen(cov);
    if d == 1 {
        vecs.push(vec![0.0]);
    }
    let components = [vecs[0].clone(), vecs[1].clone()];
    let coords = centred
        .iter()
        .map(|p| {
            let dot = |c: &[f64]| p.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    Ok(Pca2d {
        coords,
        variances: [vals[0].max(0.0), vals.get(1).copied().unwrap_or(0.0).max(0.0)],
        components,
    })
}
