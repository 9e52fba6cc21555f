//! Knowledge-base probes: uniquely identifying descriptions linked by a
//! trained model, attribute-value ranking from queries, and relation
//! prediction from embedding offsets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{EntityCatalog, EntityId};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::models::{argmax, ModelBundle, SceneInput};
use crate::tape::{cosine, Tape};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Property {
    Attribute { name: String, value: String },
    Relation { name: String, object: EntityId },
}

impl Property {
    pub fn holds(&self, kb: &KnowledgeBase, e: EntityId) -> bool {
        match self {
            Property::Attribute { name, value } => kb.attribute(e, name) == Some(value.as_str()),
            Property::Relation { name, object } => kb
                .relations()
                .any(|r| r.subject == e && r.name == *name && r.object == *object),
        }
    }
}

/// Every property of `e`, sorted.
pub fn properties_of(kb: &KnowledgeBase, e: EntityId) -> Vec<Property> {
    let mut out: BTreeSet<Property> = kb
        .attributes()
        .filter(|(x, _, _)| *x == e)
        .map(|(_, n, v)| Property::Attribute {
            name: n.to_string(),
            value: v.to_string(),
        })
        .collect();
    for r in kb.relations().filter(|r| r.subject == e) {
        out.insert(Property::Relation {
            name: r.name.clone(),
            object: r.object,
        });
    }
    out.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Description {
    pub target: EntityId,
    pub properties: Vec<Property>,
    pub text: String,
    pub tokens: Vec<String>,
    pub head_index: usize,
}

pub const HEAD_NOUN: &str = "person";
pub const MAX_PROPERTIES: usize = 3;

fn satisfying(kb: &KnowledgeBase, entities: &[EntityId], props: &[&Property]) -> Vec<EntityId> {
    entities.iter().copied().filter(|&e| props.iter().all(|p| p.holds(kb, e))).collect()
}

fn article(definite: bool, word: &str) -> &'static str {
    if definite {
        "the"
    } else if word.starts_with(['a', 'e', 'i', 'o', 'u', 'A', 'E', 'I', 'O', 'U']) {
        "an"
    } else {
        "a"
    }
}

fn render(kb: &KnowledgeBase, catalog: &EntityCatalog, entities: &[EntityId], props: &[Property]) -> String {
    let parts: Vec<String> = props
        .iter()
        .map(|p| {
            let definite = satisfying(kb, entities, &[p]).len() == 1;
            match p {
                Property::Attribute { value, .. } => format!("{} {value}", article(definite, value)),
                Property::Relation { name, object } => {
                    let who = catalog.name(*object).map(str::to_string).unwrap_or_else(|| format!("entity {object}"));
                    format!("{} {name} of {who}", article(definite, name))
                }
            }
        })
        .collect();
    format!("This {HEAD_NOUN} is {}.", parts.join(" and "))
}

fn tokenize(text: &str) -> Vec<String> {
    let body = text.strip_suffix('.').unwrap_or(text);
    let mut t: Vec<String> = body.split_whitespace().map(str::to_string).collect();
    t.push(".".into());
    t
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// All minimal property sets of size at most `max_props` that single out
/// their target among the KB's entities, by target, size, then property
/// order.
pub fn generate_descriptions(kb: &KnowledgeBase, catalog: &EntityCatalog, max_props: usize) -> Result<Vec<Description>> {
    if kb.is_empty() {
        return Err(Error::Invalid("knowledge base is empty".into()));
    }
    let max_props = max_props.min(MAX_PROPERTIES);
    let entities = kb.entities();
    let mut out = Vec::new();
    for &target in &entities {
        let props = properties_of(kb, target);
        let mut found: Vec<Vec<usize>> = Vec::new();
        for size in 1..=max_props.min(props.len()) {
            for combo in combinations(props.len(), size) {
                if found.iter().any(|f| f.iter().all(|i| combo.contains(i))) {
                    continue;
                }
                let chosen: Vec<&Property> = combo.iter().map(|&i| &props[i]).collect();
                if satisfying(kb, &entities, &chosen) == [target] {
                    found.push(combo);
                }
            }
        }
        for combo in found {
            let properties: Vec<Property> = combo.iter().map(|&i| props[i].clone()).collect();
            let text = render(kb, catalog, &entities, &properties);
            let tokens = tokenize(&text);
            debug_assert_eq!(tokens[1], HEAD_NOUN);
            out.push(Description {
                target,
                properties,
                text,
                tokens,
                head_index: 1,
            });
        }
    }
    for d in &out {
        let refs: Vec<&Property> = d.properties.iter().collect();
        if satisfying(kb, &entities, &refs) != [d.target] {
            return Err(Error::Invalid(format!("description {:?} is not unique", d.text)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SpeakerMode {
    /// The catalog's UNKNOWN entity.
    Unknown,
    All,
    Main,
    Random,
    /// Zero speaker vector.
    None,
}

impl SpeakerMode {
    pub const PROBE_MODES: [SpeakerMode; 4] = [SpeakerMode::All, SpeakerMode::Main, SpeakerMode::Random, SpeakerMode::None];

    pub fn label(self) -> &'static str {
        match self {
            SpeakerMode::Unknown => "unknown",
            SpeakerMode::All => "all",
            SpeakerMode::Main => "main",
            SpeakerMode::Random => "random",
            SpeakerMode::None => "none",
        }
    }
}

impl fmt::Display for SpeakerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SpeakerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SpeakerMode::Unknown, SpeakerMode::All, SpeakerMode::Main, SpeakerMode::Random, SpeakerMode::None]
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown speaker mode {s:?} (unknown, all, main, random, none)")))
    }
}

/// Speaker ids fed with probe text under `mode`.
pub fn probe_speakers(model: &ModelBundle, mode: SpeakerMode, rng: &mut ChaCha8Rng) -> Result<Vec<EntityId>> {
    Ok(match mode {
        SpeakerMode::Unknown => vec![model
            .meta
            .unknown
            .ok_or_else(|| Error::Unsupported("model was trained without an UNKNOWN entity".into()))?],
        SpeakerMode::All => (0..model.num_entities()).collect(),
        SpeakerMode::Main => model.meta.mains.clone(),
        SpeakerMode::Random => vec![rng.gen_range(0..model.num_entities())],
        SpeakerMode::None => Vec::new(),
    })
}

fn single_utterance(model: &ModelBundle, tokens: &[String], speakers: &[EntityId], target: usize) -> SceneInput {
    SceneInput {
        tokens: tokens.iter().map(|t| model.vocab.id(t)).collect(),
        speakers: vec![speakers.to_vec(); tokens.len()],
        targets: vec![target],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkRecord {
    pub text: String,
    pub target: EntityId,
    pub predicted: EntityId,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub records: Vec<LinkRecord>,
    pub accuracy: f64,
}

/// Feeds each description as a one-utterance scene and reads the
/// prediction at the head noun.
pub fn link_descriptions(model: &ModelBundle, descriptions: &[Description], mode: SpeakerMode, seed: u64) -> Result<LinkReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(descriptions.len());
    for d in descriptions {
        let speakers = probe_speakers(model, mode, &mut rng)?;
        let input = single_utterance(model, &d.tokens, &speakers, d.head_index);
        let mut tape = Tape::new();
        let tr = model.forward_scene(&mut tape, &input, usize::MAX, 0, None, false)?;
        let predicted = argmax(tape.value(tr.outputs[0]));
        records.push(LinkRecord {
            text: d.text.clone(),
            target: d.target,
            predicted,
            correct: predicted == d.target,
        });
    }
    let accuracy = if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64
    };
    Ok(LinkReport { records, accuracy })
}

/// Query vector at the final token of `phrase` fed as one utterance.
pub fn attribute_value_repr(model: &ModelBundle, phrase: &str, speakers: &[EntityId]) -> Result<Vec<f64>> {
    if !model.kind().has_query() {
        return Err(Error::Unsupported(format!("{} has no query vector", model.kind())));
    }
    let tokens: Vec<String> = phrase.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Error::Invalid("empty attribute phrase".into()));
    }
    let input = single_utterance(model, &tokens, speakers, tokens.len() - 1);
    let mut tape = Tape::new();
    let tr = model.forward_scene(&mut tape, &input, usize::MAX, 0, None, false)?;
    let q = tr.queries[0].expect("query models record q");
    Ok(tape.value(q).to_vec())
}

/// 1-based rank of `gold` when `scores` are sorted descending, earlier
/// candidates first on ties.
pub fn rank_of(scores: &[f64], gold: usize) -> usize {
    let g = scores[gold];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > g || (s == g && i < gold))
        .count()
}

pub fn mean_reciprocal_rank(ranks: &[usize]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}

/// MRR of ranking each entity's gold value among `values` by cosine
/// between its embedding and each value vector.
pub fn value_ranking_mrr(embeddings: &Tensor, gold: &[(EntityId, usize)], values: &[Vec<f64>]) -> f64 {
    let ranks: Vec<usize> = gold
        .iter()
        .map(|&(e, g)| {
            let scores: Vec<f64> = values.iter().map(|v| cosine(embeddings.row(e), v)).collect();
            rank_of(&scores, g)
        })
        .collect();
    mean_reciprocal_rank(&ranks)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeMrr {
    pub attribute: String,
    pub candidates: usize,
    pub entities: usize,
    pub per_mode: Vec<(SpeakerMode, f64)>,
    pub best: (SpeakerMode, f64),
    pub random_baseline: f64,
}

pub fn attribute_mrr(model: &ModelBundle, kb: &KnowledgeBase, attribute: &str, seed: u64) -> Result<AttributeMrr> {
    let values = kb.attribute_values(attribute);
    if values.is_empty() {
        return Err(Error::Invalid(format!("attribute {attribute:?} not in the knowledge base")));
    }
    let gold: Vec<(EntityId, usize)> = kb
        .attributes()
        .filter(|(e, n, _)| *n == attribute && *e < model.num_entities())
        .map(|(e, _, v)| (e, values.binary_search(&v).expect("value listed")))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_mode = Vec::new();
    for mode in SpeakerMode::PROBE_MODES {
        let mut reprs = Vec::with_capacity(values.len());
        for v in &values {
            let speakers = probe_speakers(model, mode, &mut rng)?;
            reprs.push(attribute_value_repr(model, v, &speakers)?);
        }
        per_mode.push((mode, value_ranking_mrr(model.entity_embeddings(), &gold, &reprs)));
    }
    let best = per_mode
        .iter()
        .copied()
        .fold(per_mode[0], |b, x| if x.1 > b.1 { x } else { b });
    Ok(AttributeMrr {
        attribute: attribute.to_string(),
        candidates: values.len(),
        entities: gold.len(),
        per_mode,
        best,
        random_baseline: harmonic_mrr(values.len()),
    })
}

/// Relations with at least two subject/object pairs, with their pairs.
pub fn eligible_relations(kb: &KnowledgeBase) -> BTreeMap<String, Vec<(EntityId, EntityId)>> {
    let mut m: BTreeMap<String, Vec<(EntityId, EntityId)>> = BTreeMap::new();
    for r in kb.relations() {
        m.entry(r.name.clone()).or_default().push((r.subject, r.object));
    }
    m.retain(|_, v| v.len() >= 2);
    m
}

fn diff(emb: &Tensor, a: EntityId, b: EntityId) -> Vec<f64> {
    emb.row(a).iter().zip(emb.row(b)).map(|(x, y)| x - y).collect()
}

/// Mean cosine between `a − b` and each exemplar offset `x − y`, excluding
/// the target pair, for every eligible relation; highest first, ties by
/// name.
pub fn relation_scores(embeddings: &Tensor, kb: &KnowledgeBase, target: (EntityId, EntityId)) -> Result<Vec<(String, f64)>> {
    let n = embeddings.rows();
    if target.0 >= n || target.1 >= n {
        return Err(Error::Invalid(format!("target pair {target:?} outside {n} embedding rows")));
    }
    let t = diff(embeddings, target.0, target.1);
    let mut out = Vec::new();
    for (name, pairs) in eligible_relations(kb) {
        let ex: Vec<&(EntityId, EntityId)> = pairs.iter().filter(|&&p| p != target && p.0 < n && p.1 < n).collect();
        if ex.is_empty() {
            continue;
        }
        let s = ex.iter().map(|&&(x, y)| cosine(&t, &diff(embeddings, x, y))).sum::<f64>() / ex.len() as f64;
        out.push((name, s));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationMrr {
    pub candidates: usize,
    pub targets: usize,
    pub mrr: f64,
    pub random_baseline: f64,
}

/// Every pair of every eligible relation is a target whose gold relation
/// is ranked among all eligible relations.
pub fn relation_mrr(embeddings: &Tensor, kb: &KnowledgeBase) -> Result<RelationMrr> {
    let eligible = eligible_relations(kb);
    if eligible.is_empty() {
        return Err(Error::Invalid("no relation type has two or more pairs".into()));
    }
    let mut ranks = Vec::new();
    for (name, pairs) in &eligible {
        for &p in pairs {
            let scores = relation_scores(embeddings, kb, p)?;
            let pos = scores
                .iter()
                .position(|(n, _)| n == name)
                .expect("gold relation is eligible");
            ranks.push(pos + 1);
        }
    }
    Ok(RelationMrr {
        candidates: eligible.len(),
        targets: ranks.len(),
        mrr: mean_reciprocal_rank(&ranks),
        random_baseline: harmonic_mrr(eligible.len()),
    })
}

/// Expected MRR of a uniformly random ranking of `n` candidates, `H_n / n`.
pub fn harmonic_mrr(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (1..=n).map(|k| 1.0 / k as f64).sum::<f64>() / n as f64
}

/// Monte-Carlo MRR of shuffled rankings of `n` candidates with a fixed
/// gold item.
pub fn random_ranking_mrr(n: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut ranks = Vec::with_capacity(trials);
    for _ in 0..trials {
        order.shuffle(&mut rng);
        ranks.push(order.iter().position(|&c| c == 0).unwrap() + 1);
    }
    mean_reciprocal_rank(&ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_catalog;
    use crate::kb::parse_kb;
    use std::path::Path;

    fn catalog() -> EntityCatalog {
        parse_catalog(
            "0\tRoss Geller\t1\n1\tMonica Geller\t1\n2\tChandler Bing\t1\n3\tJoey Tribbiani\t1\n4\tUnknown\t0\n",
            Path::new("c"),
        )
        .unwrap()
    }

    fn kb(text: &str) -> KnowledgeBase {
        parse_kb(text, &catalog(), Path::new("k")).unwrap()
    }

    #[test]
    fn definite_job() {
        let k = kb("attr\t0\tjob\tpaleontologist\nattr\t1\tjob\tchef\nattr\t2\tjob\tchef\n");
        let d = generate_descriptions(&k, &catalog(), 3).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].text, "This person is the paleontologist.");
        assert_eq!(d[0].tokens[d[0].head_index], "person");
    }

    #[test]
    fn two_men_one_woman() {
        let k = kb("attr\t0\tgender\tman\nattr\t1\tgender\twoman\nattr\t2\tgender\tman\nattr\t0\tjob\tactor\nattr\t2\tjob\tengineer\n");
        let d = generate_descriptions(&k, &catalog(), 3).unwrap();
        let woman: Vec<_> = d.iter().filter(|x| x.target == 1).collect();
        assert_eq!(woman.len(), 1);
        assert_eq!(woman[0].text, "This person is the woman.");
        for x in d.iter().filter(|x| x.target != 1) {
            assert!(!x.properties.contains(&Property::Attribute {
                name: "gender".into(),
                value: "man".into()
            }) || x.properties.len() > 1);
        }
        let k2 = kb("attr\t0\tgender\tman\nattr\t1\tgender\twoman\nattr\t2\tgender\tman\nattr\t0\tjob\tactor\nattr\t2\tjob\tactor\nattr\t0\tage\told\nattr\t1\tage\told\n");
        let d2 = generate_descriptions(&k2, &catalog(), 3).unwrap();
        let ross: Vec<_> = d2.iter().filter(|x| x.target == 0).collect();
        assert_eq!(ross[0].text, "This person is an old and a man.");
        assert_eq!(ross[0].properties.len(), 2);
    }

    #[test]
    fn relation_rendering() {
        let k = kb("rel\t0\tbrother\t1\nrel\t2\tfriend\t1\nrel\t3\tfriend\t1\n");
        let d = generate_descriptions(&k, &catalog(), 3).unwrap();
        assert_eq!(d[0].text, "This person is the brother of Monica Geller.");
        assert!(d.iter().all(|x| x.target != 2 && x.target != 3));
    }

    /// Exhaustive oracle: every subset of every property in the KB.
    fn brute_force(k: &KnowledgeBase, max: usize) -> BTreeSet<(EntityId, Vec<Property>)> {
        let ents = k.entities();
        let all: BTreeSet<Property> = ents.iter().flat_map(|&e| properties_of(k, e)).collect();
        let all: Vec<Property> = all.into_iter().collect();
        let mut unique: Vec<(EntityId, Vec<Property>)> = Vec::new();
        for size in 1..=max {
            for c in combinations(all.len(), size) {
                let props: Vec<Property> = c.iter().map(|&i| all[i].clone()).collect();
                let sat: Vec<EntityId> = ents.iter().copied().filter(|&e| props.iter().all(|p| p.holds(k, e))).collect();
                if sat.len() == 1 {
                    unique.push((sat[0], props));
                }
            }
        }
        unique
            .iter()
            .filter(|(e, p)| {
                !unique
                    .iter()
                    .any(|(e2, q)| e2 == e && q.len() < p.len() && q.iter().all(|x| p.contains(x)))
            })
            .cloned()
            .collect()
    }

    #[test]
    fn generator_matches_exhaustive_oracle() {
        let texts = [
            "attr\t0\tgender\tman\nattr\t1\tgender\twoman\nattr\t2\tgender\tman\nattr\t0\tjob\tchef\nattr\t1\tjob\tchef\nattr\t2\tjob\tactor\n",
            "attr\t0\ta\tx\nattr\t1\ta\tx\nattr\t2\ta\tx\nattr\t0\tb\ty\nattr\t1\tb\ty\nattr\t2\tb\tz\nattr\t0\tc\tu\nattr\t1\tc\tv\nattr\t2\tc\tv\n",
            "attr\t0\tgender\tman\nattr\t1\tgender\twoman\nattr\t2\tgender\tman\nrel\t0\tbrother\t1\nrel\t2\tfriend\t1\nrel\t1\tsister\t0\nattr\t3\tgender\tman\nrel\t3\tfriend\t1\nattr\t3\tjob\tactor\n",
        ];
        for t in texts {
            let k = kb(t);
            for max in 1..=3 {
                let got: BTreeSet<(EntityId, Vec<Property>)> = generate_descriptions(&k, &catalog(), max)
                    .unwrap()
                    .into_iter()
                    .map(|d| (d.target, d.properties))
                    .collect();
                assert_eq!(got, brute_force(&k, max), "{t:?} max {max}");
            }
        }
    }

    #[test]
    fn ranks_and_mrr() {
        assert_eq!(rank_of(&[0.1, 0.9, 0.5], 2), 2);
        assert_eq!(rank_of(&[0.5, 0.5], 1), 2);
        assert_eq!(mean_reciprocal_rank(&[1, 1, 1]), 1.0);
        assert_eq!(mean_reciprocal_rank(&[4, 4]), 0.25);
        assert!((harmonic_mrr(17) - 0.2023).abs() < 5e-5);
        assert_eq!(harmonic_mrr(2), 0.75);
    }

    #[test]
    fn monte_carlo_random_mrr() {
        for n in [2, 17, 24] {
            assert!((random_ranking_mrr(n, 100_000, 7) - harmonic_mrr(n)).abs() < 0.01);
        }
    }

    #[test]
    fn relation_score_cases() {
        let e = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let k = kb("rel\t0\tbrother\t1\nrel\t2\tbrother\t1\nrel\t3\tbrother\t1\n");
        let s = relation_scores(&e, &k, (0, 1)).unwrap();
        assert_eq!(s, vec![("brother".to_string(), 1.0)]);
        let o = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(relation_scores(&o, &k, (0, 1)).unwrap()[0].1, 0.0);
        let same = Tensor::from_rows(&vec![vec![1.0, 1.0]; 4]).unwrap();
        assert_eq!(relation_scores(&same, &k, (0, 1)).unwrap()[0].1, 0.0);
    }

    #[test]
    fn relation_ranking_matches_direct_formula() {
        let e = Tensor::from_rows(&[
            vec![0.3, -1.2, 0.5],
            vec![1.1, 0.4, -0.7],
            vec![-0.2, 0.9, 1.3],
            vec![0.8, 0.1, 0.2],
            vec![-1.0, -0.5, 0.6],
        ])
        .unwrap();
        let k = kb("rel\t0\tbrother\t1\nrel\t2\tbrother\t3\nrel\t1\tsister\t4\nrel\t3\tsister\t0\nrel\t4\tfriend\t2\nrel\t0\tfriend\t3\nrel\t2\tboss\t0\n");
        let d = |a: usize, b: usize| -> Vec<f64> { (0..3).map(|i| e.row(a)[i] - e.row(b)[i]).collect() };
        let t = d(0, 1);
        let mut expect = vec![
            ("brother".to_string(), cosine(&t, &d(2, 3))),
            ("friend".to_string(), (cosine(&t, &d(4, 2)) + cosine(&t, &d(0, 3))) / 2.0),
            ("sister".to_string(), (cosine(&t, &d(1, 4)) + cosine(&t, &d(3, 0))) / 2.0),
        ];
        expect.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let got = relation_scores(&e, &k, (0, 1)).unwrap();
        assert_eq!(got.len(), 3);
        for (g, x) in got.iter().zip(&expect) {
            assert_eq!(g.0, x.0);
            assert!((g.1 - x.1).abs() < 1e-12);
        }
        let m = relation_mrr(&e, &k).unwrap();
        assert_eq!((m.candidates, m.targets), (3, 6));
        assert!(m.mrr > 0.0 && m.mrr <= 1.0);
    }

    #[test]
    fn value_ranking_oracle() {
        let emb = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let values = vec![vec![1.0, 0.1], vec![0.1, 1.0], vec![-1.0, 0.0]];
        assert_eq!(value_ranking_mrr(&emb, &[(0, 0), (1, 1)], &values), 1.0);
        let r = value_ranking_mrr(&emb, &[(0, 2), (1, 0)], &values);
        assert!((r - (1.0 / 3.0 + 1.0 / 2.0) / 2.0).abs() < 1e-12);
    }
}
