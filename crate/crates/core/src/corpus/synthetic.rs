//! Deterministic synthetic dialogue corpora with Zipf-distributed referents.
//!
//! Each utterance carries one referent drawn from a Zipf law over the
//! characters (rank = id + 1) and one surface realization:
//!
//! * first person: the referent speaks and says `I`/`me`/`my`...
//! * second person: the referent speaks the previous utterance and is then
//!   addressed with `you`/`your`...
//! * third person: the referent is named and then picked up with a pronoun
//!   agreeing with its gender
//! * proper noun: the referent's first name
//! * common noun: `the <job>`, for referents whose job is unique
//!
//! The surrounding words come from a closed filler lexicon, so the only
//! referential signal is the speaker structure, names, pronoun gender and
//! job nouns.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::kv::KeyValues;

use super::{Corpus, EntityCatalog, EntityId, EntityInfo, Episode, Mention, Scene, Utterance, UNKNOWN_NAME};

pub const GENDER: &str = "gender";
pub const JOB: &str = "job";

const FILLER: &[&str] = &[
    "about", "after", "again", "all", "always", "and", "another", "anything", "apartment", "around", "ask", "away",
    "baby", "back", "bad", "be", "because", "bed", "before", "believe", "best", "better", "big", "birthday", "book",
    "box", "bring", "but", "buy", "call", "can", "car", "care", "chair", "change", "check", "coffee", "come", "cook",
    "could", "couch", "crazy", "cup", "date", "day", "did", "dinner", "do", "door", "down", "dress", "drink", "eat",
    "enough", "even", "ever", "every", "feel", "fine", "first", "food", "for", "forget", "friend", "from", "fun",
    "game", "get", "gift", "give", "go", "going", "gonna", "good", "great", "guess", "guy", "happy", "hate", "have",
    "hear", "help", "here", "hey", "home", "hope", "hour", "house", "idea", "in", "is", "job", "just", "keep", "kind",
    "kiss", "know", "last", "late", "leave", "let", "like", "listen", "little", "live", "long", "look", "lot", "love",
    "make", "maybe", "mean", "meet", "minute", "money", "morning", "much", "need", "never", "new", "next", "nice",
    "night", "no", "not", "nothing", "now", "of", "oh", "okay", "on", "one", "only", "or", "out", "party", "people",
    "phone", "pizza", "play", "please", "pretty", "put", "really", "remember", "right", "room", "said", "say", "see",
    "seem", "should", "show", "sleep", "so", "some", "something", "sorry", "start", "still", "stop", "stuff", "sure",
    "take", "talk", "tell", "thank", "that", "thing", "think", "this", "time", "to", "today", "together", "tomorrow",
    "tonight", "totally", "try", "turn", "two", "uh", "um", "up", "wait", "want", "was", "watch", "way", "we", "well",
    "what", "when", "where", "why", "with", "work", "would", "wow", "yeah", "yes", "yet",
];

pub const JOBS: [&str; 20] = [
    "paleontologist", "chef", "actor", "waitress", "masseuse", "nurse", "doctor", "lawyer", "teacher", "musician",
    "architect", "writer", "dentist", "banker", "student", "barista", "engineer", "photographer", "mechanic", "pilot",
];

const FIRST_FORMS: [(&str, u32); 5] = [("I", 6), ("me", 2), ("my", 3), ("myself", 1), ("mine", 1)];
const SECOND_FORMS: [(&str, u32); 4] = [("you", 6), ("your", 3), ("yourself", 1), ("yours", 1)];
const HE_FORMS: [(&str, u32); 4] = [("he", 5), ("him", 2), ("his", 2), ("himself", 1)];
const SHE_FORMS: [(&str, u32); 4] = [("she", 5), ("her", 3), ("hers", 1), ("herself", 1)];

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 5] = ["", "n", "r", "l", "s"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MentionMix {
    pub first: f64,
    pub second: f64,
    pub third: f64,
    pub proper: f64,
    pub common: f64,
}

impl Default for MentionMix {
    fn default() -> Self {
        MentionMix {
            first: 0.44,
            second: 0.12,
            third: 0.12,
            proper: 0.20,
            common: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Characters; an extra UNKNOWN entity is always appended.
    pub entities: usize,
    pub zipf_exponent: f64,
    pub scenes: usize,
    pub episodes: usize,
    pub min_utterances: usize,
    pub max_utterances: usize,
    /// Filler words per utterance, around the mention.
    pub min_filler: usize,
    pub max_filler: usize,
    pub mix: MentionMix,
    pub multi_speaker_prob: f64,
    pub unknown_speaker_prob: f64,
    pub mains: usize,
    pub with_kb: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            entities: 40,
            zipf_exponent: 1.0,
            scenes: 40,
            episodes: 4,
            min_utterances: 10,
            max_utterances: 20,
            min_filler: 2,
            max_filler: 6,
            mix: MentionMix::default(),
            multi_speaker_prob: 0.02,
            unknown_speaker_prob: 0.03,
            mains: 6,
            with_kb: true,
        }
    }
}

const SPEC_KEYS: [&str; 18] = [
    "entities",
    "zipf_exponent",
    "scenes",
    "episodes",
    "min_utterances",
    "max_utterances",
    "min_filler",
    "max_filler",
    "mix_first",
    "mix_second",
    "mix_third",
    "mix_proper",
    "mix_common",
    "multi_speaker_prob",
    "unknown_speaker_prob",
    "mains",
    "with_kb",
    "seed",
];

impl SyntheticSpec {
    /// Reads a `key=value` spec; missing keys keep their defaults. A `seed`
    /// key is accepted and returned separately.
    pub fn from_kv_text(text: &str, path: &Path) -> Result<(Self, Option<u64>)> {
        let kv = KeyValues::parse(text, path)?;
        kv.reject_unknown(&SPEC_KEYS)?;
        let mut s = SyntheticSpec::default();
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        set!(s.entities, "entities");
        set!(s.zipf_exponent, "zipf_exponent");
        set!(s.scenes, "scenes");
        set!(s.episodes, "episodes");
        set!(s.min_utterances, "min_utterances");
        set!(s.max_utterances, "max_utterances");
        set!(s.min_filler, "min_filler");
        set!(s.max_filler, "max_filler");
        set!(s.mix.first, "mix_first");
        set!(s.mix.second, "mix_second");
        set!(s.mix.third, "mix_third");
        set!(s.mix.proper, "mix_proper");
        set!(s.mix.common, "mix_common");
        set!(s.multi_speaker_prob, "multi_speaker_prob");
        set!(s.unknown_speaker_prob, "unknown_speaker_prob");
        set!(s.mains, "mains");
        if let Some(b) = kv.get_bool("with_kb")? {
            s.with_kb = b;
        }
        Ok((s, kv.get("seed")?))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.entities < 2 {
            return bad("need at least 2 entities");
        }
        if self.scenes == 0 || self.episodes == 0 || self.episodes > self.scenes {
            return bad("need scenes >= episodes >= 1");
        }
        if self.min_utterances == 0 || self.min_utterances > self.max_utterances {
            return bad("need 1 <= min_utterances <= max_utterances");
        }
        if self.min_filler > self.max_filler {
            return bad("min_filler exceeds max_filler");
        }
        if self.mains > self.entities {
            return bad("more mains than entities");
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be finite and non-negative");
        }
        let m = &self.mix;
        let w = [m.first, m.second, m.third, m.proper, m.common];
        if w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return bad("mention mix weights must be non-negative with a positive sum");
        }
        if !self.with_kb && (m.third > 0.0 || m.common > 0.0) {
            return bad("third-person and common-noun mentions need a knowledge base (with_kb=true)");
        }
        for p in [self.multi_speaker_prob, self.unknown_speaker_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub kb: KnowledgeBase,
    /// First-name token of each character (not of UNKNOWN).
    pub first_names: Vec<String>,
}

fn pick<'a, R: Rng>(rng: &mut R, forms: &[(&'a str, u32)]) -> &'a str {
    forms.choose_weighted(rng, |f| f.1).expect("nonempty forms").0
}

fn syllable_name<R: Rng>(rng: &mut R, syllables: usize) -> String {
    let mut s = String::new();
    for i in 0..syllables {
        s.push_str(ONSETS.choose(rng).unwrap());
        s.push_str(VOWELS.choose(rng).unwrap());
        if i + 1 == syllables {
            s.push_str(CODAS.choose(rng).unwrap());
        }
    }
    let mut c = s.chars();
    let first = c.next().unwrap().to_uppercase().collect::<String>();
    first + c.as_str()
}

fn unique_name<R: Rng>(rng: &mut R, taken: &mut HashSet<String>, syllables: usize) -> String {
    loop {
        let n = syllable_name(rng, syllables);
        if taken.insert(n.clone()) {
            return n;
        }
    }
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    rng: ChaCha8Rng,
    zipf: WeightedIndex<f64>,
    mix: WeightedIndex<f64>,
    genders: Vec<&'static str>,
    unique_job: Vec<Option<&'static str>>,
    first_names: Vec<String>,
    unknown: EntityId,
}

impl Generator<'_> {
    fn referent(&mut self) -> EntityId {
        self.zipf.sample(&mut self.rng)
    }

    fn other_than(&mut self, e: EntityId) -> EntityId {
        loop {
            let o = self.referent();
            if o != e {
                return o;
            }
        }
    }

    fn filler(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| FILLER.choose(&mut self.rng).unwrap().to_string()).collect()
    }

    fn filler_split(&mut self) -> (Vec<String>, Vec<String>) {
        let total = self.rng.gen_range(self.spec.min_filler..=self.spec.max_filler);
        let before = self.rng.gen_range(0..=total);
        (self.filler(before), self.filler(total - before))
    }

    /// Utterance `before ++ span ++ after` with one mention over `span`.
    fn with_span(&mut self, speakers: Vec<EntityId>, span: Vec<String>, entity: EntityId) -> Utterance {
        let (mut tokens, after) = self.filler_split();
        let start = tokens.len();
        let end = start + span.len() - 1;
        tokens.extend(span);
        tokens.extend(after);
        Utterance {
            speakers,
            tokens,
            mentions: vec![Mention { start, end, entity }],
        }
    }

    fn scene(&mut self, id: String) -> Scene {
        let target = self.rng.gen_range(self.spec.min_utterances..=self.spec.max_utterances);
        let mut utterances: Vec<Utterance> = Vec::new();
        let mut mentioned = 0;
        while mentioned < target {
            if self.rng.gen_bool(self.spec.unknown_speaker_prob) {
                let n = self.rng.gen_range(self.spec.min_filler.max(1)..=self.spec.max_filler.max(1));
                let tokens = self.filler(n);
                utterances.push(Utterance {
                    speakers: vec![self.unknown],
                    tokens,
                    mentions: vec![],
                });
            }
            let e = self.referent();
            let mut kind = self.mix.sample(&mut self.rng);
            if kind == 4 && self.unique_job[e].is_none() {
                kind = 3;
            }
            let mut u = match kind {
                0 => {
                    let form = pick(&mut self.rng, &FIRST_FORMS).to_string();
                    self.with_span(vec![e], vec![form], e)
                }
                1 => {
                    let last_is_e = utterances.last().is_some_and(|u| u.speakers == [e]);
                    if !last_is_e {
                        let n = self.rng.gen_range(self.spec.min_filler.max(1)..=self.spec.max_filler.max(1));
                        let tokens = self.filler(n);
                        utterances.push(Utterance {
                            speakers: vec![e],
                            tokens,
                            mentions: vec![],
                        });
                    }
                    let speaker = self.other_than(e);
                    let form = pick(&mut self.rng, &SECOND_FORMS).to_string();
                    self.with_span(vec![speaker], vec![form], e)
                }
                2 => {
                    let speaker = self.other_than(e);
                    let forms = if self.genders[e] == "woman" { &SHE_FORMS } else { &HE_FORMS };
                    let pron = pick(&mut self.rng, forms).to_string();
                    let gap = self.rng.gen_range(1..=2);
                    let mut span = vec![self.first_names[e].clone()];
                    span.extend(self.filler(gap));
                    span.push(pron);
                    let mut u = self.with_span(vec![speaker], span, e);
                    let m = u.mentions[0].clone();
                    u.mentions = vec![
                        Mention {
                            start: m.start,
                            end: m.start,
                            entity: e,
                        },
                        Mention {
                            start: m.end,
                            end: m.end,
                            entity: e,
                        },
                    ];
                    u
                }
                3 => {
                    let speaker = self.other_than(e);
                    let name = self.first_names[e].clone();
                    self.with_span(vec![speaker], vec![name], e)
                }
                _ => {
                    let speaker = self.other_than(e);
                    let job = self.unique_job[e].unwrap().to_string();
                    self.with_span(vec![speaker], vec!["the".into(), job], e)
                }
            };
            if self.rng.gen_bool(self.spec.multi_speaker_prob) {
                let extra = self.other_than(u.speakers[0]);
                u.speakers.push(extra);
            }
            mentioned += 1;
            utterances.push(u);
        }
        Scene { id, utterances }
    }
}

/// Generates a corpus and matching knowledge base, deterministic in `seed`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.entities;

    let mut taken = HashSet::new();
    let first_names: Vec<String> = (0..n).map(|_| unique_name(&mut rng, &mut taken, 2)).collect();
    let genders: Vec<&'static str> = (0..n).map(|_| if rng.gen_bool(0.5) { "woman" } else { "man" }).collect();

    // families of 1-3 share a surname; siblings get brother/sister relations
    let mut order: Vec<EntityId> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut families: Vec<Vec<EntityId>> = Vec::new();
    let mut i = 0;
    while i < n {
        let size = rng.gen_range(1..=3).min(n - i);
        families.push(order[i..i + size].to_vec());
        i += size;
    }
    let mut surname = vec![String::new(); n];
    for fam in &families {
        let s = unique_name(&mut rng, &mut taken, 2);
        for &e in fam {
            surname[e] = s.clone();
        }
    }

    let mut entities: Vec<EntityInfo> = (0..n)
        .map(|e| EntityInfo {
            id: e,
            name: format!("{} {}", first_names[e], surname[e]),
            is_main: e < spec.mains,
        })
        .collect();
    entities.push(EntityInfo {
        id: n,
        name: UNKNOWN_NAME.to_string(),
        is_main: false,
    });
    let catalog = EntityCatalog::new(entities)?;

    let mut kb = KnowledgeBase::new();
    let mut unique_job = vec![None; n];
    if spec.with_kb {
        let mut jobs: Vec<Option<&'static str>> = vec![None; n];
        for (e, job) in jobs.iter_mut().enumerate() {
            kb.set_attribute(e, GENDER, genders[e])?;
            if rng.gen_bool(0.7) {
                *job = Some(*JOBS.choose(&mut rng).unwrap());
            }
        }
        let mut job_count: BTreeMap<&str, usize> = BTreeMap::new();
        for (e, j) in jobs.iter().enumerate() {
            if let Some(j) = j {
                kb.set_attribute(e, JOB, j)?;
                *job_count.entry(j).or_default() += 1;
            }
        }
        for (e, j) in jobs.iter().enumerate() {
            unique_job[e] = j.filter(|j| job_count[j] == 1);
        }
        for fam in &families {
            for &a in fam {
                for &b in fam {
                    if a != b {
                        let rel = if genders[a] == "woman" { "sister" } else { "brother" };
                        kb.add_relation(a, rel, b);
                    }
                }
            }
        }
        // a few couples across families
        for _ in 0..n / 5 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b && genders[a] != genders[b] && surname[a] != surname[b] {
                let (h, w) = if genders[a] == "man" { (a, b) } else { (b, a) };
                kb.add_relation(h, "husband", w);
                kb.add_relation(w, "wife", h);
            }
        }
    }

    let zipf = WeightedIndex::new((1..=n).map(|r| (r as f64).powf(-spec.zipf_exponent))).expect("positive weights");
    let m = spec.mix;
    let mix = WeightedIndex::new([m.first, m.second, m.third, m.proper, m.common]).expect("validated mix");
    let mut gen = Generator {
        spec,
        rng,
        zipf,
        mix,
        genders,
        unique_job,
        first_names: first_names.clone(),
        unknown: n,
    };

    let per_episode = spec.scenes.div_ceil(spec.episodes);
    let mut episodes: Vec<Episode> = Vec::new();
    for s in 0..spec.scenes {
        let ep = s / per_episode;
        if episodes.len() <= ep {
            episodes.push(Episode {
                id: format!("e{:02}", ep + 1),
                scenes: Vec::new(),
            });
        }
        let scene = gen.scene(format!("s{:03}", s + 1));
        episodes[ep].scenes.push(scene);
    }

    let corpus = Corpus { episodes, catalog };
    corpus.validate()?;
    Ok(SyntheticData { corpus, kb, first_names })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::entity_frequencies;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            entities: 5,
            scenes: 10,
            episodes: 2,
            mains: 2,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic_corpus(&small(), 7).unwrap();
        let b = generate_synthetic_corpus(&small(), 7).unwrap();
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        assert_eq!(a.corpus.catalog.to_tsv(), b.corpus.catalog.to_tsv());
        assert_eq!(a.kb.to_tsv(), b.kb.to_tsv());
        let c = generate_synthetic_corpus(&small(), 8).unwrap();
        assert_ne!(a.corpus.to_jsonl(), c.corpus.to_jsonl());
    }

    #[test]
    fn first_person_refers_to_a_speaker() {
        let spec = SyntheticSpec {
            mix: MentionMix {
                first: 1.0,
                second: 0.0,
                third: 0.0,
                proper: 0.0,
                common: 0.0,
            },
            multi_speaker_prob: 0.3,
            ..small()
        };
        let d = generate_synthetic_corpus(&spec, 7).unwrap();
        let mut n = 0;
        for sc in d.corpus.scenes() {
            for u in &sc.utterances {
                for m in &u.mentions {
                    assert!(u.speakers.contains(&m.entity));
                    n += 1;
                }
            }
        }
        assert!(n > 0);
    }

    #[test]
    fn third_person_agrees_with_gender() {
        let d = generate_synthetic_corpus(&SyntheticSpec::default(), 3).unwrap();
        let mut checked = 0;
        for sc in d.corpus.scenes() {
            for u in &sc.utterances {
                for m in &u.mentions {
                    let tok = u.tokens[m.end].as_str();
                    let g = d.kb.attribute(m.entity, GENDER).unwrap();
                    if SHE_FORMS.iter().any(|f| f.0 == tok) {
                        assert_eq!(g, "woman");
                        checked += 1;
                    } else if HE_FORMS.iter().any(|f| f.0 == tok) {
                        assert_eq!(g, "man");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn names_are_entity_specific() {
        let d = generate_synthetic_corpus(&SyntheticSpec::default(), 3).unwrap();
        let mut owner: BTreeMap<&str, EntityId> = BTreeMap::new();
        for sc in d.corpus.scenes() {
            for u in &sc.utterances {
                for m in &u.mentions {
                    let tok = u.tokens[m.end].as_str();
                    if d.first_names.iter().any(|n| n == tok) {
                        assert_eq!(*owner.entry(tok).or_insert(m.entity), m.entity);
                    }
                }
            }
        }
        assert!(!owner.is_empty());
    }

    #[test]
    fn inconsistent_spec() {
        let spec = SyntheticSpec {
            with_kb: false,
            ..small()
        };
        assert!(generate_synthetic_corpus(&spec, 1).is_err());
        let spec = SyntheticSpec {
            with_kb: false,
            mix: MentionMix {
                third: 0.0,
                common: 0.0,
                ..Default::default()
            },
            ..small()
        };
        let d = generate_synthetic_corpus(&spec, 1).unwrap();
        assert!(d.kb.is_empty());
    }

    #[test]
    fn zipf_rank_frequency_slope() {
        // least-squares slope of log(count) on log(rank), ranks by observed count
        let spec = SyntheticSpec {
            entities: 50,
            zipf_exponent: 1.0,
            scenes: 400,
            episodes: 10,
            ..Default::default()
        };
        let d = generate_synthetic_corpus(&spec, 11).unwrap();
        let freq = entity_frequencies(&d.corpus);
        let mut counts: Vec<f64> = freq.counts()[..50].iter().map(|&c| c as f64).collect();
        counts.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(counts.iter().all(|&c| c > 0.0));
        let xs: Vec<f64> = (1..=50).map(|r| (r as f64).ln()).collect();
        let ys: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
        let mx = xs.iter().sum::<f64>() / 50.0;
        let my = ys.iter().sum::<f64>() / 50.0;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        assert!((slope + 1.0).abs() < 0.15, "slope {slope}");
    }

    #[test]
    fn spec_from_kv() {
        let (s, seed) = SyntheticSpec::from_kv_text("entities=12\nzipf_exponent=1.2\nseed=5\n", Path::new("s")).unwrap();
        assert_eq!(s.entities, 12);
        assert_eq!(seed, Some(5));
        assert!(SyntheticSpec::from_kv_text("bogus=1\n", Path::new("s")).is_err());
    }
}
