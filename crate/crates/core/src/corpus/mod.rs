//! Speaker-annotated dialogue corpora: episodes of scenes of utterances,
//! with entity mentions over pre-tokenized text.
//!
//! The on-disk corpus is one JSON record per line, one scene per record:
//!
//! ```text
//! {"episode_id":"e01","scene_id":"s001","utterances":[{"speakers":[3],"tokens":["I","know"],"mentions":[{"start":0,"end":0,"entity":3}]}]}
//! ```
//!
//! The entity catalog lives in a separate tab-separated file with one
//! `id<TAB>name<TAB>is_main` line per entity (see [`EntityCatalog`]).

mod catalog;
mod chunk;
mod frequency;
pub mod synthetic;
mod vocab;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catalog::{load_catalog, parse_catalog, EntityCatalog, EntityInfo, UNKNOWN_NAME};
pub use chunk::{chunk_ranges, chunk_scenes, Batch, SceneChunks};
pub use frequency::{entity_frequencies, FrequencyBucket, FrequencyTable};
pub use vocab::{build_vocabulary, Vocabulary, PAD, UNK};

pub type EntityId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    /// First token of the span, inclusive.
    pub start: usize,
    /// Last token of the span, inclusive; the mention is resolved here.
    pub end: usize,
    pub entity: EntityId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speakers: Vec<EntityId>,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<Mention>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scene {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub id: String,
    pub scenes: Vec<Scene>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub episodes: Vec<Episode>,
    pub catalog: EntityCatalog,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    episode_id: String,
    scene_id: String,
    utterances: Vec<Utterance>,
}

/// A mention located in the flattened token stream of its scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatMention {
    /// Index of the mention-final token in the scene stream.
    pub position: usize,
    pub utterance: usize,
    pub mention: Mention,
}

/// A scene as one token stream, each token carrying its utterance's
/// speakers.
#[derive(Debug, Clone)]
pub struct FlatScene<'a> {
    pub tokens: Vec<&'a str>,
    pub speakers: Vec<&'a [EntityId]>,
    pub mentions: Vec<FlatMention>,
}

impl Scene {
    pub fn num_tokens(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens.len()).sum()
    }

    pub fn num_mentions(&self) -> usize {
        self.utterances.iter().map(|u| u.mentions.len()).sum()
    }

    pub fn flatten(&self) -> FlatScene<'_> {
        let mut flat = FlatScene {
            tokens: Vec::with_capacity(self.num_tokens()),
            speakers: Vec::with_capacity(self.num_tokens()),
            mentions: Vec::new(),
        };
        for (ui, u) in self.utterances.iter().enumerate() {
            let offset = flat.tokens.len();
            for t in &u.tokens {
                flat.tokens.push(t);
                flat.speakers.push(&u.speakers);
            }
            for m in &u.mentions {
                flat.mentions.push(FlatMention {
                    position: offset + m.end,
                    utterance: ui,
                    mention: m.clone(),
                });
            }
        }
        flat.mentions.sort_by_key(|m| (m.position, m.mention.start));
        flat
    }
}

impl Corpus {
    pub fn scenes(&self) -> impl Iterator<Item = &Scene> {
        self.episodes.iter().flat_map(|e| e.scenes.iter())
    }

    pub fn num_scenes(&self) -> usize {
        self.episodes.iter().map(|e| e.scenes.len()).sum()
    }

    pub fn num_mentions(&self) -> usize {
        self.scenes().map(Scene::num_mentions).sum()
    }

    pub fn num_tokens(&self) -> usize {
        self.scenes().map(Scene::num_tokens).sum()
    }

    /// Scene boundaries are where dynamic entity memory is reset, so this is
    /// also the number of memory reset points.
    pub fn reset_points(&self) -> usize {
        self.num_scenes()
    }

    /// Builds a corpus holding only the scenes whose global index satisfies
    /// `keep`, preserving episode structure and dropping empty episodes.
    pub fn select_scenes(&self, keep: impl Fn(usize) -> bool) -> Corpus {
        let mut idx = 0;
        let mut episodes = Vec::new();
        for ep in &self.episodes {
            let mut scenes = Vec::new();
            for sc in &ep.scenes {
                if keep(idx) {
                    scenes.push(sc.clone());
                }
                idx += 1;
            }
            if !scenes.is_empty() {
                episodes.push(Episode { id: ep.id.clone(), scenes });
            }
        }
        Corpus {
            episodes,
            catalog: self.catalog.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for ep in &self.episodes {
            for sc in &ep.scenes {
                for (ui, u) in sc.utterances.iter().enumerate() {
                    validate_utterance(u, &self.catalog)
                        .map_err(|m| Error::Invalid(format!("episode {} scene {} utterance {ui}: {m}", ep.id, sc.id)))?;
                }
            }
        }
        Ok(())
    }

    /// Serializes the scene records, one per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ep in &self.episodes {
            for sc in &ep.scenes {
                let rec = SceneRecord {
                    episode_id: ep.id.clone(),
                    scene_id: sc.id.clone(),
                    utterances: sc.utterances.clone(),
                };
                out.push_str(&serde_json::to_string(&rec).expect("scene records serialize"));
                out.push('\n');
            }
        }
        out
    }
}

fn validate_utterance(u: &Utterance, catalog: &EntityCatalog) -> std::result::Result<(), String> {
    if u.tokens.is_empty() {
        return Err("utterance has no tokens".into());
    }
    if u.speakers.is_empty() {
        return Err("utterance has no speakers".into());
    }
    for &s in &u.speakers {
        if !catalog.contains(s) {
            return Err(format!("speaker {s} not in catalog"));
        }
    }
    for m in &u.mentions {
        if m.start > m.end {
            return Err(format!("mention start {} after end {}", m.start, m.end));
        }
        if m.end >= u.tokens.len() {
            return Err(format!("mention end {} beyond {} tokens", m.end, u.tokens.len()));
        }
        if !catalog.contains(m.entity) {
            return Err(format!("mention entity {} not in catalog", m.entity));
        }
    }
    Ok(())
}

/// Parses scene records; `path` is used for error messages only.
pub fn parse_corpus(text: &str, catalog: EntityCatalog, path: &Path) -> Result<Corpus> {
    let mut episodes: Vec<Episode> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SceneRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, format!("malformed scene record: {e}")))?;
        for (ui, u) in rec.utterances.iter().enumerate() {
            validate_utterance(u, &catalog).map_err(|m| Error::parse(path, i + 1, format!("utterance {ui}: {m}")))?;
        }
        let ei = *by_id.entry(rec.episode_id.clone()).or_insert_with(|| {
            episodes.push(Episode {
                id: rec.episode_id.clone(),
                scenes: Vec::new(),
            });
            episodes.len() - 1
        });
        if episodes[ei].scenes.iter().any(|s| s.id == rec.scene_id) {
            return Err(Error::parse(
                path,
                i + 1,
                format!("duplicate scene {} in episode {}", rec.scene_id, rec.episode_id),
            ));
        }
        episodes[ei].scenes.push(Scene {
            id: rec.scene_id,
            utterances: rec.utterances,
        });
    }
    Ok(Corpus { episodes, catalog })
}

/// Default catalog location for a corpus file: `<stem>.catalog.tsv` next to
/// it.
pub fn default_catalog_path(corpus: &Path) -> PathBuf {
    let stem = corpus.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    corpus.with_file_name(format!("{stem}.catalog.tsv"))
}

pub fn load_corpus(path: &Path, catalog_path: &Path) -> Result<Corpus> {
    let catalog = load_catalog(catalog_path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, catalog, path)
}

pub fn save_corpus(corpus: &Corpus, path: &Path, catalog_path: &Path) -> Result<()> {
    fs::write(path, corpus.to_jsonl()).map_err(|e| Error::io(path, e))?;
    fs::write(catalog_path, corpus.catalog.to_tsv()).map_err(|e| Error::io(catalog_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> EntityCatalog {
        parse_catalog("0\tRoss Geller\t1\n1\tMonica Geller\t1\n2\tUnknown\t0\n", Path::new("c")).unwrap()
    }

    #[test]
    fn minimal_file() {
        let text = r#"{"episode_id":"e1","scene_id":"s1","utterances":[{"speakers":[0],"tokens":["I","know"],"mentions":[{"start":0,"end":0,"entity":0}]}]}"#;
        let c = parse_corpus(text, catalog(), Path::new("x")).unwrap();
        assert_eq!(c.episodes.len(), 1);
        assert_eq!(c.num_scenes(), 1);
        assert_eq!(c.scenes().next().unwrap().utterances.len(), 1);
    }

    #[test]
    fn mention_out_of_bounds_is_validation_error() {
        let text = r#"{"episode_id":"e1","scene_id":"s1","utterances":[{"speakers":[0],"tokens":["I"],"mentions":[{"start":0,"end":1,"entity":0}]}]}"#;
        let err = parse_corpus(text, catalog(), Path::new("x")).unwrap_err().to_string();
        assert!(err.contains("x:1"), "{err}");
        assert!(err.contains("beyond"), "{err}");
    }

    #[test]
    fn malformed_record_names_line() {
        let good = r#"{"episode_id":"e1","scene_id":"s1","utterances":[{"speakers":[0],"tokens":["hi"]}]}"#;
        let text = format!("{good}\n{{not json\n");
        let err = parse_corpus(&text, catalog(), Path::new("x.jsonl")).unwrap_err().to_string();
        assert!(err.starts_with("x.jsonl:2"), "{err}");
    }

    #[test]
    fn unknown_entity_rejected() {
        let text = r#"{"episode_id":"e1","scene_id":"s1","utterances":[{"speakers":[9],"tokens":["hi"]}]}"#;
        assert!(parse_corpus(text, catalog(), Path::new("x")).is_err());
    }

    #[test]
    fn two_scenes_two_reset_points() {
        let text = concat!(
            r#"{"episode_id":"e1","scene_id":"s1","utterances":[{"speakers":[0],"tokens":["hi"]}]}"#,
            "\n",
            r#"{"episode_id":"e1","scene_id":"s2","utterances":[{"speakers":[1],"tokens":["yo"]}]}"#,
        );
        let c = parse_corpus(text, catalog(), Path::new("x")).unwrap();
        assert_eq!(c.episodes.len(), 1);
        assert_eq!(c.reset_points(), 2);
    }

    #[test]
    fn flatten_positions() {
        let sc = Scene {
            id: "s".into(),
            utterances: vec![
                Utterance {
                    speakers: vec![0],
                    tokens: vec!["a".into(), "b".into()],
                    mentions: vec![],
                },
                Utterance {
                    speakers: vec![1],
                    tokens: vec!["x".into(), "the".into(), "big".into(), "guy".into()],
                    mentions: vec![Mention {
                        start: 1,
                        end: 3,
                        entity: 0,
                    }],
                },
            ],
        };
        let flat = sc.flatten();
        assert_eq!(flat.tokens.len(), 6);
        assert_eq!(flat.mentions.len(), 1);
        assert_eq!(flat.mentions[0].position, 5);
        assert_eq!(flat.speakers[5], &[1]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{"episode_id":"e1","scene_id":"s1","utterances":[{"speakers":[0,1],"tokens":["I","know"],"mentions":[{"start":0,"end":0,"entity":0}]}]}"#;
        let c = parse_corpus(text, catalog(), Path::new("x")).unwrap();
        let p = dir.path().join("c.jsonl");
        let cp = default_catalog_path(&p);
        save_corpus(&c, &p, &cp).unwrap();
        assert_eq!(load_corpus(&p, &cp).unwrap(), c);
    }
}
