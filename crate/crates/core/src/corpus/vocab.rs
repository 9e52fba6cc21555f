use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

use super::Corpus;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Token index. Index 0 is padding and 1 is the out-of-vocabulary symbol;
/// the remaining entries are ordered by descending frequency, then
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;

    /// Builds from an ordered list of regular tokens; specials are prepended.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut all = vec![PAD.to_string(), UNK.to_string()];
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// Index of `token`, or [`Self::UNK_ID`].
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Regular (non-special) entries in index order.
    pub fn regular_tokens(&self) -> &[String] {
        &self.tokens[2..]
    }
}

pub fn build_vocabulary(corpus: &Corpus, min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for sc in corpus.scenes() {
        for u in &sc.utterances {
            for t in &u.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::Invalid("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && t != PAD && t != UNK)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, parse_catalog};
    use std::path::Path;

    fn corpus(tokens: &[&str]) -> Corpus {
        let cat = parse_catalog("0\ta\t1\n", Path::new("c")).unwrap();
        let toks: Vec<String> = tokens.iter().map(|t| format!("{t:?}")).collect();
        let line = format!(
            r#"{{"episode_id":"e","scene_id":"s","utterances":[{{"speakers":[0],"tokens":[{}]}}]}}"#,
            toks.join(",")
        );
        parse_corpus(&line, cat, Path::new("x")).unwrap()
    }

    #[test]
    fn single_token() {
        let v = build_vocabulary(&corpus(&["hi", "hi", "hi"]), 1).unwrap();
        assert_eq!(v.regular_tokens(), &["hi".to_string()]);
        assert_eq!(v.id("hi"), 2);
    }

    #[test]
    fn below_threshold_maps_to_unk() {
        let v = build_vocabulary(&corpus(&["hi", "hi", "hi"]), 4).unwrap();
        assert_eq!(v.id("hi"), Vocabulary::UNK_ID);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = build_vocabulary(&corpus(&["b", "c", "a", "c"]), 1).unwrap();
        assert_eq!(v.regular_tokens(), &["c", "a", "b"]);
    }

    #[test]
    fn empty_corpus_and_zero_min_count() {
        let cat = parse_catalog("0\ta\t1\n", Path::new("c")).unwrap();
        let empty = parse_corpus("", cat, Path::new("x")).unwrap();
        assert!(build_vocabulary(&empty, 1).is_err());
        assert!(build_vocabulary(&corpus(&["hi"]), 0).is_err());
    }
}
