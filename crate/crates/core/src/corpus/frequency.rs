use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Corpus, EntityId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FrequencyBucket {
    High,
    Medium,
    Low,
}

impl FrequencyBucket {
    pub const ALL: [FrequencyBucket; 3] = [FrequencyBucket::High, FrequencyBucket::Medium, FrequencyBucket::Low];

    /// `>1000` high, `20..=1000` medium, `<20` low.
    pub fn of_count(count: u64) -> Self {
        if count > 1000 {
            FrequencyBucket::High
        } else if count >= 20 {
            FrequencyBucket::Medium
        } else {
            FrequencyBucket::Low
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FrequencyBucket::High => "high(>1000)",
            FrequencyBucket::Medium => "medium(20-1000)",
            FrequencyBucket::Low => "low(<20)",
        }
    }
}

impl fmt::Display for FrequencyBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Mention counts per entity over a (training) corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrequencyTable {
    counts: Vec<u64>,
}

impl FrequencyTable {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        FrequencyTable { counts }
    }

    pub fn count(&self, id: EntityId) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bucket(&self, id: EntityId) -> FrequencyBucket {
        FrequencyBucket::of_count(self.count(id))
    }

    /// Number of entities in each bucket, in [`FrequencyBucket::ALL`] order.
    pub fn bucket_sizes(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for &c in &self.counts {
            let b = FrequencyBucket::of_count(c);
            out[FrequencyBucket::ALL.iter().position(|&x| x == b).unwrap()] += 1;
        }
        out
    }
}

pub fn entity_frequencies(corpus: &Corpus) -> FrequencyTable {
    let mut counts = vec![0u64; corpus.catalog.len()];
    for sc in corpus.scenes() {
        for u in &sc.utterances {
            for m in &u.mentions {
                counts[m.entity] += 1;
            }
        }
    }
    FrequencyTable { counts }
}
