//! Surface-form mention typing.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityCatalog, UNKNOWN_NAME};

pub const FIRST_PERSON: [&str; 5] = ["i", "me", "my", "myself", "mine"];
pub const SECOND_PERSON: [&str; 4] = ["you", "your", "yourself", "yours"];
pub const THIRD_PERSON: [&str; 11] = [
    "she", "her", "herself", "hers", "he", "him", "himself", "his", "it", "itself", "its",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MentionType {
    FirstPerson,
    SecondPerson,
    ThirdPerson,
    ProperNoun,
    CommonNoun,
    Other,
}

impl MentionType {
    pub const ALL: [MentionType; 6] = [
        MentionType::FirstPerson,
        MentionType::SecondPerson,
        MentionType::ThirdPerson,
        MentionType::ProperNoun,
        MentionType::CommonNoun,
        MentionType::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MentionType::FirstPerson => "first-person",
            MentionType::SecondPerson => "second-person",
            MentionType::ThirdPerson => "third-person",
            MentionType::ProperNoun => "proper-noun",
            MentionType::CommonNoun => "common-noun",
            MentionType::Other => "other",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.label() == s)
    }
}

impl fmt::Display for MentionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Tags mention spans by pronoun lists, then catalog names, then
/// capitalization.
#[derive(Debug, Clone, Default)]
pub struct MentionTagger {
    name_tokens: HashSet<String>,
}

impl MentionTagger {
    pub fn new(catalog: &EntityCatalog) -> Self {
        let name_tokens = catalog
            .iter()
            .filter(|e| e.name != UNKNOWN_NAME)
            .flat_map(|e| e.name.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .collect();
        MentionTagger { name_tokens }
    }

    pub fn tag(&self, span: &[&str]) -> MentionType {
        if let [single] = span {
            let lower = single.to_lowercase();
            if FIRST_PERSON.contains(&lower.as_str()) {
                return MentionType::FirstPerson;
            }
            if SECOND_PERSON.contains(&lower.as_str()) {
                return MentionType::SecondPerson;
            }
            if THIRD_PERSON.contains(&lower.as_str()) {
                return MentionType::ThirdPerson;
            }
        }
        if span.iter().any(|t| self.name_tokens.contains(*t)) {
            return MentionType::ProperNoun;
        }
        let alphabetic = !span.is_empty() && span.iter().all(|t| t.chars().all(|c| c.is_alphabetic() || c == '-' || c == '\''));
        if !alphabetic {
            return MentionType::Other;
        }
        let last = span[span.len() - 1];
        if last.chars().next().is_some_and(char::is_uppercase) {
            MentionType::ProperNoun
        } else {
            MentionType::CommonNoun
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_catalog;
    use std::path::Path;

    #[test]
    fn tagging() {
        let cat = parse_catalog("0\tRoss Geller\t1\n1\tUnknown\t0\n", Path::new("c")).unwrap();
        let t = MentionTagger::new(&cat);
        assert_eq!(t.tag(&["I"]), MentionType::FirstPerson);
        assert_eq!(t.tag(&["mine"]), MentionType::FirstPerson);
        assert_eq!(t.tag(&["You"]), MentionType::SecondPerson);
        assert_eq!(t.tag(&["his"]), MentionType::ThirdPerson);
        assert_eq!(t.tag(&["Ross"]), MentionType::ProperNoun);
        assert_eq!(t.tag(&["dr.", "Geller"]), MentionType::ProperNoun);
        assert_eq!(t.tag(&["Gunther"]), MentionType::ProperNoun);
        assert_eq!(t.tag(&["the", "waitress"]), MentionType::CommonNoun);
        assert_eq!(t.tag(&["42"]), MentionType::Other);
        assert_eq!(t.tag(&["unknown"]), MentionType::CommonNoun);
    }
}
