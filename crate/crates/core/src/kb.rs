//! Per-entity attributes and typed binary relations.
//!
//! File format, one record per line, tab-separated:
//!
//! ```text
//! attr<TAB><entity><TAB><attribute><TAB><value>
//! rel<TAB><subject><TAB><relation><TAB><object>
//! ```
//!
//! `rel 4 brother 7` reads "entity 4 is the brother of entity 7".

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::corpus::{EntityCatalog, EntityId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    pub subject: EntityId,
    pub name: String,
    pub object: EntityId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeBase {
    attributes: BTreeMap<EntityId, BTreeMap<String, String>>,
    relations: BTreeSet<Relation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbStats {
    pub entities: usize,
    pub attribute_values: usize,
    pub relation_types: usize,
    pub relation_pairs: usize,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_attribute(&mut self, entity: EntityId, name: &str, value: &str) -> Result<()> {
        let attrs = self.attributes.entry(entity).or_default();
        if attrs.contains_key(name) {
            return Err(Error::Invalid(format!("entity {entity} has attribute {name:?} twice")));
        }
        attrs.insert(name.to_string(), value.to_string());
        Ok(())
    }

    pub fn add_relation(&mut self, subject: EntityId, name: &str, object: EntityId) {
        self.relations.insert(Relation {
            subject,
            name: name.to_string(),
            object,
        });
    }

    pub fn attribute(&self, entity: EntityId, name: &str) -> Option<&str> {
        self.attributes.get(&entity)?.get(name).map(String::as_str)
    }

    pub fn attributes(&self) -> impl Iterator<Item = (EntityId, &str, &str)> {
        self.attributes
            .iter()
            .flat_map(|(&e, m)| m.iter().map(move |(k, v)| (e, k.as_str(), v.as_str())))
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.iter()
    }

    /// Entities carrying at least one attribute or relation, ascending.
    pub fn entities(&self) -> Vec<EntityId> {
        let mut set: BTreeSet<EntityId> = self.attributes.keys().copied().collect();
        for r in &self.relations {
            set.insert(r.subject);
            set.insert(r.object);
        }
        set.into_iter().collect()
    }

    pub fn attribute_names(&self) -> BTreeSet<&str> {
        self.attributes().map(|(_, k, _)| k).collect()
    }

    /// Distinct values of `name`, sorted.
    pub fn attribute_values(&self, name: &str) -> Vec<&str> {
        let set: BTreeSet<&str> = self.attributes().filter(|(_, k, _)| *k == name).map(|(_, _, v)| v).collect();
        set.into_iter().collect()
    }

    pub fn relation_names(&self) -> BTreeSet<&str> {
        self.relations.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty() && self.relations.is_empty()
    }

    pub fn stats(&self) -> KbStats {
        let values: BTreeSet<(&str, &str)> = self.attributes().map(|(_, k, v)| (k, v)).collect();
        KbStats {
            entities: self.entities().len(),
            attribute_values: values.len(),
            relation_types: self.relation_names().len(),
            relation_pairs: self.relations.len(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (e, k, v) in self.attributes() {
            out.push_str(&format!("attr\t{e}\t{k}\t{v}\n"));
        }
        for r in &self.relations {
            out.push_str(&format!("rel\t{}\t{}\t{}\n", r.subject, r.name, r.object));
        }
        out
    }
}

pub fn parse_kb(text: &str, catalog: &EntityCatalog, path: &Path) -> Result<KnowledgeBase> {
    let mut kb = KnowledgeBase::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::parse(path, i + 1, "expected 4 tab-separated fields"));
        }
        let entity = |s: &str| -> Result<EntityId> {
            let id: EntityId = s.trim().parse().map_err(|_| Error::parse(path, i + 1, format!("bad entity id {s:?}")))?;
            if !catalog.contains(id) {
                return Err(Error::parse(path, i + 1, format!("entity {id} not in catalog")));
            }
            Ok(id)
        };
        let subject = entity(f[1])?;
        match f[0] {
            "attr" => kb
                .set_attribute(subject, f[2].trim(), f[3].trim())
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?,
            "rel" => {
                let object = entity(f[3])?;
                kb.add_relation(subject, f[2].trim(), object);
            }
            other => return Err(Error::parse(path, i + 1, format!("unknown record kind {other:?}"))),
        }
    }
    Ok(kb)
}

pub fn load_kb(path: &Path, catalog: &EntityCatalog) -> Result<KnowledgeBase> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kb(&text, catalog, path)
}

pub fn save_kb(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    fs::write(path, kb.to_tsv()).map_err(|e| Error::io(path, e))
}
