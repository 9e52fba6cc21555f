use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::EntityId;

/// Catalog name that designates the UNKNOWN speaker/referent entity.
pub const UNKNOWN_NAME: &str = "Unknown";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityInfo {
    pub id: EntityId,
    pub name: String,
    pub is_main: bool,
}

/// Entity set of a corpus. Ids are dense (`0..len`) so they double as rows
/// of the entity embedding matrix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntityCatalog {
    entities: Vec<EntityInfo>,
}

impl EntityCatalog {
    pub fn new(entities: Vec<EntityInfo>) -> Result<Self> {
        for (i, e) in entities.iter().enumerate() {
            if e.id != i {
                return Err(Error::Invalid(format!(
                    "catalog ids must be dense and ordered; found {} at position {i}",
                    e.id
                )));
            }
        }
        Ok(EntityCatalog { entities })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn contains(&self, id: EntityId) -> bool {
        id < self.entities.len()
    }

    pub fn get(&self, id: EntityId) -> Option<&EntityInfo> {
        self.entities.get(id)
    }

    pub fn name(&self, id: EntityId) -> Option<&str> {
        self.entities.get(id).map(|e| e.name.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntityInfo> {
        self.entities.iter()
    }

    pub fn unknown(&self) -> Option<EntityId> {
        self.entities.iter().find(|e| e.name == UNKNOWN_NAME).map(|e| e.id)
    }

    pub fn mains(&self) -> Vec<EntityId> {
        self.entities.iter().filter(|e| e.is_main).map(|e| e.id).collect()
    }

    pub fn to_tsv(&self) -> String {
        self.entities
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.id, e.name, u8::from(e.is_main)))
            .collect()
    }
}

pub fn parse_catalog(text: &str, path: &Path) -> Result<EntityCatalog> {
    let mut entities = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, i + 1, "expected id<TAB>name<TAB>is_main"));
        }
        let id = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad entity id {:?}", fields[0])))?;
        let is_main = match fields[2].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::parse(path, i + 1, format!("bad is_main flag {other:?}"))),
        };
        if id != entities.len() {
            return Err(Error::parse(path, i + 1, format!("expected entity id {}, found {id}", entities.len())));
        }
        entities.push(EntityInfo {
            id,
            name: fields[1].trim().to_string(),
            is_main,
        });
    }
    EntityCatalog::new(entities)
}

pub fn load_catalog(path: &Path) -> Result<EntityCatalog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_query() {
        let c = parse_catalog("0\tRoss Geller\t1\n1\tUnknown\t0\n2\tGunther\tfalse\n", Path::new("c")).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.unknown(), Some(1));
        assert_eq!(c.mains(), vec![0]);
        assert_eq!(parse_catalog(&c.to_tsv(), Path::new("c")).unwrap(), c);
    }

    #[test]
    fn sparse_ids_rejected() {
        assert!(parse_catalog("0\ta\t1\n2\tb\t0\n", Path::new("c")).is_err());
        assert!(parse_catalog("0\ta\tyes\n", Path::new("c")).is_err());
    }
}
