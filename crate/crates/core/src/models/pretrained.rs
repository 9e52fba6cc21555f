use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Pretrained token vectors in the word2vec text format: an optional
/// `count dim` header, then `token v1 .. vd` per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WordVectors {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn parse_word_vectors(text: &str, path: &Path) -> Result<WordVectors> {
    let mut out = WordVectors::default();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad vector component: {e}")))?;
        if values.is_empty() {
            return Err(Error::parse(path, i + 1, "vector has no components"));
        }
        if out.dim == 0 {
            out.dim = values.len();
        } else if values.len() != out.dim {
            return Err(Error::parse(
                path,
                i + 1,
                format!("vector has {} components, expected {}", values.len(), out.dim),
            ));
        }
        out.vectors.entry(fields[0].to_string()).or_insert(values);
    }
    Ok(out)
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectors> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_word_vectors(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows() {
        let wv = parse_word_vectors("2 3\na 1 2 3\nb 0 0 1\n", Path::new("v")).unwrap();
        assert_eq!(wv.dim, 3);
        assert_eq!(wv.get("a"), Some(&[1.0, 2.0, 3.0][..]));
        assert!(parse_word_vectors("a 1 2\nb 1\n", Path::new("v")).is_err());
    }
}
