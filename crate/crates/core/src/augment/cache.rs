//! On-disk cache of precomputed augmentations, one JSON object per line:
//! `{"index": i, "augmentations": [statement, ...]}` where `i` indexes the
//! unlabelled pool the cache was built from.

use std::fs;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::RelationStatement;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub index: usize,
    pub augmentations: Vec<RelationStatement>,
}

pub fn write_augmentation_cache(path: impl AsRef<Path>, entries: &[CacheEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_augmentation_cache(reader: impl BufRead) -> Result<Vec<CacheEntry>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let parse = |message: String| Error::Parse { line: i + 1, message };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?);
    }
    Ok(out)
}

pub fn load_augmentation_cache(path: impl AsRef<Path>) -> Result<Vec<CacheEntry>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_augmentation_cache(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = RelationStatement::from_text("a b c d", 0..1, 2..3, Some("r")).unwrap();
        let entries = vec![CacheEntry {
            index: 3,
            augmentations: vec![s.clone(), s],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aug.jsonl");
        write_augmentation_cache(&path, &entries).unwrap();
        assert_eq!(load_augmentation_cache(&path).unwrap(), entries);
        assert!(matches!(
            read_augmentation_cache("{\"index\":1}\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
