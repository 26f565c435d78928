//! JSONL readers and writers for statements and split manifests.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RelationStatement, Split, SplitSpec, StatementRecord};
use crate::error::{Error, Result};

/// Parses one statement per non-blank line. Line numbers in errors are 1-based.
pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<RelationStatement>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: StatementRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let stmt = RelationStatement::try_from(record).map_err(|message| Error::InvalidRecord {
            record: line_no,
            message,
        })?;
        out.push(stmt);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<RelationStatement>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file))
}

pub fn to_jsonl(data: &[RelationStatement]) -> String {
    let mut out = String::new();
    for s in data {
        out.push_str(&serde_json::to_string(s).expect("statement serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: impl AsRef<Path>, data: &[RelationStatement]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(data)).map_err(|e| Error::io(path, e))
}

/// A split plus the `SplitSpec` and dataset size that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub total: usize,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ManifestLine {
    Spec {
        labelled_fraction: f64,
        unlabelled_fraction: f64,
        seed: u64,
        total: usize,
    },
    Index {
        part: Part,
        index: usize,
    },
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum Part {
    Labelled,
    Unlabelled,
    Remainder,
}

/// First line carries the `SplitSpec`; every following line one `(part, index)` pair.
pub fn write_split_manifest(path: impl AsRef<Path>, manifest: &SplitManifest) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    let header = ManifestLine::Spec {
        labelled_fraction: manifest.spec.labelled_fraction,
        unlabelled_fraction: manifest.spec.unlabelled_fraction,
        seed: manifest.spec.seed,
        total: manifest.total,
    };
    writeln!(buf, "{}", serde_json::to_string(&header)?).expect("vec write");
    for (part, indices) in [
        (Part::Labelled, &manifest.split.labelled),
        (Part::Unlabelled, &manifest.split.unlabelled),
        (Part::Remainder, &manifest.split.remainder),
    ] {
        for &index in indices {
            let line = ManifestLine::Index { part, index };
            writeln!(buf, "{}", serde_json::to_string(&line)?).expect("vec write");
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_split_manifest(path: impl AsRef<Path>) -> Result<SplitManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse = |(i, l): (usize, &str)| -> Result<ManifestLine> {
        serde_json::from_str(l).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })
    };
    let Some(first) = lines.next() else {
        return Err(Error::Parse {
            line: 1,
            message: "empty split manifest".into(),
        });
    };
    let ManifestLine::Spec {
        labelled_fraction,
        unlabelled_fraction,
        seed,
        total,
    } = parse(first)?
    else {
        return Err(Error::Parse {
            line: 1,
            message: "manifest must start with a spec line".into(),
        });
    };
    let mut split = Split {
        labelled: Vec::new(),
        unlabelled: Vec::new(),
        remainder: Vec::new(),
    };
    for (i, l) in lines {
        match parse((i, l))? {
            ManifestLine::Index { part, index } => match part {
                Part::Labelled => split.labelled.push(index),
                Part::Unlabelled => split.unlabelled.push(index),
                Part::Remainder => split.remainder.push(index),
            },
            ManifestLine::Spec { .. } => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "duplicate spec line".into(),
                })
            }
        }
    }
    Ok(SplitManifest {
        spec: SplitSpec {
            labelled_fraction,
            unlabelled_fraction,
            seed,
        },
        total,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_the_battle_sentence() {
        let line = r#"{"tokens":["The","battle","led","to","panic","on","the","frontier"],"head":[1,2],"tail":[4,5],"relation":"Cause-Effect"}"#;
        let data = parse_jsonl(line.as_bytes()).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].head_tokens(), ["battle"]);
        assert_eq!(data[0].tail_tokens(), ["panic"]);
        assert_eq!(data[0].label(), Some("Cause-Effect"));
        assert_eq!(data[0].head_type(), None);
    }

    #[test]
    fn empty_input_gives_no_statements() {
        assert!(parse_jsonl("".as_bytes()).unwrap().is_empty());
        assert!(parse_jsonl("\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn empty_span_reports_the_record() {
        let text = concat!(
            r#"{"tokens":["a","b","c","d"],"head":[0,1],"tail":[2,3]}"#,
            "\n",
            r#"{"tokens":["a","b","c","d"],"head":[3,3],"tail":[0,1]}"#,
        );
        match parse_jsonl(text.as_bytes()) {
            Err(Error::InvalidRecord { record, message }) => {
                assert_eq!(record, 2);
                assert!(message.contains("empty"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_and_malformed_lines() {
        let oob = r#"{"tokens":["a","b"],"head":[0,1],"tail":[1,3]}"#;
        assert!(matches!(
            parse_jsonl(oob.as_bytes()),
            Err(Error::InvalidRecord { record: 1, .. })
        ));
        let bad = "{\"tokens\": [\"a\"]\n";
        assert!(matches!(
            parse_jsonl(bad.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn statements_and_manifests_survive_a_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = vec![
            RelationStatement::from_text("a b c", 0..1, 2..3, Some("r")).unwrap(),
            RelationStatement::from_text("d e f", 2..3, 0..2, None)
                .unwrap()
                .with_types("PERSON", "CITY"),
        ];
        let p = dir.path().join("d.jsonl");
        write_jsonl(&p, &data).unwrap();
        assert_eq!(load_jsonl(&p).unwrap(), data);

        let manifest = SplitManifest {
            spec: SplitSpec::new(0.5, 0.25, 3).unwrap(),
            total: 5,
            split: Split {
                labelled: vec![0, 3],
                unlabelled: vec![1],
                remainder: vec![2, 4],
            },
        };
        let m = dir.path().join("split.jsonl");
        write_split_manifest(&m, &manifest).unwrap();
        assert_eq!(read_split_manifest(&m).unwrap(), manifest);
    }
}
