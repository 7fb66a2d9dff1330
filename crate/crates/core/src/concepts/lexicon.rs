use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub concept_id: String,
    /// Normalized with the note tokenizer; never empty.
    pub surface_forms: Vec<Vec<String>>,
    pub semantic_type: String,
}

/// Semantic types dropped after matching (case-insensitive substring match).
pub fn default_exclusions() -> Vec<String> {
    vec!["temporal".into(), "language".into(), "quantitative".into()]
}

/// Reads the TSV lexicon: `concept_id <TAB> semantic_type <TAB> surface form`,
/// one row per surface form. Blank lines and `#` comments are ignored. Entries
/// keep the order in which their concept id first appears.
pub fn read_lexicon<R: BufRead>(source: R) -> Result<Vec<LexiconEntry>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, LexiconEntry> = BTreeMap::new();
    for (i, line) in source.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let (id, ty, surface) = (cols[0].trim(), cols[1].trim(), cols[2]);
        if id.is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: "empty concept id".into(),
            });
        }
        let form = tokenize(surface);
        if form.is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: format!("surface form {surface:?} has no tokens"),
            });
        }
        match by_id.get_mut(id) {
            Some(entry) => {
                if entry.semantic_type != ty {
                    return Err(Error::MalformedRow {
                        row,
                        message: format!(
                            "concept {id} listed with types {:?} and {ty:?}",
                            entry.semantic_type
                        ),
                    });
                }
                if !entry.surface_forms.contains(&form) {
                    entry.surface_forms.push(form);
                }
            }
            None => {
                order.push(id.to_string());
                by_id.insert(
                    id.to_string(),
                    LexiconEntry {
                        concept_id: id.to_string(),
                        surface_forms: vec![form],
                        semantic_type: ty.to_string(),
                    },
                );
            }
        }
    }
    Ok(order.into_iter().map(|id| by_id.remove(&id).expect("ordered id")).collect())
}

pub fn write_lexicon<W: std::io::Write>(mut out: W, lexicon: &[LexiconEntry]) -> std::io::Result<()> {
    for e in lexicon {
        for form in &e.surface_forms {
            writeln!(out, "{}\t{}\t{}", e.concept_id, e.semantic_type, form.join(" "))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_merge_by_concept_id() {
        let tsv = "# id\ttype\tform\nC1\tSign or Symptom\tChest Pain\nC1\tSign or Symptom\tchest-pain\nC2\tFinding\tdrinker\n";
        let lex = read_lexicon(tsv.as_bytes()).unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex[0].surface_forms, vec![vec!["chest", "pain"], vec!["chest", "-", "pain"]]);
        assert_eq!(lex[1].concept_id, "C2");
    }

    #[test]
    fn wrong_column_count_reports_row() {
        let tsv = "C1\tFinding\tx\nC2\tFinding\n";
        assert!(matches!(read_lexicon(tsv.as_bytes()), Err(Error::MalformedRow { row: 2, .. })));
    }

    #[test]
    fn conflicting_types_are_rejected() {
        let tsv = "C1\tFinding\tx\nC1\tDrug\ty\n";
        assert!(read_lexicon(tsv.as_bytes()).is_err());
    }

    #[test]
    fn write_then_read_is_stable() {
        let tsv = "C1\tFinding\theavy drinker\nC2\tTemporal Concept\tdaily\n";
        let lex = read_lexicon(tsv.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_lexicon(&mut buf, &lex).unwrap();
        assert_eq!(read_lexicon(buf.as_slice()).unwrap(), lex);
    }
}
