//! Readers for the supported raw corpus formats.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One document of one hospital visit, as found in the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub patient_key: String,
    pub visit_key: String,
    /// Document identifier within the visit; input order when the source has none.
    pub doc_key: String,
    pub text: String,
    pub labels: BTreeSet<String>,
    pub mortality: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Jsonl,
    MimicNoteeventsCsv,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(InputFormat::Jsonl),
            "mimic_noteevents_csv" | "mimic" => Ok(InputFormat::MimicNoteeventsCsv),
            other => Err(Error::invalid(format!("unknown input format {other:?}"))),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlLine {
    patient: String,
    visit: String,
    #[serde(default)]
    doc: Option<String>,
    text: String,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    mortality: Option<bool>,
}

pub fn ingest<R: Read>(source: R, format: InputFormat) -> Result<Vec<RawRecord>> {
    match format {
        InputFormat::Jsonl => ingest_jsonl(std::io::BufReader::new(source)),
        InputFormat::MimicNoteeventsCsv => ingest_mimic_csv(source),
    }
}

/// Reads one JSON object per line. Blank lines are skipped; row numbers are
/// 1-based line numbers.
pub fn ingest_jsonl<R: BufRead>(source: R) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    let mut keys = DocKeys::default();
    for (i, line) in source.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonlLine = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let doc_key = keys.claim(row, &parsed.patient, &parsed.visit, parsed.doc)?;
        records.push(make_record(
            row,
            parsed.patient,
            parsed.visit,
            doc_key,
            parsed.text,
            parsed.labels,
            parsed.mortality,
        )?);
    }
    Ok(records)
}

/// MIMIC-III `NOTEEVENTS.csv`. Only discharge summaries are kept. Labels are
/// not part of this table; merge them in with [`apply_label_sidecar`].
pub fn ingest_mimic_csv<R: Read>(source: R) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MalformedRow {
                row: 1,
                message: format!("missing column {name}"),
            })
    };
    let (subject, hadm, category, text) = (col("SUBJECT_ID")?, col("HADM_ID")?, col("CATEGORY")?, col("TEXT")?);
    let row_id = col("ROW_ID").ok();

    let mut records = Vec::new();
    let mut keys = DocKeys::default();
    for (i, rec) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if rec.get(category).map(str::trim) != Some("Discharge summary") {
            continue;
        }
        let field = |idx: usize| rec.get(idx).unwrap_or("").trim().to_string();
        let (patient, visit) = (field(subject), field(hadm));
        if patient.is_empty() || visit.is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: "empty SUBJECT_ID or HADM_ID".into(),
            });
        }
        let doc = row_id.map(field).filter(|s| !s.is_empty());
        let doc_key = keys.claim(row, &patient, &visit, doc)?;
        let text = rec.get(text).unwrap_or("").to_string();
        records.push(make_record(row, patient, visit, doc_key, text, Vec::new(), None)?);
    }
    Ok(records)
}

/// Label sidecar for corpora whose notes carry no labels: JSONL lines of
/// `{"patient", "visit", "labels", "mortality"}`.
pub fn apply_label_sidecar<R: BufRead>(records: &mut [RawRecord], sidecar: R) -> Result<()> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct LabelLine {
        patient: String,
        visit: String,
        #[serde(default)]
        labels: Vec<String>,
        #[serde(default)]
        mortality: Option<bool>,
    }
    let mut table = std::collections::HashMap::new();
    for (i, line) in sidecar.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let l: LabelLine = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        table.insert((l.patient, l.visit), (l.labels, l.mortality));
    }
    for r in records.iter_mut() {
        if let Some((labels, mortality)) = table.get(&(r.patient_key.clone(), r.visit_key.clone())) {
            r.labels.extend(labels.iter().cloned());
            if mortality.is_some() {
                r.mortality = *mortality;
            }
        }
    }
    Ok(())
}

fn make_record(
    row: usize,
    patient_key: String,
    visit_key: String,
    doc_key: String,
    text: String,
    labels: Vec<String>,
    mortality: Option<bool>,
) -> Result<RawRecord> {
    if text.trim().is_empty() {
        return Err(Error::MalformedRow {
            row,
            message: "empty text".into(),
        });
    }
    Ok(RawRecord {
        patient_key,
        visit_key,
        doc_key,
        text,
        labels: labels.into_iter().collect(),
        mortality,
    })
}

#[derive(Default)]
struct DocKeys {
    seen: HashSet<(String, String, String)>,
    implicit: std::collections::HashMap<(String, String), usize>,
}

impl DocKeys {
    fn claim(&mut self, row: usize, patient: &str, visit: &str, doc: Option<String>) -> Result<String> {
        let doc = match doc {
            Some(d) => d,
            None => {
                let n = self
                    .implicit
                    .entry((patient.to_string(), visit.to_string()))
                    .or_insert(0);
                *n += 1;
                format!("#{}", *n - 1)
            }
        };
        if !self
            .seen
            .insert((patient.to_string(), visit.to_string(), doc.clone()))
        {
            return Err(Error::DuplicateRecord {
                row,
                patient: patient.to_string(),
                visit: visit.to_string(),
                doc,
            });
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_line_maps_fields() {
        let src = r#"{"patient":"p1","visit":"v1","text":"chest pain","labels":["401.9"]}"#;
        let recs = ingest_jsonl(src.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].patient_key, "p1");
        assert_eq!(recs[0].visit_key, "v1");
        assert_eq!(recs[0].doc_key, "#0");
        assert!(recs[0].labels.contains("401.9"));
        assert_eq!(recs[0].mortality, None);
    }

    #[test]
    fn empty_text_reports_row() {
        let src = "{\"patient\":\"p1\",\"visit\":\"v1\",\"text\":\"ok\"}\n{\"patient\":\"p1\",\"visit\":\"v2\",\"text\":\"  \"}\n";
        match ingest_jsonl(src.as_bytes()) {
            Err(Error::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_row() {
        let src = "\n{\"patient\":\"p1\"\n";
        assert!(matches!(ingest_jsonl(src.as_bytes()), Err(Error::MalformedRow { row: 2, .. })));
    }

    #[test]
    fn duplicate_explicit_doc_is_rejected() {
        let src = "{\"patient\":\"p\",\"visit\":\"v\",\"doc\":\"a\",\"text\":\"x\"}\n{\"patient\":\"p\",\"visit\":\"v\",\"doc\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(ingest_jsonl(src.as_bytes()), Err(Error::DuplicateRecord { row: 2, .. })));
    }

    #[test]
    fn multiple_documents_per_visit_are_allowed() {
        let src = "{\"patient\":\"p\",\"visit\":\"v\",\"text\":\"x\"}\n{\"patient\":\"p\",\"visit\":\"v\",\"text\":\"y\"}\n";
        let recs = ingest_jsonl(src.as_bytes()).unwrap();
        assert_eq!(recs[1].doc_key, "#1");
    }

    #[test]
    fn mimic_adapter_keeps_discharge_summaries_only() {
        let csv = "ROW_ID,SUBJECT_ID,HADM_ID,CATEGORY,TEXT\n\
                   1,10,100,Discharge summary,\"Admission Date: ...\nchest pain\"\n\
                   2,10,100,Nursing,\"vitals stable\"\n\
                   3,11,101,Discharge summary,\"sob\"\n";
        let recs = ingest_mimic_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].patient_key, "10");
        assert_eq!(recs[0].visit_key, "100");
        assert_eq!(recs[0].doc_key, "1");
        assert!(recs[0].text.contains('\n'));
    }

    #[test]
    fn mimic_missing_column_is_an_error() {
        let csv = "SUBJECT_ID,CATEGORY,TEXT\n1,Discharge summary,x\n";
        assert!(matches!(ingest_mimic_csv(csv.as_bytes()), Err(Error::MalformedRow { row: 1, .. })));
    }

    #[test]
    fn sidecar_merges_labels() {
        let mut recs = ingest_jsonl("{\"patient\":\"p\",\"visit\":\"v\",\"text\":\"x\"}".as_bytes()).unwrap();
        let side = "{\"patient\":\"p\",\"visit\":\"v\",\"labels\":[\"a\"],\"mortality\":true}\n";
        apply_label_sidecar(&mut recs, side.as_bytes()).unwrap();
        assert!(recs[0].labels.contains("a"));
        assert_eq!(recs[0].mortality, Some(true));
    }
}
