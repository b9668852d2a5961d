//! Per-case clinical text files (`key: value` lines) and the single-CSV
//! alternative with one row per case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered key/value pairs as they appear in a clinical file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawClinicalRecord {
    pairs: Vec<(String, String)>,
}

impl RawClinicalRecord {
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut rec = RawClinicalRecord::default();
        for (i, (k, v)) in pairs.into_iter().enumerate() {
            rec.push(k, v, i + 1)?;
        }
        Ok(rec)
    }

    fn push(&mut self, key: String, value: String, line: usize) -> Result<()> {
        if self.get(&key).is_some() {
            return Err(Error::ClinicalParse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        self.pairs.push((key, value));
        Ok(())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn parse_clinical_file(text: &str) -> Result<RawClinicalRecord> {
    let mut rec = RawClinicalRecord::default();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(Error::ClinicalParse {
                line: lineno,
                message: "expected `key: value`".into(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::ClinicalParse {
                line: lineno,
                message: "empty key".into(),
            });
        }
        rec.push(key.to_string(), value.trim().to_string(), lineno)?;
    }
    Ok(rec)
}

/// Parses a CSV with a header row. The column named `case_id` (or the first
/// column when none is so named) identifies the case; the remaining columns
/// become record keys.
pub fn parse_clinical_csv(text: &str) -> Result<Vec<(String, RawClinicalRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(Error::ClinicalParse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let id_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("case_id"))
        .unwrap_or(0);
    let mut seen = std::collections::HashSet::new();
    for (i, h) in headers.iter().enumerate() {
        if !seen.insert(h.as_str()) {
            return Err(Error::ClinicalParse {
                line: 1,
                message: format!("duplicate column `{}` (column {})", h, i + 1),
            });
        }
    }
    let mut out = Vec::new();
    for (row_no, row) in reader.records().enumerate() {
        let row = row?;
        let line = row_no + 2;
        if row.len() != headers.len() {
            return Err(Error::ClinicalParse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let case_id = row[id_col].to_string();
        if case_id.is_empty() {
            return Err(Error::ClinicalParse {
                line,
                message: "empty case id".into(),
            });
        }
        let pairs = headers
            .iter()
            .zip(row.iter())
            .enumerate()
            .filter(|(i, _)| *i != id_col)
            .map(|(_, (h, v))| (h.clone(), v.to_string()))
            .collect();
        out.push((case_id, RawClinicalRecord { pairs }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_pairs() {
        let r = parse_clinical_file("Sex: M\nAge: 55").unwrap();
        assert_eq!(
            r.pairs(),
            &[("Sex".to_string(), "M".to_string()), ("Age".to_string(), "55".to_string())]
        );
    }

    #[test]
    fn duplicate_names_line() {
        match parse_clinical_file("Age: 55\nAge: 56\n") {
            Err(Error::ClinicalParse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("Age"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_colon_and_blank_lines() {
        let r = parse_clinical_file("\n  Sex:  F  \n\nKillip max: 2 \n").unwrap();
        assert_eq!(r.get("Sex"), Some("F"));
        assert_eq!(r.get("Killip max"), Some("2"));
        assert!(matches!(
            parse_clinical_file("Sex: F\nAge 55"),
            Err(Error::ClinicalParse { line: 2, .. })
        ));
    }

    #[test]
    fn internal_spaces_kept() {
        let r = parse_clinical_file("Note:  two  words ").unwrap();
        assert_eq!(r.get("Note"), Some("two  words"));
    }

    #[test]
    fn eleven_feature_fixture() {
        let text = "Sex: M\nAge: 67\nOverweight: N\nArterial hypertension: Y\nDiabetes: N\n\
                    Familial history of coronary artery disease: N\nTroponin: 12.4\nKillip max: 1\n\
                    Ejection fraction: 45\nNTproBNP: 1024\nST segment: Y\n";
        assert_eq!(parse_clinical_file(text).unwrap().len(), 11);
    }

    #[test]
    fn csv_rows() {
        let text = "case_id,Sex,Age\nCase_P001,M,60\nCase_N002,F,48\n";
        let rows = parse_clinical_csv(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].0, "Case_N002");
        assert_eq!(rows[1].1.get("Age"), Some("48"));
        assert!(parse_clinical_csv("case_id,Age,Age\nA,1,2\n").is_err());
    }
}
