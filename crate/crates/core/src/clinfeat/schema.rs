//! Clinical key schema and record encoding.

use serde::{Deserialize, Serialize};

use crate::dataio::RawClinicalRecord;
use crate::error::{Error, Result};
use crate::volcore::CaseClass;

pub const NUM_FEATURES: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// `F`→0, `M`→1.
    Sex,
    /// Yes/no → 1/0.
    Binary,
    /// Ordinal class 1..=4.
    Killip,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Accepted file keys, matched case-insensitively ignoring punctuation.
    pub aliases: Vec<String>,
}

impl FeatureSpec {
    fn new(name: &str, kind: FeatureKind, aliases: &[&str]) -> Self {
        FeatureSpec {
            name: name.into(),
            kind,
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClinicalSchema {
    pub features: Vec<FeatureSpec>,
    /// Keys that are present in files but not used as features.
    pub ignored_keys: Vec<String>,
    /// Reject keys that are neither features nor ignored.
    pub strict: bool,
}

impl Default for ClinicalSchema {
    fn default() -> Self {
        use FeatureKind::*;
        ClinicalSchema {
            features: vec![
                FeatureSpec::new("sex", Sex, &["sex", "gbs", "gender"]),
                FeatureSpec::new("age", Continuous, &["age"]),
                FeatureSpec::new("overweight", Binary, &["overweight"]),
                FeatureSpec::new("arterial_hypertension", Binary, &["arterial hypertension", "hypertension", "hta"]),
                FeatureSpec::new("diabetes", Binary, &["diabetes"]),
                FeatureSpec::new(
                    "familial_history",
                    Binary,
                    &["familial history of coronary artery disease", "familial history", "family history"],
                ),
                FeatureSpec::new("troponin", Continuous, &["troponin"]),
                FeatureSpec::new("killip_max", Killip, &["killip max", "killip"]),
                FeatureSpec::new("ejection_fraction", Continuous, &["ejection fraction", "fevg", "lvef", "ef"]),
                FeatureSpec::new("nt_probnp", Continuous, &["ntprobnp", "nt probnp", "bnp", "ventricular natriuretic peptide"]),
                FeatureSpec::new("st_segment", Binary, &["st segment", "ecg st +", "ecg st", "st elevation", "st"]),
            ],
            ignored_keys: vec!["tobacco".into(), "case id".into(), "id".into()],
            strict: false,
        }
    }
}

/// Lowercase, punctuation other than `+` collapsed to single spaces.
pub fn normalize_key(key: &str) -> String {
    let mapped: String = key
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '+' { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_missing(v: &str) -> bool {
    matches!(v.trim().to_ascii_lowercase().as_str(), "" | "na" | "n/a" | "nan" | "?" | "-" | "missing" | "null")
}

fn parse_number(key: &str, v: &str) -> Result<f64> {
    let t = v.trim().replace(',', ".");
    let x: f64 = t
        .parse()
        .map_err(|_| Error::ClinicalEncode(format!("`{key}`: cannot parse `{v}` as a number")))?;
    if !x.is_finite() {
        return Err(Error::ClinicalEncode(format!("`{key}`: non-finite value `{v}`")));
    }
    Ok(x)
}

fn encode_value(spec: &FeatureSpec, key: &str, v: &str) -> Result<Option<f64>> {
    if is_missing(v) {
        return Ok(None);
    }
    let lower = v.trim().to_ascii_lowercase();
    let bad = |what: &str| Error::ClinicalEncode(format!("`{key}`: `{v}` is not a valid {what}"));
    let x = match spec.kind {
        FeatureKind::Sex => match lower.as_str() {
            "f" | "female" | "0" => 0.0,
            "m" | "male" | "1" => 1.0,
            _ => return Err(bad("sex (F/M)")),
        },
        FeatureKind::Binary => match lower.as_str() {
            "y" | "yes" | "1" | "true" | "+" => 1.0,
            "n" | "no" | "0" | "false" | "-0" => 0.0,
            _ => return Err(bad("yes/no value")),
        },
        FeatureKind::Killip => {
            let k = parse_number(key, v)?;
            if k.fract() != 0.0 || !(1.0..=4.0).contains(&k) {
                return Err(bad("Killip class (1-4)"));
            }
            k
        }
        FeatureKind::Continuous => parse_number(key, v)?,
    };
    Ok(Some(x))
}

/// Encoded clinical features in schema order; `None` awaits imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub case_id: String,
    pub features: Vec<Option<f64>>,
    pub label: Option<CaseClass>,
}

impl ClinicalRecord {
    pub fn new(case_id: impl Into<String>, features: Vec<Option<f64>>, label: Option<CaseClass>) -> Self {
        ClinicalRecord {
            case_id: case_id.into(),
            features,
            label,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

impl ClinicalSchema {
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("clinical schema has no features".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.features {
            for a in &f.aliases {
                if !seen.insert(normalize_key(a)) {
                    return Err(Error::Config(format!("clinical alias `{a}` is used twice")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    fn lookup(&self, key: &str) -> Option<usize> {
        let k = normalize_key(key);
        self.features
            .iter()
            .position(|f| f.aliases.iter().any(|a| normalize_key(a) == k))
    }

    /// Encodes a raw record. Absent features are missing; an unknown key is
    /// an error only in strict mode.
    pub fn encode(&self, case_id: &str, raw: &RawClinicalRecord, label: Option<CaseClass>) -> Result<ClinicalRecord> {
        let mut features = vec![None; self.features.len()];
        let mut filled = vec![false; self.features.len()];
        for (key, value) in raw.pairs() {
            match self.lookup(key) {
                Some(i) => {
                    if filled[i] {
                        return Err(Error::ClinicalEncode(format!(
                            "case `{case_id}`: feature `{}` given twice",
                            self.features[i].name
                        )));
                    }
                    filled[i] = true;
                    features[i] = encode_value(&self.features[i], key, value)?;
                }
                None => {
                    let k = normalize_key(key);
                    if self.strict && !self.ignored_keys.iter().any(|i| normalize_key(i) == k) {
                        return Err(Error::ClinicalEncode(format!("case `{case_id}`: unrecognized key `{key}`")));
                    }
                }
            }
        }
        Ok(ClinicalRecord::new(case_id, features, label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::parse_clinical_file;

    const FIXTURE: &str = "Sex: F\nAge: 62\nTobacco: Y\nOverweight: N\nArterial hypertension: Y\nDiabetes: N\n\
Familial history of coronary artery disease: Y\nECG (ST +): Y\nTroponin: 18.5\nKillip max: 2\nFEVG: 45\nNTProBNP: 1200\n";

    #[test]
    fn full_fixture_in_declared_order() {
        let raw = parse_clinical_file(FIXTURE).unwrap();
        let rec = ClinicalSchema::default().encode("P001", &raw, None).unwrap();
        let want = [0.0, 62.0, 0.0, 1.0, 0.0, 1.0, 18.5, 2.0, 45.0, 1200.0, 1.0];
        assert_eq!(rec.features, want.iter().map(|&x| Some(x)).collect::<Vec<_>>());
        assert_eq!(rec.dim(), NUM_FEATURES);
    }

    #[test]
    fn codings() {
        let s = ClinicalSchema::default();
        let one = |k: &str, v: &str| {
            let raw = RawClinicalRecord::from_pairs(vec![(k.into(), v.into())]).unwrap();
            s.encode("x", &raw, None).map(|r| r.features)
        };
        assert_eq!(one("Sex", "F").unwrap()[0], Some(0.0));
        assert_eq!(one("Sex", "M").unwrap()[0], Some(1.0));
        assert_eq!(one("Killip max", "2").unwrap()[7], Some(2.0));
        assert_eq!(one("Age", "NA").unwrap()[1], None);
        assert_eq!(one("Troponin", "3,5").unwrap()[6], Some(3.5));
        assert!(one("Killip max", "5").is_err());
        assert!(one("Age", "old").is_err());
        assert!(one("Diabetes", "maybe").is_err());
    }

    #[test]
    fn strict_mode_rejects_unknown_keys() {
        let raw = RawClinicalRecord::from_pairs(vec![("Shoe size".into(), "44".into()), ("Tobacco".into(), "N".into())]).unwrap();
        let mut s = ClinicalSchema::default();
        assert!(s.encode("x", &raw, None).is_ok());
        s.strict = true;
        assert!(matches!(s.encode("x", &raw, None), Err(Error::ClinicalEncode(_))));
        let ok = RawClinicalRecord::from_pairs(vec![("Tobacco".into(), "N".into())]).unwrap();
        assert!(s.encode("x", &ok, None).is_ok());
    }

    #[test]
    fn default_schema_is_valid() {
        ClinicalSchema::default().validate().unwrap();
        assert_eq!(normalize_key("  ECG (ST +) "), "ecg st +");
    }
}
