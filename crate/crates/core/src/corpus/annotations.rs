//! Human annotations: dangerous / not-dangerous / unsure labels with the
//! perceived risk reasons, plus the ratings-matrix builder for agreement
//! analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::RatingsMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Dangerous,
    NotDangerous,
    Unsure,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Dangerous => "dangerous",
            Label::NotDangerous => "not_dangerous",
            Label::Unsure => "unsure",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dangerous" => Ok(Label::Dangerous),
            "not_dangerous" => Ok(Label::NotDangerous),
            "unsure" => Ok(Label::Unsure),
            other => Err(Error::data(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskReason {
    Vehicle,
    Water,
    Height,
    HeightAndWater,
    Road,
    Animal,
    Train,
    Weapon,
}

impl RiskReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RiskReason::Vehicle => "vehicle",
            RiskReason::Water => "water",
            RiskReason::Height => "height",
            RiskReason::HeightAndWater => "height_and_water",
            RiskReason::Road => "road",
            RiskReason::Animal => "animal",
            RiskReason::Train => "train",
            RiskReason::Weapon => "weapon",
        }
    }
}

impl std::str::FromStr for RiskReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vehicle" => Ok(RiskReason::Vehicle),
            "water" => Ok(RiskReason::Water),
            "height" => Ok(RiskReason::Height),
            "height_and_water" => Ok(RiskReason::HeightAndWater),
            "road" => Ok(RiskReason::Road),
            "animal" => Ok(RiskReason::Animal),
            "train" => Ok(RiskReason::Train),
            "weapon" => Ok(RiskReason::Weapon),
            other => Err(Error::data(format!("unknown risk reason {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnotationRecord {
    pub tweet_id: String,
    pub label: Label,
    pub risk_reasons: BTreeSet<RiskReason>,
    pub annotator_id: String,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.tweet_id.is_empty() {
            return Err(Error::data("annotation tweet_id must be non-empty"));
        }
        if self.label != Label::Dangerous && !self.risk_reasons.is_empty() {
            return Err(Error::data(format!(
                "annotation for {}: risk reasons given for a non-dangerous label",
                self.tweet_id
            )));
        }
        Ok(())
    }
}

/// Load `annotations.csv`: tweet_id,label,risk_reasons (pipe-separated),
/// annotator_id. Hard failure with per-row diagnostics on schema violations.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(Error::Csv)?;
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("row {row}: {e}"));
                continue;
            }
        };
        match parse_annotation_row(&rec) {
            Ok(a) => match a.validate() {
                Ok(()) => records.push(a),
                Err(e) => problems.push(format!("row {row}: {e}")),
            },
            Err(e) => problems.push(format!("row {row}: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::data(format!(
            "{}: {}",
            path.display(),
            problems.join("; ")
        )));
    }
    Ok(records)
}

fn parse_annotation_row(rec: &csv::StringRecord) -> Result<AnnotationRecord> {
    if rec.len() != 4 {
        return Err(Error::data(format!(
            "expected 4 fields, found {}",
            rec.len()
        )));
    }
    let field = |i: usize| rec.get(i).unwrap_or("").trim();
    let reasons = field(2)
        .split('|')
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<BTreeSet<RiskReason>>>()?;
    Ok(AnnotationRecord {
        tweet_id: field(0).to_string(),
        label: field(1).parse()?,
        risk_reasons: reasons,
        annotator_id: field(3).to_string(),
    })
}

pub fn save_annotations(records: &[AnnotationRecord], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(Error::Csv)?;
    wtr.write_record(["tweet_id", "label", "risk_reasons", "annotator_id"])
        .map_err(Error::Csv)?;
    for r in records {
        let reasons: Vec<&str> = r.risk_reasons.iter().map(|x| x.as_str()).collect();
        wtr.write_record([
            r.tweet_id.as_str(),
            r.label.as_str(),
            &reasons.join("|"),
            r.annotator_id.as_str(),
        ])
        .map_err(Error::Csv)?;
    }
    wtr.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Build the item x category ratings matrix over a common set of tweet ids.
/// Every common-set item must be rated by the same number of annotators.
pub fn ratings_matrix(
    annotations: &[AnnotationRecord],
    common_ids: &BTreeSet<String>,
) -> Result<RatingsMatrix> {
    let mut per_item: BTreeMap<&str, [u32; 3]> = BTreeMap::new();
    for id in common_ids {
        per_item.insert(id.as_str(), [0; 3]);
    }
    for a in annotations {
        if let Some(counts) = per_item.get_mut(a.tweet_id.as_str()) {
            let j = match a.label {
                Label::Dangerous => 0,
                Label::NotDangerous => 1,
                Label::Unsure => 2,
            };
            counts[j] += 1;
        }
    }
    let missing: Vec<&&str> = per_item
        .iter()
        .filter(|(_, c)| c.iter().sum::<u32>() == 0)
        .map(|(id, _)| id)
        .collect();
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "{} common-set items have no annotations (e.g. {})",
            missing.len(),
            missing[0]
        )));
    }
    RatingsMatrix::new(per_item.values().map(|c| c.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(tweet: &str, label: Label, reasons: &[RiskReason], who: &str) -> AnnotationRecord {
        AnnotationRecord {
            tweet_id: tweet.into(),
            label,
            risk_reasons: reasons.iter().copied().collect(),
            annotator_id: who.into(),
        }
    }

    #[test]
    fn reasons_require_dangerous_label() {
        let bad = ann("t1", Label::NotDangerous, &[RiskReason::Water], "a1");
        assert!(bad.validate().is_err());
        let ok = ann("t1", Label::Dangerous, &[RiskReason::Water], "a1");
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotations.csv");
        let records = vec![
            ann(
                "t1",
                Label::Dangerous,
                &[RiskReason::Water, RiskReason::Height],
                "a1",
            ),
            ann("t2", Label::NotDangerous, &[], "a1"),
            ann("t3", Label::Unsure, &[], "a2"),
        ];
        save_annotations(&records, &path).unwrap();
        let loaded = load_annotations(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded[0].risk_reasons.len(), 2);
        assert_eq!(loaded[2].label, Label::Unsure);
    }

    #[test]
    fn invalid_rows_reported_with_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotations.csv");
        std::fs::write(
            &path,
            "tweet_id,label,risk_reasons,annotator_id\n\
             t1,dangerous,water,a1\n\
             t2,not_dangerous,water,a1\n",
        )
        .unwrap();
        let err = load_annotations(&path).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn ratings_matrix_counts_labels() {
        let annotations = vec![
            ann("t1", Label::Dangerous, &[], "a1"),
            ann("t1", Label::Dangerous, &[], "a2"),
            ann("t1", Label::Unsure, &[], "a3"),
            ann("t2", Label::NotDangerous, &[], "a1"),
            ann("t2", Label::NotDangerous, &[], "a2"),
            ann("t2", Label::NotDangerous, &[], "a3"),
            ann("t9", Label::Dangerous, &[], "a1"), // outside the common set
        ];
        let common: BTreeSet<String> = ["t1", "t2"].iter().map(|s| s.to_string()).collect();
        let m = ratings_matrix(&annotations, &common).unwrap();
        assert_eq!(m.n_items(), 2);
        assert_eq!(m.raters(), 3);
    }

    #[test]
    fn unequal_rater_counts_rejected() {
        let annotations = vec![
            ann("t1", Label::Dangerous, &[], "a1"),
            ann("t1", Label::Dangerous, &[], "a2"),
            ann("t2", Label::NotDangerous, &[], "a1"),
        ];
        let common: BTreeSet<String> = ["t1", "t2"].iter().map(|s| s.to_string()).collect();
        assert!(ratings_matrix(&annotations, &common).is_err());
    }
}
