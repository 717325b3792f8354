//! Incident database: one record per selfie casualty incident, plus the
//! dimensional breakdowns behind the characterization tables.
//!
//! The shipped fixture is synthetic: per-incident rows are constructed to
//! satisfy the published aggregate counts exactly and are flagged
//! `synthetic=true`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentReason {
    Height,
    Water,
    HeightAndWater,
    Train,
    Vehicle,
    Electricity,
    Weapon,
    Animal,
    Other,
}

impl IncidentReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            IncidentReason::Height => "height",
            IncidentReason::Water => "water",
            IncidentReason::HeightAndWater => "height_and_water",
            IncidentReason::Train => "train",
            IncidentReason::Vehicle => "vehicle",
            IncidentReason::Electricity => "electricity",
            IncidentReason::Weapon => "weapon",
            IncidentReason::Animal => "animal",
            IncidentReason::Other => "other",
        }
    }
}

impl std::str::FromStr for IncidentReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "height" => Ok(IncidentReason::Height),
            "water" => Ok(IncidentReason::Water),
            "height_and_water" => Ok(IncidentReason::HeightAndWater),
            "train" => Ok(IncidentReason::Train),
            "vehicle" => Ok(IncidentReason::Vehicle),
            "electricity" => Ok(IncidentReason::Electricity),
            "weapon" => Ok(IncidentReason::Weapon),
            "animal" => Ok(IncidentReason::Animal),
            "other" => Ok(IncidentReason::Other),
            other => Err(Error::data(format!("unknown incident reason {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Gender {
    M,
    F,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AgeBand {
    Under20,
    A20to24,
    A25to29,
    A30plus,
    Unknown,
}

impl AgeBand {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgeBand::Under20 => "under20",
            AgeBand::A20to24 => "a20to24",
            AgeBand::A25to29 => "a25to29",
            AgeBand::A30plus => "a30plus",
            AgeBand::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IncidentRecord {
    pub incident_id: String,
    pub date: NaiveDate,
    pub country: String,
    pub reason: IncidentReason,
    pub deaths: u32,
    /// One entry per victim when demographics are known, else empty.
    pub victim_genders: Vec<Gender>,
    pub victim_age_bands: Vec<AgeBand>,
    pub synthetic: bool,
}

impl IncidentRecord {
    pub fn validate(&self) -> Result<()> {
        if self.incident_id.is_empty() {
            return Err(Error::data("incident_id must be non-empty"));
        }
        if self.deaths == 0 {
            return Err(Error::data(format!(
                "incident {}: deaths must be >= 1",
                self.incident_id
            )));
        }
        if !self.victim_genders.is_empty() && self.victim_genders.len() != self.deaths as usize {
            return Err(Error::data(format!(
                "incident {}: {} genders for {} deaths",
                self.incident_id,
                self.victim_genders.len(),
                self.deaths
            )));
        }
        if !self.victim_age_bands.is_empty() && self.victim_age_bands.len() != self.deaths as usize
        {
            return Err(Error::data(format!(
                "incident {}: {} age bands for {} deaths",
                self.incident_id,
                self.victim_age_bands.len(),
                self.deaths
            )));
        }
        Ok(())
    }

    /// A group incident is one with multiple deaths.
    pub fn is_group(&self) -> bool {
        self.deaths >= 2
    }
}

#[derive(Debug, Clone, Default)]
pub struct IncidentSet {
    records: Vec<IncidentRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownDimension {
    Country,
    Reason,
    GroupSize,
    Gender,
    AgeBand,
}

impl std::str::FromStr for BreakdownDimension {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "country" => Ok(BreakdownDimension::Country),
            "reason" => Ok(BreakdownDimension::Reason),
            "group_size" => Ok(BreakdownDimension::GroupSize),
            "gender" => Ok(BreakdownDimension::Gender),
            "age_band" => Ok(BreakdownDimension::AgeBand),
            other => Err(Error::config(format!(
                "unknown breakdown dimension {other:?}"
            ))),
        }
    }
}

impl IncidentSet {
    pub fn from_records(records: Vec<IncidentRecord>) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        Ok(IncidentSet { records })
    }

    pub fn records(&self) -> &[IncidentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_deaths(&self) -> u32 {
        self.records.iter().map(|r| r.deaths).sum()
    }

    pub fn group_incidents(&self) -> usize {
        self.records.iter().filter(|r| r.is_group()).count()
    }

    /// Ordered count table for a dimension. Country and reason count deaths;
    /// group_size counts group incidents per death count; gender and
    /// age_band count victims. Country/reason/gender/age_band are ordered by
    /// descending count then name; group_size ascending by size.
    pub fn breakdown(&self, dimension: BreakdownDimension) -> Vec<(String, u32)> {
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        match dimension {
            BreakdownDimension::Country => {
                for r in &self.records {
                    *counts.entry(r.country.clone()).or_insert(0) += r.deaths;
                }
            }
            BreakdownDimension::Reason => {
                for r in &self.records {
                    *counts.entry(r.reason.as_str().to_string()).or_insert(0) += r.deaths;
                }
            }
            BreakdownDimension::GroupSize => {
                for r in self.records.iter().filter(|r| r.is_group()) {
                    *counts.entry(r.deaths.to_string()).or_insert(0) += 1;
                }
                let mut table: Vec<(String, u32)> = counts.into_iter().collect();
                table.sort_by_key(|(size, _)| size.parse::<u32>().unwrap_or(0));
                return table;
            }
            BreakdownDimension::Gender => {
                for r in &self.records {
                    for g in &r.victim_genders {
                        let key = match g {
                            Gender::M => "M",
                            Gender::F => "F",
                            Gender::Unknown => "unknown",
                        };
                        *counts.entry(key.to_string()).or_insert(0) += 1;
                    }
                }
            }
            BreakdownDimension::AgeBand => {
                for r in &self.records {
                    for a in &r.victim_age_bands {
                        *counts.entry(a.as_str().to_string()).or_insert(0) += 1;
                    }
                }
            }
        }
        let mut table: Vec<(String, u32)> = counts.into_iter().collect();
        table.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        table
    }
}

/// Parse the incidents CSV (header row mandatory). Any schema violation is
/// a hard failure carrying per-row diagnostics.
pub fn load_incidents(path: &Path) -> Result<IncidentSet> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_incidents_csv(&text).map_err(|e| match e {
        Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_incidents_csv(text: &str) -> Result<IncidentSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(Error::Csv)?.clone();
    let expected = [
        "incident_id",
        "date",
        "country",
        "reason",
        "deaths",
        "victim_genders",
        "victim_age_bands",
        "synthetic",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::data(format!(
            "incidents header must be {:?}, found {:?}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        match rec {
            Ok(rec) => match parse_incident_row(&rec) {
                Ok(r) => match r.validate() {
                    Ok(()) => records.push(r),
                    Err(e) => problems.push(format!("row {row}: {e}")),
                },
                Err(e) => problems.push(format!("row {row}: {e}")),
            },
            Err(e) => problems.push(format!("row {row}: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::data(problems.join("; ")));
    }
    IncidentSet::from_records(records)
}

fn parse_incident_row(rec: &csv::StringRecord) -> Result<IncidentRecord> {
    if rec.len() != 8 {
        return Err(Error::data(format!(
            "expected 8 fields, found {}",
            rec.len()
        )));
    }
    let field = |i: usize| rec.get(i).unwrap_or("").trim();
    let date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
        .map_err(|e| Error::data(format!("date: {e}")))?;
    let deaths: u32 = field(4)
        .parse()
        .map_err(|_| Error::data(format!("deaths: {:?} not a count", field(4))))?;
    let genders = field(5)
        .split('|')
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "M" => Ok(Gender::M),
            "F" => Ok(Gender::F),
            "unknown" => Ok(Gender::Unknown),
            other => Err(Error::data(format!("unknown gender {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let ages = field(6)
        .split('|')
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "under20" => Ok(AgeBand::Under20),
            "a20to24" => Ok(AgeBand::A20to24),
            "a25to29" => Ok(AgeBand::A25to29),
            "a30plus" => Ok(AgeBand::A30plus),
            "unknown" => Ok(AgeBand::Unknown),
            other => Err(Error::data(format!("unknown age band {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IncidentRecord {
        incident_id: field(0).to_string(),
        date,
        country: field(2).to_string(),
        reason: field(3).parse()?,
        deaths,
        victim_genders: genders,
        victim_age_bands: ages,
        synthetic: field(7) == "true",
    })
}

const FIXTURE_CSV: &str = include_str!("../../data/incidents.csv");

/// The shipped synthetic fixture encoding the published aggregates.
pub fn shipped_fixture() -> IncidentSet {
    parse_incidents_csv(FIXTURE_CSV).expect("shipped fixture is valid")
}

/// Write the shipped fixture to a file (used by the CLI when no incidents
/// path is given).
pub fn write_fixture(path: &Path) -> Result<()> {
    std::fs::write(path, FIXTURE_CSV).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_total_deaths_and_groups() {
        let set = shipped_fixture();
        assert_eq!(set.total_deaths(), 127);
        assert_eq!(set.group_incidents(), 24);
    }

    #[test]
    fn fixture_country_breakdown_matches_published_counts() {
        let set = shipped_fixture();
        let table = set.breakdown(BreakdownDimension::Country);
        let get = |name: &str| table.iter().find(|(c, _)| c == name).map(|(_, n)| *n);
        assert_eq!(get("India"), Some(76));
        assert_eq!(get("Pakistan"), Some(9));
        assert_eq!(get("USA"), Some(8));
        assert_eq!(get("Russia"), Some(6));
        assert_eq!(get("Hong Kong"), Some(1));
        assert_eq!(table[0].0, "India");
        assert_eq!(table.iter().map(|(_, n)| n).sum::<u32>(), 127);
        assert_eq!(table.len(), 20);
    }

    #[test]
    fn fixture_reason_breakdown() {
        let set = shipped_fixture();
        let table = set.breakdown(BreakdownDimension::Reason);
        let get = |name: &str| table.iter().find(|(c, _)| c == name).map(|(_, n)| *n);
        assert_eq!(get("height"), Some(29));
        assert_eq!(get("train"), Some(11));
        assert_eq!(get("height_and_water"), Some(27));
        // Height-related deaths top the reason table.
        assert_eq!(table[0].0, "height");
        let hw_incidents = set
            .records()
            .iter()
            .filter(|r| r.reason == IncidentReason::HeightAndWater)
            .count();
        assert_eq!(hw_incidents, 14);
        assert_eq!(table.iter().map(|(_, n)| n).sum::<u32>(), 127);
    }

    #[test]
    fn fixture_group_size_distribution() {
        let set = shipped_fixture();
        let table = set.breakdown(BreakdownDimension::GroupSize);
        assert_eq!(
            table,
            vec![
                ("2".to_string(), 16),
                ("3".to_string(), 5),
                ("5".to_string(), 1),
                ("7".to_string(), 2)
            ]
        );
    }

    #[test]
    fn group_size_accounting_covers_all_deaths() {
        let set = shipped_fixture();
        let table = set.breakdown(BreakdownDimension::GroupSize);
        let group_deaths: u32 = table
            .iter()
            .map(|(size, n)| size.parse::<u32>().unwrap() * n)
            .sum();
        let individual_incidents = set.records().iter().filter(|r| !r.is_group()).count() as u32;
        assert_eq!(group_deaths + individual_incidents, set.total_deaths());
    }

    #[test]
    fn fixture_demographics() {
        let set = shipped_fixture();
        let genders = set.breakdown(BreakdownDimension::Gender);
        assert_eq!(genders, vec![("M".to_string(), 96), ("F".to_string(), 31)]);
        // 96/127 = 75.6% male.
        let ages = set.breakdown(BreakdownDimension::AgeBand);
        let get = |name: &str| ages.iter().find(|(c, _)| c == name).map(|(_, n)| *n);
        assert_eq!(get("under20"), Some(41));
        assert_eq!(get("a20to24"), Some(45));
        assert_eq!(get("a25to29"), Some(24));
        assert_eq!(get("a30plus"), Some(17));
    }

    #[test]
    fn fixture_rows_are_flagged_synthetic() {
        assert!(shipped_fixture().records().iter().all(|r| r.synthetic));
    }

    #[test]
    fn empty_file_is_empty_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("incidents.csv");
        std::fs::write(
            &path,
            "incident_id,date,country,reason,deaths,victim_genders,victim_age_bands,synthetic\n",
        )
        .unwrap();
        let set = load_incidents(&path).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.total_deaths(), 0);
    }

    #[test]
    fn schema_violations_carry_row_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("incidents.csv");
        std::fs::write(
            &path,
            "incident_id,date,country,reason,deaths,victim_genders,victim_age_bands,synthetic\n\
             i1,2016-01-01,India,water,0,,,false\n\
             i2,not-a-date,India,water,1,,,false\n",
        )
        .unwrap();
        let err = load_incidents(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("row 3"), "{msg}");
    }

    #[test]
    fn demographics_length_mismatch_rejected() {
        let r = IncidentRecord {
            incident_id: "x".into(),
            date: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            country: "India".into(),
            reason: IncidentReason::Water,
            deaths: 3,
            victim_genders: vec![Gender::M],
            victim_age_bands: vec![],
            synthetic: false,
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn country_and_reason_totals_agree() {
        let set = shipped_fixture();
        let by_country: u32 = set
            .breakdown(BreakdownDimension::Country)
            .iter()
            .map(|(_, n)| n)
            .sum();
        let by_reason: u32 = set
            .breakdown(BreakdownDimension::Reason)
            .iter()
            .map(|(_, n)| n)
            .sum();
        assert_eq!(by_country, by_reason);
        assert_eq!(by_country, set.total_deaths());
    }
}
