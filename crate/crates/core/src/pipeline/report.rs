//! Report artifacts: the overall-classification matrix, the per-risk table,
//! ECDF/KS exports per location feature, and the incident characterization
//! tables. Stages write these files; [`emit_report`] locates them afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::corpus::annotations::{Label, RiskReason};
use crate::corpus::incidents::{BreakdownDimension, IncidentSet};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::learn::{FeatureConfig, FeatureMatrix, RiskTask};
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::featurize::TweetRow;
use crate::pipeline::{evaluate_cell, family_grid, overall_dataset};
use crate::stats::{ecdf_export, ks_two_sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Table4,
    Table5,
    Ecdf,
    Incidents,
}

impl std::str::FromStr for ReportKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table4" => Ok(ReportKind::Table4),
            "table5" => Ok(ReportKind::Table5),
            "ecdf" => Ok(ReportKind::Ecdf),
            "incidents" => Ok(ReportKind::Incidents),
            other => Err(Error::config(format!("unknown report kind {other:?}"))),
        }
    }
}

/// Locate the artifacts a finished stage produced. Errors name the stage
/// that still has to run.
pub fn emit_report(out_dir: &Path, kind: ReportKind) -> Result<Vec<PathBuf>> {
    let stage = match kind {
        ReportKind::Table4 => "cv",
        ReportKind::Table5 => "risk",
        ReportKind::Ecdf => "ks",
        ReportKind::Incidents => "incidents",
    };
    let dir = out_dir.join(stage);
    let marker = dir.join(".stage");
    let text = std::fs::read_to_string(&marker).map_err(|_| {
        Error::data(format!(
            "report artifacts missing: run the `{stage}` stage first (killfie run --config ...)"
        ))
    })?;
    #[derive(serde::Deserialize)]
    struct Marker {
        outputs: BTreeMap<String, String>,
    }
    let marker: Marker = serde_json::from_str(&text)?;
    Ok(marker.outputs.keys().map(|f| dir.join(f)).collect())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// KS / ECDF
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct KsEntry {
    column: String,
    d: Option<f64>,
    p: Option<f64>,
    n: usize,
    m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped: Option<String>,
}

pub fn write_ks_reports(
    dir: &Path,
    corpus: &Corpus,
    labels: &BTreeMap<String, (Label, BTreeSet<RiskReason>)>,
    loc_ids: &[String],
    location: &FeatureMatrix<f64>,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut entries = Vec::new();

    let label_of: BTreeMap<&str, Label> = corpus
        .records()
        .iter()
        .filter_map(|r| labels.get(&r.id).map(|(l, _)| (r.id.as_str(), *l)))
        .collect();

    for (c, full_name) in location.names().iter().enumerate() {
        let bare = full_name.strip_prefix("loc:").unwrap_or(full_name);
        let mut dangerous = Vec::new();
        let mut benign = Vec::new();
        for (r, id) in loc_ids.iter().enumerate() {
            if location.is_missing(r, c) {
                continue;
            }
            match label_of.get(id.as_str()) {
                Some(Label::Dangerous) => dangerous.push(location.get(r, c)),
                Some(Label::NotDangerous) => benign.push(location.get(r, c)),
                _ => {}
            }
        }
        if dangerous.is_empty() || benign.is_empty() {
            entries.push(KsEntry {
                column: bare.to_string(),
                d: None,
                p: None,
                n: dangerous.len(),
                m: benign.len(),
                skipped: Some("one class has no observed values".into()),
            });
            continue;
        }
        let ks = ks_two_sample(&dangerous, &benign)?;
        entries.push(KsEntry {
            column: bare.to_string(),
            d: Some(ks.d),
            p: Some(ks.p),
            n: ks.n,
            m: ks.m,
            skipped: None,
        });

        // Plot-ready ECDF curves over the pooled grid.
        let mut grid: Vec<f64> = dangerous.iter().chain(benign.iter()).copied().collect();
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        grid.dedup();
        for (class, samples) in [("dangerous", &dangerous), ("not_dangerous", &benign)] {
            let table = ecdf_export(samples, &grid)?;
            let mut csv = String::from("x,f\n");
            for (x, f) in table {
                csv.push_str(&format!("{x:?},{f:?}\n"));
            }
            let file = format!("ecdf_{bare}_{class}.csv");
            write_file(dir, &file, &csv)?;
            files.push(file);
        }
    }

    write_file(dir, "ks.json", &serde_json::to_string_pretty(&entries)?)?;
    files.push("ks.json".into());
    Ok(files)
}

// ---------------------------------------------------------------------------
// Table 4: feature configurations x classifier families
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Table4Cell {
    config: String,
    family: String,
    accuracy_mean: f64,
    accuracy_sd: f64,
    macro_f1_mean: f64,
}

pub fn write_table4(
    dir: &Path,
    config: &PipelineConfig,
    rows: &[TweetRow],
    corpus: &Corpus,
    labels: &BTreeMap<String, (Label, BTreeSet<RiskReason>)>,
) -> Result<Vec<String>> {
    let (keep, y, _) = overall_dataset(corpus, labels);
    if keep.is_empty() {
        return Err(Error::data(
            "no labeled tweets available for cross-validation",
        ));
    }

    let mut cells = Vec::new();
    for blocks in FeatureConfig::all_seven() {
        for family in &config.learn.families {
            let grid = family_grid(family, &config.learn.grid, config.seed)?;
            let metrics =
                evaluate_cell(rows, &keep, &y, blocks.clone(), None, &grid, config, None)?;
            cells.push(Table4Cell {
                config: blocks.label(),
                family: family.clone(),
                accuracy_mean: metrics.accuracy.mean,
                accuracy_sd: metrics.accuracy.sd,
                macro_f1_mean: metrics.macro_avg.f1.mean,
            });
        }
    }

    let mut csv = String::from("config");
    for family in &config.learn.families {
        csv.push(',');
        csv.push_str(family);
    }
    csv.push('\n');
    for blocks in FeatureConfig::all_seven() {
        let label = blocks.label();
        csv.push_str(&label);
        for family in &config.learn.families {
            let cell = cells
                .iter()
                .find(|c| c.config == label && &c.family == family)
                .expect("cell computed");
            csv.push_str(&format!(",{:.4}", cell.accuracy_mean));
        }
        csv.push('\n');
    }

    write_file(dir, "table4.csv", &csv)?;
    write_file(dir, "table4.json", &serde_json::to_string_pretty(&cells)?)?;
    Ok(vec!["table4.csv".into(), "table4.json".into()])
}

// ---------------------------------------------------------------------------
// Table 5: per-risk classifiers
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Table5Column {
    risk: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    refused: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best: Option<Table5Best>,
    /// Every family's accuracy for transparency.
    families: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Table5Best {
    technique: String,
    accuracy: f64,
    /// Macro-averaged headline values plus the other conventions.
    precision_macro: f64,
    recall_macro: f64,
    f1_macro: f64,
    precision_positive: f64,
    recall_positive: f64,
    f1_positive: f64,
    precision_weighted: f64,
    recall_weighted: f64,
    f1_weighted: f64,
}

pub fn write_table5(
    dir: &Path,
    config: &PipelineConfig,
    rows: &[TweetRow],
    corpus: &Corpus,
    labels: &BTreeMap<String, (Label, BTreeSet<RiskReason>)>,
) -> Result<Vec<String>> {
    let (keep, _overall_y, ids) = overall_dataset(corpus, labels);
    if keep.is_empty() {
        return Err(Error::data(
            "no labeled tweets available for risk classification",
        ));
    }
    let reason_sets: Vec<BTreeSet<RiskReason>> = ids
        .iter()
        .map(|id| labels.get(*id).map(|(_, r)| r.clone()).unwrap_or_default())
        .collect();

    let tasks = [RiskTask::Water, RiskTask::Height, RiskTask::VehicleRoad];
    let mut columns = Vec::new();
    for task in tasks {
        let y: Vec<bool> = reason_sets.iter().map(|r| task.matches(r)).collect();
        let positives = y.iter().filter(|&&p| p).count();
        if positives < crate::learn::MIN_RISK_POSITIVES {
            columns.push(Table5Column {
                risk: task.as_str().to_string(),
                refused: Some(format!(
                    "only {positives} positive samples (need at least {})",
                    crate::learn::MIN_RISK_POSITIVES
                )),
                best: None,
                families: BTreeMap::new(),
            });
            continue;
        }

        let blocks = FeatureConfig::new([
            crate::learn::FeatureBlock::Text,
            crate::learn::FeatureBlock::Image,
            crate::learn::FeatureBlock::Location,
        ])?;
        let mut families = BTreeMap::new();
        let mut best: Option<(f64, String, crate::learn::EvalMetrics)> = None;
        for family in &config.learn.families {
            let grid = family_grid(family, &config.learn.grid, config.seed)?;
            let metrics = evaluate_cell(
                rows,
                &keep,
                &y,
                blocks.clone(),
                Some(task),
                &grid,
                config,
                None,
            )?;
            families.insert(family.clone(), metrics.accuracy.mean);
            let better = best
                .as_ref()
                .is_none_or(|(acc, _, _)| metrics.accuracy.mean > *acc);
            if better {
                best = Some((metrics.accuracy.mean, family.clone(), metrics));
            }
        }
        let (_, technique, metrics) = best.expect("at least one family");
        columns.push(Table5Column {
            risk: task.as_str().to_string(),
            refused: None,
            best: Some(Table5Best {
                technique,
                accuracy: metrics.accuracy.mean,
                precision_macro: metrics.macro_avg.precision.mean,
                recall_macro: metrics.macro_avg.recall.mean,
                f1_macro: metrics.macro_avg.f1.mean,
                precision_positive: metrics.positive.precision.mean,
                recall_positive: metrics.positive.recall.mean,
                f1_positive: metrics.positive.f1.mean,
                precision_weighted: metrics.weighted_avg.precision.mean,
                recall_weighted: metrics.weighted_avg.recall.mean,
                f1_weighted: metrics.weighted_avg.f1.mean,
            }),
            families,
        });
    }

    let mut csv = String::from("metric");
    for col in &columns {
        csv.push(',');
        csv.push_str(&col.risk);
    }
    csv.push('\n');
    let metric_rows: [(&str, fn(&Table5Best) -> String); 5] = [
        ("accuracy", |b| format!("{:.4}", b.accuracy)),
        ("precision", |b| format!("{:.4}", b.precision_macro)),
        ("recall", |b| format!("{:.4}", b.recall_macro)),
        ("f1_score", |b| format!("{:.4}", b.f1_macro)),
        ("technique", |b| b.technique.clone()),
    ];
    for (name, value) in metric_rows {
        csv.push_str(name);
        for col in &columns {
            csv.push(',');
            match &col.best {
                Some(best) => csv.push_str(&value(best)),
                None => csv.push_str("refused"),
            }
        }
        csv.push('\n');
    }

    write_file(dir, "table5.csv", &csv)?;
    write_file(dir, "table5.json", &serde_json::to_string_pretty(&columns)?)?;
    Ok(vec!["table5.csv".into(), "table5.json".into()])
}

// ---------------------------------------------------------------------------
// Incident characterization
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct IncidentSummary {
    total_deaths: u32,
    total_incidents: usize,
    group_incidents: usize,
    individual_incidents: usize,
}

pub fn write_incident_reports(dir: &Path, set: &IncidentSet) -> Result<Vec<String>> {
    let mut files = Vec::new();

    let tables = [
        (
            "incidents_by_country.csv",
            BreakdownDimension::Country,
            "country,casualties",
        ),
        (
            "incidents_by_reason.csv",
            BreakdownDimension::Reason,
            "reason,casualties",
        ),
        (
            "incidents_group_size.csv",
            BreakdownDimension::GroupSize,
            "group_size,incidents",
        ),
        (
            "incidents_by_gender.csv",
            BreakdownDimension::Gender,
            "gender,victims",
        ),
        (
            "incidents_by_age_band.csv",
            BreakdownDimension::AgeBand,
            "age_band,victims",
        ),
    ];
    for (file, dimension, header) in tables {
        let mut csv = format!("{header}\n");
        for (key, count) in set.breakdown(dimension) {
            csv.push_str(&format!("{key},{count}\n"));
        }
        write_file(dir, file, &csv)?;
        files.push(file.to_string());
    }

    let summary = IncidentSummary {
        total_deaths: set.total_deaths(),
        total_incidents: set.len(),
        group_incidents: set.group_incidents(),
        individual_incidents: set.len() - set.group_incidents(),
    };
    write_file(
        dir,
        "incidents_summary.json",
        &serde_json::to_string_pretty(&summary)?,
    )?;
    files.push("incidents_summary.json".into());
    Ok(files)
}
