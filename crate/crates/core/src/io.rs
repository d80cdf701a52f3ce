//! Input records, the result document and plot-ready curve tables.
//!
//! Inputs are delimiter-separated text with a header row. Columns are
//! matched by name, so their order is free and extra columns are ignored.
//!
//! | kind         | required columns                      |
//! |--------------|---------------------------------------|
//! | `summary`    | `group_id`, `estimate`, `sd`          |
//! | `raw_ab`     | `group_id`, `arm`, `outcome`          |
//! | `classifier` | `group_id`, `label`, `classification` |
//!
//! `arm` is `control` or `treatment`; `label` and `classification` are `0`
//! or `1`. Group order in the output follows first appearance in the file.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::{ClusteringConfig, ClusteringResult, MergeStep, ThresholdPolicy, TieBreak};
use crate::error::{Error, Result};
use crate::similarity::{classifier_rate_metric, GroupId, GroupMetric, Prediction, RateKind};
use crate::simulation::{FprCurvePoint, PowerCurvePoint};
use crate::stats::{welch_summary, PValue, SampleSummary};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Summary,
    RawAb,
    Classifier,
}

impl InputKind {
    pub fn name(self) -> &'static str {
        match self {
            InputKind::Summary => "summary",
            InputKind::RawAb => "raw_ab",
            InputKind::Classifier => "classifier",
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "summary" => Ok(InputKind::Summary),
            "raw_ab" | "raw-ab" => Ok(InputKind::RawAb),
            "classifier" => Ok(InputKind::Classifier),
            other => Err(Error::InvalidConfig(format!(
                "unknown input kind `{other}` (expected summary, raw_ab or classifier)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummaryRecord {
    pub group_id: String,
    pub estimate: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmLabel {
    Control,
    Treatment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExperimentRecord {
    pub group_id: String,
    pub arm: ArmLabel,
    pub outcome: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRecord {
    pub group_id: String,
    pub label: u8,
    pub classification: u8,
}

fn csv_reader<R: Read>(input: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn parse_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    let message = match err.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => err.to_string(),
    };
    Error::Parse { line, message }
}

/// Reads every row as `T`, pairing each with its 1-based line number.
fn read_records<T: DeserializeOwned, R: Read>(input: R, delimiter: u8) -> Result<Vec<(u64, T)>> {
    let mut reader = csv_reader(input, delimiter);
    let headers = reader.headers().map_err(parse_error)?.clone();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(parse_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let record = row.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        out.push((line, record));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("input contains a header but no data rows".into()));
    }
    Ok(out)
}

/// Preserves first-appearance order of group ids.
struct Grouper<V> {
    index: HashMap<String, usize>,
    groups: Vec<(String, V)>,
}

impl<V: Default> Grouper<V> {
    fn new() -> Self {
        Grouper {
            index: HashMap::new(),
            groups: Vec::new(),
        }
    }

    fn entry(&mut self, id: &str) -> &mut V {
        let i = match self.index.get(id) {
            Some(&i) => i,
            None => {
                self.groups.push((id.to_owned(), V::default()));
                self.index.insert(id.to_owned(), self.groups.len() - 1);
                self.groups.len() - 1
            }
        };
        &mut self.groups[i].1
    }
}

fn check_id(line: u64, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::Parse {
            line,
            message: "empty group_id".into(),
        });
    }
    Ok(())
}

fn finish(metrics: Vec<Result<GroupMetric>>) -> Result<Vec<GroupMetric>> {
    let mut ok = Vec::with_capacity(metrics.len());
    let mut failed = Vec::new();
    for m in metrics {
        match m {
            Ok(m) => ok.push(m),
            Err(e) => failed.push(e),
        }
    }
    if failed.is_empty() {
        return Ok(ok);
    }
    Err(Error::DegenerateGroups(
        failed
            .into_iter()
            .map(|e| match e {
                Error::InvalidMetric { group, reason } => (group, reason),
                Error::DegenerateRate { group, rate } => (group, format!("rate {rate} has zero standard error")),
                other => (group_of(&other), other.to_string()),
            })
            .collect(),
    ))
}

fn group_of(e: &Error) -> String {
    // messages produced in this crate quote the group id in backticks
    let s = e.to_string();
    s.split('`').nth(1).unwrap_or("?").to_owned()
}

pub fn read_summary<R: Read>(input: R, delimiter: u8) -> Result<Vec<GroupMetric>> {
    let records: Vec<(u64, GroupSummaryRecord)> = read_records(input, delimiter)?;
    let mut seen = HashMap::new();
    let mut metrics = Vec::with_capacity(records.len());
    for (line, r) in records {
        check_id(line, &r.group_id)?;
        if let Some(first) = seen.insert(r.group_id.clone(), line) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate group_id `{}` (first seen on line {first})", r.group_id),
            });
        }
        metrics.push(GroupMetric::new(r.group_id, r.estimate, r.sd));
    }
    finish(metrics)
}

pub fn read_raw_ab<R: Read>(input: R, delimiter: u8) -> Result<Vec<GroupMetric>> {
    let records: Vec<(u64, RawExperimentRecord)> = read_records(input, delimiter)?;
    let mut groups: Grouper<(Vec<f64>, Vec<f64>)> = Grouper::new();
    for (line, r) in records {
        check_id(line, &r.group_id)?;
        if !r.outcome.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("outcome {} is not finite", r.outcome),
            });
        }
        let (control, treatment) = groups.entry(&r.group_id);
        match r.arm {
            ArmLabel::Control => control.push(r.outcome),
            ArmLabel::Treatment => treatment.push(r.outcome),
        }
    }
    finish(
        groups
            .groups
            .into_iter()
            .map(|(id, (control, treatment))| {
                welch_summary(
                    GroupId::from(id),
                    &SampleSummary::from_values(&treatment),
                    &SampleSummary::from_values(&control),
                )
            })
            .collect(),
    )
}

pub fn read_classifier<R: Read>(input: R, delimiter: u8, kind: RateKind) -> Result<Vec<GroupMetric>> {
    let records: Vec<(u64, ClassifierRecord)> = read_records(input, delimiter)?;
    let mut groups: Grouper<Vec<Prediction>> = Grouper::new();
    for (line, r) in records {
        check_id(line, &r.group_id)?;
        let binary = |name: &str, v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Parse {
                line,
                message: format!("{name} must be 0 or 1, got {other}"),
            }),
        };
        let p = Prediction::new(binary("label", r.label)?, binary("classification", r.classification)?);
        groups.entry(&r.group_id).push(p);
    }
    finish(
        groups
            .groups
            .into_iter()
            .map(|(id, preds)| classifier_rate_metric(id, &preds, kind))
            .collect(),
    )
}

/// Parses any supported input into group metrics.
pub fn read_metrics<R: Read>(
    input: R,
    kind: InputKind,
    metric: Option<RateKind>,
    delimiter: u8,
) -> Result<Vec<GroupMetric>> {
    match kind {
        InputKind::Summary => read_summary(input, delimiter),
        InputKind::RawAb => read_raw_ab(input, delimiter),
        InputKind::Classifier => {
            let metric = metric.ok_or_else(|| {
                Error::InvalidConfig(
                    "classifier input requires a metric (fpr, tpr, positive-rate, misclassification)".into(),
                )
            })?;
            read_classifier(input, delimiter, metric)
        }
    }
}

/// Writes metrics in the `summary` input format.
pub fn write_summary<W: Write>(output: W, metrics: &[GroupMetric], delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(output);
    for m in metrics {
        w.serialize(GroupSummaryRecord {
            group_id: m.group_id().to_string(),
            estimate: m.estimate(),
            sd: m.sd(),
        })
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Echo of the settings that produced a [`ResultDocument`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub alpha: f64,
    pub threshold_policy: ThresholdPolicy,
    pub tie_break: TieBreak,
    pub n_groups: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_kind: Option<InputKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<RateKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub members: Vec<GroupId>,
    pub mle_mean: f64,
    pub precision_sum: f64,
    pub weighted_sum: f64,
}

/// Machine-readable outcome of one clustering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub config: ConfigEcho,
    pub rejected: bool,
    pub threshold: f64,
    pub decision_pvalue: Option<PValue>,
    pub clusters: Vec<ClusterRecord>,
    pub trace: Vec<MergeStep>,
}

impl ResultDocument {
    pub fn new(
        result: &ClusteringResult,
        config: &ClusteringConfig,
        n_groups: usize,
        input_kind: Option<InputKind>,
        metric: Option<RateKind>,
    ) -> Self {
        ResultDocument {
            schema_version: SCHEMA_VERSION,
            config: ConfigEcho {
                alpha: config.alpha,
                threshold_policy: config.threshold_policy,
                tie_break: config.tie_break,
                n_groups,
                input_kind,
                metric,
            },
            rejected: result.rejected,
            threshold: result.threshold,
            decision_pvalue: result.decision_pvalue,
            clusters: result
                .final_clusters
                .iter()
                .map(|c| ClusterRecord {
                    members: c.members().to_vec(),
                    mle_mean: c.mle_mean(),
                    precision_sum: c.precision_sum(),
                    weighted_sum: c.weighted_sum(),
                })
                .collect(),
            trace: result.trace.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ResultDocument = serde_json::from_str(s)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}

pub fn write_power_table<W: Write>(mut out: W, points: &[PowerCurvePoint]) -> Result<()> {
    writeln!(out, "mu,exact_recovery_rate,rejection_rate,replications,recovery_se")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.mu,
            p.exact_recovery_rate,
            p.rejection_rate,
            p.replications,
            p.recovery_se()
        )?;
    }
    Ok(())
}

pub fn write_fpr_table<W: Write>(mut out: W, points: &[FprCurvePoint]) -> Result<()> {
    writeln!(out, "alpha,false_rejection_rate,replications,se")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            p.alpha,
            p.false_rejection_rate,
            p.replications,
            p.se()
        )?;
    }
    Ok(())
}
