//! JSON report types.

use serde::Serialize;

use scaffold_core::graphdiff::DiffSummary;
use scaffold_core::registration::{IcpResult, StopReason};

use crate::config::InitialAlignment;
use crate::pipeline::{Deviation, GraphSummary, LengthSource, PreprocessSummary};

/// UTC now, or `SOURCE_DATE_EPOCH` when set so reruns are byte-identical.
pub fn timestamp() -> String {
    use chrono::{DateTime, SecondsFormat, Utc};
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0));
    fixed.unwrap_or_else(Utc::now).to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanInfo {
    /// File name of the input scan.
    pub id: String,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<PreprocessSummary>,
    pub points_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegistrationSummary {
    pub initial: InitialAlignment,
    /// `[R | T]` row by row.
    pub transform: [f64; 12],
    pub initial_mse: f64,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub correspondence_count: usize,
}

impl RegistrationSummary {
    pub fn of(r: &IcpResult, initial: InitialAlignment) -> Self {
        RegistrationSummary {
            initial,
            transform: r.transform.to_row_major(),
            initial_mse: r.error_history.first().copied().unwrap_or(r.mse),
            mse: r.mse,
            iterations: r.iterations,
            converged: r.converged,
            stop_reason: r.stop_reason,
            correspondence_count: r.correspondence_count,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationSummary {
    pub threshold_fraction: f64,
    pub characteristic_length: f64,
    pub characteristic_length_source: LengthSource,
    pub threshold: f64,
    pub within: usize,
    pub exceeding: usize,
    pub exceeding_fraction: f64,
    pub max_distance: f64,
    pub match_distance: f64,
    pub matched: usize,
    pub modified: usize,
}

impl DeviationSummary {
    pub fn of(d: &Deviation) -> Self {
        let r = &d.report;
        let exceeding = r.exceeding_count();
        let modified = d.change.modified_count();
        DeviationSummary {
            threshold_fraction: r.threshold_fraction,
            characteristic_length: r.characteristic_length,
            characteristic_length_source: d.length_source,
            threshold: r.threshold,
            within: r.labels.len() - exceeding,
            exceeding,
            exceeding_fraction: r.exceeding_fraction,
            max_distance: r.distances.iter().copied().fold(0.0, f64::max),
            match_distance: d.change.match_distance,
            matched: d.change.labels.len() - modified,
            modified,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphPair {
    pub reference: GraphSummary,
    pub current: GraphSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlertInfo {
    pub raised: bool,
    pub reasons: Vec<String>,
    pub alarm_level: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InspectionReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub started_at: String,
    pub finished_at: String,
    pub reference: ScanInfo,
    pub current: ScanInfo,
    pub registration: RegistrationSummary,
    pub deviation: DeviationSummary,
    pub graphs: GraphPair,
    pub diff: DiffSummary,
    /// Reference edge ids.
    pub missing_edges: Vec<usize>,
    /// Reference edge ids.
    pub deviated_edges: Vec<usize>,
    /// Current edge ids.
    pub added_edges: Vec<usize>,
    pub alert: AlertInfo,
    /// Files written next to this report.
    pub outputs: Vec<String>,
}
