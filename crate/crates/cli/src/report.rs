//! The versioned run report: everything a run produced, in one JSON document.
//! All fields except `meta` are pure functions of (config, seed); `meta`
//! quarantines timestamps and host info so determinism checks can strip it.

use serde::{Deserialize, Serialize};
use zofc_core::continual::EvalMatrix;
use zofc_core::metrics::{FlatnessSample, MetricsReport};
use zofc_core::optim::{PerturbLaw, PerturbationRecord};
use zofc_core::oracles::CostReport;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// Echo of the fully-resolved configuration the run executed.
    pub config: ExperimentConfig,
    pub matrix: EvalMatrix,
    /// Metrics after each task `k`, computed over the leading (k+1)x(k+1)
    /// submatrix; the forgetting entry is absent for the first task.
    pub per_task_metrics: Vec<MetricsReport>,
    pub flatness: Vec<FlatnessSample>,
    pub cost: CostReport,
    pub perturbations: PerturbationDigest,
    pub stats: RunStats,
    pub meta: Meta,
}

/// Compact summary of the perturbation history. Directions are replayable
/// from (base_seed, step, q) coordinates, so the report stores a checksum of
/// those coordinates rather than the records themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDigest {
    pub count: usize,
    pub base_seed: u64,
    /// FNV-1a over the record coordinates, in record order.
    pub checksum: u64,
}

impl PerturbationDigest {
    pub fn from_records(base_seed: u64, records: &[PerturbationRecord]) -> Self {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        for r in records {
            eat(&r.base_seed.to_le_bytes());
            eat(&r.step.to_le_bytes());
            eat(&r.q.to_le_bytes());
            eat(&r.epsilon.to_bits().to_le_bytes());
            eat(&[match r.law {
                PerturbLaw::Rademacher => 0,
                PerturbLaw::Gaussian => 1,
            }]);
        }
        PerturbationDigest {
            count: records.len(),
            base_seed,
            checksum: h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub tasks: usize,
    pub adapter_zo_steps: u64,
    pub head_zo_steps: u64,
    /// Mean probe loss of the first and last adapter ZO step, when any ran.
    pub first_zo_loss: Option<f64>,
    pub last_zo_loss: Option<f64>,
}

/// Quarantined non-deterministic context. Excluded from determinism
/// comparisons; everything outside this field is reproducible byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub created_unix_ms: u64,
    pub host: String,
    pub tool_version: String,
}

impl Meta {
    pub fn capture() -> Self {
        let created_unix_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let host = std::env::var("HOSTNAME").unwrap_or_else(|_| "unknown".into());
        Meta {
            created_unix_ms,
            host,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

impl RunReport {
    pub fn to_json(&self) -> CliResult<String> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Numeric(format!("report serialization: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let report: RunReport =
            serde_json::from_str(text).map_err(|e| CliError::data(format!("report parse: {e}")))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(CliError::data(format!(
                "unsupported report schema version {} (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

/// Render a report as JSON with the `meta` field removed — the canonical form
/// for byte-level determinism comparisons.
pub fn deterministic_json(report_text: &str) -> CliResult<String> {
    let mut value: serde_json::Value = serde_json::from_str(report_text)
        .map_err(|e| CliError::data(format!("report parse: {e}")))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("meta");
    }
    serde_json::to_string_pretty(&value).map_err(|e| CliError::data(e.to_string()))
}
