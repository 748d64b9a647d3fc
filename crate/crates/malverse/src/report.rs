//! Serializable report shapes: everything one `analyze` run learned
//! about a sample, in a form that is byte-identical across repeated
//! seeded runs.
//!
//! All file references are base names relative to the output directory,
//! so reports do not embed machine-specific paths.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// Base name of the analyzed sample file.
    pub sample: String,
    pub seed: u64,
    /// Whether function scoring used transitive external references.
    pub transitive: bool,
    pub model_hash: String,
    pub threshold: f64,
    pub anchors: AnchorsReport,
    /// True when exploration hit its state cap and dropped forks.
    pub truncated: bool,
    pub counts: PathCounts,
    pub flagged_apis: Vec<String>,
    pub function_scores: Vec<FunctionScoreReport>,
    pub paths: Vec<PathReport>,
    pub patches: Vec<PatchReport>,
    /// Suspicious paths no patch could be produced or validated for.
    pub unpatched: Vec<UnpatchedReport>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorsReport {
    pub entry: String,
    /// Every function that qualified as entry, in source order; the
    /// first is the one used.
    pub entry_candidates: Vec<String>,
    pub exits: Vec<ExitReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitReport {
    pub block: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCounts {
    pub total: usize,
    pub reached_exit: usize,
    pub evaded: usize,
    pub deadend: usize,
    pub suspicious: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionScoreReport {
    pub function: String,
    pub posterior: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallReport {
    pub seq: usize,
    pub callee: String,
    pub external: bool,
    pub kind: String,
    /// The return expression as the symbolic engine saw it.
    pub symbolic_ret: String,
    /// The return under this path's satisfying model, when one exists.
    pub concrete_ret: Option<u64>,
    /// Hex bytes of the stub buffer content under the model.
    pub buffer_hex: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub fingerprint: String,
    pub status: String,
    pub suspicious: bool,
    /// `sat`, `unsat`, or `unknown: <reason>`.
    pub solver: String,
    pub marks: Vec<String>,
    pub constraints: Vec<String>,
    pub calls: Vec<CallReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootCauseReport {
    /// Invocation index where the suspicious and benign histories part.
    pub seq: usize,
    pub function: String,
    pub suspicious_return: Option<u64>,
    pub benign_return: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub function: String,
    pub returns: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreloadReport {
    pub function: String,
    pub bytes_hex: String,
    pub buffer_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchReport {
    pub path_fingerprint: String,
    /// `full` or `minimal`.
    pub mode: String,
    pub root_cause: Option<RootCauseReport>,
    /// Base name of the C source written for this patch.
    pub source_file: String,
    /// Base name of the serialized patch specification.
    pub spec_file: String,
    pub schedules: Vec<ScheduleReport>,
    pub preloads: Vec<PreloadReport>,
    pub verdict: VerdictReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnpatchedReport {
    pub path_fingerprint: String,
    pub reason: String,
}
