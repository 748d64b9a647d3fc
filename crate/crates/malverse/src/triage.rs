//! Suspicion scoring and path triage.
//!
//! A naive-Bayes model over API presence is trained from labelled import
//! corpora (one sample per line, comma-separated API names). Each API's
//! class likelihood is Laplace-smoothed, and the posterior
//!
//! ```text
//! P(mal | api) = P(api|mal) * prior / (P(api|mal) * prior + P(api|ben) * (1 - prior))
//! ```
//!
//! flags an API when it meets the threshold (default 0.70). An internal
//! function scores the maximum posterior over the external APIs it
//! references; a path is suspicious when it invokes a flagged function or
//! a flagged API, except that paths which ended at an `evade` marker are
//! always treated as benign (the sample refused to act there).
//!
//! Diffing two concretized paths locates the root cause of divergence:
//! the first invocation where the callees differ or the same callee
//! returned different concrete values.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::callgraph::CallGraph;
use crate::solver::ConcretizedCall;
use crate::symexec::{PathSet, PathState, PathStatus};

pub const DEFAULT_PRIOR: f64 = 0.5;
pub const DEFAULT_THRESHOLD: f64 = 0.70;

#[derive(Debug, Error, PartialEq)]
pub enum TriageError {
    #[error("the {0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("no internal function named `{0}` in the call graph")]
    UnknownFunction(String),
    #[error("histories are identical; the paths differ only through effects the model does not capture")]
    NoDivergence,
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("cannot access model file `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Likelihood {
    p_mal: f64,
    p_ben: f64,
}

/// Trained suspicion model: per-API class likelihoods plus the prior and
/// flagging threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesModel {
    pub prior: f64,
    pub threshold: f64,
    apis: BTreeMap<String, Likelihood>,
}

/// Parse labelled import sets: one sample per line, comma-separated API
/// names. Interior blank lines are samples with no imports; only the
/// empty segment a trailing newline produces is dropped.
pub fn load_import_sets(text: &str) -> Vec<BTreeSet<String>> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines
        .into_iter()
        .map(|line| {
            line.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
        .collect()
}

/// Train from labelled corpora with Laplace smoothing:
/// `P(api|class) = (count + 1) / (N + 2)`.
pub fn train(
    benign: &[BTreeSet<String>],
    malicious: &[BTreeSet<String>],
    prior: f64,
    threshold: f64,
) -> Result<BayesModel, TriageError> {
    if benign.is_empty() {
        return Err(TriageError::EmptyCorpus("benign"));
    }
    if malicious.is_empty() {
        return Err(TriageError::EmptyCorpus("malicious"));
    }

    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for set in malicious {
        for api in set {
            counts.entry(api.clone()).or_default().0 += 1;
        }
    }
    for set in benign {
        for api in set {
            counts.entry(api.clone()).or_default().1 += 1;
        }
    }

    let n_mal = malicious.len() as f64;
    let n_ben = benign.len() as f64;
    let apis = counts
        .into_iter()
        .map(|(api, (cm, cb))| {
            let l = Likelihood {
                p_mal: (cm as f64 + 1.0) / (n_mal + 2.0),
                p_ben: (cb as f64 + 1.0) / (n_ben + 2.0),
            };
            (api, l)
        })
        .collect();

    Ok(BayesModel { prior, threshold, apis })
}

impl BayesModel {
    /// Posterior probability that a sample referencing this API is
    /// malicious. APIs absent from both corpora score the prior.
    pub fn posterior(&self, api: &str) -> f64 {
        match self.apis.get(api) {
            Some(l) => {
                let num = l.p_mal * self.prior;
                num / (num + l.p_ben * (1.0 - self.prior))
            }
            None => self.prior,
        }
    }

    pub fn is_flagged_api(&self, api: &str) -> bool {
        self.posterior(api) >= self.threshold
    }

    pub fn api_names(&self) -> impl Iterator<Item = &str> {
        self.apis.keys().map(String::as_str)
    }

    /// Line-based text form: a `prior=<p> threshold=<t>` header followed
    /// by `api P(api|mal) P(api|ben)` rows in name order.
    pub fn to_text(&self) -> String {
        let mut out = format!("prior={} threshold={}\n", self.prior, self.threshold);
        for (api, l) in &self.apis {
            out.push_str(&format!("{api} {} {}\n", l.p_mal, l.p_ben));
        }
        out
    }

    pub fn parse_str(text: &str) -> Result<BayesModel, ModelIoError> {
        let fail = |line: usize, message: String| ModelIoError::Format { line, message };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| fail(1, "missing header line".to_string()))?;

        let mut prior = None;
        let mut threshold = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("prior", v)) => {
                    prior = Some(v.parse::<f64>().map_err(|e| fail(1, format!("bad prior: {e}")))?)
                }
                Some(("threshold", v)) => {
                    threshold =
                        Some(v.parse::<f64>().map_err(|e| fail(1, format!("bad threshold: {e}")))?)
                }
                _ => return Err(fail(1, format!("unrecognized header field `{field}`"))),
            }
        }
        let prior = prior.ok_or_else(|| fail(1, "header is missing `prior=`".to_string()))?;
        let threshold =
            threshold.ok_or_else(|| fail(1, "header is missing `threshold=`".to_string()))?;

        let mut apis = BTreeMap::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (name, pm, pb) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(n), Some(pm), Some(pb), None) => (n, pm, pb),
                _ => {
                    return Err(fail(
                        line_no,
                        "expected `api P(api|mal) P(api|ben)`".to_string(),
                    ))
                }
            };
            let p_mal = pm
                .parse::<f64>()
                .map_err(|e| fail(line_no, format!("bad P(api|mal): {e}")))?;
            let p_ben = pb
                .parse::<f64>()
                .map_err(|e| fail(line_no, format!("bad P(api|ben): {e}")))?;
            apis.insert(name.to_string(), Likelihood { p_mal, p_ben });
        }
        if apis.is_empty() {
            return Err(fail(1, "model has no API rows".to_string()));
        }
        Ok(BayesModel { prior, threshold, apis })
    }

    pub fn load(path: &Path) -> Result<BayesModel, ModelIoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelIoError::Io { path: path.display().to_string(), source: e })?;
        BayesModel::parse_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelIoError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| ModelIoError::Io { path: path.display().to_string(), source: e })
    }

    /// Digest of the canonical text form, for patch provenance.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        hex::encode(h.finalize())
    }
}

/// Suspicion score of one internal function: the maximum posterior over
/// the external APIs it references (directly by default, transitively on
/// request). Functions referencing no externals score the prior.
pub fn score_function(
    name: &str,
    cg: &CallGraph,
    model: &BayesModel,
    transitive: bool,
) -> Result<(f64, bool), TriageError> {
    match cg.node(name) {
        Some(n) if !n.external => {}
        _ => return Err(TriageError::UnknownFunction(name.to_string())),
    }
    let refs = if transitive {
        cg.transitive_external_refs(name)
    } else {
        cg.direct_external_refs(name)
    };
    let posterior = refs
        .iter()
        .map(|api| model.posterior(api))
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
        .unwrap_or(model.prior);
    Ok((posterior, posterior >= model.threshold))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionScore {
    pub posterior: f64,
    pub flagged: bool,
}

/// Scores for every internal function plus the set of flagged APIs.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspicionReport {
    pub threshold: f64,
    pub functions: BTreeMap<String, FunctionScore>,
    pub flagged_apis: BTreeSet<String>,
}

pub fn build_report(cg: &CallGraph, model: &BayesModel, transitive: bool) -> SuspicionReport {
    let functions = cg
        .nodes
        .iter()
        .filter(|n| !n.external)
        .map(|n| {
            let (posterior, flagged) = score_function(&n.name, cg, model, transitive)
                .expect("internal node scores");
            (n.name.clone(), FunctionScore { posterior, flagged })
        })
        .collect();
    let flagged_apis = model
        .api_names()
        .filter(|api| model.is_flagged_api(api))
        .map(str::to_string)
        .collect();
    SuspicionReport { threshold: model.threshold, functions, flagged_apis }
}

impl SuspicionReport {
    /// A path is suspicious when it invokes a flagged internal function
    /// or a flagged external API. Paths that ended at an `evade` marker
    /// are always benign: the sample refused to act on them.
    pub fn path_is_suspicious(&self, path: &PathState) -> bool {
        if matches!(path.status, PathStatus::Evaded(_)) {
            return false;
        }
        path.history.iter().any(|r| {
            if r.external {
                self.flagged_apis.contains(&r.callee)
            } else {
                self.functions.get(&r.callee).is_some_and(|f| f.flagged)
            }
        })
    }
}

/// Partition a path set by the suspicion rule.
pub fn filter_paths(paths: &PathSet, report: &SuspicionReport) -> (PathSet, PathSet) {
    let mut suspicious = Vec::new();
    let mut benign = Vec::new();
    for p in &paths.paths {
        if report.path_is_suspicious(p) {
            suspicious.push(p.clone());
        } else {
            benign.push(p.clone());
        }
    }
    (
        PathSet { paths: suspicious, truncated: paths.truncated },
        PathSet { paths: benign, truncated: paths.truncated },
    )
}

/// Where a suspicious path and its benign counterpart diverge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootCause {
    pub seq: usize,
    pub function: String,
    /// Concrete return on the suspicious side; absent when the benign
    /// history ended or called something else first.
    pub suspicious_return: Option<u64>,
    /// Concrete return on the benign side; absent when the callees at
    /// this position differ or the benign history is shorter.
    pub benign_return: Option<u64>,
}

/// First invocation where two concretized histories diverge: a differing
/// callee (unmatched), the same callee with differing returns
/// (mismatched), or one history continuing past the other's end.
pub fn diff_paths(
    suspicious: &[ConcretizedCall],
    benign: &[ConcretizedCall],
) -> Result<RootCause, TriageError> {
    for i in 0..suspicious.len().max(benign.len()) {
        match (suspicious.get(i), benign.get(i)) {
            (Some(s), Some(b)) => {
                if s.callee != b.callee {
                    return Ok(RootCause {
                        seq: i,
                        function: s.callee.clone(),
                        suspicious_return: Some(s.ret),
                        benign_return: None,
                    });
                }
                if s.ret != b.ret {
                    return Ok(RootCause {
                        seq: i,
                        function: s.callee.clone(),
                        suspicious_return: Some(s.ret),
                        benign_return: Some(b.ret),
                    });
                }
            }
            (Some(s), None) => {
                return Ok(RootCause {
                    seq: i,
                    function: s.callee.clone(),
                    suspicious_return: Some(s.ret),
                    benign_return: None,
                });
            }
            (None, Some(b)) => {
                return Ok(RootCause {
                    seq: i,
                    function: b.callee.clone(),
                    suspicious_return: None,
                    benign_return: Some(b.ret),
                });
            }
            (None, None) => unreachable!("loop bound is the longer length"),
        }
    }
    Err(TriageError::NoDivergence)
}

/// Length of the common `(callee, return)` prefix of two histories.
pub fn common_prefix_len(a: &[ConcretizedCall], b: &[ConcretizedCall]) -> usize {
    a.iter()
        .zip(b.iter())
        .take_while(|(x, y)| x.callee == y.callee && x.ret == y.ret)
        .count()
}

/// Pick the benign history most aligned with the suspicious one: the
/// longest common concretized prefix, earliest candidate on ties.
pub fn select_benign_counterpart(
    suspicious: &[ConcretizedCall],
    candidates: &[Vec<ConcretizedCall>],
) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            let la = common_prefix_len(suspicious, a);
            let lb = common_prefix_len(suspicious, b);
            // max_by keeps the later element on Equal; reverse the index
            // comparison so the earliest candidate wins ties.
            la.cmp(&lb).then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
}
