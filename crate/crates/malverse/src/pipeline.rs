//! The end-to-end defusal pipeline: parse → call graph → anchors →
//! explore → solve → triage → diff → patch → validate, writing a
//! deterministic report plus patch artifacts.
//!
//! Exit-code contract: 0 — every suspicious path was patched and every
//! patch validated; 2 — no suspicious path was found; 3 — a patch
//! failed validation or a suspicious path could not be patched; 1 —
//! a stage error (reported as [`PipelineError`] by [`analyze`], mapped
//! to the exit code by the caller).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::callgraph::{build_callgraph, detect_anchors, entry_candidates, AnchorError};
use crate::ir::validate::validate;
use crate::ir::Program;
use crate::patchgen::{emit_c, synthesize, PatchError, PatchMode};
use crate::report::{
    AnalysisReport, AnchorsReport, CallReport, ExitReport, FunctionScoreReport, PatchReport,
    PathCounts, PathReport, PreloadReport, RootCauseReport, ScheduleReport, UnpatchedReport,
    VerdictReport,
};
use crate::sandbox::{expectation_of, validate_patch, RunError, DEFAULT_STEP_LIMIT};
use crate::solver::{concretize_history, model_for_path, Model, SolveOutcome, DEFAULT_SEED};
use crate::stubs::StubRegistry;
use crate::symexec::{
    explore_with_options, ExploreError, ExploreLimits, ExploreOptions, PathState, PathStatus,
};
use crate::triage::{
    build_report, diff_paths, filter_paths, select_benign_counterpart, BayesModel, RootCause,
    TriageError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STAGE_ERROR: i32 = 1;
pub const EXIT_NO_SUSPICIOUS: i32 = 2;
pub const EXIT_VALIDATION_FAILED: i32 = 3;

/// Environment variable that fixes the solver's randomized draws.
pub const SEED_ENV_VAR: &str = "MALVERSE_SEED";

/// The seed to use: an explicit request wins, then the environment
/// variable, then the built-in default.
pub fn resolve_seed(explicit: Option<u64>) -> u64 {
    explicit
        .or_else(|| {
            std::env::var(SEED_ENV_VAR)
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(DEFAULT_SEED)
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    /// Score internal functions on transitive (not just direct)
    /// external references.
    pub transitive: bool,
    /// Override the trained model's flagging threshold.
    pub threshold: Option<f64>,
    pub max_states: usize,
    pub seed: u64,
    /// Directory receiving the report and patch files.
    pub out_dir: PathBuf,
    /// Sandbox instruction budget per validation run.
    pub step_limit: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            transitive: false,
            threshold: None,
            max_states: ExploreLimits::default().max_states,
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("."),
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("read: {0}")]
    Read(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] crate::ir::parse::ParseError),
    #[error("validate: {count} issue(s), first: {first}")]
    Validate { count: usize, first: String },
    #[error("anchors: {0}")]
    Anchor(#[from] AnchorError),
    #[error("explore: {0}")]
    Explore(#[from] ExploreError),
    #[error("triage: {0}")]
    Triage(#[from] TriageError),
    #[error("patch: {0}")]
    Patch(#[from] PatchError),
    #[error("sandbox: {0}")]
    Sandbox(#[from] RunError),
    #[error("write `{path}`: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// What `analyze` produced: the report, the files written (absolute),
/// and the exit code the CLI should use.
#[derive(Debug)]
pub struct AnalysisOutcome {
    pub report: AnalysisReport,
    pub exit_code: i32,
    pub written: Vec<PathBuf>,
}

/// Analyze a sample file end to end and write all artifacts into
/// `cfg.out_dir`.
pub fn analyze(
    sample: &Path,
    model: &BayesModel,
    registry: &StubRegistry,
    cfg: &AnalysisConfig,
) -> Result<AnalysisOutcome, PipelineError> {
    let text = fs::read_to_string(sample)?;
    let name = sample
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample.mvir".to_string());
    analyze_source(&name, &text, model, registry, cfg)
}

/// Analyze already-loaded source. `sample_name` is the base name used
/// for the report's `sample` field and to derive artifact file names.
pub fn analyze_source(
    sample_name: &str,
    source: &str,
    model: &BayesModel,
    registry: &StubRegistry,
    cfg: &AnalysisConfig,
) -> Result<AnalysisOutcome, PipelineError> {
    let model = match cfg.threshold {
        Some(t) => {
            let mut m = model.clone();
            m.threshold = t;
            m
        }
        None => model.clone(),
    };

    let program = Program::parse(source)?;
    let issues = validate(&program);
    if !issues.is_empty() {
        return Err(PipelineError::Validate {
            count: issues.len(),
            first: issues[0].to_string(),
        });
    }

    let cg = build_callgraph(&program);
    let anchors = detect_anchors(&cg, &program)?;
    let suspicion = build_report(&cg, &model, cfg.transitive);

    let opts = ExploreOptions {
        limits: ExploreLimits {
            max_states: cfg.max_states,
            ..ExploreLimits::default()
        },
        return_domain: None,
        seed: cfg.seed,
    };
    let set = explore_with_options(&program, &anchors.entry, registry, &opts)?;

    // Solve every path once, keyed by fingerprint (unique per PathSet).
    let mut outcomes: BTreeMap<String, SolveOutcome> = BTreeMap::new();
    for p in &set.paths {
        outcomes.insert(p.fingerprint(), model_for_path(p, &program, cfg.seed));
    }

    let (suspicious_set, benign_set) = filter_paths(&set, &suspicion);

    // Benign histories with satisfying models are counterpart candidates.
    let benign_concrete: Vec<Vec<crate::solver::ConcretizedCall>> = benign_set
        .paths
        .iter()
        .filter_map(|p| match &outcomes[&p.fingerprint()] {
            SolveOutcome::Sat(m) => Some(concretize_history(&p.history, m)),
            _ => None,
        })
        .collect();

    fs::create_dir_all(&cfg.out_dir).map_err(|source| PipelineError::Write {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let stem = sample_name
        .strip_suffix(".mvir")
        .unwrap_or(sample_name)
        .to_string();

    let mut written: Vec<PathBuf> = Vec::new();
    let mut patches: Vec<PatchReport> = Vec::new();
    let mut unpatched: Vec<UnpatchedReport> = Vec::new();

    for (i, path) in suspicious_set.paths.iter().enumerate() {
        let fp = path.fingerprint();
        let path_model = match &outcomes[&fp] {
            SolveOutcome::Sat(m) => m.clone(),
            SolveOutcome::Unsat => {
                unpatched.push(UnpatchedReport {
                    path_fingerprint: fp,
                    reason: "path constraints are unsatisfiable".to_string(),
                });
                continue;
            }
            SolveOutcome::Unknown(reason) => {
                unpatched.push(UnpatchedReport {
                    path_fingerprint: fp,
                    reason: format!("solver gave up: {reason}"),
                });
                continue;
            }
        };
        let Some(expected) = expectation_of(path) else {
            unpatched.push(UnpatchedReport {
                path_fingerprint: fp,
                reason: format!("no replay target for status `{}`", path.status),
            });
            continue;
        };

        let root = root_cause_of(path, &path_model, &benign_concrete);

        let prefix = if i == 0 {
            stem.clone()
        } else {
            format!("{stem}.p{i}")
        };
        for (mode, mode_root) in [(PatchMode::Full, root.as_ref()), (PatchMode::Minimal, root.as_ref())]
        {
            if mode == PatchMode::Minimal && mode_root.is_none() {
                continue; // nothing to root a minimal patch at
            }
            let spec = synthesize(path, &path_model, mode_root, mode)?;
            let (source_file, spec_file) = match mode {
                PatchMode::Full => (
                    format!("{prefix}.patch.c"),
                    format!("{prefix}.patchspec.json"),
                ),
                PatchMode::Minimal => (
                    format!("{prefix}.minimal.patch.c"),
                    format!("{prefix}.minimal.patchspec.json"),
                ),
            };
            let c_source = emit_c(&spec, registry)?;
            write_artifact(&cfg.out_dir, &source_file, &c_source, &mut written)?;
            let mut spec_json =
                serde_json::to_string_pretty(&spec).expect("patch specs serialize");
            spec_json.push('\n');
            write_artifact(&cfg.out_dir, &spec_file, &spec_json, &mut written)?;

            let verdict = validate_patch(&program, &spec, &expected, cfg.step_limit)?;
            patches.push(PatchReport {
                path_fingerprint: path.fingerprint(),
                mode: mode.to_string(),
                root_cause: root.as_ref().map(|r| RootCauseReport {
                    seq: r.seq,
                    function: r.function.clone(),
                    suspicious_return: r.suspicious_return,
                    benign_return: r.benign_return,
                }),
                source_file,
                spec_file,
                schedules: spec
                    .schedules
                    .iter()
                    .map(|s| ScheduleReport {
                        function: s.function.clone(),
                        returns: s.returns.clone(),
                    })
                    .collect(),
                preloads: spec
                    .preloads
                    .iter()
                    .map(|p| PreloadReport {
                        function: p.function.clone(),
                        bytes_hex: hex::encode(&p.bytes),
                        buffer_size: p.buffer_size,
                    })
                    .collect(),
                verdict: VerdictReport {
                    pass: verdict.pass,
                    detail: verdict.detail,
                },
            });
        }
    }

    let counts = PathCounts {
        total: set.paths.len(),
        reached_exit: count_status(&set.paths, |s| matches!(s, PathStatus::ReachedExit(_))),
        evaded: count_status(&set.paths, |s| matches!(s, PathStatus::Evaded(_))),
        deadend: count_status(&set.paths, |s| matches!(s, PathStatus::Deadend { .. })),
        suspicious: suspicious_set.paths.len(),
    };

    let path_reports = set
        .paths
        .iter()
        .map(|p| {
            let fp = p.fingerprint();
            let outcome = &outcomes[&fp];
            path_report(p, fp, &suspicion, outcome)
        })
        .collect();

    let report = AnalysisReport {
        sample: sample_name.to_string(),
        seed: cfg.seed,
        transitive: cfg.transitive,
        model_hash: model.hash(),
        threshold: model.threshold,
        anchors: AnchorsReport {
            entry: anchors.entry.clone(),
            entry_candidates: entry_candidates(&cg, &program)
                .into_iter()
                .map(str::to_string)
                .collect(),
            exits: anchors
                .exits
                .iter()
                .map(|e| ExitReport {
                    block: e.block.clone(),
                    index: e.index,
                })
                .collect(),
        },
        truncated: set.truncated,
        counts,
        flagged_apis: suspicion.flagged_apis.iter().cloned().collect(),
        function_scores: suspicion
            .functions
            .iter()
            .map(|(name, s)| FunctionScoreReport {
                function: name.clone(),
                posterior: s.posterior,
                flagged: s.flagged,
            })
            .collect(),
        paths: path_reports,
        patches,
        unpatched,
    };

    let report_file = format!("{stem}.report.json");
    write_artifact(&cfg.out_dir, &report_file, &report.to_json(), &mut written)?;

    let exit_code = if !report.unpatched.is_empty()
        || report.patches.iter().any(|p| !p.verdict.pass)
    {
        EXIT_VALIDATION_FAILED
    } else if report.counts.suspicious == 0 {
        EXIT_NO_SUSPICIOUS
    } else {
        EXIT_OK
    };

    Ok(AnalysisOutcome {
        report,
        exit_code,
        written,
    })
}

fn count_status(paths: &[PathState], pred: impl Fn(&PathStatus) -> bool) -> usize {
    paths.iter().filter(|p| pred(&p.status)).count()
}

/// Diagnose where `path` departs from the closest benign behaviour.
/// `None` when there is no benign counterpart or no divergence.
fn root_cause_of(
    path: &PathState,
    model: &Model,
    benign_concrete: &[Vec<crate::solver::ConcretizedCall>],
) -> Option<RootCause> {
    let concrete = concretize_history(&path.history, model);
    let idx = select_benign_counterpart(&concrete, benign_concrete)?;
    diff_paths(&concrete, &benign_concrete[idx]).ok()
}

fn path_report(
    p: &PathState,
    fingerprint: String,
    suspicion: &crate::triage::SuspicionReport,
    outcome: &SolveOutcome,
) -> PathReport {
    let (solver, model) = match outcome {
        SolveOutcome::Sat(m) => ("sat".to_string(), Some(m)),
        SolveOutcome::Unsat => ("unsat".to_string(), None),
        SolveOutcome::Unknown(r) => (format!("unknown: {r}"), None),
    };
    let concrete = model.map(|m| concretize_history(&p.history, m));
    let calls = p
        .history
        .iter()
        .enumerate()
        .map(|(i, rec)| CallReport {
            seq: rec.seq,
            callee: rec.callee.clone(),
            external: rec.external,
            kind: rec.kind.name().to_string(),
            symbolic_ret: rec.ret.to_string(),
            concrete_ret: concrete.as_ref().map(|c| c[i].ret),
            buffer_hex: concrete
                .as_ref()
                .and_then(|c| c[i].buffer.as_ref())
                .map(hex::encode),
        })
        .collect();
    PathReport {
        fingerprint,
        status: p.status.to_string(),
        suspicious: suspicion.path_is_suspicious(p),
        solver,
        marks: p.marks.clone(),
        constraints: p.constraints.iter().map(|c| c.to_string()).collect(),
        calls,
    }
}

fn write_artifact(
    dir: &Path,
    name: &str,
    content: &str,
    written: &mut Vec<PathBuf>,
) -> Result<(), PipelineError> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|source| PipelineError::Write {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triage::train;
    use std::collections::BTreeSet;

    /// A model trained so `socket` is flagged and `printf` is not.
    fn test_model() -> BayesModel {
        let sets = |api: &str, count: usize| -> Vec<BTreeSet<String>> {
            (0..100)
                .map(|i| {
                    let mut s = BTreeSet::new();
                    if i < count {
                        s.insert(api.to_string());
                    }
                    s
                })
                .collect()
        };
        let merge = |a: Vec<BTreeSet<String>>, b: Vec<BTreeSet<String>>| -> Vec<BTreeSet<String>> {
            a.into_iter()
                .zip(b)
                .map(|(mut x, y)| {
                    x.extend(y);
                    x
                })
                .collect()
        };
        let malicious = merge(sets("socket", 70), sets("printf", 20));
        let benign = merge(sets("socket", 10), sets("printf", 80));
        train(&benign, &malicious, 0.5, 0.7).unwrap()
    }

    // `main` comes first: entry detection picks the earliest function
    // that makes calls, mirroring how real binaries lay out `main`.
    const BOMB: &str = "
        fn main() {
        entry:
            z = const 0
            t = call ptrace(z, z)
            c = cmp eq t, z
            br c, arm, idle
        arm:
            mark payload
            x = call malware()
            ret x
        idle:
            y = call goodware()
            ret y
        }
        fn malware() {
        entry:
            z = const 0
            s = call socket(z, z, z)
            ret s
        }
        fn goodware() {
        entry:
            m = cstr \"ok\"
            p = call printf(m)
            ret p
        }
    ";

    fn run_analyze(dir: &Path) -> AnalysisOutcome {
        let cfg = AnalysisConfig {
            out_dir: dir.to_path_buf(),
            ..AnalysisConfig::default()
        };
        analyze_source(
            "bomb.mvir",
            BOMB,
            &test_model(),
            &StubRegistry::builtin(),
            &cfg,
        )
        .unwrap()
    }

    #[test]
    fn end_to_end_patches_and_validates_a_logic_bomb() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_analyze(dir.path());
        assert_eq!(out.exit_code, EXIT_OK);
        assert_eq!(out.report.counts.total, 2);
        assert_eq!(out.report.counts.suspicious, 1);
        assert!(out.report.unpatched.is_empty());
        // full + minimal, both validated
        assert_eq!(out.report.patches.len(), 2);
        assert!(out.report.patches.iter().all(|p| p.verdict.pass));
        let full = &out.report.patches[0];
        assert_eq!(full.mode, "full");
        assert_eq!(full.schedules.len(), 1);
        assert_eq!(full.schedules[0].function, "ptrace");
        assert_eq!(full.schedules[0].returns, vec![0]);
        let root = full.root_cause.as_ref().unwrap();
        assert_eq!(root.function, "ptrace");
        assert_eq!(root.suspicious_return, Some(0));
        // four patch artifacts plus the report
        assert_eq!(out.written.len(), 5);
        assert!(dir.path().join("bomb.report.json").exists());
        assert!(dir.path().join("bomb.patch.c").exists());
        assert!(dir.path().join("bomb.patchspec.json").exists());
        assert!(dir.path().join("bomb.minimal.patch.c").exists());
        let src = std::fs::read_to_string(dir.path().join("bomb.patch.c")).unwrap();
        assert!(src.contains("return 0x0;"));
    }

    #[test]
    fn internal_function_scoring_drives_suspicion() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_analyze(dir.path());
        let malware_score = out
            .report
            .function_scores
            .iter()
            .find(|f| f.function == "malware")
            .unwrap();
        assert!(malware_score.flagged);
        let goodware_score = out
            .report
            .function_scores
            .iter()
            .find(|f| f.function == "goodware")
            .unwrap();
        assert!(!goodware_score.flagged);
        assert_eq!(out.report.flagged_apis, vec!["socket".to_string()]);
    }

    #[test]
    fn clean_program_reports_no_suspicious_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = AnalysisConfig {
            out_dir: dir.path().to_path_buf(),
            ..AnalysisConfig::default()
        };
        let out = analyze_source(
            "clean.mvir",
            "
            fn main() {
            entry:
                m = cstr \"hello\"
                p = call printf(m)
                ret p
            }
        ",
            &test_model(),
            &StubRegistry::builtin(),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.exit_code, EXIT_NO_SUSPICIOUS);
        assert!(out.report.patches.is_empty());
        assert!(dir.path().join("clean.report.json").exists());
    }

    #[test]
    fn repeated_runs_write_byte_identical_artifacts() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run_analyze(d1.path());
        let b = run_analyze(d2.path());
        assert_eq!(a.report, b.report);
        for name in ["bomb.report.json", "bomb.patch.c", "bomb.patchspec.json"] {
            let x = std::fs::read(d1.path().join(name)).unwrap();
            let y = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between runs");
        }
    }

    #[test]
    fn stage_errors_carry_stage_tags() {
        let cfg = AnalysisConfig::default();
        let err = analyze_source(
            "broken.mvir",
            "fn main( {",
            &test_model(),
            &StubRegistry::builtin(),
            &cfg,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("parse:"), "{err}");

        let err = analyze_source(
            "invalid.mvir",
            "fn main() { entry: ret ghost }",
            &test_model(),
            &StubRegistry::builtin(),
            &cfg,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("validate:"), "{err}");
    }

    #[test]
    fn threshold_override_changes_flagging() {
        let dir = tempfile::tempdir().unwrap();
        // An absurdly high threshold unflags socket, so nothing is
        // suspicious and the pipeline exits with code 2.
        let cfg = AnalysisConfig {
            out_dir: dir.path().to_path_buf(),
            threshold: Some(0.999),
            ..AnalysisConfig::default()
        };
        let out = analyze_source(
            "bomb.mvir",
            BOMB,
            &test_model(),
            &StubRegistry::builtin(),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.exit_code, EXIT_NO_SUSPICIOUS);
        assert_eq!(out.report.threshold, 0.999);
    }


    #[test]
    fn seed_resolution_prefers_explicit_over_default() {
        assert_eq!(resolve_seed(Some(42)), 42);
        assert_eq!(resolve_seed(None), DEFAULT_SEED);
    }
}
