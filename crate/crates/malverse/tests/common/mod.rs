//! Helpers shared by the integration suites: corpus access and an
//! exhaustive concrete-execution oracle for path enumeration.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use malverse::callgraph::build_callgraph;
use malverse::ir::Program;
use malverse::patchgen::{PatchSpec, Provenance, ReturnSchedule};
use malverse::sandbox;
use malverse::stubs::StubRegistry;
use malverse::triage::BayesModel;

pub const CORPUS: &[&str] = &[
    "ptrace_check",
    "debugme_nested",
    "windows_feature_check",
    "double_ptrace",
    "stalling_clock",
    "cwd_bomb",
    "clean_tool",
];

/// The six trigger samples with known defusing patches (everything in
/// `CORPUS` except the clean utility).
pub const BOMBS: &[&str] = &[
    "ptrace_check",
    "debugme_nested",
    "windows_feature_check",
    "double_ptrace",
    "stalling_clock",
    "cwd_bomb",
];

pub fn corpus_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(format!("{name}.mvir"))
}

pub fn data_path(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

pub fn load_corpus(name: &str) -> Program {
    let path = corpus_path(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    Program::parse(&text).unwrap_or_else(|e| panic!("parse {name}: {e}"))
}

pub fn shipped_model() -> BayesModel {
    BayesModel::load(&data_path("model.bayes")).expect("shipped model loads")
}

pub fn shipped_registry() -> StubRegistry {
    StubRegistry::load(&data_path("apis.proto")).expect("shipped prototype database loads")
}

/// A path's observable behavior: rendered exit site plus mark sequence.
pub type Behavior = (String, Vec<String>);

pub fn empty_patch() -> PatchSpec {
    PatchSpec {
        schedules: vec![],
        preloads: vec![],
        provenance: Provenance { path_fingerprint: String::new(), model_hash: String::new() },
    }
}

/// Every observable behavior of `program` when each external function
/// answers its invocations from a schedule drawn over `returns`:
/// exhaustive enumeration of all per-function schedules of length
/// `sched_len`, executing the program concretely for each combination.
///
/// Schedules repeat their last value, so length `sched_len` covers every
/// behavior of programs that invoke no external more than `sched_len`
/// times.
pub fn brute_force_behaviors(
    program: &Program,
    returns: &[i64],
    sched_len: usize,
) -> BTreeSet<Behavior> {
    let cg = build_callgraph(program);
    let externals: Vec<String> = cg
        .nodes
        .iter()
        .filter(|n| n.external)
        .map(|n| n.name.clone())
        .collect();

    let per_fn: Vec<Vec<Vec<u64>>> = externals
        .iter()
        .map(|_| all_schedules(returns, sched_len))
        .collect();

    let mut behaviors = BTreeSet::new();
    let mut picks = vec![0usize; externals.len()];
    loop {
        let schedules: Vec<ReturnSchedule> = externals
            .iter()
            .enumerate()
            .map(|(f, name)| ReturnSchedule {
                function: name.clone(),
                returns: per_fn[f][picks[f]].clone(),
            })
            .collect();
        let patch = PatchSpec { schedules, ..empty_patch() };
        let trace = sandbox::run(program, &patch, 100_000).expect("concrete run completes");
        let (site, _value) = trace.exit().expect("loop-free programs always exit");
        let marks = trace.marks().iter().map(|m| m.to_string()).collect();
        behaviors.insert((site.to_string(), marks));

        // Odometer over the per-function schedule choices.
        let mut done = true;
        for (i, pick) in picks.iter_mut().enumerate() {
            *pick += 1;
            if *pick < per_fn[i].len() {
                done = false;
                break;
            }
            *pick = 0;
        }
        if externals.is_empty() || done {
            break;
        }
    }
    behaviors
}

fn all_schedules(returns: &[i64], len: usize) -> Vec<Vec<u64>> {
    let mut out: Vec<Vec<u64>> = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                returns.iter().map(move |&r| {
                    let mut s = prefix.clone();
                    s.push(r as u64);
                    s
                })
            })
            .collect();
    }
    out
}
