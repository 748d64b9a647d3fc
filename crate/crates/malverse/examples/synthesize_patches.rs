//! Synthesize defusing patches for a suspicious path and emit them as
//! compilable C. The full patch schedules every external call on the
//! path; the minimal patch first diffs the suspicious history against
//! its closest benign counterpart to find the root-cause function, then
//! schedules only the functions the trigger actually depends on.
//!
//!     cargo run --example synthesize_patches

use malverse::callgraph::build_callgraph;
use malverse::ir::Program;
use malverse::patchgen::{emit_c, synthesize, PatchMode};
use malverse::solver::{concretize_history, model_for_path, SolveOutcome};
use malverse::stubs::StubRegistry;
use malverse::symexec::explore;
use malverse::triage::{
    build_report, diff_paths, filter_paths, load_import_sets, select_benign_counterpart, train,
};

const SEED: u64 = 7;

fn main() {
    // The nested sample gates its payload behind two probes: a tracer
    // check and a memcmp fingerprint.
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/debugme_nested.mvir");
    let text = std::fs::read_to_string(path).expect("corpus sample exists");
    let program = Program::parse(&text).expect("corpus sample parses");
    let registry = StubRegistry::builtin();

    // Train a small model inline and split the explored paths.
    let benign = load_import_sets(
        &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/imports.benign"))
            .expect("benign corpus exists"),
    );
    let malicious = load_import_sets(
        &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/imports.malicious"))
            .expect("malicious corpus exists"),
    );
    let model = train(&benign, &malicious, 0.5, 0.7).expect("training succeeds");

    let cg = build_callgraph(&program);
    let suspicion = build_report(&cg, &model, false);
    let set = explore(&program, "main", &registry).expect("exploration runs");
    let (suspicious, benign) = filter_paths(&set, &suspicion);
    println!(
        "{} suspicious path(s), {} benign",
        suspicious.paths.len(),
        benign.paths.len()
    );

    let target = &suspicious.paths[0];
    let path_model = match model_for_path(target, &program, SEED) {
        SolveOutcome::Sat(m) => m,
        other => panic!("expected a satisfiable trigger path, got {other:?}"),
    };

    // Root cause: diff the concretized suspicious history against the
    // benign history sharing the longest prefix. Both begin with
    // `ptrace -> 0`; they part ways at the memcmp probe.
    let concrete = concretize_history(&target.history, &path_model);
    let counterparts: Vec<_> = benign
        .paths
        .iter()
        .filter_map(|p| match model_for_path(p, &program, SEED) {
            SolveOutcome::Sat(m) => Some(concretize_history(&p.history, &m)),
            _ => None,
        })
        .collect();
    let pick = select_benign_counterpart(&concrete, &counterparts).expect("benign paths exist");
    let root = diff_paths(&concrete, &counterparts[pick]).expect("histories diverge");
    println!(
        "root cause: call #{} {} (suspicious {:?} vs benign {:?})\n",
        root.seq, root.function, root.suspicious_return, root.benign_return
    );

    // Full patch: both probes scheduled.
    let full = synthesize(target, &path_model, Some(&root), PatchMode::Full)
        .expect("full synthesis succeeds");
    println!(
        "full patch schedules: {:?}",
        full.schedules
            .iter()
            .map(|s| format!("{} -> {:?}", s.function, s.returns))
            .collect::<Vec<_>>()
    );

    // Minimal patch: only the root-cause function.
    let minimal = synthesize(target, &path_model, Some(&root), PatchMode::Minimal)
        .expect("minimal synthesis succeeds");
    println!(
        "minimal patch schedules: {:?}\n",
        minimal
            .schedules
            .iter()
            .map(|s| format!("{} -> {:?}", s.function, s.returns))
            .collect::<Vec<_>>()
    );

    println!("emitted C for the full patch:\n");
    println!("{}", emit_c(&full, &registry).expect("emission succeeds"));
}
