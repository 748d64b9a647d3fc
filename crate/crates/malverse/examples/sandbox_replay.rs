//! Validate patches by concrete re-execution. The sandbox interprets
//! the program with externals answered from the patch (preloads first,
//! then per-invocation schedules, then a default of zero) and records a
//! trace; a patch passes when the trace reaches the targeted path's
//! exit site with the same marks.
//!
//! Also reproduces the classic argument for stateful stubs: a
//! double-probe gate distinguishes a stub that always returns one fixed
//! value from the environment it imitates.
//!
//!     cargo run --example sandbox_replay

use malverse::ir::Program;
use malverse::patchgen::{PatchSpec, Provenance, ReturnSchedule};
use malverse::sandbox::{run, validate_patch, expectation_of, DEFAULT_STEP_LIMIT};
use malverse::solver::{model_for_path, SolveOutcome};
use malverse::stubs::StubRegistry;
use malverse::symexec::explore;
use malverse::triage::{build_report, filter_paths, load_import_sets, train};
use malverse::patchgen::{synthesize, PatchMode};
use malverse::callgraph::build_callgraph;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/double_ptrace.mvir");
    let text = std::fs::read_to_string(path).expect("corpus sample exists");
    let program = Program::parse(&text).expect("corpus sample parses");
    let registry = StubRegistry::builtin();

    // Unpatched, every external returns 0: the second probe sees 0
    // instead of the -1 the trigger requires, and the sample evades.
    println!("unpatched run:");
    let empty = PatchSpec {
        schedules: vec![],
        preloads: vec![],
        provenance: Provenance { path_fingerprint: String::new(), model_hash: String::new() },
    };
    let trace = run(&program, &empty, DEFAULT_STEP_LIMIT).expect("run completes");
    print!("{}", trace.to_json_lines());

    // Find the trigger path and synthesize its patch the usual way.
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
    let (suspicious, _) = filter_paths(&set, &suspicion);
    let target = &suspicious.paths[0];

    let path_model = match model_for_path(target, &program, 7) {
        SolveOutcome::Sat(m) => m,
        other => panic!("expected a satisfiable trigger path, got {other:?}"),
    };
    let patch =
        synthesize(target, &path_model, None, PatchMode::Full).expect("synthesis succeeds");

    // The expectation derived from the symbolic path: its exit site and
    // mark sequence are what the concrete replay must reproduce.
    let expected = expectation_of(target).expect("path terminated at a replayable site");
    println!("\nexpected exit: {} with marks {:?}", expected.exit, expected.marks);

    let verdict = validate_patch(&program, &patch, &expected, DEFAULT_STEP_LIMIT)
        .expect("validation runs");
    println!(
        "scheduled patch {:?}: {}",
        patch
            .schedules
            .iter()
            .map(|s| {
                let signed: Vec<i64> = s.returns.iter().map(|v| *v as i64).collect();
                format!("{} -> {signed:?}", s.function)
            })
            .collect::<Vec<_>>(),
        if verdict.pass { "PASS" } else { "FAIL" }
    );
    println!("  {}", verdict.detail);

    // A stateless stub pinning ptrace to 0 satisfies the first probe
    // but not the second: state is what makes the patch faithful.
    let stateless = PatchSpec {
        schedules: vec![ReturnSchedule { function: "ptrace".into(), returns: vec![0] }],
        preloads: vec![],
        provenance: Provenance { path_fingerprint: String::new(), model_hash: String::new() },
    };
    let verdict = validate_patch(&program, &stateless, &expected, DEFAULT_STEP_LIMIT)
        .expect("validation runs");
    println!(
        "\nstateless ptrace -> [0] patch: {}",
        if verdict.pass { "PASS" } else { "FAIL" }
    );
    println!("  {}", verdict.detail);
}
