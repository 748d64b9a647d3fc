//! Symbolically explore every path through a sample. External calls
//! return fresh symbols, branches on symbolic conditions fork the
//! state, and each terminated path carries its constraints, call
//! history, marks, and a stable fingerprint.
//!
//!     cargo run --example explore_paths

use malverse::callgraph::{build_callgraph, detect_anchors};
use malverse::ir::Program;
use malverse::stubs::StubRegistry;
use malverse::symexec::{explore, explore_with_options, ExploreOptions};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/windows_feature_check.mvir");
    let text = std::fs::read_to_string(path).expect("corpus sample exists");
    let program = Program::parse(&text).expect("corpus sample parses");
    let registry = StubRegistry::builtin();

    let cg = build_callgraph(&program);
    let anchors = detect_anchors(&cg, &program).expect("anchors found");

    let set = explore(&program, &anchors.entry, &registry).expect("exploration runs");
    println!(
        "explored `windows_feature_check.mvir` from `{}`: {} path(s), truncated: {}",
        anchors.entry,
        set.paths.len(),
        set.truncated
    );

    for p in &set.paths {
        println!("\npath {}", p.fingerprint());
        println!("  status: {}", p.status);
        if !p.marks.is_empty() {
            println!("  marks: {:?}", p.marks);
        }
        println!("  constraints:");
        for c in &p.constraints {
            println!("    {c}");
        }
        println!("  stubbed calls:");
        for rec in &p.history {
            println!(
                "    #{} {}({}) -> {}  [{}]",
                rec.seq,
                rec.callee,
                rec.args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "),
                rec.ret,
                rec.kind.name(),
            );
        }
    }

    // Restricting stub returns to a small signed domain prunes branches
    // that need values outside it. The stalling sample's armed arm wants
    // eleven clock ticks of skew, so under [-1, 1] only the bail path
    // survives the feasibility check.
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/stalling_clock.mvir");
    let text = std::fs::read_to_string(path).expect("corpus sample exists");
    let program = Program::parse(&text).expect("corpus sample parses");

    let unrestricted = explore(&program, "main", &registry).expect("exploration runs");
    let restricted = explore_with_options(
        &program,
        "main",
        &registry,
        &ExploreOptions { return_domain: Some((-1, 1)), ..ExploreOptions::default() },
    )
    .expect("exploration runs");

    println!(
        "\nstalling_clock.mvir: {} path(s) unrestricted, {} with returns in [-1, 1]:",
        unrestricted.paths.len(),
        restricted.paths.len()
    );
    for p in &restricted.paths {
        println!("  {}", p.status);
    }
}
