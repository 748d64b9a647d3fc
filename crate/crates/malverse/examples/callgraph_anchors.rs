//! Build a call graph from a corpus sample, separate internal functions
//! from external references, and detect the analysis anchors: the entry
//! function exploration starts from and the exit sites that count as a
//! completed run.
//!
//!     cargo run --example callgraph_anchors

use malverse::callgraph::{build_callgraph, detect_anchors, entry_candidates};
use malverse::ir::Program;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/cwd_bomb.mvir");
    let text = std::fs::read_to_string(path).expect("corpus sample exists");
    let program = Program::parse(&text).expect("corpus sample parses");

    let cg = build_callgraph(&program);

    println!("nodes:");
    for n in &cg.nodes {
        println!(
            "  {} [{}]",
            n.name,
            if n.external { "external" } else { "internal" }
        );
    }

    println!("\nedges (caller -> callee @ call site):");
    print!("{}", cg.export_edges());

    // Per-function import sets, the classifier's features. Direct refs
    // see only a function's own calls; transitive refs flow through
    // internal callees, so `main` inherits `socket` from `malware`.
    for f in ["main", "malware", "goodware"] {
        println!(
            "\n{f}: direct externals {:?}, transitive {:?}",
            cg.direct_external_refs(f),
            cg.transitive_external_refs(f)
        );
    }

    // Entry detection: the earliest function in source order that makes
    // at least one call. Runners-up are reported so a human can override.
    let candidates = entry_candidates(&cg, &program);
    println!("\nentry candidates in priority order: {candidates:?}");

    let anchors = detect_anchors(&cg, &program).expect("anchors found");
    println!("chosen entry: {}", anchors.entry);
    println!("exit sites (ret instructions of the entry):");
    for exit in &anchors.exits {
        println!("  {}:{}:{}", anchors.entry, exit.block, exit.index);
    }
}
