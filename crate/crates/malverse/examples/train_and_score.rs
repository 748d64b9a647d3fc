//! Train the naive Bayes import-set classifier from labelled corpora
//! and score a sample's functions. An API is flagged when its posterior
//! probability of appearing in malware clears the threshold; a function
//! is flagged by the joint posterior of its imported API set.
//!
//!     cargo run --example train_and_score

use malverse::callgraph::build_callgraph;
use malverse::ir::Program;
use malverse::triage::{build_report, load_import_sets, train};

fn main() {
    let benign = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/imports.benign"
    ))
    .expect("benign corpus exists");
    let malicious = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/imports.malicious"
    ))
    .expect("malicious corpus exists");

    let benign = load_import_sets(&benign);
    let malicious = load_import_sets(&malicious);
    println!(
        "training on {} benign and {} malicious import sets",
        benign.len(),
        malicious.len()
    );

    let model = train(&benign, &malicious, 0.5, 0.7).expect("training succeeds");
    println!("model hash: {}", model.hash());

    // Laplace-smoothed per-API posteriors, most suspicious first.
    let mut apis: Vec<&str> = model.api_names().collect();
    apis.sort_by(|a, b| {
        model
            .posterior(b)
            .partial_cmp(&model.posterior(a))
            .expect("posteriors are finite")
    });
    println!("\nAPI posteriors (top 8):");
    for api in apis.iter().take(8) {
        println!(
            "  {api:<28} {:.4}{}",
            model.posterior(api),
            if model.is_flagged_api(api) { "  [flagged]" } else { "" }
        );
    }

    // Score the functions of a bomb sample. `malware` imports `socket`,
    // which the corpora place in 70 of 100 malicious samples but only
    // 10 of 100 benign ones.
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/ptrace_check.mvir");
    let text = std::fs::read_to_string(path).expect("corpus sample exists");
    let program = Program::parse(&text).expect("corpus sample parses");
    let cg = build_callgraph(&program);

    println!("\nfunction scores for ptrace_check.mvir (direct imports):");
    let report = build_report(&cg, &model, false);
    for (name, score) in &report.functions {
        println!(
            "  {name:<10} {:.6}{}",
            score.posterior,
            if score.flagged { "  [flagged]" } else { "" }
        );
    }

    // With transitive imports, `main` inherits its callees' APIs and is
    // flagged too — useful when the payload hides behind a wrapper.
    println!("\nsame, with transitive imports:");
    let report = build_report(&cg, &model, true);
    for (name, score) in &report.functions {
        println!(
            "  {name:<10} {:.6}{}",
            score.posterior,
            if score.flagged { "  [flagged]" } else { "" }
        );
    }
}
