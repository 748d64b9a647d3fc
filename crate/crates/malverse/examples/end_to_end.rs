//! The whole defusal pipeline in one call: parse, anchor, explore,
//! triage, solve, synthesize, validate, report. `analyze` writes the
//! report JSON plus a full and a minimal patch (C source and machine
//! spec) for every suspicious path, and returns the exit code the CLI
//! maps to the shell.
//!
//!     cargo run --example end_to_end

use std::path::Path;

use malverse::pipeline::{analyze, AnalysisConfig};
use malverse::stubs::StubRegistry;
use malverse::triage::BayesModel;

fn main() {
    let sample = Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/corpus/stalling_clock.mvir"
    ));
    let model = BayesModel::load(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/model.bayes"
    )))
    .expect("shipped model loads");
    let registry = StubRegistry::load(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/apis.proto"
    )))
    .expect("shipped prototype database loads");

    let out = tempfile::tempdir().expect("temp dir");
    let cfg = AnalysisConfig { out_dir: out.path().to_path_buf(), ..AnalysisConfig::default() };

    let outcome = analyze(sample, &model, &registry, &cfg).expect("pipeline runs");
    let report = &outcome.report;

    println!("sample: {}", report.sample);
    println!("entry:  {}", report.anchors.entry);
    println!(
        "paths:  {} total; {} suspicious",
        report.counts.total, report.counts.suspicious
    );

    for path in &report.paths {
        println!(
            "\n  [{}] {} {}",
            if path.suspicious { "suspicious" } else { "benign" },
            &path.fingerprint[..12],
            path.status
        );
        for call in &path.calls {
            if let Some(ret) = call.concrete_ret {
                println!("    {} -> {:#x}", call.callee, ret);
            }
        }
    }

    for patch in &report.patches {
        println!(
            "\npatch {} ({}): {}",
            patch.source_file,
            patch.mode,
            if patch.verdict.pass { "validated PASS" } else { "FAILED validation" }
        );
        for s in &patch.schedules {
            println!("  schedule {} -> {:?}", s.function, s.returns);
        }
        for p in &patch.preloads {
            println!("  preload {} <- {} byte(s)", p.function, p.bytes_hex.len() / 2);
        }
    }

    println!("\nexit code: {}", outcome.exit_code);
    println!("artifacts:");
    for f in &outcome.written {
        println!("  {}", f.file_name().unwrap().to_string_lossy());
    }

    // The emitted C for the full patch, straight from disk.
    let c_path = out.path().join("stalling_clock.patch.c");
    println!("\n{}", std::fs::read_to_string(c_path).expect("patch source written"));
}
