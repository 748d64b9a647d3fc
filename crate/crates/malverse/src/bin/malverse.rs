//! Command-line front end. `analyze` chains the whole defusal pipeline;
//! the remaining subcommands expose its stages one at a time.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use malverse::callgraph::{build_callgraph, detect_anchors};
use malverse::ir::validate::validate;
use malverse::ir::Program;
use malverse::patchgen::{emit_c, synthesize, PatchMode, PatchSpec};
use malverse::pipeline::{
    self, resolve_seed, AnalysisConfig, EXIT_STAGE_ERROR,
};
use malverse::sandbox::{self, DEFAULT_STEP_LIMIT};
use malverse::solver::{concretize_history, model_for_path, SolveOutcome};
use malverse::stubs::StubRegistry;
use malverse::symexec::{explore_with_options, ExploreLimits, ExploreOptions};
use malverse::triage::{
    build_report, filter_paths, load_import_sets, select_benign_counterpart, train, BayesModel,
};

#[derive(Parser)]
#[command(
    name = "malverse",
    version,
    about = "Find and defuse logic bombs in MVIR programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline: explore, triage, patch, validate.
    Analyze(AnalyzeArgs),
    /// Parse and validate a program, printing its canonical form.
    Parse {
        /// MVIR source file.
        file: PathBuf,
    },
    /// Call-graph inspection.
    Cg {
        #[command(subcommand)]
        action: CgCmd,
    },
    /// Symbolically explore every path from the detected entry.
    Explore(ExploreArgs),
    /// Train the import-set classifier from labelled corpora.
    Train(TrainArgs),
    /// Score every internal function against a trained model.
    Score(ScoreArgs),
    /// Synthesize a patch for one suspicious path.
    Patch(PatchArgs),
    /// Execute a program under a patch in the concrete sandbox.
    Run(RunArgs),
}

#[derive(Subcommand)]
enum CgCmd {
    /// Print the call graph as `caller -> callee @ site` lines.
    Export {
        /// MVIR source file.
        file: PathBuf,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// MVIR source file.
    file: PathBuf,
    /// Trained classifier model file.
    #[arg(long)]
    model: PathBuf,
    /// Score functions on transitive external references.
    #[arg(long)]
    transitive: bool,
    /// Override the model's flagging threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Cap on materialised path states during exploration.
    #[arg(long, default_value_t = ExploreLimits::default().max_states)]
    max_states: usize,
    /// Output directory for the report and patch files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Solver seed (else the MALVERSE_SEED env var, else a fixed default).
    #[arg(long)]
    seed: Option<u64>,
    /// Prototype database (default: ./apis.proto if present, else built-in).
    #[arg(long)]
    protos: Option<PathBuf>,
    /// Sandbox instruction budget per validation run.
    #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
    step_limit: usize,
}

#[derive(Args)]
struct ExploreArgs {
    /// MVIR source file.
    file: PathBuf,
    #[arg(long, default_value_t = ExploreLimits::default().max_states)]
    max_states: usize,
    /// Constrain every scalar/comparator stub return to `lo,hi` (signed).
    #[arg(long, value_parser = parse_domain)]
    return_domain: Option<(i64, i64)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    protos: Option<PathBuf>,
    /// Also print each path's satisfying model.
    #[arg(long)]
    solve: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Import sets of benign samples, one comma-separated line each.
    #[arg(long)]
    benign: PathBuf,
    /// Import sets of malicious samples, same format.
    #[arg(long)]
    malicious: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    prior: f64,
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    /// Where to write the trained model.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// MVIR source file.
    file: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Score on transitive external references.
    #[arg(long)]
    transitive: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    Minimal,
}

#[derive(Args)]
struct PatchArgs {
    /// MVIR source file.
    file: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    /// Which suspicious path to patch (fingerprint order).
    #[arg(long, default_value_t = 0)]
    path_index: usize,
    /// Write `<sample>.patch.c` and `<sample>.patchspec.json` here
    /// instead of printing the C source.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    protos: Option<PathBuf>,
    #[arg(long)]
    transitive: bool,
}

#[derive(Args)]
struct RunArgs {
    /// MVIR source file.
    file: PathBuf,
    /// PatchSpec JSON governing external calls (omit to run unpatched).
    #[arg(long)]
    patch: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
    step_limit: usize,
}

fn parse_domain(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| "expected `lo,hi`".to_string())?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad lo: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad hi: {e}"))?;
    if lo > hi {
        return Err(format!("empty domain: {lo} > {hi}"));
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_STAGE_ERROR as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32, String> {
    match cmd {
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Parse { file } => cmd_parse(&file),
        Cmd::Cg {
            action: CgCmd::Export { file },
        } => cmd_cg_export(&file),
        Cmd::Explore(a) => cmd_explore(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Score(a) => cmd_score(a),
        Cmd::Patch(a) => cmd_patch(a),
        Cmd::Run(a) => cmd_run(a),
    }
}

fn load_program(path: &Path) -> Result<Program, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("read `{}`: {e}", path.display()))?;
    let program = Program::parse(&text).map_err(|e| format!("parse: {e}"))?;
    let issues = validate(&program);
    if !issues.is_empty() {
        let mut msg = format!("validate: {} issue(s)", issues.len());
        for d in &issues {
            msg.push_str(&format!("\n  {d}"));
        }
        return Err(msg);
    }
    Ok(program)
}

fn load_registry(protos: &Option<PathBuf>) -> Result<StubRegistry, String> {
    match protos {
        Some(p) => StubRegistry::load(p).map_err(|e| e.to_string()),
        None => {
            let default = Path::new("apis.proto");
            if default.exists() {
                StubRegistry::load(default).map_err(|e| e.to_string())
            } else {
                Ok(StubRegistry::builtin())
            }
        }
    }
}

fn load_model(path: &Path) -> Result<BayesModel, String> {
    BayesModel::load(path).map_err(|e| e.to_string())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<i32, String> {
    let model = load_model(&a.model)?;
    let registry = load_registry(&a.protos)?;
    let cfg = AnalysisConfig {
        transitive: a.transitive,
        threshold: a.threshold,
        max_states: a.max_states,
        seed: resolve_seed(a.seed),
        out_dir: a.out,
        step_limit: a.step_limit,
    };
    let outcome =
        pipeline::analyze(&a.file, &model, &registry, &cfg).map_err(|e| e.to_string())?;
    let r = &outcome.report;
    println!(
        "{}: entry `{}`, {} path(s) ({} exit, {} evaded, {} deadend), {} suspicious",
        r.sample,
        r.anchors.entry,
        r.counts.total,
        r.counts.reached_exit,
        r.counts.evaded,
        r.counts.deadend,
        r.counts.suspicious
    );
    for p in &r.patches {
        println!(
            "  [{}] {} patch `{}`: {}",
            if p.verdict.pass { "PASS" } else { "FAIL" },
            p.mode,
            p.source_file,
            summarize_patch(p)
        );
    }
    for u in &r.unpatched {
        println!("  [FAIL] path {}: {}", &u.path_fingerprint[..12], u.reason);
    }
    for f in &outcome.written {
        println!("  wrote {}", f.display());
    }
    Ok(outcome.exit_code)
}

fn summarize_patch(p: &malverse::report::PatchReport) -> String {
    let mut parts: Vec<String> = p
        .schedules
        .iter()
        .map(|s| {
            let vals: Vec<String> = s.returns.iter().map(|v| fmt_ret(*v)).collect();
            format!("{} -> [{}]", s.function, vals.join(", "))
        })
        .collect();
    parts.extend(p.preloads.iter().map(|pre| {
        format!(
            "{} returns a buffer preloaded with {} byte(s)",
            pre.function,
            pre.bytes_hex.len() / 2
        )
    }));
    if parts.is_empty() {
        "empty patch".to_string()
    } else {
        parts.join("; ")
    }
}

fn fmt_ret(v: u64) -> String {
    let s = v as i64;
    if s < 0 {
        s.to_string()
    } else {
        format!("{v:#x}")
    }
}

fn cmd_parse(file: &Path) -> Result<i32, String> {
    let program = load_program(file)?;
    print!("{}", program.to_text());
    Ok(0)
}

fn cmd_cg_export(file: &Path) -> Result<i32, String> {
    let program = load_program(file)?;
    let cg = build_callgraph(&program);
    print!("{}", cg.export_edges());
    Ok(0)
}

fn cmd_explore(a: ExploreArgs) -> Result<i32, String> {
    let program = load_program(&a.file)?;
    let registry = load_registry(&a.protos)?;
    let cg = build_callgraph(&program);
    let anchors = detect_anchors(&cg, &program).map_err(|e| e.to_string())?;
    let seed = resolve_seed(a.seed);
    let opts = ExploreOptions {
        limits: ExploreLimits {
            max_states: a.max_states,
            ..ExploreLimits::default()
        },
        return_domain: a.return_domain,
        seed,
    };
    let set = explore_with_options(&program, &anchors.entry, &registry, &opts)
        .map_err(|e| e.to_string())?;
    println!(
        "entry `{}`: {} path(s){}",
        anchors.entry,
        set.paths.len(),
        if set.truncated {
            " (truncated by state cap)"
        } else {
            ""
        }
    );
    for p in &set.paths {
        println!("path {}", p.fingerprint());
        println!("  status: {}", p.status);
        if !p.marks.is_empty() {
            println!("  marks: {}", p.marks.join(", "));
        }
        for c in &p.constraints {
            println!("  constraint: {c}");
        }
        for rec in &p.history {
            println!(
                "  call {}: {} {} -> {}",
                rec.seq,
                rec.callee,
                if rec.external { "(external)" } else { "(internal)" },
                rec.ret
            );
        }
        if a.solve {
            match model_for_path(p, &program, seed) {
                SolveOutcome::Sat(m) => {
                    for (sym, val) in &m.assignment {
                        println!("  model: {sym} = {}", fmt_ret(*val));
                    }
                    for (sym, bytes) in &m.buffers {
                        println!("  model: {sym} = {:?}", String::from_utf8_lossy(bytes));
                    }
                }
                SolveOutcome::Unsat => println!("  model: unsat"),
                SolveOutcome::Unknown(r) => println!("  model: unknown ({r})"),
            }
        }
    }
    Ok(0)
}

fn cmd_train(a: TrainArgs) -> Result<i32, String> {
    let read = |p: &Path| -> Result<String, String> {
        std::fs::read_to_string(p).map_err(|e| format!("read `{}`: {e}", p.display()))
    };
    let benign = load_import_sets(&read(&a.benign)?);
    let malicious = load_import_sets(&read(&a.malicious)?);
    let model = train(&benign, &malicious, a.prior, a.threshold).map_err(|e| e.to_string())?;
    model.save(&a.out).map_err(|e| e.to_string())?;
    let flagged: Vec<&str> = model
        .api_names()
        .filter(|api| model.is_flagged_api(api))
        .collect();
    println!(
        "trained on {} benign + {} malicious sample(s); {} api(s), {} flagged ({})",
        benign.len(),
        malicious.len(),
        model.api_names().count(),
        flagged.len(),
        flagged.join(", ")
    );
    println!("model hash {}", model.hash());
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn cmd_score(a: ScoreArgs) -> Result<i32, String> {
    let program = load_program(&a.file)?;
    let model = load_model(&a.model)?;
    let cg = build_callgraph(&program);
    let report = build_report(&cg, &model, a.transitive);
    println!(
        "flagged APIs (threshold {}): {}",
        report.threshold,
        report
            .flagged_apis
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join(", ")
    );
    for (name, score) in &report.functions {
        println!(
            "{name}: posterior {:.6}{}",
            score.posterior,
            if score.flagged { " [flagged]" } else { "" }
        );
    }
    Ok(0)
}

fn cmd_patch(a: PatchArgs) -> Result<i32, String> {
    let program = load_program(&a.file)?;
    let model = load_model(&a.model)?;
    let registry = load_registry(&a.protos)?;
    let cg = build_callgraph(&program);
    let anchors = detect_anchors(&cg, &program).map_err(|e| e.to_string())?;
    let suspicion = build_report(&cg, &model, a.transitive);
    let seed = resolve_seed(a.seed);
    let opts = ExploreOptions {
        seed,
        ..ExploreOptions::default()
    };
    let set = explore_with_options(&program, &anchors.entry, &registry, &opts)
        .map_err(|e| e.to_string())?;
    let (suspicious, benign) = filter_paths(&set, &suspicion);
    let path = suspicious.paths.get(a.path_index).ok_or_else(|| {
        format!(
            "no suspicious path at index {} ({} found)",
            a.path_index,
            suspicious.paths.len()
        )
    })?;
    let path_model = match model_for_path(path, &program, seed) {
        SolveOutcome::Sat(m) => m,
        SolveOutcome::Unsat => return Err("path constraints are unsatisfiable".to_string()),
        SolveOutcome::Unknown(r) => return Err(format!("solver gave up: {r}")),
    };

    let concrete = concretize_history(&path.history, &path_model);
    let benign_concrete: Vec<_> = benign
        .paths
        .iter()
        .filter_map(|p| match model_for_path(p, &program, seed) {
            SolveOutcome::Sat(m) => Some(concretize_history(&p.history, &m)),
            _ => None,
        })
        .collect();
    let root = select_benign_counterpart(&concrete, &benign_concrete)
        .and_then(|i| malverse::triage::diff_paths(&concrete, &benign_concrete[i]).ok());

    let mode = match a.mode {
        ModeArg::Full => PatchMode::Full,
        ModeArg::Minimal => PatchMode::Minimal,
    };
    let spec =
        synthesize(path, &path_model, root.as_ref(), mode).map_err(|e| e.to_string())?;
    let source = emit_c(&spec, &registry).map_err(|e| e.to_string())?;

    match a.out {
        None => {
            print!("{source}");
        }
        Some(dir) => {
            std::fs::create_dir_all(&dir)
                .map_err(|e| format!("create `{}`: {e}", dir.display()))?;
            let stem = a
                .file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sample".to_string());
            let c_path = dir.join(format!("{stem}.patch.c"));
            let spec_path = dir.join(format!("{stem}.patchspec.json"));
            std::fs::write(&c_path, &source)
                .map_err(|e| format!("write `{}`: {e}", c_path.display()))?;
            let mut json = serde_json::to_string_pretty(&spec).expect("patch specs serialize");
            json.push('\n');
            std::fs::write(&spec_path, json)
                .map_err(|e| format!("write `{}`: {e}", spec_path.display()))?;
            println!("wrote {}", c_path.display());
            println!("wrote {}", spec_path.display());
        }
    }
    Ok(0)
}

fn cmd_run(a: RunArgs) -> Result<i32, String> {
    let program = load_program(&a.file)?;
    let patch: PatchSpec = match &a.patch {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("read `{}`: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("patch spec: {e}"))?
        }
        None => PatchSpec {
            schedules: vec![],
            preloads: vec![],
            provenance: malverse::patchgen::Provenance {
                path_fingerprint: String::new(),
                model_hash: String::new(),
            },
        },
    };
    let trace = sandbox::run(&program, &patch, a.step_limit).map_err(|e| e.to_string())?;
    print!("{}", trace.to_json_lines());
    Ok(0)
}
