//! Logic-bomb defusal toolkit for the MVIR toy binary format.
//!
//! Malware samples routinely hide their payload behind environment
//! checks — debugger probes, timing tests, magic values in the working
//! directory. This crate finds those trigger conditions in an MVIR
//! program and synthesizes C stub patches that force execution down the
//! hidden path, so the payload can be studied in the open.
//!
//! The pipeline, stage by stage:
//!
//! 1. [`ir`] — parse the textual MVIR form into a [`ir::Program`] and
//!    validate its structural invariants.
//! 2. [`callgraph`] — build the call graph, detect the analysis entry
//!    (the first function that makes calls) and its exit sites.
//! 3. [`symexec`] — symbolically execute from the entry with every
//!    callee stubbed: each invocation returns a fresh symbol, branches
//!    on symbolic conditions fork, and infeasible forks are pruned.
//! 4. [`solver`] — decide path constraints over 64-bit bit-vector
//!    arithmetic and produce concrete models: one return value per
//!    stubbed invocation, plus buffer bytes implied by pinned
//!    comparators.
//! 5. [`triage`] — score functions with a naive-Bayes model trained on
//!    API import sets, split paths into suspicious and benign, and
//!    diff a suspicious path against its closest benign counterpart to
//!    name the root-cause function.
//! 6. [`patchgen`] — turn the model into a [`patchgen::PatchSpec`]:
//!    per-function return schedules and memory preloads, rendered as a
//!    compilable C translation unit that shadows the real APIs.
//! 7. [`sandbox`] — re-run the program concretely under the patch and
//!    check it reproduces the targeted path's exit site and marks.
//!
//! [`pipeline::analyze`] chains all of it and writes a deterministic
//! [`report::AnalysisReport`] plus patch artifacts; the `malverse`
//! binary exposes each stage as a subcommand.
//!
//! # Examples
//!
//! The `examples/` directory walks the pipeline end to end; each is
//! runnable with `cargo run --example <name>`:
//!
//! - `parse_and_validate` — MVIR text in, validated [`ir::Program`] out.
//! - `callgraph_anchors` — edges, entry/exit detection, external refs.
//! - `explore_paths` — symbolic exploration and path fingerprints.
//! - `solve_and_concretize` — from path constraints to concrete
//!   trigger values.
//! - `train_and_score` — training the import-set classifier and
//!   scoring functions.
//! - `synthesize_patches` — full and minimal patches as C source.
//! - `sandbox_replay` — validating a patch in the concrete interpreter.
//! - `end_to_end` — the whole defusal pipeline on a stalling bomb.

pub mod callgraph;
pub mod ir;
pub mod patchgen;
pub mod pipeline;
pub mod report;
pub mod sandbox;
pub mod solver;
pub mod stubs;
pub mod symexec;
pub mod triage;
