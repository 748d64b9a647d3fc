//! From path constraints to concrete trigger values. Solve each
//! explored path's constraint set, re-evaluate the constraints under
//! the returned model as a sanity check, and concretize the call
//! history — the list of (callee, concrete return) pairs a patch must
//! reproduce. Buffer-comparing paths additionally pin buffer contents.
//!
//!     cargo run --example solve_and_concretize

use malverse::ir::Program;
use malverse::solver::{concretize_history, eval_with_default, model_for_path, SolveOutcome};
use malverse::stubs::StubRegistry;
use malverse::symexec::explore;

const SEED: u64 = 0xC0FFEE;

fn main() {
    // The stalling bomb: the armed arm needs `clock() - clock()` skew
    // greater than the slept interval, an arithmetic relation between
    // two invocations of the same function.
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/stalling_clock.mvir");
    let text = std::fs::read_to_string(path).expect("corpus sample exists");
    let program = Program::parse(&text).expect("corpus sample parses");
    let registry = StubRegistry::builtin();

    let set = explore(&program, "main", &registry).expect("exploration runs");
    for p in &set.paths {
        println!("path {} ({})", &p.fingerprint()[..12], p.status);
        for c in &p.constraints {
            println!("  constraint: {c}");
        }
        match model_for_path(p, &program, SEED) {
            SolveOutcome::Sat(model) => {
                for (sym, value) in &model.assignment {
                    println!("  model: {sym} = {value:#x} ({})", *value as i64);
                }
                // Independent check: every constraint really evaluates
                // to nonzero under the assignment.
                let ok = p
                    .constraints
                    .iter()
                    .all(|c| eval_with_default(&c.expr, &model.assignment, 0) != 0);
                println!("  constraints re-evaluate true: {ok}");

                println!("  concretized history:");
                for call in concretize_history(&p.history, &model) {
                    println!(
                        "    #{} {} -> {:#x}{}",
                        call.seq,
                        call.callee,
                        call.ret,
                        match &call.buffer {
                            Some(bytes) =>
                                format!("  (buffer {:?})", String::from_utf8_lossy(bytes)),
                            None => String::new(),
                        }
                    );
                }
            }
            SolveOutcome::Unsat => println!("  unsatisfiable"),
            SolveOutcome::Unknown(why) => println!("  solver gave up: {why}"),
        }
        println!();
    }

    // The directory-keyed bomb: the trigger is not a return value but
    // the bytes behind a returned pointer. Pinning `strcmp(...) == 0`
    // forces the buffer to equal the literal it is compared against.
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/cwd_bomb.mvir");
    let text = std::fs::read_to_string(path).expect("corpus sample exists");
    let program = Program::parse(&text).expect("corpus sample parses");

    let set = explore(&program, "main", &registry).expect("exploration runs");
    for p in &set.paths {
        if let SolveOutcome::Sat(model) = model_for_path(p, &program, SEED) {
            println!("path {} ({})", &p.fingerprint()[..12], p.status);
            for pin in &model.pins {
                println!(
                    "  pinned comparator: #{} {} -> {:#x}, buffer sym {:?}",
                    pin.seq, pin.callee, pin.ret, pin.buffer
                );
            }
            for (sym, bytes) in &model.buffers {
                println!(
                    "  buffer {sym} = {:?}",
                    String::from_utf8_lossy(bytes)
                );
            }
        }
    }
}
