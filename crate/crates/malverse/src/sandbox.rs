//! Concrete MVIR interpreter: a sandbox stand-in that executes a program
//! under a [`PatchSpec`] and checks whether the patch steers execution
//! onto a targeted path.
//!
//! Unlike the symbolic engine, internal calls here are entered for real,
//! with their own frames. External calls consult the patch: a preloaded
//! function returns its buffer's address every time, a scheduled
//! function walks its return list (repeating the final value once the
//! schedule is exhausted), and an unpatched external returns 0 — the
//! conventional success value, making the default run deterministic.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::callgraph::{build_callgraph, detect_anchors, AnchorError};
use crate::ir::validate::{validate, Diagnostic};
use crate::ir::{AluOp, CmpOp, Coord, Instruction, Program};
use crate::patchgen::PatchSpec;
use crate::symexec::{DeadendReason, PathState, PathStatus};

/// Default instruction budget for one run.
pub const DEFAULT_STEP_LIMIT: usize = 1_000_000;

/// Patch-preloaded buffers are laid out one region apart starting here,
/// away from string literals and the symbolic engine's stub buffers.
pub const PRELOAD_REGION_BASE: u64 = 0x2000_0000;
pub const PRELOAD_REGION_SIZE: u64 = 0x1000;

/// Where a run ended: a `ret` in the entry function, a `mark evade`, or
/// a `halt`, each at the instruction that stopped the machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitSite {
    Ret(Coord),
    Evade(Coord),
    Halt(Coord),
}

impl fmt::Display for ExitSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExitSite::Ret(c) => write!(f, "ret at {c}"),
            ExitSite::Evade(c) => write!(f, "evade at {c}"),
            ExitSite::Halt(c) => write!(f, "halt at {c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// An external call: callee, concrete argument values, concrete
    /// return. Internal calls execute inline and are not events.
    Invocation {
        callee: String,
        args: Vec<u64>,
        ret: u64,
    },
    Mark { tag: String },
    Exit { site: ExitSite, value: u64 },
    /// The instruction budget ran out before the program ended.
    StepLimit,
}

/// The observable behaviour of one run. Ends in exactly one `Exit` or
/// `StepLimit` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteTrace {
    pub events: Vec<TraceEvent>,
}

impl ConcreteTrace {
    /// The final exit site and return value, if the run ended rather
    /// than hitting the step limit.
    pub fn exit(&self) -> Option<(&ExitSite, u64)> {
        match self.events.last() {
            Some(TraceEvent::Exit { site, value }) => Some((site, *value)),
            _ => None,
        }
    }

    /// Every recorded mark tag, in execution order.
    pub fn marks(&self) -> Vec<&str> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Mark { tag } => Some(tag.as_str()),
                _ => None,
            })
            .collect()
    }

    /// One JSON object per line, one line per event.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("program fails validation: {0} issue(s), first: {1}")]
    Invalid(usize, String),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
    #[error("entry function `{0}` does not exist")]
    UnknownEntry(String),
}

/// Execute from the detected entry under `patch`.
pub fn run(p: &Program, patch: &PatchSpec, step_limit: usize) -> Result<ConcreteTrace, RunError> {
    let issues: Vec<Diagnostic> = validate(p);
    if !issues.is_empty() {
        return Err(RunError::Invalid(issues.len(), issues[0].to_string()));
    }
    let cg = build_callgraph(p);
    let anchors = detect_anchors(&cg, p)?;
    run_from(p, &anchors.entry, patch, step_limit)
}

/// Execute from a named entry function under `patch`. The program must
/// already be valid; [`run`] checks this.
pub fn run_from(
    p: &Program,
    entry: &str,
    patch: &PatchSpec,
    step_limit: usize,
) -> Result<ConcreteTrace, RunError> {
    if p.function(entry).is_none() {
        return Err(RunError::UnknownEntry(entry.to_string()));
    }
    let mut m = Machine::new(p, patch, entry);
    Ok(m.run(step_limit))
}

/// What a patched run must reproduce: the path's exit site and its mark
/// sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub exit: ExitSite,
    pub marks: Vec<String>,
}

/// The replay target for a terminated symbolic path. Deadends other
/// than `halt` have nothing a concrete run could match.
pub fn expectation_of(path: &PathState) -> Option<Expectation> {
    let exit = match &path.status {
        PathStatus::ReachedExit(c) => ExitSite::Ret(c.clone()),
        PathStatus::Evaded(c) => ExitSite::Evade(c.clone()),
        PathStatus::Deadend {
            site,
            reason: DeadendReason::Halt,
        } => ExitSite::Halt(site.clone()),
        _ => return None,
    };
    Some(Expectation {
        exit,
        marks: path.marks.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

/// PASS iff running `p` under `patch` reproduces `expected` exactly:
/// same exit site, same mark sequence.
pub fn validate_patch(
    p: &Program,
    patch: &PatchSpec,
    expected: &Expectation,
    step_limit: usize,
) -> Result<Verdict, RunError> {
    let trace = run(p, patch, step_limit)?;
    let marks: Vec<String> = trace.marks().iter().map(|s| s.to_string()).collect();
    let verdict = match trace.exit() {
        None => Verdict {
            pass: false,
            detail: "run hit the step limit before exiting".to_string(),
        },
        Some((site, _)) if *site != expected.exit => Verdict {
            pass: false,
            detail: format!("exited at `{site}`, expected `{}`", expected.exit),
        },
        Some(_) if marks != expected.marks => Verdict {
            pass: false,
            detail: format!(
                "marks [{}] do not match expected [{}]",
                marks.join(", "),
                expected.marks.join(", ")
            ),
        },
        Some((site, _)) => Verdict {
            pass: true,
            detail: format!("reached `{site}` with matching marks"),
        },
    };
    Ok(verdict)
}

/// 64-bit wrapping ALU semantics, written against 128-bit intermediates
/// so differential tests exercise a formulation independent of the
/// symbolic evaluator's.
pub fn concrete_alu(op: AluOp, a: u64, b: u64) -> u64 {
    const MASK: u128 = u64::MAX as u128;
    let (a128, b128) = (a as u128, b as u128);
    let wide = match op {
        AluOp::Add => a128 + b128,
        AluOp::Sub => a128 + (MASK + 1) - b128,
        AluOp::Mul => a128 * b128,
        AluOp::And => a128 & b128,
        AluOp::Or => a128 | b128,
        AluOp::Xor => a128 ^ b128,
    };
    (wide & MASK) as u64
}

/// Comparison semantics with signed orderings phrased via an explicit
/// sign-bit flip rather than integer casts.
pub fn concrete_cmp(op: CmpOp, a: u64, b: u64) -> u64 {
    const SIGN: u64 = 1 << 63;
    let holds = match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Ult => a < b,
        CmpOp::Ule => a <= b,
        CmpOp::Slt => (a ^ SIGN) < (b ^ SIGN),
        CmpOp::Sle => (a ^ SIGN) <= (b ^ SIGN),
    };
    holds as u64
}

struct Frame {
    function: usize,
    block: usize,
    index: usize,
    registers: BTreeMap<String, u64>,
    /// Register in the caller's frame that receives this frame's return.
    ret_dst: Option<String>,
}

struct Machine<'p> {
    program: &'p Program,
    frames: Vec<Frame>,
    memory: BTreeMap<u64, u8>,
    /// Prior invocation count per external function.
    counters: BTreeMap<String, usize>,
    schedules: BTreeMap<&'p str, &'p [u64]>,
    preload_addrs: BTreeMap<&'p str, u64>,
    events: Vec<TraceEvent>,
}

impl<'p> Machine<'p> {
    fn new(program: &'p Program, patch: &'p PatchSpec, entry: &str) -> Machine<'p> {
        let mut memory = BTreeMap::new();
        for (i, bytes) in program.string_table.iter().enumerate() {
            let base = crate::ir::STRING_REGION_BASE + i as u64 * crate::ir::STRING_REGION_SIZE;
            for (off, &b) in bytes.iter().enumerate() {
                memory.insert(base + off as u64, b);
            }
        }
        let mut preload_addrs = BTreeMap::new();
        for (i, pre) in patch.preloads.iter().enumerate() {
            let base = PRELOAD_REGION_BASE + i as u64 * PRELOAD_REGION_SIZE;
            for (off, &b) in pre.bytes.iter().enumerate() {
                memory.insert(base + off as u64, b);
            }
            preload_addrs.insert(pre.function.as_str(), base);
        }
        let schedules = patch
            .schedules
            .iter()
            .map(|s| (s.function.as_str(), s.returns.as_slice()))
            .collect();

        let fi = program
            .functions
            .iter()
            .position(|f| f.name == entry)
            .expect("caller checked the entry exists");
        let frame = Frame {
            function: fi,
            block: 0,
            index: 0,
            registers: program.functions[fi]
                .params
                .iter()
                .map(|p| (p.clone(), 0))
                .collect(),
            ret_dst: None,
        };
        Machine {
            program,
            frames: vec![frame],
            memory,
            counters: BTreeMap::new(),
            schedules,
            preload_addrs,
            events: Vec::new(),
        }
    }

    fn here(&self) -> Coord {
        let f = self.frames.last().expect("machine has a frame");
        let func = &self.program.functions[f.function];
        Coord {
            function: func.name.clone(),
            block: func.blocks[f.block].label.clone(),
            index: f.index,
        }
    }

    fn reg(&self, name: &str) -> u64 {
        let f = self.frames.last().expect("machine has a frame");
        *f.registers
            .get(name)
            .expect("validated programs assign registers before use")
    }

    fn set_reg(&mut self, name: &str, value: u64) {
        let f = self.frames.last_mut().expect("machine has a frame");
        f.registers.insert(name.to_string(), value);
    }

    fn goto(&mut self, label: &str) {
        let f = self.frames.last_mut().expect("machine has a frame");
        let func = &self.program.functions[f.function];
        f.block = func
            .blocks
            .iter()
            .position(|b| b.label == label)
            .expect("validated programs branch to existing labels");
        f.index = 0;
    }

    fn load_word(&self, addr: u64) -> u64 {
        let mut bytes = [0u8; 8];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = self
                .memory
                .get(&addr.wrapping_add(i as u64))
                .copied()
                .unwrap_or(0);
        }
        u64::from_le_bytes(bytes)
    }

    fn store_word(&mut self, addr: u64, value: u64) {
        for (i, b) in value.to_le_bytes().into_iter().enumerate() {
            self.memory.insert(addr.wrapping_add(i as u64), b);
        }
    }

    /// The patched return value for the n-th invocation (0-based) of an
    /// external function.
    fn external_return(&self, callee: &str, n: usize) -> u64 {
        if let Some(addr) = self.preload_addrs.get(callee) {
            return *addr;
        }
        if let Some(returns) = self.schedules.get(callee) {
            return returns[n.min(returns.len() - 1)];
        }
        0
    }

    fn run(&mut self, step_limit: usize) -> ConcreteTrace {
        let mut steps = 0usize;
        loop {
            if steps >= step_limit {
                self.events.push(TraceEvent::StepLimit);
                break;
            }
            steps += 1;
            if let Some(exit) = self.step() {
                self.events.push(exit);
                break;
            }
        }
        ConcreteTrace {
            events: std::mem::take(&mut self.events),
        }
    }

    /// Execute one instruction; `Some` is the trace's final event.
    fn step(&mut self) -> Option<TraceEvent> {
        let here = self.here();
        let f = self.frames.last().expect("machine has a frame");
        let func = &self.program.functions[f.function];
        let instr = func.blocks[f.block].instrs[f.index].clone();

        match instr {
            Instruction::Const { dst, value } => {
                self.set_reg(&dst, value);
            }
            Instruction::Alu { dst, op, lhs, rhs } => {
                let v = concrete_alu(op, self.reg(&lhs), self.reg(&rhs));
                self.set_reg(&dst, v);
            }
            Instruction::Cmp { dst, op, lhs, rhs } => {
                let v = concrete_cmp(op, self.reg(&lhs), self.reg(&rhs));
                self.set_reg(&dst, v);
            }
            Instruction::CStr { dst, string } => {
                let addr = self.program.string_addr(string);
                self.set_reg(&dst, addr);
            }
            Instruction::Load { dst, addr } => {
                let v = self.load_word(self.reg(&addr));
                self.set_reg(&dst, v);
            }
            Instruction::Store { addr, value } => {
                self.store_word(self.reg(&addr), self.reg(&value));
            }
            Instruction::Call { dst, callee, args } => {
                let arg_values: Vec<u64> = args.iter().map(|a| self.reg(a)).collect();
                if let Some(fi) = self.program.functions.iter().position(|f| f.name == callee) {
                    let callee_fn = &self.program.functions[fi];
                    let mut registers = BTreeMap::new();
                    for (i, p) in callee_fn.params.iter().enumerate() {
                        registers.insert(p.clone(), arg_values.get(i).copied().unwrap_or(0));
                    }
                    self.frames.push(Frame {
                        function: fi,
                        block: 0,
                        index: 0,
                        registers,
                        ret_dst: Some(dst),
                    });
                    return None; // entered the callee; do not advance here
                }
                let n = {
                    let c = self.counters.entry(callee.clone()).or_insert(0);
                    let n = *c;
                    *c += 1;
                    n
                };
                let ret = self.external_return(&callee, n);
                self.events.push(TraceEvent::Invocation {
                    callee,
                    args: arg_values,
                    ret,
                });
                self.set_reg(&dst, ret);
            }
            Instruction::Br {
                cond,
                then_label,
                else_label,
            } => {
                let label = if self.reg(&cond) != 0 {
                    then_label
                } else {
                    else_label
                };
                self.goto(&label);
                return None;
            }
            Instruction::Jmp { label } => {
                self.goto(&label);
                return None;
            }
            Instruction::Ret { value } => {
                let v = self.reg(&value);
                let frame = self.frames.pop().expect("machine has a frame");
                match frame.ret_dst {
                    None => {
                        return Some(TraceEvent::Exit {
                            site: ExitSite::Ret(here),
                            value: v,
                        });
                    }
                    Some(dst) => {
                        self.set_reg(&dst, v);
                        // resume after the call instruction
                        let caller = self.frames.last_mut().expect("caller frame");
                        caller.index += 1;
                        return None;
                    }
                }
            }
            Instruction::Halt => {
                return Some(TraceEvent::Exit {
                    site: ExitSite::Halt(here),
                    value: 0,
                });
            }
            Instruction::Mark { tag } => {
                if tag == "evade" {
                    return Some(TraceEvent::Exit {
                        site: ExitSite::Evade(here),
                        value: 0,
                    });
                }
                self.events.push(TraceEvent::Mark { tag });
            }
        }

        let f = self.frames.last_mut().expect("machine has a frame");
        f.index += 1;
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchgen::{MemoryPreload, Provenance, ReturnSchedule, DEFAULT_BUFFER_SIZE};

    fn empty_patch() -> PatchSpec {
        PatchSpec {
            schedules: vec![],
            preloads: vec![],
            provenance: Provenance {
                path_fingerprint: String::new(),
                model_hash: String::new(),
            },
        }
    }

    fn patch_with(schedules: Vec<ReturnSchedule>, preloads: Vec<MemoryPreload>) -> PatchSpec {
        PatchSpec {
            schedules,
            preloads,
            ..empty_patch()
        }
    }

    fn run_text(text: &str, patch: &PatchSpec) -> ConcreteTrace {
        let p = Program::parse(text).unwrap();
        run(&p, patch, DEFAULT_STEP_LIMIT).unwrap()
    }

    /// For programs without calls, where anchor detection has no entry.
    fn run_main(text: &str, patch: &PatchSpec) -> ConcreteTrace {
        let p = Program::parse(text).unwrap();
        run_from(&p, "main", patch, DEFAULT_STEP_LIMIT).unwrap()
    }

    const ANTI_DEBUG: &str = "
        fn main() {
        entry:
            z = const 0
            t = call ptrace(z, z)
            c = cmp eq t, z
            br c, arm, evade
        arm:
            mark payload
            r = const 1
            ret r
        evade:
            mark evade
            halt
        }
    ";

    #[test]
    fn unpatched_externals_return_zero() {
        let trace = run_text(ANTI_DEBUG, &empty_patch());
        assert_eq!(
            trace.events[0],
            TraceEvent::Invocation {
                callee: "ptrace".to_string(),
                args: vec![0, 0],
                ret: 0,
            }
        );
        assert_eq!(trace.marks(), vec!["payload"]);
        let (site, value) = trace.exit().unwrap();
        assert!(matches!(site, ExitSite::Ret(c) if c.block == "arm"));
        assert_eq!(value, 1);
    }

    #[test]
    fn scheduled_returns_follow_invocation_order_and_repeat_last() {
        let patch = patch_with(
            vec![ReturnSchedule {
                function: "clock".to_string(),
                returns: vec![7, 9],
            }],
            vec![],
        );
        let trace = run_text(
            "
            fn main() {
            entry:
                a = call clock()
                b = call clock()
                c = call clock()
                s = add a, b
                s2 = add s, c
                ret s2
            }
        ",
            &patch,
        );
        let rets: Vec<u64> = trace
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Invocation { ret, .. } => Some(*ret),
                _ => None,
            })
            .collect();
        assert_eq!(rets, vec![7, 9, 9], "schedule repeats its last value");
        assert_eq!(trace.exit().unwrap().1, 7 + 9 + 9);
    }

    #[test]
    fn evade_mark_exits_at_a_synthetic_site() {
        let patch = patch_with(
            vec![ReturnSchedule {
                function: "ptrace".to_string(),
                returns: vec![1],
            }],
            vec![],
        );
        let trace = run_text(ANTI_DEBUG, &patch);
        let (site, _) = trace.exit().unwrap();
        assert!(matches!(site, ExitSite::Evade(c) if c.block == "evade" && c.index == 0));
        assert!(trace.marks().is_empty(), "evade itself is not a mark event");
    }

    #[test]
    fn internal_calls_execute_with_real_frames_and_are_not_events() {
        let trace = run_text(
            "
            fn double(x) {
            entry:
                y = add x, x
                ret y
            }
            fn main() {
            entry:
                a = const 21
                b = call double(a)
                ret b
            }
        ",
            &empty_patch(),
        );
        assert_eq!(trace.exit().unwrap().1, 42);
        assert_eq!(
            trace
                .events
                .iter()
                .filter(|e| matches!(e, TraceEvent::Invocation { .. }))
                .count(),
            0,
            "internal calls leave no invocation events"
        );
    }

    #[test]
    fn preloaded_function_returns_its_buffer_address_every_time() {
        let patch = patch_with(
            vec![],
            vec![MemoryPreload {
                function: "getcwd".to_string(),
                bytes: b"BOMB".to_vec(),
                buffer_size: DEFAULT_BUFFER_SIZE,
            }],
        );
        let trace = run_text(
            "
            fn main() {
            entry:
                a = call getcwd()
                b = call getcwd()
                d = sub a, b
                ret d
            }
        ",
            &patch,
        );
        let addrs: Vec<u64> = trace
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Invocation { ret, .. } => Some(*ret),
                _ => None,
            })
            .collect();
        assert_eq!(addrs, vec![PRELOAD_REGION_BASE, PRELOAD_REGION_BASE]);
        assert_eq!(trace.exit().unwrap().1, 0);
    }

    #[test]
    fn preloaded_bytes_are_readable_through_loads() {
        let patch = patch_with(
            vec![],
            vec![MemoryPreload {
                function: "getcwd".to_string(),
                bytes: b"BOMB".to_vec(),
                buffer_size: DEFAULT_BUFFER_SIZE,
            }],
        );
        let trace = run_text(
            "
            fn main() {
            entry:
                a = call getcwd()
                w = load a
                ret w
            }
        ",
            &patch,
        );
        // "BOMB" little-endian in the low four bytes, zeros above.
        let expected = u64::from_le_bytes([b'B', b'O', b'M', b'B', 0, 0, 0, 0]);
        assert_eq!(trace.exit().unwrap().1, expected);
    }

    #[test]
    fn string_literals_are_preloaded_in_memory() {
        let trace = run_main(
            r#"
            fn main() {
            entry:
                s = cstr "Hi"
                w = load s
                ret w
            }
        "#,
            &empty_patch(),
        );
        let expected = u64::from_le_bytes([b'H', b'i', 0, 0, 0, 0, 0, 0]);
        assert_eq!(trace.exit().unwrap().1, expected);
    }

    #[test]
    fn step_limit_ends_the_trace() {
        let trace = run_main(
            "
            fn main() {
            entry:
                z = const 0
                jmp spin
            spin:
                jmp spin
            }
        ",
            &empty_patch(),
        );
        assert_eq!(trace.events.last(), Some(&TraceEvent::StepLimit));
        assert!(trace.exit().is_none());
    }

    #[test]
    fn invalid_programs_are_rejected_up_front() {
        let p = Program::parse("fn main() { entry: ret ghost }").unwrap();
        let err = run(&p, &empty_patch(), 100).unwrap_err();
        assert!(matches!(err, RunError::Invalid(..)));
    }

    #[test]
    fn run_starts_from_the_detected_entry() {
        // `helper` never calls anything, so anchor detection picks main.
        let trace = run_text(
            "
            fn helper() {
            entry:
                r = const 9
                ret r
            }
            fn main() {
            entry:
                a = call helper()
                b = call getpid()
                s = add a, b
                ret s
            }
        ",
            &empty_patch(),
        );
        assert_eq!(trace.exit().unwrap().1, 9);
        assert!(matches!(
            &trace.events[0],
            TraceEvent::Invocation { callee, .. } if callee == "getpid"
        ));
    }

    #[test]
    fn validate_patch_passes_on_exact_match_and_fails_otherwise() {
        let p = Program::parse(ANTI_DEBUG).unwrap();
        let payload_expect = Expectation {
            exit: ExitSite::Ret(Coord {
                function: "main".to_string(),
                block: "arm".to_string(),
                index: 2,
            }),
            marks: vec!["payload".to_string()],
        };
        let good = patch_with(
            vec![ReturnSchedule {
                function: "ptrace".to_string(),
                returns: vec![0],
            }],
            vec![],
        );
        let bad = patch_with(
            vec![ReturnSchedule {
                function: "ptrace".to_string(),
                returns: vec![5],
            }],
            vec![],
        );
        let v = validate_patch(&p, &good, &payload_expect, DEFAULT_STEP_LIMIT).unwrap();
        assert!(v.pass, "{}", v.detail);
        let v = validate_patch(&p, &bad, &payload_expect, DEFAULT_STEP_LIMIT).unwrap();
        assert!(!v.pass);
        assert!(v.detail.contains("expected"));
    }

    #[test]
    fn mark_mismatch_fails_validation_even_at_the_same_exit() {
        let p = Program::parse(
            "
            fn main() {
            entry:
                t = call ptrace()
                z = const 0
                c = cmp eq t, z
                br c, a, b
            a:
                mark payload
                jmp out
            b:
                mark idle
                jmp out
            out:
                ret z
            }
        ",
        )
        .unwrap();
        let expect = Expectation {
            exit: ExitSite::Ret(Coord {
                function: "main".to_string(),
                block: "out".to_string(),
                index: 0,
            }),
            marks: vec!["payload".to_string()],
        };
        let wrong_arm = patch_with(
            vec![ReturnSchedule {
                function: "ptrace".to_string(),
                returns: vec![3],
            }],
            vec![],
        );
        let v = validate_patch(&p, &wrong_arm, &expect, DEFAULT_STEP_LIMIT).unwrap();
        assert!(!v.pass);
        assert!(v.detail.contains("marks"));
    }

    #[test]
    fn expectation_of_maps_path_statuses() {
        use crate::stubs::StubRegistry;
        use crate::symexec::explore;
        let p = Program::parse(ANTI_DEBUG).unwrap();
        let set = explore(&p, "main", &StubRegistry::builtin()).unwrap();
        let exits: Vec<Expectation> =
            set.paths.iter().filter_map(expectation_of).collect();
        assert_eq!(exits.len(), 2);
        assert!(exits
            .iter()
            .any(|e| matches!(&e.exit, ExitSite::Ret(c) if c.block == "arm")));
        assert!(exits
            .iter()
            .any(|e| matches!(&e.exit, ExitSite::Evade(c) if c.block == "evade")));
    }

    #[test]
    fn trace_serializes_one_event_per_json_line() {
        let trace = run_text(ANTI_DEBUG, &empty_patch());
        let rendered = trace.to_json_lines();
        let lines: Vec<&str> = rendered.lines().collect();
        assert_eq!(lines.len(), trace.events.len());
        assert!(lines[0].contains("\"invocation\""));
        assert!(lines.last().unwrap().contains("\"exit\""));
    }

    #[test]
    fn alu_and_cmp_agree_with_the_symbolic_evaluator_on_samples() {
        use crate::symexec::expr::{apply_alu, apply_cmp};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a: u64 = rng.gen();
            let b: u64 = rng.gen();
            for op in AluOp::ALL {
                assert_eq!(concrete_alu(op, a, b), apply_alu(op, a, b), "{op:?} {a} {b}");
            }
            for op in CmpOp::ALL {
                assert_eq!(
                    concrete_cmp(op, a, b),
                    apply_cmp(op, a, b) as u64,
                    "{op:?} {a} {b}"
                );
            }
        }
    }
}
