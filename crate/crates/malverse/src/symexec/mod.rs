//! Symbolic execution of MVIR with every callee stubbed.
//!
//! Exploration starts from a chosen root function whose parameters become
//! free symbols. Calls never descend: each one is replaced by a stub
//! according to the registry (internal callees default to scalar stubs),
//! producing fresh symbols named `<callee>_<n>` where `n` counts prior
//! calls to the same callee on this path. Branches on symbolic conditions
//! fork the state; each arm is kept only if its accumulated constraints
//! are satisfiable, so the resulting path set contains no path the solver
//! can refute.
//!
//! Memory is a byte-granular little-endian map. String literals read as
//! their bytes, buffer stubs carve fresh 256-byte regions, and everything
//! else defaults to zero. Loads that straddle partially-symbolic cells
//! end the path as unsupported rather than guessing.

pub mod expr;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ir::{Coord, Function, Instruction, Program, STRING_REGION_BASE, STRING_REGION_SIZE};
use crate::solver::{solve_seeded, SolveOutcome, DEFAULT_SEED};
use crate::stubs::{StubKind, StubRegistry};
use expr::{negate_expr, Constraint, ExprRef, Folded, Origin, SymExpr};

/// Base address of the first stub-allocated buffer region.
pub const BUFFER_REGION_BASE: u64 = 0x3000_0000;
/// Size reserved per stub-allocated buffer.
pub const BUFFER_REGION_SIZE: u64 = 0x100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreLimits {
    /// Cap on the total number of path states materialised.
    pub max_states: usize,
    /// Per-path instruction budget.
    pub max_steps: usize,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        ExploreLimits { max_states: 4096, max_steps: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    pub limits: ExploreLimits,
    /// When set, every scalar and comparator stub return is constrained
    /// to the inclusive signed range `[lo, hi]`.
    pub return_domain: Option<(i64, i64)>,
    /// Seed for the feasibility solver's candidate draws.
    pub seed: u64,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { limits: ExploreLimits::default(), return_domain: None, seed: DEFAULT_SEED }
    }
}

/// One stubbed call, in path order. `seq` indexes into the history and
/// has no gaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvocationRecord {
    pub seq: usize,
    pub callee: String,
    pub external: bool,
    pub kind: StubKind,
    pub callsite: Coord,
    pub args: Vec<ExprRef>,
    pub ret: ExprRef,
    /// Content symbol for buffer stubs.
    pub buffer_sym: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeadendReason {
    /// Executed a `halt`.
    Halt,
    /// Both branch arms were refuted by the solver.
    NoFeasibleBranch,
    /// Per-path instruction budget exhausted.
    StepLimit,
    /// The path needed semantics the engine does not model.
    Unsupported(String),
}

impl fmt::Display for DeadendReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeadendReason::Halt => write!(f, "halt"),
            DeadendReason::NoFeasibleBranch => write!(f, "no-feasible-branch"),
            DeadendReason::StepLimit => write!(f, "step-limit"),
            DeadendReason::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStatus {
    Running,
    /// Returned from the root function at this site.
    ReachedExit(Coord),
    /// Hit an `evade` marker at this site.
    Evaded(Coord),
    Deadend { site: Coord, reason: DeadendReason },
}

impl fmt::Display for PathStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathStatus::Running => write!(f, "running"),
            PathStatus::ReachedExit(c) => write!(f, "reached-exit {c}"),
            PathStatus::Evaded(c) => write!(f, "evaded {c}"),
            PathStatus::Deadend { site, reason } => write!(f, "deadend({reason}) {site}"),
        }
    }
}

/// One byte of path memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemCell {
    Byte(u8),
    /// Byte `index` of a symbolic 64-bit value.
    SymByte(ExprRef, usize),
}

#[derive(Debug, Clone)]
pub struct PathState {
    pub pc: Coord,
    pub registers: BTreeMap<String, ExprRef>,
    pub memory: BTreeMap<u64, MemCell>,
    pub constraints: Vec<Constraint>,
    pub history: Vec<InvocationRecord>,
    pub marks: Vec<String>,
    pub status: PathStatus,
    /// Human-readable termination summary.
    pub note: String,
    pub steps: usize,
    pub next_buffer_addr: u64,
    callee_counts: BTreeMap<String, usize>,
}

impl PathState {
    fn new(root: &Function) -> PathState {
        let registers = root
            .params
            .iter()
            .map(|p| (p.clone(), SymExpr::sym(p.clone(), Origin::Initial)))
            .collect();
        PathState {
            pc: Coord {
                function: root.name.clone(),
                block: root.blocks[0].label.clone(),
                index: 0,
            },
            registers,
            memory: BTreeMap::new(),
            constraints: Vec::new(),
            history: Vec::new(),
            marks: Vec::new(),
            status: PathStatus::Running,
            note: String::new(),
            steps: 0,
            next_buffer_addr: BUFFER_REGION_BASE,
            callee_counts: BTreeMap::new(),
        }
    }

    /// Canonical text rendering: status, marks, invocations, constraints.
    /// Two paths are the same analysis result iff these strings match.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "root: {}", self.pc.function);
        let _ = writeln!(s, "status: {}", self.status);
        for m in &self.marks {
            let _ = writeln!(s, "mark: {m}");
        }
        for r in &self.history {
            let args: Vec<String> = r.args.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(
                s,
                "call: {} {} {} ({}) -> {}",
                r.seq,
                r.callee,
                r.kind.name(),
                args.join(", "),
                r.ret
            );
        }
        for c in &self.constraints {
            let _ = writeln!(s, "constraint: {c}");
        }
        s
    }

    /// Hex digest of the canonical rendering.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical_string().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn terminated(&self) -> bool {
        self.status != PathStatus::Running
    }
}

/// All terminated paths from one exploration, ordered by fingerprint.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub paths: Vec<PathState>,
    /// True when the state cap dropped at least one feasible fork.
    pub truncated: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExploreError {
    #[error("no function named `{0}` in the program")]
    UnknownFunction(String),
    #[error("function `{0}` has no blocks to execute")]
    EmptyFunction(String),
    #[error("`{0}` is an external reference, not an internal function")]
    NotInternal(String),
}

/// Explore with default limits and seed.
pub fn explore(
    program: &Program,
    root: &str,
    registry: &StubRegistry,
) -> Result<PathSet, ExploreError> {
    explore_with_options(program, root, registry, &ExploreOptions::default())
}

pub fn explore_with_options(
    program: &Program,
    root: &str,
    registry: &StubRegistry,
    opts: &ExploreOptions,
) -> Result<PathSet, ExploreError> {
    let f = program
        .function(root)
        .ok_or_else(|| ExploreError::UnknownFunction(root.to_string()))?;
    if f.blocks.is_empty() {
        return Err(ExploreError::EmptyFunction(root.to_string()));
    }

    let mut queue: VecDeque<PathState> = VecDeque::new();
    queue.push_back(PathState::new(f));
    let mut created = 1usize;
    let mut truncated = false;
    let mut done: Vec<PathState> = Vec::new();

    while let Some(mut state) = queue.pop_front() {
        while !state.terminated() {
            match step(&mut state, program, f, registry, opts) {
                StepOutcome::Continue => {}
                StepOutcome::Fork(other) => {
                    if created < opts.limits.max_states {
                        created += 1;
                        queue.push_back(*other);
                    } else {
                        truncated = true;
                    }
                }
                StepOutcome::Terminated => break,
            }
        }
        done.push(state);
    }

    done.sort_by_key(|p| p.fingerprint());
    Ok(PathSet { paths: done, truncated })
}

/// Re-explore inside an internal function that top-level analysis only
/// stubbed. External names cannot be refined.
pub fn refine(
    program: &Program,
    name: &str,
    registry: &StubRegistry,
    opts: &ExploreOptions,
) -> Result<PathSet, ExploreError> {
    if program.is_internal(name) {
        explore_with_options(program, name, registry, opts)
    } else {
        Err(ExploreError::NotInternal(name.to_string()))
    }
}

enum StepOutcome {
    Continue,
    /// The else-arm of a feasible two-way fork; the stepped state itself
    /// took the then-arm.
    Fork(Box<PathState>),
    Terminated,
}

fn finish(state: &mut PathState, status: PathStatus, note: String) -> StepOutcome {
    state.status = status;
    state.note = note;
    StepOutcome::Terminated
}

fn step(
    state: &mut PathState,
    program: &Program,
    root: &Function,
    registry: &StubRegistry,
    opts: &ExploreOptions,
) -> StepOutcome {
    let here = state.pc.clone();
    if state.steps >= opts.limits.max_steps {
        return finish(
            state,
            PathStatus::Deadend { site: here, reason: DeadendReason::StepLimit },
            format!("step limit of {} reached", opts.limits.max_steps),
        );
    }
    state.steps += 1;

    let block_idx = match root.block_index(&here.block) {
        Some(i) => i,
        None => {
            let reason = DeadendReason::Unsupported(format!("missing block `{}`", here.block));
            return finish(state, PathStatus::Deadend { site: here, reason }, String::new());
        }
    };
    let instr = match root.blocks[block_idx].instrs.get(here.index) {
        Some(i) => i.clone(),
        None => {
            let reason =
                DeadendReason::Unsupported("fell off the end of a block".to_string());
            return finish(state, PathStatus::Deadend { site: here, reason }, String::new());
        }
    };

    macro_rules! reg {
        ($name:expr) => {
            match state.registers.get($name) {
                Some(e) => e.clone(),
                None => {
                    let reason = DeadendReason::Unsupported(format!(
                        "read of unassigned register `{}`",
                        $name
                    ));
                    return finish(state, PathStatus::Deadend { site: here, reason }, String::new());
                }
            }
        };
    }

    let advance = |state: &mut PathState| state.pc.index += 1;

    match instr {
        Instruction::Const { dst, value } => {
            state.registers.insert(dst, SymExpr::constant(value));
            advance(state);
        }
        Instruction::Alu { dst, op, lhs, rhs } => {
            let l = reg!(&lhs);
            let r = reg!(&rhs);
            state.registers.insert(dst, SymExpr::alu(op, l, r));
            advance(state);
        }
        Instruction::Cmp { dst, op, lhs, rhs } => {
            let l = reg!(&lhs);
            let r = reg!(&rhs);
            state.registers.insert(dst, SymExpr::cmp(op, l, r));
            advance(state);
        }
        Instruction::CStr { dst, string } => {
            state.registers.insert(dst, SymExpr::constant(program.string_addr(string)));
            advance(state);
        }
        Instruction::Load { dst, addr } => {
            let a = reg!(&addr);
            let base = match a.as_const() {
                Some(v) => v,
                None => {
                    let reason =
                        DeadendReason::Unsupported(format!("load through symbolic address {a}"));
                    return finish(state, PathStatus::Deadend { site: here, reason }, String::new());
                }
            };
            match read_word(state, program, base) {
                Ok(value) => {
                    state.registers.insert(dst, value);
                    advance(state);
                }
                Err(why) => {
                    let reason = DeadendReason::Unsupported(why);
                    return finish(state, PathStatus::Deadend { site: here, reason }, String::new());
                }
            }
        }
        Instruction::Store { addr, value } => {
            let a = reg!(&addr);
            let v = reg!(&value);
            let base = match a.as_const() {
                Some(v) => v,
                None => {
                    let reason =
                        DeadendReason::Unsupported(format!("store through symbolic address {a}"));
                    return finish(state, PathStatus::Deadend { site: here, reason }, String::new());
                }
            };
            write_word(state, base, &v);
            advance(state);
        }
        Instruction::Call { dst, callee, args } => {
            let mut arg_exprs = Vec::with_capacity(args.len());
            for name in &args {
                arg_exprs.push(reg!(name));
            }
            return invoke_stub(state, program, registry, opts, here, dst, callee, arg_exprs);
        }
        Instruction::Mark { tag } => {
            // The evade tag terminates the path and is reported as its
            // exit site, not as an observed mark — mirroring how the
            // concrete interpreter records it.
            if tag == "evade" {
                return finish(state, PathStatus::Evaded(here), "evade marker".to_string());
            }
            state.marks.push(tag.clone());
            advance(state);
        }
        Instruction::Jmp { label } => {
            state.pc.block = label;
            state.pc.index = 0;
        }
        Instruction::Br { cond, then_label, else_label } => {
            let c = reg!(&cond);
            return branch(state, opts, here, c, then_label, else_label);
        }
        Instruction::Ret { value } => {
            let _ = reg!(&value);
            return finish(
                state,
                PathStatus::ReachedExit(here.clone()),
                format!("returned at {here}"),
            );
        }
        Instruction::Halt => {
            return finish(
                state,
                PathStatus::Deadend { site: here.clone(), reason: DeadendReason::Halt },
                format!("halted at {here}"),
            );
        }
    }
    StepOutcome::Continue
}

fn branch(
    state: &mut PathState,
    opts: &ExploreOptions,
    here: Coord,
    cond: ExprRef,
    then_label: String,
    else_label: String,
) -> StepOutcome {
    let goto = |state: &mut PathState, label: String| {
        state.pc.block = label;
        state.pc.index = 0;
    };

    // Concrete condition: no fork, no constraint.
    if let Some(v) = cond.as_const() {
        goto(state, if v != 0 { then_label } else { else_label });
        return StepOutcome::Continue;
    }

    let then_c = Constraint::fold(cond.clone());
    let else_c = Constraint::fold(negate_expr(&cond));

    let feasible = |extra: &Constraint| -> bool {
        let mut cs = state.constraints.clone();
        cs.push(extra.clone());
        // Unknown keeps the arm: only a proved contradiction prunes.
        !matches!(solve_seeded(&cs, opts.seed), SolveOutcome::Unsat)
    };

    let then_arm = match then_c {
        Folded::True => Some(None),
        Folded::False => None,
        Folded::Constraint(k) => {
            if feasible(&k) {
                Some(Some(k))
            } else {
                None
            }
        }
    };
    let else_arm = match else_c {
        Folded::True => Some(None),
        Folded::False => None,
        Folded::Constraint(k) => {
            if feasible(&k) {
                Some(Some(k))
            } else {
                None
            }
        }
    };

    match (then_arm, else_arm) {
        (Some(tc), Some(ec)) => {
            let mut other = state.clone();
            if let Some(k) = ec {
                other.constraints.push(k);
            }
            goto(&mut other, else_label);
            if let Some(k) = tc {
                state.constraints.push(k);
            }
            goto(state, then_label);
            StepOutcome::Fork(Box::new(other))
        }
        (Some(tc), None) => {
            if let Some(k) = tc {
                state.constraints.push(k);
            }
            goto(state, then_label);
            StepOutcome::Continue
        }
        (None, Some(ec)) => {
            if let Some(k) = ec {
                state.constraints.push(k);
            }
            goto(state, else_label);
            StepOutcome::Continue
        }
        (None, None) => finish(
            state,
            PathStatus::Deadend { site: here, reason: DeadendReason::NoFeasibleBranch },
            "both branch arms are infeasible".to_string(),
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn invoke_stub(
    state: &mut PathState,
    program: &Program,
    registry: &StubRegistry,
    opts: &ExploreOptions,
    here: Coord,
    dst: String,
    callee: String,
    args: Vec<ExprRef>,
) -> StepOutcome {
    let external = !program.is_internal(&callee);
    // Internal callees are opaque scalar stubs at this level; refine()
    // explores inside them separately.
    let kind = if external { registry.descriptor(&callee, args.len()).kind } else { StubKind::Scalar };

    let seq = state.history.len();
    let n = *state.callee_counts.get(&callee).unwrap_or(&0);
    state.callee_counts.insert(callee.clone(), n + 1);
    let sym_base = format!("{callee}_{n}");

    let mut buffer_sym = None;
    let ret: ExprRef = match kind {
        StubKind::Scalar => {
            let s = SymExpr::sym(sym_base, Origin::Invocation(seq));
            constrain_return(state, opts, &s);
            s
        }
        StubKind::BufferPointer => {
            let addr = state.next_buffer_addr;
            state.next_buffer_addr += BUFFER_REGION_SIZE;
            let content_name = format!("{sym_base}_buf");
            let content = SymExpr::sym(content_name.clone(), Origin::Invocation(seq));
            write_word(state, addr, &content);
            buffer_sym = Some(content_name);
            SymExpr::constant(addr)
        }
        StubKind::Comparator => {
            if args.len() < 2 {
                let reason = DeadendReason::Unsupported(format!(
                    "comparator `{callee}` called with {} arguments, needs 2",
                    args.len()
                ));
                return finish(state, PathStatus::Deadend { site: here, reason }, String::new());
            }
            let s = SymExpr::sym(sym_base, Origin::Invocation(seq));
            constrain_return(state, opts, &s);
            s
        }
    };

    state.history.push(InvocationRecord {
        seq,
        callee,
        external,
        kind,
        callsite: here,
        args,
        ret: ret.clone(),
        buffer_sym,
    });
    state.registers.insert(dst, ret);
    state.pc.index += 1;
    StepOutcome::Continue
}

/// Restrict a fresh stub return to the configured signed range:
/// `ret - lo <=u hi - lo` holds exactly for `ret` in `[lo, hi]`.
fn constrain_return(state: &mut PathState, opts: &ExploreOptions, ret: &ExprRef) {
    if let Some((lo, hi)) = opts.return_domain {
        debug_assert!(lo <= hi);
        let width = (hi as u64).wrapping_sub(lo as u64);
        let shifted = SymExpr::alu(crate::ir::AluOp::Sub, ret.clone(), SymExpr::constant(lo as u64));
        let in_range = SymExpr::cmp(crate::ir::CmpOp::Ule, shifted, SymExpr::constant(width));
        if let Folded::Constraint(k) = Constraint::fold(in_range) {
            state.constraints.push(k);
        }
    }
}

/// Read a 64-bit little-endian word. Unmapped bytes default to the
/// string literal's contents inside a string region and zero elsewhere.
fn read_word(state: &PathState, program: &Program, base: u64) -> Result<ExprRef, String> {
    let mut concrete = [0u8; 8];
    let mut sym_parts: Vec<(ExprRef, usize)> = Vec::new();
    for i in 0..8u64 {
        let addr = base.wrapping_add(i);
        match state.memory.get(&addr) {
            Some(MemCell::Byte(b)) => concrete[i as usize] = *b,
            Some(MemCell::SymByte(e, idx)) => sym_parts.push((e.clone(), *idx)),
            None => concrete[i as usize] = default_byte(program, addr),
        }
    }
    if sym_parts.is_empty() {
        return Ok(SymExpr::constant(u64::from_le_bytes(concrete)));
    }
    // Accept only a full-width read-back of one symbolic value.
    if sym_parts.len() == 8 {
        let (first, _) = &sym_parts[0];
        let aligned = sym_parts
            .iter()
            .enumerate()
            .all(|(i, (e, idx))| *idx == i && std::rc::Rc::ptr_eq(e, first));
        if aligned {
            return Ok(first.clone());
        }
    }
    Err(format!("partially symbolic load at {base:#x}"))
}

fn write_word(state: &mut PathState, base: u64, value: &ExprRef) {
    match value.as_const() {
        Some(v) => {
            for (i, b) in v.to_le_bytes().iter().enumerate() {
                state.memory.insert(base.wrapping_add(i as u64), MemCell::Byte(*b));
            }
        }
        None => {
            for i in 0..8u64 {
                state
                    .memory
                    .insert(base.wrapping_add(i), MemCell::SymByte(value.clone(), i as usize));
            }
        }
    }
}

/// Memory contents an unmapped address reads as.
fn default_byte(program: &Program, addr: u64) -> u8 {
    if let Some((id, off)) = program.string_at(addr) {
        if off < STRING_REGION_SIZE as usize {
            return program.string_table[id.0].get(off).copied().unwrap_or(0);
        }
    }
    let _ = STRING_REGION_BASE;
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> StubRegistry {
        StubRegistry::builtin()
    }

    fn run(text: &str) -> PathSet {
        let p = Program::parse(text).unwrap();
        explore(&p, "main", &reg()).unwrap()
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
    fn straight_line_function_yields_one_exit_path() {
        let set = run("fn main() { entry: r = const 5\n ret r }");
        assert_eq!(set.paths.len(), 1);
        let p = &set.paths[0];
        assert!(matches!(p.status, PathStatus::ReachedExit(_)));
        assert!(p.constraints.is_empty());
        assert!(!set.truncated);
    }

    #[test]
    fn symbolic_branch_forks_into_both_arms() {
        let set = run(ANTI_DEBUG);
        assert_eq!(set.paths.len(), 2);
        let exit: Vec<&PathState> = set
            .paths
            .iter()
            .filter(|p| matches!(p.status, PathStatus::ReachedExit(_)))
            .collect();
        let evaded: Vec<&PathState> = set
            .paths
            .iter()
            .filter(|p| matches!(p.status, PathStatus::Evaded(_)))
            .collect();
        assert_eq!(exit.len(), 1);
        assert_eq!(evaded.len(), 1);

        assert_eq!(exit[0].marks, vec!["payload"]);
        assert_eq!(exit[0].constraints.len(), 1);
        assert_eq!(exit[0].constraints[0].to_string(), "(ptrace_0 == 0)");

        // The terminating evade tag is the path's exit, not a mark.
        assert!(evaded[0].marks.is_empty());
        assert_eq!(evaded[0].constraints[0].to_string(), "(ptrace_0 != 0)");
    }

    #[test]
    fn invocations_are_recorded_with_gapless_sequence_numbers() {
        let set = run("
            fn main() {
            entry:
                z = const 0
                a = call ptrace(z, z)
                b = call ptrace(z, z)
                c = call clock()
                ret c
            }
        ");
        let h = &set.paths[0].history;
        assert_eq!(h.len(), 3);
        assert_eq!(
            h.iter().map(|r| r.seq).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(h[0].ret.to_string(), "ptrace_0");
        assert_eq!(h[1].ret.to_string(), "ptrace_1");
        assert_eq!(h[2].ret.to_string(), "clock_0");
        assert!(h.iter().all(|r| r.external));
    }

    #[test]
    fn internal_callees_are_stubbed_not_inlined() {
        let set = run("
            fn main() {
            entry:
                z = const 0
                v = call helper(z)
                ret v
            }
            fn helper(x) {
            entry:
                mark never_executed
                ret x
            }
        ");
        assert_eq!(set.paths.len(), 1);
        let p = &set.paths[0];
        assert!(p.marks.is_empty());
        assert_eq!(p.history.len(), 1);
        assert!(!p.history[0].external);
        assert_eq!(p.history[0].kind, StubKind::Scalar);
        assert_eq!(p.history[0].ret.to_string(), "helper_0");
    }

    #[test]
    fn concrete_branches_do_not_fork_or_constrain() {
        let set = run("
            fn main() {
            entry:
                z = const 0
                o = const 1
                c = cmp eq z, o
                br c, a, b
            a:
                mark wrong
                halt
            b:
                r = const 0
                ret r
            }
        ");
        assert_eq!(set.paths.len(), 1);
        assert!(set.paths[0].constraints.is_empty());
        assert!(set.paths[0].marks.is_empty());
    }

    #[test]
    fn contradicted_arm_is_pruned_without_forking() {
        // After assuming t == 0, a branch on t != 0 has one feasible arm.
        let set = run("
            fn main() {
            entry:
                z = const 0
                t = call ptrace(z, z)
                c = cmp eq t, z
                br c, again, evade
            again:
                d = cmp ne t, z
                br d, wrong, ok
            wrong:
                mark impossible
                halt
            ok:
                r = const 0
                ret r
            evade:
                mark evade
                halt
            }
        ");
        assert_eq!(set.paths.len(), 2);
        assert!(set.paths.iter().all(|p| !p.marks.contains(&"impossible".to_string())));
    }

    #[test]
    fn memory_round_trips_words_and_literals() {
        let set = run(r#"
            fn main() {
            entry:
                s = cstr "HI"
                w = load s
                a = const 0x5000
                v = const 0x1122334455667788
                store a, v
                r = load a
                ret r
            }
        "#);
        let p = &set.paths[0];
        // "HI" is 0x48 0x49 then NUL padding, little-endian.
        assert_eq!(p.registers["w"].as_const(), Some(0x4948));
        assert_eq!(p.registers["r"].as_const(), Some(0x1122334455667788));
    }

    #[test]
    fn unmapped_memory_reads_zero() {
        let set = run("
            fn main() {
            entry:
                a = const 0x9000
                r = load a
                ret r
            }
        ");
        assert_eq!(set.paths[0].registers["r"].as_const(), Some(0));
    }

    #[test]
    fn symbolic_word_survives_a_store_load_cycle() {
        let set = run("
            fn main() {
            entry:
                z = const 0
                t = call ptrace(z, z)
                a = const 0x5000
                store a, t
                r = load a
                ret r
            }
        ");
        assert_eq!(set.paths[0].registers["r"].to_string(), "ptrace_0");
    }

    #[test]
    fn misaligned_symbolic_load_is_unsupported() {
        let set = run("
            fn main() {
            entry:
                z = const 0
                t = call ptrace(z, z)
                a = const 0x5000
                store a, t
                b = const 0x5001
                r = load b
                ret r
            }
        ");
        assert_eq!(set.paths.len(), 1);
        match &set.paths[0].status {
            PathStatus::Deadend { reason: DeadendReason::Unsupported(w), .. } => {
                assert!(w.contains("partially symbolic"), "{w}");
            }
            other => panic!("expected unsupported deadend, got {other:?}"),
        }
    }

    #[test]
    fn buffer_stub_allocates_regions_in_order() {
        let set = run("
            fn main() {
            entry:
                b = const 100
                z = const 0
                p = call getcwd(z, b)
                q = call getcwd(z, b)
                w = load p
                ret w
            }
        ");
        let p = &set.paths[0];
        assert_eq!(p.history[0].ret.as_const(), Some(BUFFER_REGION_BASE));
        assert_eq!(
            p.history[1].ret.as_const(),
            Some(BUFFER_REGION_BASE + BUFFER_REGION_SIZE)
        );
        assert_eq!(p.history[0].buffer_sym.as_deref(), Some("getcwd_0_buf"));
        assert_eq!(p.history[1].buffer_sym.as_deref(), Some("getcwd_1_buf"));
        assert_eq!(p.registers["w"].to_string(), "getcwd_0_buf");
    }

    #[test]
    fn comparator_records_arguments_and_needs_two() {
        let set = run(r#"
            fn main() {
            entry:
                n = const 100
                z = const 0
                p = call getcwd(z, n)
                s = cstr "BOMB"
                c = call strcmp(p, s)
                ret c
            }
        "#);
        let p = &set.paths[0];
        let cmp = &p.history[1];
        assert_eq!(cmp.kind, StubKind::Comparator);
        assert_eq!(cmp.ret.to_string(), "strcmp_0");
        assert_eq!(cmp.args.len(), 2);
        assert_eq!(cmp.args[0].as_const(), Some(BUFFER_REGION_BASE));

        let bad = run(r#"
            fn main() {
            entry:
                z = const 0
                c = call strcmp(z)
                ret c
            }
        "#);
        assert!(matches!(
            &bad.paths[0].status,
            PathStatus::Deadend { reason: DeadendReason::Unsupported(_), .. }
        ));
    }

    #[test]
    fn step_limit_stops_infinite_loops() {
        let p = Program::parse("
            fn main() {
            entry:
                z = const 0
                jmp entry
            }
        ")
        .unwrap();
        let opts = ExploreOptions {
            limits: ExploreLimits { max_states: 16, max_steps: 50 },
            ..Default::default()
        };
        let set = explore_with_options(&p, "main", &reg(), &opts).unwrap();
        assert_eq!(set.paths.len(), 1);
        assert!(matches!(
            set.paths[0].status,
            PathStatus::Deadend { reason: DeadendReason::StepLimit, .. }
        ));
    }

    #[test]
    fn return_domain_constrains_every_stub_return() {
        let p = Program::parse(ANTI_DEBUG).unwrap();
        let opts = ExploreOptions { return_domain: Some((-1, 1)), ..Default::default() };
        let set = explore_with_options(&p, "main", &reg(), &opts).unwrap();
        for path in &set.paths {
            assert!(
                path.constraints
                    .iter()
                    .any(|c| c.to_string() == "((ptrace_0 - -1) <=u 2)"),
                "missing domain constraint in {:?}",
                path.constraints.iter().map(|c| c.to_string()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn domain_of_width_one_makes_branches_concrete_enough_to_prune() {
        // Pinning every return to 0 leaves only the t == 0 arm feasible.
        let p = Program::parse(ANTI_DEBUG).unwrap();
        let opts = ExploreOptions { return_domain: Some((0, 0)), ..Default::default() };
        let set = explore_with_options(&p, "main", &reg(), &opts).unwrap();
        assert_eq!(set.paths.len(), 1);
        assert_eq!(set.paths[0].marks, vec!["payload"]);
    }

    #[test]
    fn exploration_is_deterministic_and_fingerprint_ordered() {
        let a = run(ANTI_DEBUG);
        let b = run(ANTI_DEBUG);
        let fa: Vec<String> = a.paths.iter().map(|p| p.fingerprint()).collect();
        let fb: Vec<String> = b.paths.iter().map(|p| p.fingerprint()).collect();
        assert_eq!(fa, fb);
        let mut sorted = fa.clone();
        sorted.sort();
        assert_eq!(fa, sorted);
    }

    #[test]
    fn state_cap_truncates_instead_of_diverging() {
        // Three independent symbolic branches give 8 full paths.
        let text = "
            fn main() {
            entry:
                z = const 0
                a = call ptrace(z, z)
                b = call ptrace(z, z)
                c = call ptrace(z, z)
                t1 = cmp eq a, z
                br t1, x1, x2
            x1:
                t2 = cmp eq b, z
                br t2, y1, y2
            x2:
                t2b = cmp eq b, z
                br t2b, y1, y2
            y1:
                t3 = cmp eq c, z
                br t3, z1, z2
            y2:
                t3b = cmp eq c, z
                br t3b, z1, z2
            z1:
                r = const 0
                ret r
            z2:
                r2 = const 1
                ret r2
            }
        ";
        let p = Program::parse(text).unwrap();
        let full = explore(&p, "main", &reg()).unwrap();
        assert_eq!(full.paths.len(), 8);
        assert!(!full.truncated);

        let opts = ExploreOptions {
            limits: ExploreLimits { max_states: 3, max_steps: 100_000 },
            ..Default::default()
        };
        let capped = explore_with_options(&p, "main", &reg(), &opts).unwrap();
        assert!(capped.truncated);
        assert!(capped.paths.len() <= 3);
    }

    #[test]
    fn refine_explores_internal_functions_only() {
        let p = Program::parse("
            fn main() {
            entry:
                z = const 0
                v = call helper(z)
                ret v
            }
            fn helper(x) {
            entry:
                t = call ptrace(x, x)
                c = cmp eq t, x
                br c, a, b
            a:
                r = const 1
                ret r
            b:
                r2 = const 2
                ret r2
            }
        ")
        .unwrap();
        let opts = ExploreOptions::default();
        let inner = refine(&p, "helper", &reg(), &opts).unwrap();
        assert_eq!(inner.paths.len(), 2);
        assert_eq!(
            refine(&p, "ptrace", &reg(), &opts).unwrap_err(),
            ExploreError::NotInternal("ptrace".to_string())
        );
    }

    #[test]
    fn evade_mark_terminates_the_path_without_becoming_a_mark() {
        let set = run(ANTI_DEBUG);
        let evaded = set
            .paths
            .iter()
            .find(|p| matches!(p.status, PathStatus::Evaded(_)))
            .unwrap();
        // The tag is the exit, mirroring the concrete interpreter's
        // bookkeeping, so the mark list stays empty.
        assert!(evaded.marks.is_empty());
        assert!(matches!(&evaded.status, PathStatus::Evaded(c) if c.block == "evade"));
    }

    #[test]
    fn unassigned_register_read_is_a_deadend_not_a_panic() {
        // The validator rejects this program; the engine must still be
        // graceful when run without validation.
        let set = run("fn main() { entry: ret ghost }");
        assert!(matches!(
            &set.paths[0].status,
            PathStatus::Deadend { reason: DeadendReason::Unsupported(w), .. } if w.contains("ghost")
        ));
    }
}
