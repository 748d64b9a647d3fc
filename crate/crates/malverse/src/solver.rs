//! Path-constraint solving over 64-bit bitvector expressions.
//!
//! The solver is deliberately small: it handles the constraint shapes the
//! symbolic engine actually produces (comparisons between affine
//! combinations of stub symbols and constants) exactly, and degrades to a
//! candidate-pool search for everything else.
//!
//! Strategy:
//!
//! 1. Each constraint becomes an atom `lhs op rhs` that must hold.
//! 2. Atoms mentioning a single symbol are inverted into exact interval
//!    sets for that symbol (wrapping affine inversion, with signed
//!    comparisons biased into unsigned ones).
//! 3. A backtracking search assigns symbols in name order, propagating
//!    interval domains after each assignment. Finite domains are
//!    enumerated exhaustively in minimal-magnitude order, so the reported
//!    model favours small values like 0 and 1; infinite domains fall back
//!    to a pool of structurally interesting values plus seeded random
//!    draws.
//!
//! `Unsat` is only reported when the search provably covered the full
//! space: every explored node enumerated its complete domain. A search
//! that exhausted a heuristic pool, or ran out of node budget, reports
//! `Unknown` instead. Every `Sat` model is re-verified against the
//! original constraints before it is returned.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::ir::{CmpOp, Program, STRING_REGION_BASE, STRING_REGION_SIZE};
use crate::symexec::expr::{apply_alu, apply_cmp, Constraint, ExprRef, SymExpr};
use crate::symexec::{InvocationRecord, PathState, BUFFER_REGION_SIZE};
use crate::stubs::StubKind;

/// Seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 0x6d61_6c76_6572_7365;

/// Backtracking node budget before giving up with `Unknown`.
const NODE_BUDGET: usize = 10_000;

/// Domains at most this large are enumerated exhaustively.
const EXHAUSTIVE_CAP: u128 = 1024;

/// Random candidate draws per symbol for non-finite domains.
const RANDOM_DRAWS: usize = 64;

/// A comparator invocation whose result the model fixed, together with
/// the buffer symbol realised to produce that result (when one of the
/// compared operands lives in a stubbed buffer region).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparatorPin {
    pub seq: usize,
    pub callee: String,
    pub ret: u64,
    pub buffer: Option<String>,
}

/// A satisfying assignment, plus the concrete buffer contents derived
/// from pinned comparator results.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Model {
    pub assignment: BTreeMap<String, u64>,
    pub buffers: BTreeMap<String, Vec<u8>>,
    pub pins: Vec<ComparatorPin>,
}

impl Model {
    /// Canonical text form: one line per binding, buffers hex-encoded,
    /// pins in invocation order. Stable across runs for equal models.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.assignment {
            out.push_str(&format!("sym {name} = {value:#x}\n"));
        }
        for (name, bytes) in &self.buffers {
            out.push_str(&format!("buf {name} = {}\n", hex::encode(bytes)));
        }
        for pin in &self.pins {
            match &pin.buffer {
                Some(sym) => out.push_str(&format!(
                    "pin {} {} = {:#x} via {sym}\n",
                    pin.seq, pin.callee, pin.ret
                )),
                None => {
                    out.push_str(&format!("pin {} {} = {:#x}\n", pin.seq, pin.callee, pin.ret))
                }
            }
        }
        out
    }

    /// Hex SHA-256 of the canonical text form; used for patch provenance.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_text().as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    Sat(Model),
    Unsat,
    Unknown(String),
}

impl SolveOutcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveOutcome::Sat(_))
    }
}

/// Evaluate an expression under an assignment. `None` if a symbol is
/// unbound.
pub fn eval(e: &SymExpr, a: &BTreeMap<String, u64>) -> Option<u64> {
    match e {
        SymExpr::Const(v) => Some(*v),
        SymExpr::Sym { name, .. } => a.get(name).copied(),
        SymExpr::Alu { op, lhs, rhs } => Some(apply_alu(*op, eval(lhs, a)?, eval(rhs, a)?)),
        SymExpr::Cmp { op, lhs, rhs } => {
            Some(apply_cmp(*op, eval(lhs, a)?, eval(rhs, a)?) as u64)
        }
        SymExpr::Ite { cond, then_v, else_v } => {
            if eval(cond, a)? != 0 {
                eval(then_v, a)
            } else {
                eval(else_v, a)
            }
        }
    }
}

/// Evaluate with unbound symbols defaulting to a fixed value.
pub fn eval_with_default(e: &SymExpr, a: &BTreeMap<String, u64>, default: u64) -> u64 {
    match e {
        SymExpr::Const(v) => *v,
        SymExpr::Sym { name, .. } => a.get(name).copied().unwrap_or(default),
        SymExpr::Alu { op, lhs, rhs } => apply_alu(
            *op,
            eval_with_default(lhs, a, default),
            eval_with_default(rhs, a, default),
        ),
        SymExpr::Cmp { op, lhs, rhs } => apply_cmp(
            *op,
            eval_with_default(lhs, a, default),
            eval_with_default(rhs, a, default),
        ) as u64,
        SymExpr::Ite { cond, then_v, else_v } => {
            if eval_with_default(cond, a, default) != 0 {
                eval_with_default(then_v, a, default)
            } else {
                eval_with_default(else_v, a, default)
            }
        }
    }
}

// ---------------------------------------------------------------------
// Interval sets
// ---------------------------------------------------------------------

/// A set of `u64` values as sorted, disjoint, non-adjacent inclusive
/// ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    ranges: Vec<(u64, u64)>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { ranges: Vec::new() }
    }

    pub fn full() -> Self {
        IntervalSet { ranges: vec![(0, u64::MAX)] }
    }

    pub fn singleton(v: u64) -> Self {
        IntervalSet { ranges: vec![(v, v)] }
    }

    /// Inclusive `[lo, hi]`, `lo <= hi`.
    pub fn range(lo: u64, hi: u64) -> Self {
        debug_assert!(lo <= hi);
        IntervalSet { ranges: vec![(lo, hi)] }
    }

    /// Inclusive interval on the wrapping number circle: `lo > hi` splits
    /// into `[lo, MAX]` and `[0, hi]`.
    pub fn wrapped(lo: u64, hi: u64) -> Self {
        if lo <= hi {
            IntervalSet::range(lo, hi)
        } else {
            IntervalSet::normalize(vec![(lo, u64::MAX), (0, hi)])
        }
    }

    fn normalize(mut ranges: Vec<(u64, u64)>) -> Self {
        ranges.retain(|(lo, hi)| lo <= hi);
        ranges.sort_unstable();
        let mut out: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
        for (lo, hi) in ranges {
            match out.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        IntervalSet { ranges: out }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, v: u64) -> bool {
        self.ranges.iter().any(|&(lo, hi)| lo <= v && v <= hi)
    }

    pub fn count(&self) -> u128 {
        self.ranges.iter().map(|&(lo, hi)| (hi - lo) as u128 + 1).sum()
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let (a, b) = (&self.ranges, &other.ranges);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { ranges: out }
    }

    pub fn complement(&self) -> IntervalSet {
        let mut out = Vec::new();
        let mut next = 0u64;
        for &(lo, hi) in &self.ranges {
            if lo > next {
                out.push((next, lo - 1));
            }
            if hi == u64::MAX {
                return IntervalSet { ranges: out };
            }
            next = hi + 1;
        }
        out.push((next, u64::MAX));
        IntervalSet { ranges: out }
    }

    /// Image under `x -> x + delta` on the wrapping circle.
    pub fn shift(&self, delta: u64) -> IntervalSet {
        let mut ranges = Vec::new();
        for &(lo, hi) in &self.ranges {
            let set = IntervalSet::wrapped(lo.wrapping_add(delta), hi.wrapping_add(delta));
            ranges.extend(set.ranges);
        }
        IntervalSet::normalize(ranges)
    }

    /// Image under `x -> off - x` on the wrapping circle.
    pub fn reflect(&self, off: u64) -> IntervalSet {
        let mut ranges = Vec::new();
        for &(lo, hi) in &self.ranges {
            let set = IntervalSet::wrapped(off.wrapping_sub(hi), off.wrapping_sub(lo));
            ranges.extend(set.ranges);
        }
        IntervalSet::normalize(ranges)
    }

    pub fn endpoints(&self) -> impl Iterator<Item = u64> + '_ {
        self.ranges.iter().flat_map(|&(lo, hi)| [lo, hi])
    }

    /// All members, in minimal-magnitude order. Only call on small sets.
    pub fn values_by_magnitude(&self) -> Vec<u64> {
        let mut vs: Vec<u64> = self
            .ranges
            .iter()
            .flat_map(|&(lo, hi)| (lo..=hi).collect::<Vec<u64>>())
            .collect();
        vs.sort_unstable_by_key(|&v| magnitude_key(v));
        vs
    }
}

/// Ordering key preferring values close to zero, non-negative first on
/// ties: 0, 1, -1, 2, -2, ...
fn magnitude_key(v: u64) -> (u64, u8) {
    let s = v as i64;
    (s.unsigned_abs(), (s < 0) as u8)
}

// ---------------------------------------------------------------------
// Atoms and affine inversion
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Atom {
    op: CmpOp,
    lhs: ExprRef,
    rhs: ExprRef,
    syms: BTreeSet<String>,
}

impl Atom {
    fn from_constraint(c: &Constraint) -> Atom {
        match c.expr.as_ref() {
            SymExpr::Cmp { op, lhs, rhs } => {
                let mut syms = BTreeSet::new();
                lhs.collect_syms(&mut syms);
                rhs.collect_syms(&mut syms);
                Atom { op: *op, lhs: lhs.clone(), rhs: rhs.clone(), syms }
            }
            _ => {
                let syms = c.expr.syms();
                Atom { op: CmpOp::Ne, lhs: c.expr.clone(), rhs: SymExpr::constant(0), syms }
            }
        }
    }

    fn holds(&self, a: &BTreeMap<String, u64>) -> Option<bool> {
        Some(apply_cmp(self.op, eval(&self.lhs, a)?, eval(&self.rhs, a)?))
    }
}

/// `coeff * s + off`, all arithmetic wrapping mod 2^64.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Affine {
    coeff: u64,
    off: u64,
}

/// Rewrite an expression as an affine function of `sym`, folding symbols
/// bound in `known` into constants.
fn affine_of(e: &SymExpr, sym: &str, known: &BTreeMap<String, u64>) -> Option<Affine> {
    match e {
        SymExpr::Const(v) => Some(Affine { coeff: 0, off: *v }),
        SymExpr::Sym { name, .. } => {
            if name == sym {
                Some(Affine { coeff: 1, off: 0 })
            } else {
                known.get(name).map(|&v| Affine { coeff: 0, off: v })
            }
        }
        SymExpr::Alu { op, lhs, rhs } => {
            let a = affine_of(lhs, sym, known)?;
            let b = affine_of(rhs, sym, known)?;
            match op {
                crate::ir::AluOp::Add => Some(Affine {
                    coeff: a.coeff.wrapping_add(b.coeff),
                    off: a.off.wrapping_add(b.off),
                }),
                crate::ir::AluOp::Sub => Some(Affine {
                    coeff: a.coeff.wrapping_sub(b.coeff),
                    off: a.off.wrapping_sub(b.off),
                }),
                crate::ir::AluOp::Mul => {
                    if a.coeff == 0 {
                        Some(Affine {
                            coeff: a.off.wrapping_mul(b.coeff),
                            off: a.off.wrapping_mul(b.off),
                        })
                    } else if b.coeff == 0 {
                        Some(Affine {
                            coeff: a.coeff.wrapping_mul(b.off),
                            off: a.off.wrapping_mul(b.off),
                        })
                    } else {
                        None
                    }
                }
                crate::ir::AluOp::And | crate::ir::AluOp::Or | crate::ir::AluOp::Xor => {
                    if a.coeff == 0 && b.coeff == 0 {
                        Some(Affine { coeff: 0, off: apply_alu(*op, a.off, b.off) })
                    } else {
                        None
                    }
                }
            }
        }
        SymExpr::Cmp { op, lhs, rhs } => {
            let a = affine_of(lhs, sym, known)?;
            let b = affine_of(rhs, sym, known)?;
            if a.coeff == 0 && b.coeff == 0 {
                Some(Affine { coeff: 0, off: apply_cmp(*op, a.off, b.off) as u64 })
            } else {
                None
            }
        }
        SymExpr::Ite { cond, then_v, else_v } => {
            let c = affine_of(cond, sym, known)?;
            if c.coeff != 0 {
                return None;
            }
            if c.off != 0 {
                affine_of(then_v, sym, known)
            } else {
                affine_of(else_v, sym, known)
            }
        }
    }
}

/// Multiplicative inverse of an odd `u64` (Newton iteration).
fn inv_odd(c: u64) -> u64 {
    debug_assert!(c & 1 == 1);
    let mut x = c;
    for _ in 0..6 {
        x = x.wrapping_mul(2u64.wrapping_sub(c.wrapping_mul(x)));
    }
    x
}

const SIGN_BIAS: u64 = 1 << 63;

/// Exact solution set for `sym` in a must-hold atom, treating symbols in
/// `known` as constants. `None` when the shape is outside the invertible
/// fragment; callers must then fall back to search.
fn atom_domain(atom: &Atom, sym: &str, known: &BTreeMap<String, u64>) -> Option<IntervalSet> {
    let mut la = affine_of(&atom.lhs, sym, known)?;
    let mut ra = affine_of(&atom.rhs, sym, known)?;
    let mut op = atom.op;

    match op {
        CmpOp::Eq | CmpOp::Ne => {
            let c = la.coeff.wrapping_sub(ra.coeff);
            let d = la.off.wrapping_sub(ra.off);
            // c*s + d == 0 (or != 0)
            if c == 0 {
                let holds_eq = d == 0;
                let truth = if op == CmpOp::Eq { holds_eq } else { !holds_eq };
                return Some(if truth { IntervalSet::full() } else { IntervalSet::empty() });
            }
            if c & 1 == 1 {
                let s0 = inv_odd(c).wrapping_mul(d.wrapping_neg());
                return Some(match op {
                    CmpOp::Eq => IntervalSet::singleton(s0),
                    _ => IntervalSet::singleton(s0).complement(),
                });
            }
            // Even non-zero coefficient: solutions form a stride pattern,
            // not an interval. Leave it to the search.
            return None;
        }
        CmpOp::Slt => {
            la.off = la.off.wrapping_add(SIGN_BIAS);
            ra.off = ra.off.wrapping_add(SIGN_BIAS);
            op = CmpOp::Ult;
        }
        CmpOp::Sle => {
            la.off = la.off.wrapping_add(SIGN_BIAS);
            ra.off = ra.off.wrapping_add(SIGN_BIAS);
            op = CmpOp::Ule;
        }
        CmpOp::Ult | CmpOp::Ule => {}
    }

    // Unsigned ordered comparison with the symbol on exactly one side.
    let (aff, k, sym_on_left) = if ra.coeff == 0 {
        (la, ra.off, true)
    } else if la.coeff == 0 {
        (ra, la.off, false)
    } else {
        return None;
    };

    if aff.coeff == 0 {
        let truth = if sym_on_left {
            apply_cmp(op, aff.off, k)
        } else {
            apply_cmp(op, k, aff.off)
        };
        return Some(if truth { IntervalSet::full() } else { IntervalSet::empty() });
    }

    // Target interval for x = coeff*s + off.
    let base = match (op, sym_on_left) {
        (CmpOp::Ult, true) => {
            if k == 0 {
                IntervalSet::empty()
            } else {
                IntervalSet::range(0, k - 1)
            }
        }
        (CmpOp::Ule, true) => IntervalSet::range(0, k),
        (CmpOp::Ult, false) => {
            if k == u64::MAX {
                IntervalSet::empty()
            } else {
                IntervalSet::range(k + 1, u64::MAX)
            }
        }
        (CmpOp::Ule, false) => IntervalSet::range(k, u64::MAX),
        _ => unreachable!("equality and signed forms were rewritten above"),
    };

    if aff.coeff == 1 {
        // x = s + off  =>  s = x - off
        Some(base.shift(aff.off.wrapping_neg()))
    } else if aff.coeff == u64::MAX {
        // x = off - s  =>  s = off - x
        Some(base.reflect(aff.off))
    } else {
        None
    }
}

// ---------------------------------------------------------------------
// Backtracking search
// ---------------------------------------------------------------------

enum Step {
    Found(BTreeMap<String, u64>),
    Exhausted,
    OutOfBudget,
}

struct Search {
    atoms: Vec<Atom>,
    order: Vec<String>,
    consts: BTreeSet<u64>,
    draws: BTreeMap<String, Vec<u64>>,
    budget: usize,
    lost_completeness: bool,
}

impl Search {
    fn propagate(
        &self,
        assignment: &BTreeMap<String, u64>,
        domains: &BTreeMap<String, IntervalSet>,
    ) -> Option<BTreeMap<String, IntervalSet>> {
        let mut out = domains.clone();
        for atom in &self.atoms {
            let unknown: Vec<&String> =
                atom.syms.iter().filter(|s| !assignment.contains_key(*s)).collect();
            match unknown.len() {
                0 => {
                    if !atom.holds(assignment).expect("all symbols bound") {
                        return None;
                    }
                }
                1 => {
                    let u = unknown[0];
                    if let Some(d) = atom_domain(atom, u, assignment) {
                        let nd = out.get(u).expect("domain tracked").intersect(&d);
                        if nd.is_empty() {
                            return None;
                        }
                        out.insert(u.clone(), nd);
                    }
                }
                _ => {}
            }
        }
        Some(out)
    }

    fn candidates(&self, sym: &str, dom: &IntervalSet) -> (Vec<u64>, bool) {
        if dom.count() <= EXHAUSTIVE_CAP {
            return (dom.values_by_magnitude(), true);
        }
        let mut set: BTreeSet<u64> = BTreeSet::new();
        for v in [0u64, 1, u64::MAX] {
            set.insert(v);
        }
        set.extend(self.consts.iter().copied());
        set.extend(dom.endpoints());
        if let Some(draws) = self.draws.get(sym) {
            set.extend(draws.iter().copied());
        }
        let mut vs: Vec<u64> = set.into_iter().filter(|&v| dom.contains(v)).collect();
        vs.sort_unstable_by_key(|&v| magnitude_key(v));
        (vs, false)
    }

    fn dfs(
        &mut self,
        idx: usize,
        assignment: &mut BTreeMap<String, u64>,
        domains: &BTreeMap<String, IntervalSet>,
    ) -> Step {
        if idx == self.order.len() {
            let complete = self
                .atoms
                .iter()
                .all(|a| a.holds(assignment).expect("all symbols bound"));
            return if complete { Step::Found(assignment.clone()) } else { Step::Exhausted };
        }
        let sym = self.order[idx].clone();
        let dom = domains.get(&sym).expect("domain tracked");
        let (cands, exhaustive) = self.candidates(&sym, dom);
        if !exhaustive {
            self.lost_completeness = true;
        }
        for v in cands {
            if self.budget == 0 {
                return Step::OutOfBudget;
            }
            self.budget -= 1;
            assignment.insert(sym.clone(), v);
            if let Some(narrowed) = self.propagate(assignment, domains) {
                match self.dfs(idx + 1, assignment, &narrowed) {
                    Step::Found(m) => return Step::Found(m),
                    Step::OutOfBudget => return Step::OutOfBudget,
                    Step::Exhausted => {}
                }
            }
            assignment.remove(&sym);
        }
        Step::Exhausted
    }
}

/// Solve with the default seed.
pub fn solve(constraints: &[Constraint]) -> SolveOutcome {
    solve_seeded(constraints, DEFAULT_SEED)
}

/// Find an assignment satisfying every constraint.
pub fn solve_seeded(constraints: &[Constraint], seed: u64) -> SolveOutcome {
    let atoms: Vec<Atom> = constraints.iter().map(Atom::from_constraint).collect();

    let mut syms: BTreeSet<String> = BTreeSet::new();
    for a in &atoms {
        // A symbol-free atom is a constant; its truth is decided now.
        if a.syms.is_empty() {
            match a.holds(&BTreeMap::new()) {
                Some(true) => {}
                _ => return SolveOutcome::Unsat,
            }
        }
        syms.extend(a.syms.iter().cloned());
    }

    let mut consts = BTreeSet::new();
    for c in constraints {
        collect_consts(&c.expr, &mut consts);
    }
    let consts: BTreeSet<u64> = consts
        .into_iter()
        .flat_map(|v| [v.wrapping_sub(1), v, v.wrapping_add(1)])
        .collect();

    let order: Vec<String> = syms.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = BTreeMap::new();
    for s in &order {
        let vs: Vec<u64> = (0..RANDOM_DRAWS).map(|_| rng.gen::<u64>()).collect();
        draws.insert(s.clone(), vs);
    }

    // Seed domains from single-symbol atoms before searching.
    let mut domains: BTreeMap<String, IntervalSet> =
        order.iter().map(|s| (s.clone(), IntervalSet::full())).collect();
    let empty_assignment = BTreeMap::new();
    for atom in &atoms {
        if atom.syms.len() == 1 {
            let s = atom.syms.iter().next().expect("one symbol");
            if let Some(d) = atom_domain(atom, s, &empty_assignment) {
                let nd = domains.get(s).expect("domain tracked").intersect(&d);
                if nd.is_empty() {
                    return SolveOutcome::Unsat;
                }
                domains.insert(s.clone(), nd);
            }
        }
    }

    let mut search = Search {
        atoms,
        order,
        consts,
        draws,
        budget: NODE_BUDGET,
        lost_completeness: false,
    };
    let mut assignment = BTreeMap::new();
    match search.dfs(0, &mut assignment, &domains) {
        Step::Found(assignment) => {
            // Belt and braces: the model must satisfy the original list.
            let verified = constraints
                .iter()
                .all(|c| matches!(eval(&c.expr, &assignment), Some(v) if v != 0));
            if !verified {
                return SolveOutcome::Unknown(
                    "internal: candidate model failed re-verification".to_string(),
                );
            }
            SolveOutcome::Sat(Model { assignment, buffers: BTreeMap::new(), pins: Vec::new() })
        }
        Step::OutOfBudget => SolveOutcome::Unknown("node budget exhausted".to_string()),
        Step::Exhausted => {
            if search.lost_completeness {
                SolveOutcome::Unknown(
                    "candidate pool exhausted without covering the space".to_string(),
                )
            } else {
                SolveOutcome::Unsat
            }
        }
    }
}

fn collect_consts(e: &SymExpr, out: &mut BTreeSet<u64>) {
    match e {
        SymExpr::Const(v) => {
            out.insert(*v);
        }
        SymExpr::Sym { .. } => {}
        SymExpr::Alu { lhs, rhs, .. } | SymExpr::Cmp { lhs, rhs, .. } => {
            collect_consts(lhs, out);
            collect_consts(rhs, out);
        }
        SymExpr::Ite { cond, then_v, else_v } => {
            collect_consts(cond, out);
            collect_consts(then_v, out);
            collect_consts(else_v, out);
        }
    }
}

// ---------------------------------------------------------------------
// History concretization
// ---------------------------------------------------------------------

/// One stub invocation with its return value (and buffer contents, for
/// buffer-writing stubs) made concrete under a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcretizedCall {
    pub seq: usize,
    pub callee: String,
    pub external: bool,
    pub ret: u64,
    pub buffer: Option<Vec<u8>>,
}

/// Concretize every invocation in a path history. Symbols the model left
/// unconstrained default to 0.
pub fn concretize_history(history: &[InvocationRecord], model: &Model) -> Vec<ConcretizedCall> {
    history
        .iter()
        .map(|rec| ConcretizedCall {
            seq: rec.seq,
            callee: rec.callee.clone(),
            external: rec.external,
            ret: eval_with_default(&rec.ret, &model.assignment, 0),
            buffer: rec
                .buffer_sym
                .as_ref()
                .and_then(|s| model.buffers.get(s).cloned()),
        })
        .collect()
}

/// Derive concrete buffer contents from pinned comparator results.
///
/// When the model fixes a comparator's return and the call compared a
/// stubbed buffer region against a program string literal, the buffer's
/// contents follow: the literal bytes for a pinned 0 (equal), or a
/// deliberately mismatching fill otherwise. Pins are recorded on the
/// model either way so patch synthesis can tell realised comparators
/// from ones that still need a scheduled return.
pub fn bind_comparator_buffers(
    model: &mut Model,
    history: &[InvocationRecord],
    program: &Program,
) {
    let regions: Vec<(u64, String)> = history
        .iter()
        .filter(|r| r.kind == StubKind::BufferPointer)
        .filter_map(|r| {
            let base = r.ret.as_const()?;
            Some((base, r.buffer_sym.clone()?))
        })
        .collect();

    let find_buffer = |v: u64| -> Option<&String> {
        regions
            .iter()
            .find(|(base, _)| *base <= v && v < base + BUFFER_REGION_SIZE)
            .map(|(_, sym)| sym)
    };

    let find_literal = |v: u64| -> Option<&[u8]> {
        if v < STRING_REGION_BASE {
            return None;
        }
        let idx = ((v - STRING_REGION_BASE) / STRING_REGION_SIZE) as usize;
        let off = ((v - STRING_REGION_BASE) % STRING_REGION_SIZE) as usize;
        let bytes = program.string_table.get(idx)?;
        if off > bytes.len() {
            return None;
        }
        Some(&bytes[off..])
    };

    for rec in history.iter().filter(|r| r.kind == StubKind::Comparator) {
        let ret_sym = match rec.ret.as_ref() {
            SymExpr::Sym { name, .. } => name.clone(),
            _ => continue,
        };
        let pinned = match model.assignment.get(&ret_sym) {
            Some(&v) => v,
            None => continue,
        };

        let args: Vec<u64> = rec
            .args
            .iter()
            .map(|a| eval_with_default(a, &model.assignment, 0))
            .collect();
        let buffer_arg = args.iter().find_map(|&v| find_buffer(v));
        let literal_arg = args.iter().find_map(|&v| find_literal(v));

        let buffer = match (buffer_arg, literal_arg) {
            (Some(sym), Some(literal)) => {
                let bytes = if pinned == 0 {
                    literal.to_vec()
                } else {
                    mismatching_fill(literal)
                };
                model.buffers.insert(sym.clone(), bytes);
                Some(sym.clone())
            }
            _ => None,
        };

        model.pins.push(ComparatorPin {
            seq: rec.seq,
            callee: rec.callee.clone(),
            ret: pinned,
            buffer,
        });
    }
}

/// Bytes guaranteed to differ from `literal` at the first position.
fn mismatching_fill(literal: &[u8]) -> Vec<u8> {
    let len = literal.len().max(1);
    let fill = if literal.first() == Some(&0x41) { 0x42 } else { 0x41 };
    vec![fill; len]
}

/// Solve a path's constraints and derive comparator buffer contents.
pub fn model_for_path(path: &PathState, program: &Program, seed: u64) -> SolveOutcome {
    match solve_seeded(&path.constraints, seed) {
        SolveOutcome::Sat(mut model) => {
            bind_comparator_buffers(&mut model, &path.history, program);
            SolveOutcome::Sat(model)
        }
        other => other,
    }
}
