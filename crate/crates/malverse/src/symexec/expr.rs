//! Symbolic expressions over 64-bit machine words.
//!
//! Expressions are immutable trees shared through `Rc`, built by folding
//! constructors: an operation on two constants never allocates a node.
//! Every value is a `u64`; signed comparisons reinterpret the bits as
//! two's-complement `i64`, matching the interpreter exactly.

use std::collections::BTreeSet;
use std::fmt;
use std::rc::Rc;

use crate::ir::{fmt_imm, AluOp, CmpOp};

pub type ExprRef = Rc<SymExpr>;

/// Where a symbol entered the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Origin {
    /// Parameter of the function exploration started from.
    Initial,
    /// Produced by the stub for invocation `seq` in the path history.
    Invocation(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymExpr {
    Const(u64),
    Sym { name: String, origin: Origin },
    Alu { op: AluOp, lhs: ExprRef, rhs: ExprRef },
    /// Comparison result: 1 if the relation holds, else 0.
    Cmp { op: CmpOp, lhs: ExprRef, rhs: ExprRef },
    /// `cond != 0 ? then_v : else_v`.
    Ite { cond: ExprRef, then_v: ExprRef, else_v: ExprRef },
}

impl SymExpr {
    pub fn constant(v: u64) -> ExprRef {
        Rc::new(SymExpr::Const(v))
    }

    pub fn sym(name: impl Into<String>, origin: Origin) -> ExprRef {
        Rc::new(SymExpr::Sym { name: name.into(), origin })
    }

    pub fn alu(op: AluOp, lhs: ExprRef, rhs: ExprRef) -> ExprRef {
        if let (SymExpr::Const(a), SymExpr::Const(b)) = (lhs.as_ref(), rhs.as_ref()) {
            return SymExpr::constant(apply_alu(op, *a, *b));
        }
        Rc::new(SymExpr::Alu { op, lhs, rhs })
    }

    pub fn cmp(op: CmpOp, lhs: ExprRef, rhs: ExprRef) -> ExprRef {
        if let (SymExpr::Const(a), SymExpr::Const(b)) = (lhs.as_ref(), rhs.as_ref()) {
            return SymExpr::constant(apply_cmp(op, *a, *b) as u64);
        }
        Rc::new(SymExpr::Cmp { op, lhs, rhs })
    }

    pub fn ite(cond: ExprRef, then_v: ExprRef, else_v: ExprRef) -> ExprRef {
        if let SymExpr::Const(c) = cond.as_ref() {
            return if *c != 0 { then_v } else { else_v };
        }
        Rc::new(SymExpr::Ite { cond, then_v, else_v })
    }

    pub fn as_const(&self) -> Option<u64> {
        match self {
            SymExpr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, SymExpr::Const(_))
    }

    /// Collect every symbol name reachable from this expression.
    pub fn collect_syms(&self, out: &mut BTreeSet<String>) {
        match self {
            SymExpr::Const(_) => {}
            SymExpr::Sym { name, .. } => {
                out.insert(name.clone());
            }
            SymExpr::Alu { lhs, rhs, .. } | SymExpr::Cmp { lhs, rhs, .. } => {
                lhs.collect_syms(out);
                rhs.collect_syms(out);
            }
            SymExpr::Ite { cond, then_v, else_v } => {
                cond.collect_syms(out);
                then_v.collect_syms(out);
                else_v.collect_syms(out);
            }
        }
    }

    pub fn syms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_syms(&mut out);
        out
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Const(v) => write!(f, "{}", fmt_imm(*v)),
            SymExpr::Sym { name, .. } => write!(f, "{name}"),
            SymExpr::Alu { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            SymExpr::Cmp { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            SymExpr::Ite { cond, then_v, else_v } => {
                write!(f, "({cond} ? {then_v} : {else_v})")
            }
        }
    }
}

/// Exact wrapping semantics shared by the expression folder and the
/// constraint evaluator.
pub fn apply_alu(op: AluOp, a: u64, b: u64) -> u64 {
    match op {
        AluOp::Add => a.wrapping_add(b),
        AluOp::Sub => a.wrapping_sub(b),
        AluOp::Mul => a.wrapping_mul(b),
        AluOp::And => a & b,
        AluOp::Or => a | b,
        AluOp::Xor => a ^ b,
    }
}

pub fn apply_cmp(op: CmpOp, a: u64, b: u64) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Slt => (a as i64) < (b as i64),
        CmpOp::Sle => (a as i64) <= (b as i64),
        CmpOp::Ult => a < b,
        CmpOp::Ule => a <= b,
    }
}

/// Logical negation of a truth-valued expression.
///
/// Comparisons negate structurally (`!(a < b)` becomes `b <= a`), which
/// keeps branch conditions inside the solver's linear fragment instead
/// of wrapping them in an opaque `== 0` shell.
pub fn negate_expr(e: &ExprRef) -> ExprRef {
    match e.as_ref() {
        SymExpr::Const(v) => SymExpr::constant((*v == 0) as u64),
        SymExpr::Cmp { op, lhs, rhs } => {
            let (nop, swap) = op.negated();
            if swap {
                SymExpr::cmp(nop, rhs.clone(), lhs.clone())
            } else {
                SymExpr::cmp(nop, lhs.clone(), rhs.clone())
            }
        }
        _ => SymExpr::cmp(CmpOp::Eq, e.clone(), SymExpr::constant(0)),
    }
}

/// A recorded path condition: the wrapped expression must be nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub expr: ExprRef,
}

/// Result of folding a would-be constraint at creation time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Folded {
    /// Constant nonzero: always satisfied, record nothing.
    True,
    /// Constant zero: the path is infeasible.
    False,
    /// Genuinely symbolic.
    Constraint(Constraint),
}

impl Constraint {
    /// Fold a would-be constraint: constants decide the path on the
    /// spot, anything symbolic becomes a real constraint.
    pub fn fold(expr: ExprRef) -> Folded {
        match expr.as_const() {
            Some(0) => Folded::False,
            Some(_) => Folded::True,
            None => Folded::Constraint(Constraint { expr }),
        }
    }

    pub fn negated(&self) -> Folded {
        Constraint::fold(negate_expr(&self.expr))
    }

    pub fn syms(&self) -> BTreeSet<String> {
        self.expr.syms()
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}
