//! MVIR, a small register-based IR for 64-bit code.
//!
//! A program is a list of named functions; each function is a list of
//! labelled basic blocks over an unbounded set of named registers. All
//! values are 64-bit two's complement. String literals live in a string
//! table and are materialised at fixed loader addresses, one disjoint
//! 4 KiB region per literal starting at [`STRING_REGION_BASE`].
//!
//! The text format is line-oriented but whitespace-insensitive; `;`
//! starts a comment. See [`parse::parse_program`] for the grammar and
//! [`validate::validate`] for the structural checks that make a program
//! safe to execute.

pub mod parse;
pub mod validate;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Base address of the first string-literal region.
pub const STRING_REGION_BASE: u64 = 0x1000_0000;
/// Size of each string-literal region. Literals never exceed it.
pub const STRING_REGION_SIZE: u64 = 0x1000;

/// Position of one instruction: function name, block label, index in block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub function: String,
    pub block: String,
    pub index: usize,
}

impl Coord {
    pub fn new(function: &str, block: &str, index: usize) -> Self {
        Coord { function: function.to_string(), block: block.to_string(), index }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.function, self.block, self.index)
    }
}

/// Id of a string literal; indexes [`Program::string_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrId(pub usize);

/// Two-operand integer operations. All wrap modulo 2^64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
}

impl AluOp {
    pub const ALL: [AluOp; 6] = [AluOp::Add, AluOp::Sub, AluOp::Mul, AluOp::And, AluOp::Or, AluOp::Xor];

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::Mul => "mul",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            AluOp::Add => "+",
            AluOp::Sub => "-",
            AluOp::Mul => "*",
            AluOp::And => "&",
            AluOp::Or => "|",
            AluOp::Xor => "^",
        }
    }
}

/// Comparison conditions. `s` prefix is signed, `u` unsigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Slt,
    Sle,
    Ult,
    Ule,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Slt, CmpOp::Sle, CmpOp::Ult, CmpOp::Ule];

    pub fn mnemonic(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::Slt => "slt",
            CmpOp::Sle => "sle",
            CmpOp::Ult => "ult",
            CmpOp::Ule => "ule",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Slt => "<s",
            CmpOp::Sle => "<=s",
            CmpOp::Ult => "<u",
            CmpOp::Ule => "<=u",
        }
    }

    /// Logical negation, expressed in the same condition set.
    /// The bool says whether the operands must be swapped.
    pub fn negated(self) -> (CmpOp, bool) {
        match self {
            CmpOp::Eq => (CmpOp::Ne, false),
            CmpOp::Ne => (CmpOp::Eq, false),
            // !(a < b)  ==  b <= a
            CmpOp::Slt => (CmpOp::Sle, true),
            // !(a <= b) ==  b < a
            CmpOp::Sle => (CmpOp::Slt, true),
            CmpOp::Ult => (CmpOp::Ule, true),
            CmpOp::Ule => (CmpOp::Ult, true),
        }
    }
}

/// One MVIR instruction. `Br`, `Jmp`, `Ret` and `Halt` are terminators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instruction {
    /// `dst = const imm`
    Const { dst: String, value: u64 },
    /// `dst = <op> lhs, rhs`
    Alu { dst: String, op: AluOp, lhs: String, rhs: String },
    /// `dst = cmp <cond> lhs, rhs` — yields 1 if the condition holds, else 0.
    Cmp { dst: String, op: CmpOp, lhs: String, rhs: String },
    /// `dst = call callee(args...)`
    Call { dst: String, callee: String, args: Vec<String> },
    /// `dst = load addr` — 64-bit little-endian read.
    Load { dst: String, addr: String },
    /// `store addr, value` — 64-bit little-endian write.
    Store { addr: String, value: String },
    /// `dst = cstr "..."` — address of the interned literal.
    CStr { dst: String, string: StrId },
    /// `br cond, then_label, else_label` — nonzero takes `then_label`.
    Br { cond: String, then_label: String, else_label: String },
    /// `jmp label`
    Jmp { label: String },
    /// `ret value`
    Ret { value: String },
    /// `halt` — stops execution without producing a return value.
    Halt,
    /// `mark tag` — behavioural marker. The tag `evade` terminates the
    /// executing engine; every other tag is recorded and execution continues.
    Mark { tag: String },
}

impl Instruction {
    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Instruction::Br { .. } | Instruction::Jmp { .. } | Instruction::Ret { .. } | Instruction::Halt
        )
    }

    /// Registers read by this instruction, in operand order.
    pub fn reads(&self) -> Vec<&str> {
        match self {
            Instruction::Const { .. } | Instruction::CStr { .. } | Instruction::Jmp { .. } => vec![],
            Instruction::Halt | Instruction::Mark { .. } => vec![],
            Instruction::Alu { lhs, rhs, .. } | Instruction::Cmp { lhs, rhs, .. } => vec![lhs, rhs],
            Instruction::Call { args, .. } => args.iter().map(|a| a.as_str()).collect(),
            Instruction::Load { addr, .. } => vec![addr],
            Instruction::Store { addr, value } => vec![addr, value],
            Instruction::Br { cond, .. } => vec![cond],
            Instruction::Ret { value } => vec![value],
        }
    }

    /// Register written by this instruction, if any.
    pub fn writes(&self) -> Option<&str> {
        match self {
            Instruction::Const { dst, .. }
            | Instruction::Alu { dst, .. }
            | Instruction::Cmp { dst, .. }
            | Instruction::Call { dst, .. }
            | Instruction::Load { dst, .. }
            | Instruction::CStr { dst, .. } => Some(dst),
            _ => None,
        }
    }
}

/// Labelled basic block. A well-formed block ends in exactly one terminator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub instrs: Vec<Instruction>,
}

/// Named function with ordered parameters (registers assigned by the caller).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }
}

/// A parsed MVIR program plus its string table, in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub functions: Vec<Function>,
    pub string_table: Vec<Vec<u8>>,
}

impl Program {
    pub fn parse(text: &str) -> Result<Program, parse::ParseError> {
        parse::parse_program(text)
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn is_internal(&self, name: &str) -> bool {
        self.function(name).is_some()
    }

    /// Loader address of a string literal's region.
    pub fn string_addr(&self, id: StrId) -> u64 {
        STRING_REGION_BASE + id.0 as u64 * STRING_REGION_SIZE
    }

    /// Literal id for an address inside a string region, with the offset
    /// into the literal's bytes. Addresses beyond the table yield None.
    pub fn string_at(&self, addr: u64) -> Option<(StrId, usize)> {
        if addr < STRING_REGION_BASE {
            return None;
        }
        let idx = ((addr - STRING_REGION_BASE) / STRING_REGION_SIZE) as usize;
        if idx >= self.string_table.len() {
            return None;
        }
        let off = (addr - STRING_REGION_BASE) % STRING_REGION_SIZE;
        Some((StrId(idx), off as usize))
    }

    /// Canonical text form; reparsing yields a structurally equal program.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

/// Render an immediate the way the canonical printer does: small values in
/// signed decimal, everything else in hex.
pub fn fmt_imm(v: u64) -> String {
    let s = v as i64;
    if (-65535..=65535).contains(&s) {
        s.to_string()
    } else {
        format!("0x{v:x}")
    }
}

/// Quote literal bytes using the escapes the parser understands.
pub fn quote_bytes(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() + 2);
    out.push('"');
    for &b in bytes {
        match b {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            b'\n' => out.push_str("\\n"),
            b'\t' => out.push_str("\\t"),
            0 => out.push_str("\\0"),
            0x20..=0x7e => out.push(b as char),
            _ => out.push_str(&format!("\\x{b:02x}")),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, func) in self.functions.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "fn {}(", func.name)?;
            for (j, p) in func.params.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{p}")?;
            }
            writeln!(f, ") {{")?;
            for block in &func.blocks {
                writeln!(f, "{}:", block.label)?;
                for instr in &block.instrs {
                    writeln!(f, "    {}", DisplayInstr { instr, program: self })?;
                }
            }
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}

struct DisplayInstr<'a> {
    instr: &'a Instruction,
    program: &'a Program,
}

impl fmt::Display for DisplayInstr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.instr {
            Instruction::Const { dst, value } => write!(f, "{dst} = const {}", fmt_imm(*value)),
            Instruction::Alu { dst, op, lhs, rhs } => {
                write!(f, "{dst} = {} {lhs}, {rhs}", op.mnemonic())
            }
            Instruction::Cmp { dst, op, lhs, rhs } => {
                write!(f, "{dst} = cmp {} {lhs}, {rhs}", op.mnemonic())
            }
            Instruction::Call { dst, callee, args } => {
                write!(f, "{dst} = call {callee}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Instruction::Load { dst, addr } => write!(f, "{dst} = load {addr}"),
            Instruction::Store { addr, value } => write!(f, "store {addr}, {value}"),
            Instruction::CStr { dst, string } => {
                let bytes = self
                    .program
                    .string_table
                    .get(string.0)
                    .map(|b| b.as_slice())
                    .unwrap_or(&[]);
                write!(f, "{dst} = cstr {}", quote_bytes(bytes))
            }
            Instruction::Br { cond, then_label, else_label } => {
                write!(f, "br {cond}, {then_label}, {else_label}")
            }
            Instruction::Jmp { label } => write!(f, "jmp {label}"),
            Instruction::Ret { value } => write!(f, "ret {value}"),
            Instruction::Halt => write!(f, "halt"),
            Instruction::Mark { tag } => write!(f, "mark {tag}"),
        }
    }
}

/// Intern a literal, reusing an existing id for identical bytes.
pub(crate) fn intern_string(
    table: &mut Vec<Vec<u8>>,
    seen: &mut HashMap<Vec<u8>, StrId>,
    bytes: Vec<u8>,
) -> StrId {
    if let Some(&id) = seen.get(&bytes) {
        return id;
    }
    let id = StrId(table.len());
    seen.insert(bytes.clone(), id);
    table.push(bytes);
    id
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imm_formatting_picks_readable_forms() {
        assert_eq!(fmt_imm(0), "0");
        assert_eq!(fmt_imm(11), "11");
        assert_eq!(fmt_imm(u64::MAX), "-1");
        assert_eq!(fmt_imm(0x1000_0000), "0x10000000");
        assert_eq!(fmt_imm((-70000i64) as u64), "0xfffffffffffeee90");
    }

    #[test]
    fn byte_quoting_round_trips_escapes() {
        assert_eq!(quote_bytes(b"BOMB"), "\"BOMB\"");
        assert_eq!(quote_bytes(b"a\"b\\c"), "\"a\\\"b\\\\c\"");
        assert_eq!(quote_bytes(&[0x01, 0x0a, 0x00]), "\"\\x01\\n\\0\"");
    }

    #[test]
    fn negation_table_is_an_involution_on_truth() {
        // Spot-check the operand-swap form on concrete values.
        let cases: [(u64, u64); 5] = [(1, 2), (2, 1), (3, 3), (u64::MAX, 0), (0, u64::MAX)];
        for op in CmpOp::ALL {
            let (neg, swap) = op.negated();
            for (a, b) in cases {
                let direct = cmp_holds(op, a, b);
                let (x, y) = if swap { (b, a) } else { (a, b) };
                assert_eq!(direct, !cmp_holds(neg, x, y), "{op:?} on {a},{b}");
            }
        }
    }

    fn cmp_holds(op: CmpOp, a: u64, b: u64) -> bool {
        match op {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Slt => (a as i64) < (b as i64),
            CmpOp::Sle => (a as i64) <= (b as i64),
            CmpOp::Ult => a < b,
            CmpOp::Ule => a <= b,
        }
    }
}
