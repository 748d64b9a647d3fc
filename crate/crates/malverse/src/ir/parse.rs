//! Text-format parser.
//!
//! Grammar (whitespace- and newline-insensitive, `;` comments):
//!
//! ```text
//! program  := function+
//! function := "fn" NAME "(" [NAME ("," NAME)*] ")" "{" block+ "}"
//! block    := LABEL ":" instr*
//! instr    := REG "=" "const" IMM
//!           | REG "=" op REG "," REG            op in {add,sub,mul,and,or,xor}
//!           | REG "=" "cmp" cond REG "," REG    cond in {eq,ne,slt,sle,ult,ule}
//!           | REG "=" "call" NAME "(" [REG ("," REG)*] ")"
//!           | REG "=" "load" REG
//!           | "store" REG "," REG
//!           | REG "=" "cstr" STRING
//!           | "br" REG "," LABEL "," LABEL
//!           | "jmp" LABEL
//!           | "ret" REG
//!           | "halt"
//!           | "mark" TAG
//! ```
//!
//! Immediates are decimal or `0x` hex; a leading `-` encodes the value in
//! two's complement (`-1` is `0xffffffffffffffff`). Parsing resolves branch
//! targets; all other structural checks live in [`super::validate`].

use std::collections::HashMap;

use thiserror::Error;

use super::{intern_string, AluOp, Block, CmpOp, Function, Instruction, Program, StrId};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError { line, col, message: message.into() }
    }
}

const KEYWORDS: &[&str] = &[
    "fn", "const", "cmp", "call", "load", "store", "cstr", "br", "jmp", "ret", "halt", "mark",
    "add", "sub", "mul", "and", "or", "xor", "eq", "ne", "slt", "sle", "ult", "ule",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Imm(u64),
    Str(Vec<u8>),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Equals,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Imm(v) => format!("immediate {v}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
            Tok::LBrace => "`{`".to_string(),
            Tok::RBrace => "`}`".to_string(),
            Tok::Comma => "`,`".to_string(),
            Tok::Colon => "`:`".to_string(),
            Tok::Equals => "`=`".to_string(),
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { chars: text.chars().peekable(), line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut toks = Vec::new();
        loop {
            while let Some(&c) = self.chars.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == ';' {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let c = match self.chars.peek() {
                Some(&c) => c,
                None => return Ok(toks),
            };
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                '{' => {
                    self.bump();
                    Tok::LBrace
                }
                '}' => {
                    self.bump();
                    Tok::RBrace
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                ':' => {
                    self.bump();
                    Tok::Colon
                }
                '=' => {
                    self.bump();
                    Tok::Equals
                }
                '"' => {
                    self.bump();
                    Tok::Str(self.lex_string(line, col)?)
                }
                '-' => {
                    self.bump();
                    match self.chars.peek() {
                        Some(d) if d.is_ascii_digit() => {
                            let magnitude = self.lex_number(line, col)?;
                            Tok::Imm(magnitude.wrapping_neg())
                        }
                        _ => return Err(ParseError::new(line, col, "expected digits after `-`")),
                    }
                }
                d if d.is_ascii_digit() => Tok::Imm(self.lex_number(line, col)?),
                a if a.is_ascii_alphabetic() || a == '_' => {
                    let mut s = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            s.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(s)
                }
                other => {
                    return Err(ParseError::new(line, col, format!("unexpected character `{other}`")))
                }
            };
            toks.push((tok, line, col));
        }
    }

    fn lex_number(&mut self, line: usize, col: usize) -> Result<u64, ParseError> {
        let mut digits = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_alphanumeric() {
                digits.push(c);
                self.bump();
            } else {
                break;
            }
        }
        let parsed = if let Some(hex) = digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
            u64::from_str_radix(hex, 16)
        } else {
            digits.parse::<u64>()
        };
        parsed.map_err(|_| ParseError::new(line, col, format!("invalid immediate `{digits}`")))
    }

    fn lex_string(&mut self, line: usize, col: usize) -> Result<Vec<u8>, ParseError> {
        let mut bytes = Vec::new();
        loop {
            let c = self
                .bump()
                .ok_or_else(|| ParseError::new(line, col, "unterminated string literal"))?;
            match c {
                '"' => return Ok(bytes),
                '\\' => {
                    let esc = self
                        .bump()
                        .ok_or_else(|| ParseError::new(line, col, "unterminated string literal"))?;
                    match esc {
                        '\\' => bytes.push(b'\\'),
                        '"' => bytes.push(b'"'),
                        'n' => bytes.push(b'\n'),
                        't' => bytes.push(b'\t'),
                        '0' => bytes.push(0),
                        'x' => {
                            let hi = self.bump();
                            let lo = self.bump();
                            let (hi, lo) = match (hi, lo) {
                                (Some(h), Some(l)) => (h, l),
                                _ => {
                                    return Err(ParseError::new(line, col, "truncated \\x escape"))
                                }
                            };
                            let v = u8::from_str_radix(&format!("{hi}{lo}"), 16).map_err(|_| {
                                ParseError::new(line, col, format!("invalid \\x escape `\\x{hi}{lo}`"))
                            })?;
                            bytes.push(v);
                        }
                        other => {
                            return Err(ParseError::new(
                                line,
                                col,
                                format!("unknown escape `\\{other}`"),
                            ))
                        }
                    }
                }
                c if (c as u32) < 0x80 => bytes.push(c as u8),
                other => {
                    return Err(ParseError::new(
                        line,
                        col,
                        format!("non-ASCII character `{other}` in string literal"),
                    ))
                }
            }
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _, _)| t)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or((1, 1))
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        let (line, col) = self.here();
        let t = self
            .toks
            .get(self.pos)
            .map(|(t, _, _)| t.clone())
            .ok_or_else(|| ParseError::new(line, col, "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        let (line, col) = self.here();
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            Err(ParseError::new(
                line,
                col,
                format!("expected {}, found {}", want.describe(), got.describe()),
            ))
        }
    }

    /// An identifier usable as a register, label, function name or tag.
    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        let (line, col) = self.here();
        match self.next()? {
            Tok::Ident(s) => {
                if KEYWORDS.contains(&s.as_str()) {
                    Err(ParseError::new(line, col, format!("`{s}` is a reserved word, not a {what}")))
                } else {
                    Ok(s)
                }
            }
            other => Err(ParseError::new(line, col, format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn imm(&mut self) -> Result<u64, ParseError> {
        let (line, col) = self.here();
        match self.next()? {
            Tok::Imm(v) => Ok(v),
            other => Err(ParseError::new(line, col, format!("expected immediate, found {}", other.describe()))),
        }
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = Lexer::new(text).tokenize()?;
    let mut p = Parser { toks, pos: 0 };
    let mut program = Program { functions: Vec::new(), string_table: Vec::new() };
    let mut interned: HashMap<Vec<u8>, StrId> = HashMap::new();

    if p.peek().is_none() {
        return Err(ParseError::new(1, 1, "empty program: expected at least one function"));
    }
    while p.peek().is_some() {
        let func = parse_function(&mut p, &mut program.string_table, &mut interned)?;
        if program.functions.iter().any(|f| f.name == func.name) {
            let (line, col) = p.here();
            return Err(ParseError::new(line, col, format!("duplicate function `{}`", func.name)));
        }
        program.functions.push(func);
    }
    Ok(program)
}

fn parse_function(
    p: &mut Parser,
    table: &mut Vec<Vec<u8>>,
    interned: &mut HashMap<Vec<u8>, StrId>,
) -> Result<Function, ParseError> {
    let (line, col) = p.here();
    match p.next()? {
        Tok::Ident(kw) if kw == "fn" => {}
        other => {
            return Err(ParseError::new(line, col, format!("expected `fn`, found {}", other.describe())))
        }
    }
    let name = p.name("function name")?;
    p.expect(Tok::LParen)?;
    let mut params = Vec::new();
    if p.peek() != Some(&Tok::RParen) {
        loop {
            params.push(p.name("parameter name")?);
            match p.peek() {
                Some(Tok::Comma) => {
                    p.next()?;
                }
                _ => break,
            }
        }
    }
    p.expect(Tok::RParen)?;
    p.expect(Tok::LBrace)?;

    let mut blocks: Vec<Block> = Vec::new();
    loop {
        match p.peek() {
            Some(Tok::RBrace) => {
                p.next()?;
                break;
            }
            None => {
                let (line, col) = p.here();
                return Err(ParseError::new(line, col, "unexpected end of input inside function body"));
            }
            _ => {}
        }
        // A block starts with `LABEL :`.
        let (line, col) = p.here();
        if !matches!((p.peek(), p.peek2()), (Some(Tok::Ident(_)), Some(Tok::Colon))) {
            let got = p.next()?;
            return Err(ParseError::new(
                line,
                col,
                format!("expected block label, found {}", got.describe()),
            ));
        }
        let label = p.name("block label")?;
        p.expect(Tok::Colon)?;
        if blocks.iter().any(|b| b.label == label) {
            return Err(ParseError::new(line, col, format!("duplicate label `{label}`")));
        }

        let mut instrs = Vec::new();
        loop {
            match p.peek() {
                Some(Tok::RBrace) | None => break,
                Some(Tok::Ident(_)) if matches!(p.peek2(), Some(Tok::Colon)) => break,
                _ => instrs.push(parse_instr(p, table, interned)?),
            }
        }
        blocks.push(Block { label, instrs });
    }

    if blocks.is_empty() {
        return Err(ParseError::new(line, col, format!("function `{name}` has no blocks")));
    }

    // Branch targets must name blocks of this function. Unknown callees are
    // fine (external APIs); unknown labels are not.
    for block in &blocks {
        for instr in &block.instrs {
            let targets: Vec<&String> = match instr {
                Instruction::Br { then_label, else_label, .. } => vec![then_label, else_label],
                Instruction::Jmp { label } => vec![label],
                _ => vec![],
            };
            for t in targets {
                if !blocks.iter().any(|b| &b.label == t) {
                    let (line, col) = p.here();
                    return Err(ParseError::new(line, col, format!("undefined label `{t}`")));
                }
            }
        }
    }

    Ok(Function { name, params, blocks })
}

fn parse_instr(
    p: &mut Parser,
    table: &mut Vec<Vec<u8>>,
    interned: &mut HashMap<Vec<u8>, StrId>,
) -> Result<Instruction, ParseError> {
    let (line, col) = p.here();
    // A keyword followed by `=` is a reserved word misused as a register.
    if let (Some(Tok::Ident(kw)), Some(Tok::Equals)) = (p.peek(), p.peek2()) {
        if KEYWORDS.contains(&kw.as_str()) {
            return Err(ParseError {
                line,
                col,
                message: format!("`{kw}` is a reserved word and cannot name a register"),
            });
        }
    }
    match p.peek() {
        Some(Tok::Ident(kw)) => match kw.as_str() {
            "store" => {
                p.next()?;
                let addr = p.name("register")?;
                p.expect(Tok::Comma)?;
                let value = p.name("register")?;
                return Ok(Instruction::Store { addr, value });
            }
            "br" => {
                p.next()?;
                let cond = p.name("register")?;
                p.expect(Tok::Comma)?;
                let then_label = p.name("label")?;
                p.expect(Tok::Comma)?;
                let else_label = p.name("label")?;
                return Ok(Instruction::Br { cond, then_label, else_label });
            }
            "jmp" => {
                p.next()?;
                let label = p.name("label")?;
                return Ok(Instruction::Jmp { label });
            }
            "ret" => {
                p.next()?;
                let value = p.name("register")?;
                return Ok(Instruction::Ret { value });
            }
            "halt" => {
                p.next()?;
                return Ok(Instruction::Halt);
            }
            "mark" => {
                p.next()?;
                let tag = p.name("mark tag")?;
                return Ok(Instruction::Mark { tag });
            }
            _ => {}
        },
        _ => {
            let got = p.next()?;
            return Err(ParseError::new(line, col, format!("expected instruction, found {}", got.describe())));
        }
    }

    // Assignment form: REG = ...
    let dst = p.name("register")?;
    p.expect(Tok::Equals)?;
    let (line, col) = p.here();
    let op = match p.next()? {
        Tok::Ident(s) => s,
        other => {
            return Err(ParseError::new(line, col, format!("expected operation, found {}", other.describe())))
        }
    };
    match op.as_str() {
        "const" => {
            let value = p.imm()?;
            Ok(Instruction::Const { dst, value })
        }
        "add" | "sub" | "mul" | "and" | "or" | "xor" => {
            let alu = AluOp::ALL
                .into_iter()
                .find(|a| a.mnemonic() == op)
                .expect("mnemonic covered by match");
            let lhs = p.name("register")?;
            p.expect(Tok::Comma)?;
            let rhs = p.name("register")?;
            Ok(Instruction::Alu { dst, op: alu, lhs, rhs })
        }
        "cmp" => {
            let (line, col) = p.here();
            let cond = match p.next()? {
                Tok::Ident(c) => CmpOp::ALL.into_iter().find(|k| k.mnemonic() == c).ok_or_else(|| {
                    ParseError::new(line, col, format!("unknown comparison condition `{c}`"))
                })?,
                other => {
                    return Err(ParseError::new(
                        line,
                        col,
                        format!("expected comparison condition, found {}", other.describe()),
                    ))
                }
            };
            let lhs = p.name("register")?;
            p.expect(Tok::Comma)?;
            let rhs = p.name("register")?;
            Ok(Instruction::Cmp { dst, op: cond, lhs, rhs })
        }
        "call" => {
            let callee = p.name("function name")?;
            p.expect(Tok::LParen)?;
            let mut args = Vec::new();
            if p.peek() != Some(&Tok::RParen) {
                loop {
                    args.push(p.name("register")?);
                    match p.peek() {
                        Some(Tok::Comma) => {
                            p.next()?;
                        }
                        _ => break,
                    }
                }
            }
            p.expect(Tok::RParen)?;
            Ok(Instruction::Call { dst, callee, args })
        }
        "load" => {
            let addr = p.name("register")?;
            Ok(Instruction::Load { dst, addr })
        }
        "cstr" => {
            let (line, col) = p.here();
            match p.next()? {
                Tok::Str(bytes) => {
                    let id = intern_string(table, interned, bytes);
                    Ok(Instruction::CStr { dst, string: id })
                }
                other => Err(ParseError::new(
                    line,
                    col,
                    format!("expected string literal, found {}", other.describe()),
                )),
            }
        }
        other => Err(ParseError::new(line, col, format!("unknown operation `{other}`"))),
    }
}
