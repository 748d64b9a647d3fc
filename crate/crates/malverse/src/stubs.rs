//! External-API stub descriptors and the prototype database.
//!
//! Symbolic exploration replaces every callee with a stub. The stub kind
//! decides what the call produces:
//!
//! * `Scalar` — a fresh unconstrained symbol.
//! * `BufferPointer` — a fresh 256-byte region holding a fresh buffer
//!   symbol; the call returns the concrete region address.
//! * `Comparator` — a fresh symbol, with the arguments recorded so a
//!   buffer preload can later be synthesised from a pinned comparison.
//!
//! The registry also carries C prototypes so patch emission can produce
//! compilable source. The database format is one prototype per line with
//! an optional kind annotation, `#` comments allowed:
//!
//! ```text
//! long ptrace(int request, pid_t pid, void *addr, void *data);
//! char *getcwd(char *buf, size_t size); @kind=buffer
//! int strcmp(const char *a, const char *b); @kind=comparator
//! ```
//!
//! Unannotated entries are scalar. Functions absent from the registry are
//! stubbed as scalar with the call site's arity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How a stub models the callee's return value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StubKind {
    Scalar,
    BufferPointer,
    Comparator,
}

impl StubKind {
    pub fn name(self) -> &'static str {
        match self {
            StubKind::Scalar => "scalar",
            StubKind::BufferPointer => "buffer",
            StubKind::Comparator => "comparator",
        }
    }
}

/// Stub shape for one callee. Comparators require at least two arguments
/// at the call site; calls may pass fewer arguments than the declared
/// arity (C callers routinely under-apply varargs-style prototypes), but
/// never more unless the prototype is variadic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubDescriptor {
    pub name: String,
    pub arity: usize,
    pub kind: StubKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    /// Full parameter text, e.g. `const char *a`.
    pub text: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prototype {
    /// Return type, stars attached: `long`, `char *`.
    pub ret: String,
    pub name: String,
    pub params: Vec<Param>,
    pub variadic: bool,
}

impl Prototype {
    /// Render the C signature head, without trailing `;`.
    pub fn render(&self) -> String {
        let lead = if self.ret.ends_with('*') {
            format!("{}{}", self.ret, self.name)
        } else {
            format!("{} {}", self.ret, self.name)
        };
        let mut params: Vec<String> = self.params.iter().map(|p| p.text.clone()).collect();
        if self.variadic {
            params.push("...".to_string());
        }
        if params.is_empty() {
            format!("{lead}(void)")
        } else {
            format!("{lead}({})", params.join(", "))
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("prototype database line {line}: {message}")]
pub struct ProtoParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubEntry {
    pub kind: StubKind,
    pub prototype: Prototype,
}

/// Name-keyed table of known external APIs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StubRegistry {
    entries: BTreeMap<String, StubEntry>,
}

impl StubRegistry {
    pub fn empty() -> Self {
        StubRegistry::default()
    }

    /// The registry snapshot shipped with the crate. Covers the APIs the
    /// bundled corpus references.
    pub fn builtin() -> Self {
        StubRegistry::parse_str(include_str!("../data/apis.proto"))
            .expect("bundled prototype database parses")
    }

    pub fn parse_str(text: &str) -> Result<Self, ProtoParseError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (kind, entry) = parse_proto_line(line, line_no)?;
            if entries.insert(entry.name.clone(), StubEntry { kind, prototype: entry }).is_some() {
                return Err(ProtoParseError {
                    line: line_no,
                    message: "duplicate prototype for the same function".to_string(),
                });
            }
        }
        Ok(StubRegistry { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ProtoLoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProtoLoadError::Io { path: path.display().to_string(), source: e })?;
        Ok(StubRegistry::parse_str(&text)?)
    }

    pub fn get(&self, name: &str) -> Option<&StubEntry> {
        self.entries.get(name)
    }

    pub fn prototype(&self, name: &str) -> Option<&Prototype> {
        self.entries.get(name).map(|e| &e.prototype)
    }

    /// Descriptor for a call site. Unknown callees become scalar stubs
    /// with the site's arity.
    pub fn descriptor(&self, name: &str, callsite_arity: usize) -> StubDescriptor {
        match self.entries.get(name) {
            Some(e) => StubDescriptor {
                name: name.to_string(),
                arity: e.prototype.params.len(),
                kind: e.kind,
            },
            None => StubDescriptor { name: name.to_string(), arity: callsite_arity, kind: StubKind::Scalar },
        }
    }

    pub fn is_variadic(&self, name: &str) -> bool {
        self.entries.get(name).map(|e| e.prototype.variadic).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &StubEntry)> {
        self.entries.iter()
    }
}

#[derive(Debug, Error)]
pub enum ProtoLoadError {
    #[error("cannot read prototype database `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] ProtoParseError),
}

fn parse_proto_line(line: &str, line_no: usize) -> Result<(StubKind, Prototype), ProtoParseError> {
    let err = |message: String| ProtoParseError { line: line_no, message };

    let (decl, kind) = match line.split_once('@') {
        Some((decl, annot)) => {
            let annot = annot.trim();
            let kind = match annot.strip_prefix("kind=").map(str::trim) {
                Some("scalar") => StubKind::Scalar,
                Some("buffer") => StubKind::BufferPointer,
                Some("comparator") => StubKind::Comparator,
                Some(other) => return Err(err(format!("unknown stub kind `{other}`"))),
                None => return Err(err(format!("unknown annotation `@{annot}`"))),
            };
            (decl.trim(), kind)
        }
        None => (line, StubKind::Scalar),
    };

    let decl = decl.trim().trim_end_matches(';').trim();
    let open = decl.find('(').ok_or_else(|| err("expected `(` in prototype".to_string()))?;
    let close = decl.rfind(')').ok_or_else(|| err("expected `)` in prototype".to_string()))?;
    if close < open {
        return Err(err("mismatched parentheses".to_string()));
    }

    let head = decl[..open].trim();
    let (ret, name) = split_head(head).ok_or_else(|| {
        err(format!("cannot split `{head}` into return type and function name"))
    })?;

    let params_text = decl[open + 1..close].trim();
    let mut params = Vec::new();
    let mut variadic = false;
    if !params_text.is_empty() && params_text != "void" {
        for piece in params_text.split(',') {
            let piece = normalize_ws(piece.trim());
            if piece == "..." {
                variadic = true;
                continue;
            }
            if piece.is_empty() {
                return Err(err("empty parameter".to_string()));
            }
            let pname = param_name(&piece)
                .ok_or_else(|| err(format!("cannot find a parameter name in `{piece}`")))?;
            params.push(Param { text: piece.clone(), name: pname });
        }
    }

    if kind == StubKind::Comparator && params.len() < 2 {
        return Err(err(format!(
            "comparator `{name}` must declare at least 2 parameters, has {}",
            params.len()
        )));
    }

    Ok((kind, Prototype { ret, name, params, variadic }))
}

/// Split `long ptrace` / `char *getcwd` into (return type, name).
fn split_head(head: &str) -> Option<(String, String)> {
    let head = normalize_ws(head);
    let last_sep = head.rfind(|c: char| c.is_whitespace() || c == '*')?;
    let name = head[last_sep + 1..].trim().to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    let mut ret = head[..=last_sep].trim_end().to_string();
    if head.as_bytes()[last_sep] == b'*' {
        ret = format!("{} *", head[..last_sep].trim_end().trim_end_matches('*').trim_end());
        let stars = head[..=last_sep].chars().rev().take_while(|&c| c == '*').count();
        if stars > 1 {
            ret.push_str(&"*".repeat(stars - 1));
        }
    }
    Some((ret, name))
}

/// Last identifier of a parameter declaration, skipping array suffixes.
fn param_name(param: &str) -> Option<String> {
    let trimmed = param.trim_end_matches(|c: char| c == '[' || c == ']' || c.is_whitespace());
    let start = trimmed
        .rfind(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .map(|i| i + 1)
        .unwrap_or(0);
    let name = &trimmed[start..];
    if name.is_empty() || name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        None
    } else {
        Some(name.to_string())
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_prototype_parses_with_default_kind() {
        let reg = StubRegistry::parse_str(
            "long ptrace(int request, pid_t pid, void *addr, void *data);",
        )
        .unwrap();
        let e = reg.get("ptrace").unwrap();
        assert_eq!(e.kind, StubKind::Scalar);
        assert_eq!(e.prototype.ret, "long");
        assert_eq!(e.prototype.params.len(), 4);
        assert_eq!(e.prototype.params[1].name, "pid");
        assert_eq!(
            e.prototype.render(),
            "long ptrace(int request, pid_t pid, void *addr, void *data)"
        );
    }

    #[test]
    fn annotated_kinds_parse() {
        let reg = StubRegistry::parse_str(
            "char *getcwd(char *buf, size_t size); @kind=buffer\n\
             int strcmp(const char *a, const char *b); @kind=comparator\n",
        )
        .unwrap();
        assert_eq!(reg.get("getcwd").unwrap().kind, StubKind::BufferPointer);
        assert_eq!(reg.get("strcmp").unwrap().kind, StubKind::Comparator);
        assert_eq!(reg.prototype("getcwd").unwrap().render(), "char *getcwd(char *buf, size_t size)");
    }

    #[test]
    fn malformed_lines_report_their_line_number() {
        let err = StubRegistry::parse_str("int ok(void);\nnot a prototype\n").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let err = StubRegistry::parse_str("int f(int a); @kind=banana").unwrap_err();
        assert!(err.message.contains("banana"));
    }

    #[test]
    fn comparator_needs_two_params() {
        let err = StubRegistry::parse_str("int f(int a); @kind=comparator").unwrap_err();
        assert!(err.message.contains("at least 2"));
    }

    #[test]
    fn void_and_variadic_parameter_lists() {
        let reg = StubRegistry::parse_str(
            "clock_t clock(void);\nint printf(const char *format, ...);\n",
        )
        .unwrap();
        assert_eq!(reg.prototype("clock").unwrap().params.len(), 0);
        assert_eq!(reg.prototype("clock").unwrap().render(), "clock_t clock(void)");
        let printf = reg.prototype("printf").unwrap();
        assert!(printf.variadic);
        assert_eq!(printf.render(), "int printf(const char *format, ...)");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let reg = StubRegistry::parse_str("# header\n\nint f(int a); # trailing\n").unwrap();
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn unknown_callee_defaults_to_scalar_with_site_arity() {
        let reg = StubRegistry::empty();
        let d = reg.descriptor("mystery", 3);
        assert_eq!(d.kind, StubKind::Scalar);
        assert_eq!(d.arity, 3);
    }

    #[test]
    fn builtin_registry_covers_the_corpus_apis() {
        let reg = StubRegistry::builtin();
        for api in [
            "ptrace",
            "memcmp",
            "strcmp",
            "getcwd",
            "sleep",
            "clock",
            "IsDebuggerPresent",
            "IsProcessorFeaturePresent",
            "socket",
            "printf",
        ] {
            assert!(reg.get(api).is_some(), "missing builtin prototype for {api}");
        }
        assert_eq!(reg.get("getcwd").unwrap().kind, StubKind::BufferPointer);
        assert_eq!(reg.get("strcmp").unwrap().kind, StubKind::Comparator);
        assert_eq!(reg.get("memcmp").unwrap().kind, StubKind::Comparator);
    }
}
