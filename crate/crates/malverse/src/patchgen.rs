//! Patch synthesis: turning a solved suspicious path into stub behaviour.
//!
//! A patch has two parts. *Return schedules* pin the value each external
//! function must produce at each of its invocations along the path —
//! rendered as C stubs that count invocations in a file-scope variable
//! and walk an if-chain. *Memory preloads* fill a heap buffer with the
//! bytes a pinned comparator expects, so pointer-returning functions
//! (such as `getcwd`) can hand out real memory with the right content.
//!
//! [`synthesize`] builds a [`PatchSpec`] from a path plus its solver
//! model; [`emit_c`] renders the spec as one self-contained C
//! translation unit whose definitions shadow the real APIs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::solver::{concretize_history, Model};
use crate::stubs::{Prototype, StubKind, StubRegistry};
use crate::symexec::PathState;
use crate::triage::RootCause;

/// Fixed allocation size for preloaded buffers. The emitted init routine
/// always allocates this many bytes, so preload content must leave room
/// for a NUL terminator.
pub const DEFAULT_BUFFER_SIZE: usize = 100;

/// The concrete values one external function must return, in invocation
/// order. A single entry renders as a stateless `return v;` stub; more
/// entries render as a counter-driven if-chain that repeats the last
/// value once the schedule is exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnSchedule {
    pub function: String,
    pub returns: Vec<u64>,
}

/// A heap buffer to allocate at startup and fill with `bytes`, returned
/// by every invocation of `function`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryPreload {
    pub function: String,
    pub bytes: Vec<u8>,
    pub buffer_size: usize,
}

/// Where a patch came from: the fingerprint of the path it defuses and
/// the hash of the solver model that fixed its values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub path_fingerprint: String,
    pub model_hash: String,
}

/// A complete patch: at most one schedule per function, plus preloads.
/// A function with a preload never also has a scalar schedule — its
/// stub returns the preloaded buffer instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub schedules: Vec<ReturnSchedule>,
    pub preloads: Vec<MemoryPreload>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchMode {
    /// Schedule every external function invoked on the path.
    Full,
    /// Schedule only the root-cause function and the functions whose
    /// returns are tied to it through shared path constraints.
    Minimal,
}

impl fmt::Display for PatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchMode::Full => write!(f, "full"),
            PatchMode::Minimal => write!(f, "minimal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatchError {
    #[error("minimal patch mode requires a diagnosed root cause")]
    MinimalWithoutRoot,
    #[error(
        "preload for `{function}` holds {len} bytes but the {size}-byte \
         buffer needs one spare byte for the terminator"
    )]
    OverlongPreload {
        function: String,
        len: usize,
        size: usize,
    },
}

/// Build a patch specification for one solved path.
///
/// `model` must be the satisfying model for `path` with comparator
/// buffers already bound (as produced by [`crate::solver::model_for_path`]);
/// its pins decide which comparator invocations are induced by preloaded
/// memory rather than scheduled. In [`PatchMode::Minimal`] a `root`
/// cause is required and only its constraint-connected functions are
/// patched.
pub fn synthesize(
    path: &PathState,
    model: &Model,
    root: Option<&RootCause>,
    mode: PatchMode,
) -> Result<PatchSpec, PatchError> {
    let allowed = match mode {
        PatchMode::Full => None,
        PatchMode::Minimal => {
            let root = root.ok_or(PatchError::MinimalWithoutRoot)?;
            Some(closure_functions(path, model, root))
        }
    };

    let concretized = concretize_history(&path.history, model);

    // A comparator function is dropped from the schedule only when every
    // one of its invocations is induced by preloaded buffer content
    // (pinned to 0 against a known buffer); scheduling a subset would
    // desynchronise its invocation counter.
    let mut fully_induced: BTreeMap<&str, bool> = BTreeMap::new();
    for rec in &path.history {
        if rec.external && rec.kind == StubKind::Comparator {
            let induced = model
                .pins
                .iter()
                .find(|p| p.seq == rec.seq)
                .is_some_and(|p| p.buffer.is_some() && p.ret == 0);
            fully_induced
                .entry(rec.callee.as_str())
                .and_modify(|v| *v &= induced)
                .or_insert(induced);
        }
    }

    let mut schedule_order: Vec<String> = Vec::new();
    let mut returns: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut preload_order: Vec<String> = Vec::new();
    let mut preload_bytes: BTreeMap<String, Vec<u8>> = BTreeMap::new();

    for (rec, call) in path.history.iter().zip(&concretized) {
        if !rec.external {
            continue;
        }
        if let Some(allowed) = &allowed {
            if !allowed.contains(&rec.callee) {
                continue;
            }
        }
        match rec.kind {
            StubKind::BufferPointer => {
                // One static buffer per function; the first invocation
                // decides its content.
                if !preload_bytes.contains_key(&rec.callee) {
                    let bytes = rec
                        .buffer_sym
                        .as_ref()
                        .and_then(|s| model.buffers.get(s))
                        .cloned()
                        .unwrap_or_default();
                    preload_order.push(rec.callee.clone());
                    preload_bytes.insert(rec.callee.clone(), bytes);
                }
            }
            StubKind::Comparator if fully_induced.get(rec.callee.as_str()) == Some(&true) => {
                // Concrete behaviour is induced by the preloaded buffer.
            }
            StubKind::Comparator | StubKind::Scalar => {
                if !returns.contains_key(&rec.callee) {
                    schedule_order.push(rec.callee.clone());
                }
                returns.entry(rec.callee.clone()).or_default().push(call.ret);
            }
        }
    }

    let preloads: Vec<MemoryPreload> = preload_order
        .into_iter()
        .map(|function| {
            let bytes = preload_bytes.remove(&function).unwrap_or_default();
            MemoryPreload {
                function,
                bytes,
                buffer_size: DEFAULT_BUFFER_SIZE,
            }
        })
        .collect();
    for p in &preloads {
        if p.bytes.len() + 1 > p.buffer_size {
            return Err(PatchError::OverlongPreload {
                function: p.function.clone(),
                len: p.bytes.len(),
                size: p.buffer_size,
            });
        }
    }

    let schedules = schedule_order
        .into_iter()
        .map(|function| {
            let returns = returns.remove(&function).unwrap_or_default();
            ReturnSchedule { function, returns }
        })
        .collect();

    Ok(PatchSpec {
        schedules,
        preloads,
        provenance: Provenance {
            path_fingerprint: path.fingerprint(),
            model_hash: model.hash(),
        },
    })
}

/// The set of functions a minimal patch must cover: the root-cause
/// function plus everything transitively tied to it — functions whose
/// return symbols share a path constraint with an in-set symbol, and
/// buffer-owning functions backing an in-set comparator's pinned result.
fn closure_functions(path: &PathState, model: &Model, root: &RootCause) -> BTreeSet<String> {
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for rec in &path.history {
        for s in rec.ret.syms() {
            owner.insert(s, rec.callee.clone());
        }
        if let Some(b) = &rec.buffer_sym {
            owner.insert(b.clone(), rec.callee.clone());
        }
    }
    let pin_owner: BTreeMap<&str, &str> = model
        .pins
        .iter()
        .filter_map(|p| {
            let buf = p.buffer.as_deref()?;
            Some((p.callee.as_str(), owner.get(buf).map(String::as_str)?))
        })
        .collect();

    let mut funcs: BTreeSet<String> = BTreeSet::new();
    funcs.insert(root.function.clone());
    let mut syms: BTreeSet<String> = BTreeSet::new();
    loop {
        let mut grew = false;
        for (s, f) in &owner {
            if funcs.contains(f) && syms.insert(s.clone()) {
                grew = true;
            }
        }
        for c in &path.constraints {
            let cs = c.syms();
            if cs.iter().any(|s| syms.contains(s)) {
                for s in cs {
                    if let Some(f) = owner.get(&s) {
                        if !funcs.contains(f) {
                            funcs.insert(f.clone());
                            grew = true;
                        }
                    }
                    if syms.insert(s) {
                        grew = true;
                    }
                }
            }
        }
        for (callee, buffer_fn) in &pin_owner {
            if funcs.contains(*callee) && !funcs.contains(*buffer_fn) {
                funcs.insert((*buffer_fn).to_string());
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    funcs
}

/// Render a patch as one self-contained C translation unit. Preloaded
/// buffers become `#define`d string constants copied into heap memory by
/// a constructor; schedules become stubs shadowing the real functions.
/// Prototypes come from `registry`; unknown functions fall back to
/// `long f(void)` (for the stub file alone the parameter list is moot).
pub fn emit_c(spec: &PatchSpec, registry: &StubRegistry) -> Result<String, PatchError> {
    for p in &spec.preloads {
        if p.bytes.len() + 1 > p.buffer_size {
            return Err(PatchError::OverlongPreload {
                function: p.function.clone(),
                len: p.bytes.len(),
                size: p.buffer_size,
            });
        }
    }

    let proto_of = |name: &str, pointer_fallback: bool| -> Prototype {
        registry.prototype(name).cloned().unwrap_or(Prototype {
            ret: if pointer_fallback { "char *" } else { "long" }.to_string(),
            name: name.to_string(),
            params: Vec::new(),
            variadic: false,
        })
    };
    let preload_protos: Vec<Prototype> = spec
        .preloads
        .iter()
        .map(|p| proto_of(&p.function, true))
        .collect();
    let schedule_protos: Vec<Prototype> = spec
        .schedules
        .iter()
        .map(|s| proto_of(&s.function, false))
        .collect();

    let mut out = String::new();
    out.push_str(&format!(
        "/* Generated stub patch.\n\
         \x20* path fingerprint: {}\n\
         \x20* solver model:     {}\n\
         \x20*/\n",
        spec.provenance.path_fingerprint, spec.provenance.model_hash
    ));
    out.push_str("#include <sys/types.h>\n");
    if !spec.preloads.is_empty() {
        out.push_str("#include <stdlib.h>\n");
        out.push_str("#include <string.h>\n");
    }
    if preload_protos
        .iter()
        .chain(&schedule_protos)
        .any(|p| p.render().contains("clock_t"))
    {
        out.push_str("#include <time.h>\n");
    }

    if !spec.preloads.is_empty() {
        out.push('\n');
        let define_name = |i: usize| {
            if spec.preloads.len() == 1 {
                "STR".to_string()
            } else {
                format!("STR_{}", i + 1)
            }
        };
        for (i, p) in spec.preloads.iter().enumerate() {
            out.push_str(&format!(
                "#define {} {}\n",
                define_name(i),
                c_string_literal(&p.bytes)
            ));
        }
        out.push('\n');
        for p in &spec.preloads {
            out.push_str(&format!("static char *{} = 0;\n", buffer_var(&p.function)));
        }
        out.push_str("\n__attribute__((constructor))\nstatic void malverse_init(void) {\n");
        for (i, p) in spec.preloads.iter().enumerate() {
            let var = buffer_var(&p.function);
            out.push_str(&format!(
                "    {var} = (char *) malloc({});\n    strcpy({var}, {});\n",
                p.buffer_size,
                define_name(i)
            ));
        }
        out.push_str("}\n");
        for (p, proto) in spec.preloads.iter().zip(&preload_protos) {
            let var = buffer_var(&p.function);
            let value = if proto.ret.ends_with('*') {
                var
            } else {
                format!("({}) {var}", proto.ret)
            };
            out.push_str(&format!(
                "\n{} {{\n    return {value};\n}}\n",
                proto.render()
            ));
        }
    }

    for (s, proto) in spec.schedules.iter().zip(&schedule_protos) {
        debug_assert!(!s.returns.is_empty(), "schedule without return values");
        out.push('\n');
        if s.returns.len() == 1 {
            out.push_str(&format!(
                "{} {{\n    return {};\n}}\n",
                proto.render(),
                render_value(s.returns[0], &proto.ret)
            ));
        } else {
            let counter = format!("angr_global_var_{}", s.function);
            out.push_str(&format!("static int {counter} = 0;\n\n"));
            out.push_str(&format!("{} {{\n", proto.render()));
            out.push_str(&format!("    {counter} = {counter} + 1;\n"));
            for (i, v) in s.returns.iter().enumerate() {
                out.push_str(&format!(
                    "    if ({counter} == {}) {{\n        return {};\n    }}\n",
                    i + 1,
                    render_value(*v, &proto.ret)
                ));
            }
            out.push_str(&format!(
                "    return {}; /* past the schedule: repeat the last value */\n}}\n",
                render_value(*s.returns.last().unwrap(), &proto.ret)
            ));
        }
    }

    Ok(out)
}

fn buffer_var(function: &str) -> String {
    format!("malverse_buf_{function}")
}

/// Render a scheduled value as a C literal: hex for non-negative,
/// decimal for negative (reading the u64 as two's-complement i64), with
/// a cast when the stub's return type is a pointer.
fn render_value(v: u64, ret_ty: &str) -> String {
    let signed = v as i64;
    let lit = if signed < 0 {
        format!("{signed}")
    } else {
        format!("{v:#x}")
    };
    if ret_ty.ends_with('*') {
        format!("({ret_ty}) {lit}")
    } else {
        lit
    }
}

/// Escape bytes as a double-quoted C string literal. Non-printable bytes
/// use three-digit octal escapes, which cannot swallow a following
/// digit the way hex escapes can.
fn c_string_literal(bytes: &[u8]) -> String {
    let mut s = String::from("\"");
    for &b in bytes {
        match b {
            b'"' => s.push_str("\\\""),
            b'\\' => s.push_str("\\\\"),
            0x20..=0x7e => s.push(b as char),
            _ => s.push_str(&format!("\\{b:03o}")),
        }
    }
    s.push('"');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Program;
    use crate::solver::{model_for_path, SolveOutcome, DEFAULT_SEED};
    use crate::symexec::{explore, PathStatus};

    fn registry() -> StubRegistry {
        StubRegistry::builtin()
    }

    /// Explore `text` from main and return the payload-marked path with
    /// its bound model.
    fn solved_payload_path(text: &str) -> (PathState, Model) {
        let program = Program::parse(text).unwrap();
        let set = explore(&program, "main", &registry()).unwrap();
        let path = set
            .paths
            .into_iter()
            .find(|p| p.marks.iter().any(|m| m == "payload"))
            .expect("no payload path");
        let model = match model_for_path(&path, &program, DEFAULT_SEED) {
            SolveOutcome::Sat(m) => m,
            other => panic!("payload path should be satisfiable, got {other:?}"),
        };
        (path, model)
    }

    const SINGLE_PTRACE: &str = "
        fn main() {
        entry:
            z = const 0
            t = call ptrace(z, z)
            c = cmp eq t, z
            br c, arm, out
        arm:
            mark payload
            ret z
        out:
            ret z
        }
    ";

    const DOUBLE_PTRACE: &str = "
        fn main() {
        entry:
            z = const 0
            m = const -1
            a = call ptrace(z, z)
            ca = cmp eq a, z
            br ca, second, out
        second:
            b = call ptrace(z, z)
            cb = cmp eq b, m
            br cb, arm, out
        arm:
            mark payload
            ret z
        out:
            ret z
        }
    ";

    #[test]
    fn single_invocation_schedules_one_return() {
        let (path, model) = solved_payload_path(SINGLE_PTRACE);
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        assert_eq!(spec.schedules.len(), 1);
        assert_eq!(spec.schedules[0].function, "ptrace");
        assert_eq!(spec.schedules[0].returns, vec![0]);
        assert!(spec.preloads.is_empty());
        assert_eq!(spec.provenance.path_fingerprint, path.fingerprint());
        assert_eq!(spec.provenance.model_hash, model.hash());
    }

    #[test]
    fn repeat_invocations_schedule_in_invocation_order() {
        let (path, model) = solved_payload_path(DOUBLE_PTRACE);
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        assert_eq!(spec.schedules.len(), 1);
        assert_eq!(spec.schedules[0].returns, vec![0, u64::MAX]);
    }

    #[test]
    fn internal_callees_are_never_scheduled() {
        let (path, model) = solved_payload_path(
            "
            fn helper() {
            entry:
                r = const 7
                ret r
            }
            fn main() {
            entry:
                h = call helper()
                z = const 0
                c = cmp eq h, h
                br c, arm, out
            arm:
                mark payload
                ret z
            out:
                ret z
            }
        ",
        );
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        assert!(spec.schedules.iter().all(|s| s.function != "helper"));
    }

    #[test]
    fn minimal_mode_requires_a_root_cause() {
        let (path, model) = solved_payload_path(SINGLE_PTRACE);
        let err = synthesize(&path, &model, None, PatchMode::Minimal).unwrap_err();
        assert_eq!(err, PatchError::MinimalWithoutRoot);
    }

    #[test]
    fn minimal_mode_keeps_only_constraint_connected_functions() {
        // getpid's return is unconstrained; a minimal patch rooted at
        // ptrace must not schedule it.
        let (path, model) = solved_payload_path(
            "
            fn main() {
            entry:
                z = const 0
                p = call getpid()
                t = call ptrace(z, z)
                c = cmp eq t, z
                br c, arm, out
            arm:
                mark payload
                ret z
            out:
                ret z
            }
        ",
        );
        let root = RootCause {
            seq: 1,
            function: "ptrace".to_string(),
            suspicious_return: Some(0),
            benign_return: Some(1),
        };
        let full = synthesize(&path, &model, Some(&root), PatchMode::Full).unwrap();
        assert_eq!(full.schedules.len(), 2);
        let minimal = synthesize(&path, &model, Some(&root), PatchMode::Minimal).unwrap();
        assert_eq!(minimal.schedules.len(), 1);
        assert_eq!(minimal.schedules[0].function, "ptrace");
    }

    #[test]
    fn minimal_mode_follows_shared_constraints() {
        // payload needs 10 <s (clock_1 - clock_0); both clock calls and
        // the seed constraint tie clock into the closure rooted there.
        let (path, model) = solved_payload_path(
            "
            fn main() {
            entry:
                p = call getpid()
                t0 = call clock()
                s = call sleep(p)
                t1 = call clock()
                d = sub t1, t0
                lim = const 10
                c = cmp slt lim, d
                br c, arm, out
            arm:
                mark payload
                ret lim
            out:
                ret lim
            }
        ",
        );
        let root = RootCause {
            seq: 3,
            function: "clock".to_string(),
            suspicious_return: Some(11),
            benign_return: Some(0),
        };
        let spec = synthesize(&path, &model, Some(&root), PatchMode::Minimal).unwrap();
        let fns: Vec<&str> = spec.schedules.iter().map(|s| s.function.as_str()).collect();
        assert_eq!(fns, vec!["clock"]);
        assert_eq!(spec.schedules[0].returns.len(), 2);
    }

    const CWD_BOMB: &str = r#"
        fn main() {
        entry:
            lit = cstr "BOMB"
            buf = call getcwd()
            r = call strcmp(buf, lit)
            z = const 0
            c = cmp eq r, z
            br c, arm, out
        arm:
            mark payload
            ret z
        out:
            ret z
        }
    "#;

    #[test]
    fn induced_comparator_becomes_preload_without_schedule() {
        let (path, model) = solved_payload_path(CWD_BOMB);
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        assert_eq!(spec.preloads.len(), 1);
        assert_eq!(spec.preloads[0].function, "getcwd");
        assert_eq!(spec.preloads[0].bytes, b"BOMB".to_vec());
        assert_eq!(spec.preloads[0].buffer_size, DEFAULT_BUFFER_SIZE);
        assert!(
            spec.schedules.iter().all(|s| s.function != "strcmp"),
            "induced comparator must not be scheduled: {:?}",
            spec.schedules
        );
        assert!(spec.schedules.iter().all(|s| s.function != "getcwd"));
    }

    #[test]
    fn minimal_patch_rooted_at_comparator_pulls_in_the_buffer_function() {
        let (path, model) = solved_payload_path(CWD_BOMB);
        let root = RootCause {
            seq: 1,
            function: "strcmp".to_string(),
            suspicious_return: Some(0),
            benign_return: Some(1),
        };
        let spec = synthesize(&path, &model, Some(&root), PatchMode::Minimal).unwrap();
        assert_eq!(spec.preloads.len(), 1);
        assert_eq!(spec.preloads[0].function, "getcwd");
        assert!(spec.schedules.is_empty());
    }

    #[test]
    fn non_induced_comparator_keeps_its_schedule() {
        // strcmp of two string literals: no stub buffer involved, so the
        // pinned value must be scheduled directly.
        let (path, model) = solved_payload_path(
            r#"
            fn main() {
            entry:
                a = cstr "x"
                b = cstr "y"
                r = call strcmp(a, b)
                z = const 0
                c = cmp eq r, z
                br c, arm, out
            arm:
                mark payload
                ret z
            out:
                ret z
            }
        "#,
        );
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        assert_eq!(spec.schedules.len(), 1);
        assert_eq!(spec.schedules[0].function, "strcmp");
        assert_eq!(spec.schedules[0].returns, vec![0]);
        assert!(spec.preloads.is_empty());
    }

    #[test]
    fn overlong_preload_is_rejected() {
        let spec = PatchSpec {
            schedules: vec![],
            preloads: vec![MemoryPreload {
                function: "getcwd".to_string(),
                bytes: vec![b'A'; DEFAULT_BUFFER_SIZE],
                buffer_size: DEFAULT_BUFFER_SIZE,
            }],
            provenance: Provenance {
                path_fingerprint: String::new(),
                model_hash: String::new(),
            },
        };
        let err = emit_c(&spec, &registry()).unwrap_err();
        assert_eq!(
            err,
            PatchError::OverlongPreload {
                function: "getcwd".to_string(),
                len: DEFAULT_BUFFER_SIZE,
                size: DEFAULT_BUFFER_SIZE,
            }
        );
    }

    #[test]
    fn stateless_stub_renders_a_bare_return() {
        let (path, model) = solved_payload_path(SINGLE_PTRACE);
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        let src = emit_c(&spec, &registry()).unwrap();
        assert!(src.contains("#include <sys/types.h>"));
        assert!(src.contains("long ptrace(int request, pid_t pid, void *addr, void *data) {"));
        assert!(src.contains("return 0x0;"));
        assert!(!src.contains("angr_global_var"));
    }

    #[test]
    fn stateful_stub_renders_a_counter_if_chain() {
        let (path, model) = solved_payload_path(DOUBLE_PTRACE);
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        let src = emit_c(&spec, &registry()).unwrap();
        assert!(src.contains("static int angr_global_var_ptrace = 0;"));
        assert!(src.contains("angr_global_var_ptrace = angr_global_var_ptrace + 1;"));
        assert!(src.contains("if (angr_global_var_ptrace == 1) {"));
        assert!(src.contains("return 0x0;"));
        assert!(src.contains("if (angr_global_var_ptrace == 2) {"));
        assert!(src.contains("return -1;"));
    }

    #[test]
    fn preload_renders_define_init_and_buffer_return() {
        let (path, model) = solved_payload_path(CWD_BOMB);
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        let src = emit_c(&spec, &registry()).unwrap();
        assert!(src.contains("#define STR \"BOMB\""));
        assert!(src.contains("#include <stdlib.h>"));
        assert!(src.contains("malloc(100)"));
        assert!(src.contains("strcpy(malverse_buf_getcwd, STR);"));
        assert!(src.contains("char *getcwd(char *buf, size_t size) {"));
        assert!(src.contains("return malverse_buf_getcwd;"));
        assert!(!src.contains("strcmp("), "induced comparator must not appear");
    }

    #[test]
    fn clock_schedule_pulls_in_time_header() {
        let (path, model) = solved_payload_path(
            "
            fn main() {
            entry:
                t = call clock()
                z = const 0
                c = cmp eq t, z
                br c, arm, out
            arm:
                mark payload
                ret z
            out:
                ret z
            }
        ",
        );
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        let src = emit_c(&spec, &registry()).unwrap();
        assert!(src.contains("#include <time.h>"));
        assert!(src.contains("clock_t clock(void) {"));
    }

    #[test]
    fn unknown_external_gets_a_fallback_prototype() {
        let (path, model) = solved_payload_path(
            "
            fn main() {
            entry:
                t = call mystery()
                z = const 0
                c = cmp eq t, z
                br c, arm, out
            arm:
                mark payload
                ret z
            out:
                ret z
            }
        ",
        );
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        let src = emit_c(&spec, &registry()).unwrap();
        assert!(src.contains("long mystery(void) {"));
    }

    #[test]
    fn pointer_returning_schedule_casts_its_value() {
        let spec = PatchSpec {
            schedules: vec![ReturnSchedule {
                function: "getenv".to_string(),
                returns: vec![0],
            }],
            preloads: vec![],
            provenance: Provenance {
                path_fingerprint: String::new(),
                model_hash: String::new(),
            },
        };
        let src = emit_c(&spec, &registry()).unwrap();
        assert!(src.contains("return (char *) 0x0;"));
    }

    #[test]
    fn c_string_literal_escapes_non_printables() {
        assert_eq!(c_string_literal(b"BOMB"), "\"BOMB\"");
        assert_eq!(c_string_literal(b"a\"b\\c"), "\"a\\\"b\\\\c\"");
        assert_eq!(c_string_literal(&[0x07, b'1']), "\"\\0071\"");
    }

    #[test]
    fn patchspec_json_round_trips() {
        let (path, model) = solved_payload_path(CWD_BOMB);
        let spec = synthesize(&path, &model, None, PatchMode::Full).unwrap();
        let json = serde_json::to_string_pretty(&spec).unwrap();
        let back: PatchSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn evaded_paths_can_still_be_described() {
        // Synthesis is value-driven; an evaded path's history schedules
        // the values that steered it away from the payload.
        let program = Program::parse(SINGLE_PTRACE.replace("out:\n            ret z", "out:\n            mark evade\n            halt").as_str());
        let program = program.unwrap();
        let set = explore(&program, "main", &registry()).unwrap();
        let path = set
            .paths
            .iter()
            .find(|p| matches!(p.status, PathStatus::Evaded(_)))
            .unwrap();
        let model = match model_for_path(path, &program, DEFAULT_SEED) {
            SolveOutcome::Sat(m) => m,
            other => panic!("{other:?}"),
        };
        let spec = synthesize(path, &model, None, PatchMode::Full).unwrap();
        assert_eq!(spec.schedules[0].function, "ptrace");
        assert_ne!(spec.schedules[0].returns, vec![0]);
    }
}
