//! Structural validation.
//!
//! A program with an empty diagnostic list is safe to hand to the symbolic
//! engine and the concrete interpreter: blocks end in exactly one
//! terminator, branch targets resolve, internal calls match their callee's
//! parameter count, and every register is definitely assigned before any
//! read on every path from the function entry (computed by a worklist
//! dataflow over the block graph, intersecting assigned-register sets at
//! join points). Programs built programmatically can violate any of these;
//! the parser already rejects a subset (duplicates, unknown labels).

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::{Coord, Function, Instruction, Program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub coord: Coord,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.coord, self.message)
    }
}

fn diag(diags: &mut Vec<Diagnostic>, coord: Coord, message: impl Into<String>) {
    diags.push(Diagnostic { coord, message: message.into() });
}

/// Check every structural invariant; returns one diagnostic per violation,
/// ordered by source position. Empty means the program is well-formed.
pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    if p.functions.is_empty() {
        diag(&mut diags, Coord::new("<program>", "", 0), "program has no functions");
        return diags;
    }

    let mut seen_fns: BTreeSet<&str> = BTreeSet::new();
    for f in &p.functions {
        if !seen_fns.insert(&f.name) {
            diag(
                &mut diags,
                Coord::new(&f.name, "", 0),
                format!("duplicate function `{}`", f.name),
            );
        }
    }

    for f in &p.functions {
        validate_function(p, f, &mut diags);
    }
    diags
}

fn validate_function(p: &Program, f: &Function, diags: &mut Vec<Diagnostic>) {
    if f.blocks.is_empty() {
        diag(diags, Coord::new(&f.name, "", 0), format!("function `{}` has no blocks", f.name));
        return;
    }

    let mut labels: BTreeSet<&str> = BTreeSet::new();
    for b in &f.blocks {
        if !labels.insert(&b.label) {
            diag(
                diags,
                Coord::new(&f.name, &b.label, 0),
                format!("duplicate label `{}`", b.label),
            );
        }
    }

    for b in &f.blocks {
        let at = |i: usize| Coord::new(&f.name, &b.label, i);

        match b.instrs.last() {
            None => diag(diags, at(0), "block is empty; expected a terminator"),
            Some(last) if !last.is_terminator() => {
                diag(diags, at(b.instrs.len() - 1), "block does not end in a terminator")
            }
            _ => {}
        }
        for (i, instr) in b.instrs.iter().enumerate() {
            if instr.is_terminator() && i + 1 != b.instrs.len() {
                diag(diags, at(i), "terminator in the middle of a block");
            }
            match instr {
                Instruction::Br { then_label, else_label, .. } => {
                    for t in [then_label, else_label] {
                        if f.block_index(t).is_none() {
                            diag(diags, at(i), format!("undefined label `{t}`"));
                        }
                    }
                }
                Instruction::Jmp { label } => {
                    if f.block_index(label).is_none() {
                        diag(diags, at(i), format!("undefined label `{label}`"));
                    }
                }
                Instruction::Mark { tag } => {
                    if tag.is_empty() {
                        diag(diags, at(i), "mark tag must be non-empty");
                    }
                }
                Instruction::Call { callee, args, .. } => {
                    if let Some(target) = p.function(callee) {
                        if target.params.len() != args.len() {
                            diag(
                                diags,
                                at(i),
                                format!(
                                    "call to `{callee}` passes {} arguments, but it declares {}",
                                    args.len(),
                                    target.params.len()
                                ),
                            );
                        }
                    }
                }
                _ => {}
            }
        }
    }

    check_definite_assignment(f, diags);
}

/// Forward must-analysis: a register may be read only if it is assigned on
/// every path from the entry block. Unreachable blocks are not analysed.
fn check_definite_assignment(f: &Function, diags: &mut Vec<Diagnostic>) {
    let label_idx: HashMap<&str, usize> =
        f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    let succs = |b: &super::Block| -> Vec<usize> {
        match b.instrs.last() {
            Some(Instruction::Br { then_label, else_label, .. }) => [then_label, else_label]
                .iter()
                .filter_map(|l| label_idx.get(l.as_str()).copied())
                .collect(),
            Some(Instruction::Jmp { label }) => {
                label_idx.get(label.as_str()).copied().into_iter().collect()
            }
            _ => vec![],
        }
    };

    // None = not yet reached (top of the lattice).
    let mut ins: Vec<Option<BTreeSet<String>>> = vec![None; f.blocks.len()];
    ins[0] = Some(f.params.iter().cloned().collect());
    let mut worklist = vec![0usize];
    while let Some(bi) = worklist.pop() {
        let mut assigned = ins[bi].clone().expect("work items are reached blocks");
        for instr in &f.blocks[bi].instrs {
            if let Some(w) = instr.writes() {
                assigned.insert(w.to_string());
            }
        }
        for si in succs(&f.blocks[bi]) {
            let updated = match &ins[si] {
                None => Some(assigned.clone()),
                Some(prev) => {
                    let inter: BTreeSet<String> = prev.intersection(&assigned).cloned().collect();
                    if &inter == prev {
                        None
                    } else {
                        Some(inter)
                    }
                }
            };
            if let Some(set) = updated {
                ins[si] = Some(set);
                worklist.push(si);
            }
        }
    }

    // Report in source order, against the fixpoint.
    for (bi, b) in f.blocks.iter().enumerate() {
        let Some(entry_set) = &ins[bi] else { continue };
        let mut assigned = entry_set.clone();
        for (i, instr) in b.instrs.iter().enumerate() {
            for r in instr.reads() {
                if !assigned.contains(r) {
                    diag(
                        diags,
                        Coord::new(&f.name, &b.label, i),
                        format!("register `{r}` may be read before assignment"),
                    );
                }
            }
            if let Some(w) = instr.writes() {
                assigned.insert(w.to_string());
            }
        }
    }
}
