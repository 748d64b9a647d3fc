//! Parse MVIR text into a `Program`, round-trip it back to canonical
//! text, and show what the validator catches on a malformed variant.
//!
//!     cargo run --example parse_and_validate

use malverse::ir::validate::validate;
use malverse::ir::Program;

const SNIPPET: &str = r#"
; A tiny two-arm program: branch on an external probe.
fn main() {
entry:
  zero = const 0
  t = call probe(zero)
  hot = cmp ne t, zero
  br hot, yes, no
yes:
  msg = cstr "probe fired\n"
  n = call printf(msg)
  ret n
no:
  ret zero
}
"#;

fn main() {
    // Parse and inspect the structure.
    let program = Program::parse(SNIPPET).expect("snippet parses");
    println!("functions: {}", program.functions.len());
    for f in &program.functions {
        println!(
            "  fn {}({}) — {} block(s), {} instruction(s)",
            f.name,
            f.params.join(", "),
            f.blocks.len(),
            f.blocks.iter().map(|b| b.instrs.len()).sum::<usize>()
        );
    }
    println!(
        "string table: {:?}",
        program
            .string_table
            .iter()
            .map(|s| String::from_utf8_lossy(s).into_owned())
            .collect::<Vec<_>>()
    );

    // The canonical text form is itself parseable: a stable round-trip.
    let canon = program.to_text();
    let again = Program::parse(&canon).expect("canonical text parses");
    assert_eq!(program, again);
    println!("\ncanonical form round-trips; first lines:");
    for line in canon.lines().take(6) {
        println!("  {line}");
    }

    // A clean program produces no diagnostics.
    let issues = validate(&program);
    println!("\nvalidation issues on the clean program: {}", issues.len());

    // Break it: read a register assigned on only one incoming path, and
    // call an internal function with the wrong number of arguments.
    // Both are grammatical, so the parser accepts them and the deeper
    // checks in `validate` report them.
    let broken = r#"
fn main() {
entry:
  x = const 1
  br x, set, skip
set:
  y = const 2
  jmp join
skip:
  jmp join
join:
  z = add x, y
  w = call helper(x, z)
  ret w
}

fn helper(a) {
entry:
  ret a
}
"#;
    let program = Program::parse(broken).expect("still grammatical");
    println!("\nvalidator on the broken variant:");
    for issue in validate(&program) {
        println!("  {issue}");
    }

    // Outright grammar errors — including control flow to labels that
    // do not exist — surface as parse errors with coordinates.
    let err = Program::parse("fn main() {\nentry:\n  jmp nowhere\n}").unwrap_err();
    println!("\nparse error example: {err}");
}
