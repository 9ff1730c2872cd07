//! Two-pass assembler for the guest ISA.
//!
//! One statement per line; `;` starts a comment. Labels are `name:` and may
//! precede a statement on the same line. `.text` and `.data` switch sections;
//! `.word v, v, ...` emits initialized data words. Mnemonics and register
//! names are case-insensitive, labels are case-sensitive. `docs/asm.md` has the
//! full grammar.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::sim::isa::{AluOp, BranchCond, Instr, Reg, Word, IMM16_MAX, IMM16_MIN};

/// Base address of the data segment.
pub const DATA_BASE: u32 = 0x0100;
/// The data segment must end at or below this address; the benchmark input
/// image starts here.
pub const DATA_LIMIT: u32 = 0x1000;
/// Label that selects the entry point when present.
pub const ENTRY_LABEL: &str = "start";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Text,
    Data,
}

/// A label: instruction index for `Text`, byte address for `Data`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symbol {
    pub section: Section,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub instructions: Vec<Instr>,
    pub data_base: u32,
    pub data: Vec<Word>,
    pub entry: u32,
    pub symbols: BTreeMap<String, Symbol>,
}

impl Program {
    /// Canonical JSON form emitted by the `asm` subcommand.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    /// Code labels by instruction index.
    fn code_labels(&self) -> BTreeMap<u32, Vec<&str>> {
        let mut map: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
        for (name, sym) in &self.symbols {
            if sym.section == Section::Text {
                map.entry(sym.value).or_default().push(name);
            }
        }
        map
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AsmErrorKind {
    UnknownMnemonic,
    RegisterOutOfRange,
    DuplicateLabel,
    UndefinedLabel,
    ImmediateOverflow,
    SyntaxError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsmError {
    /// 1-based source line.
    pub line: usize,
    pub kind: AsmErrorKind,
    pub message: String,
}

impl fmt::Display for AsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {:?}: {}", self.line, self.kind, self.message)
    }
}

/// All errors from one failed assembly.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} assembly error(s); first: {}", .0.len(), .0[0])]
pub struct AsmErrors(pub Vec<AsmError>);

fn err(line: usize, kind: AsmErrorKind, message: impl Into<String>) -> AsmError {
    AsmError {
        line,
        kind,
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
enum Operand {
    Reg(Reg),
    Imm(i64),
    Label(String),
}

#[derive(Debug)]
struct PendingInstr {
    line: usize,
    mnemonic: Mnemonic,
    operands: Vec<Operand>,
}

#[derive(Debug, Clone, Copy)]
enum Mnemonic {
    Alu(AluOp),
    Addi,
    Ldi,
    Ld,
    St,
    Branch(BranchCond),
    Jal,
    Jr,
    Out,
    Halt,
}

impl Mnemonic {
    fn parse(s: &str) -> Option<Self> {
        let upper = s.to_ascii_uppercase();
        if let Some(op) = AluOp::ALL.into_iter().find(|op| op.mnemonic() == upper) {
            return Some(Mnemonic::Alu(op));
        }
        Some(match upper.as_str() {
            "ADDI" => Mnemonic::Addi,
            "LDI" => Mnemonic::Ldi,
            "LD" => Mnemonic::Ld,
            "ST" => Mnemonic::St,
            "BEQ" => Mnemonic::Branch(BranchCond::Eq),
            "BNE" => Mnemonic::Branch(BranchCond::Ne),
            "BLT" => Mnemonic::Branch(BranchCond::Lt),
            "JAL" => Mnemonic::Jal,
            "JR" => Mnemonic::Jr,
            "OUT" => Mnemonic::Out,
            "HALT" => Mnemonic::Halt,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Mnemonic::Alu(_) | Mnemonic::Addi | Mnemonic::Ld | Mnemonic::St => 3,
            Mnemonic::Branch(_) => 3,
            Mnemonic::Ldi | Mnemonic::Jal => 2,
            Mnemonic::Jr | Mnemonic::Out => 1,
            Mnemonic::Halt => 0,
        }
    }
}

fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_number(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse::<i64>().ok()?
    } else {
        return None;
    };
    Some(if neg { -magnitude } else { magnitude })
}

fn parse_operand(line: usize, text: &str) -> Result<Operand, AsmError> {
    let lower = text.to_ascii_lowercase();
    match lower.as_str() {
        "sp" => return Ok(Operand::Reg(Reg(14))),
        "lr" => return Ok(Operand::Reg(Reg(15))),
        "zero" => return Ok(Operand::Reg(Reg(0))),
        _ => {}
    }
    if let Some(digits) = lower.strip_prefix('r') {
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            return match digits.parse::<u32>() {
                Ok(n) if n < 16 => Ok(Operand::Reg(Reg(n as u8))),
                _ => Err(err(
                    line,
                    AsmErrorKind::RegisterOutOfRange,
                    format!("register `{text}` is not one of r0..r15"),
                )),
            };
        }
    }
    if let Some(n) = parse_number(text) {
        return Ok(Operand::Imm(n));
    }
    if text.starts_with(|c: char| c.is_ascii_digit() || c == '-') {
        return Err(err(line, AsmErrorKind::SyntaxError, format!("malformed number `{text}`")));
    }
    if is_label(text) {
        return Ok(Operand::Label(text.to_string()));
    }
    Err(err(line, AsmErrorKind::SyntaxError, format!("malformed operand `{text}`")))
}

fn split_operands(rest: &str) -> Vec<&str> {
    if rest.trim().is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    }
}

/// Assembles `source`. On failure every detected error is returned.
pub fn assemble(source: &str) -> Result<Program, AsmErrors> {
    let mut errors = Vec::new();
    let mut symbols: BTreeMap<String, Symbol> = BTreeMap::new();
    let mut pending = Vec::new();
    let mut data: Vec<Word> = Vec::new();
    let mut section = Section::Text;
    let mut last_line = 1;

    // Pass 1: parse statements, assign label values.
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let mut text = raw.split(';').next().unwrap_or("").trim();
        while let Some(colon) = text.find(':') {
            let name = text[..colon].trim();
            if !is_label(name) {
                break;
            }
            let value = match section {
                Section::Text => pending.len() as u32,
                Section::Data => DATA_BASE + 4 * data.len() as u32,
            };
            if symbols.contains_key(name) {
                errors.push(err(line, AsmErrorKind::DuplicateLabel, format!("label `{name}` defined twice")));
            } else {
                symbols.insert(name.to_string(), Symbol { section, value });
            }
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let (head, rest) = match text.find(char::is_whitespace) {
            Some(i) => (&text[..i], &text[i..]),
            None => (text, ""),
        };
        if head.starts_with('.') {
            match head.to_ascii_lowercase().as_str() {
                ".text" | ".data" if !rest.trim().is_empty() => {
                    errors.push(err(line, AsmErrorKind::SyntaxError, format!("`{head}` takes no operands")));
                }
                ".text" => section = Section::Text,
                ".data" => section = Section::Data,
                ".word" => {
                    if section != Section::Data {
                        errors.push(err(line, AsmErrorKind::SyntaxError, "`.word` outside the .data section"));
                        continue;
                    }
                    let items = split_operands(rest);
                    if items.is_empty() {
                        errors.push(err(line, AsmErrorKind::SyntaxError, "`.word` needs at least one value"));
                    }
                    for item in items {
                        match parse_number(item) {
                            Some(v) if (i32::MIN as i64..=u32::MAX as i64).contains(&v) => data.push(v as u32),
                            Some(v) => errors.push(err(line, AsmErrorKind::ImmediateOverflow, format!("`{v}` does not fit in 32 bits"))),
                            None => errors.push(err(line, AsmErrorKind::SyntaxError, format!("`.word` value `{item}` is not a number"))),
                        }
                    }
                }
                _ => errors.push(err(line, AsmErrorKind::SyntaxError, format!("unknown directive `{head}`"))),
            }
            continue;
        }
        let Some(mnemonic) = Mnemonic::parse(head) else {
            errors.push(err(line, AsmErrorKind::UnknownMnemonic, format!("unknown mnemonic `{head}`")));
            continue;
        };
        if section != Section::Text {
            errors.push(err(line, AsmErrorKind::SyntaxError, "instruction inside the .data section"));
            continue;
        }
        let texts = split_operands(rest);
        if texts.len() != mnemonic.arity() {
            errors.push(err(
                line,
                AsmErrorKind::SyntaxError,
                format!("`{head}` takes {} operand(s), found {}", mnemonic.arity(), texts.len()),
            ));
            // Keep instruction numbering stable so later labels stay correct.
            pending.push(PendingInstr { line, mnemonic, operands: Vec::new() });
            continue;
        }
        let mut operands = Vec::with_capacity(texts.len());
        let mut ok = true;
        for t in texts {
            match parse_operand(line, t) {
                Ok(op) => operands.push(op),
                Err(e) => {
                    errors.push(e);
                    ok = false;
                }
            }
        }
        if !ok {
            operands.clear();
        }
        pending.push(PendingInstr { line, mnemonic, operands });
    }

    if DATA_BASE as u64 + 4 * data.len() as u64 > DATA_LIMIT as u64 {
        errors.push(err(
            last_line,
            AsmErrorKind::SyntaxError,
            format!("data segment of {} words overflows {DATA_BASE:#x}..{DATA_LIMIT:#x}", data.len()),
        ));
    }
    if pending.is_empty() {
        errors.push(err(last_line, AsmErrorKind::SyntaxError, "program has no instructions"));
    }

    // Pass 2: encode.
    let n_instr = pending.len() as u32;
    let mut instructions = Vec::with_capacity(pending.len());
    for p in &pending {
        if p.operands.len() != p.mnemonic.arity() {
            instructions.push(Instr::Halt);
            continue;
        }
        match encode(p, &symbols, n_instr) {
            Ok(i) => instructions.push(i),
            Err(e) => {
                errors.push(e);
                instructions.push(Instr::Halt);
            }
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(AsmErrors(errors));
    }
    let entry = match symbols.get(ENTRY_LABEL) {
        Some(Symbol { section: Section::Text, value }) if *value < n_instr => *value,
        _ => 0,
    };
    Ok(Program {
        instructions,
        data_base: DATA_BASE,
        data,
        entry,
        symbols,
    })
}

fn encode(p: &PendingInstr, symbols: &BTreeMap<String, Symbol>, n_instr: u32) -> Result<Instr, AsmError> {
    let line = p.line;
    let reg = |i: usize| match &p.operands[i] {
        Operand::Reg(r) => Ok(*r),
        other => Err(err(line, AsmErrorKind::SyntaxError, format!("operand {} must be a register, found {other:?}", i + 1))),
    };
    let imm16 = |i: usize| match &p.operands[i] {
        Operand::Imm(v) if (IMM16_MIN..=IMM16_MAX).contains(v) => Ok(*v as i32),
        Operand::Imm(v) => Err(err(line, AsmErrorKind::ImmediateOverflow, format!("`{v}` does not fit in a signed 16-bit immediate"))),
        other => Err(err(line, AsmErrorKind::SyntaxError, format!("operand {} must be an immediate, found {other:?}", i + 1))),
    };
    let code_target = |i: usize| match &p.operands[i] {
        Operand::Label(name) => match symbols.get(name) {
            None => Err(err(line, AsmErrorKind::UndefinedLabel, format!("undefined label `{name}`"))),
            Some(Symbol { section: Section::Text, value }) if *value < n_instr => Ok(*value),
            Some(_) => Err(err(line, AsmErrorKind::SyntaxError, format!("label `{name}` does not name an instruction"))),
        },
        other => Err(err(line, AsmErrorKind::SyntaxError, format!("operand {} must be a label, found {other:?}", i + 1))),
    };
    Ok(match p.mnemonic {
        Mnemonic::Alu(alu) => Instr::Alu { alu, rd: reg(0)?, rs1: reg(1)?, rs2: reg(2)? },
        Mnemonic::Addi => Instr::Addi { rd: reg(0)?, rs1: reg(1)?, imm: imm16(2)? },
        Mnemonic::Ld => Instr::Ld { rd: reg(0)?, rs1: reg(1)?, imm: imm16(2)? },
        Mnemonic::St => Instr::St { rs2: reg(0)?, rs1: reg(1)?, imm: imm16(2)? },
        Mnemonic::Ldi => {
            let imm = match &p.operands[1] {
                Operand::Imm(v) if (i32::MIN as i64..=u32::MAX as i64).contains(v) => *v as u32,
                Operand::Imm(v) => return Err(err(line, AsmErrorKind::ImmediateOverflow, format!("`{v}` does not fit in 32 bits"))),
                Operand::Label(name) => symbols
                    .get(name)
                    .map(|s| s.value)
                    .ok_or_else(|| err(line, AsmErrorKind::UndefinedLabel, format!("undefined label `{name}`")))?,
                Operand::Reg(_) => return Err(err(line, AsmErrorKind::SyntaxError, "LDI takes an immediate or label")),
            };
            Instr::Ldi { rd: reg(0)?, imm }
        }
        Mnemonic::Branch(cond) => Instr::Branch { cond, rs1: reg(0)?, rs2: reg(1)?, target: code_target(2)? },
        Mnemonic::Jal => Instr::Jal { rd: reg(0)?, target: code_target(1)? },
        Mnemonic::Jr => Instr::Jr { rs1: reg(0)? },
        Mnemonic::Out => Instr::Out { rs1: reg(0)? },
        Mnemonic::Halt => Instr::Halt,
    })
}

/// Renders a program as source text that assembles back to the same program.
pub fn disassemble(program: &Program) -> String {
    let mut labels = program.code_labels();
    // Unlabeled targets (hand-built programs) get synthetic names.
    for instr in &program.instructions {
        if let Some(t) = instr.target() {
            labels.entry(t).or_default();
        }
    }
    let mut synthetic = BTreeMap::new();
    for (idx, names) in &labels {
        if names.is_empty() {
            synthetic.insert(*idx, format!("__L{idx}"));
        }
    }
    let target_name = |t: u32| -> String {
        labels
            .get(&t)
            .and_then(|names| names.first().map(|s| s.to_string()))
            .or_else(|| synthetic.get(&t).cloned())
            .expect("every target has a name")
    };

    let mut out = String::new();
    let emit_labels = |out: &mut String, idx: u32| {
        if let Some(names) = labels.get(&idx) {
            for name in names {
                let _ = writeln!(out, "{name}:");
            }
        }
        if let Some(name) = synthetic.get(&idx) {
            let _ = writeln!(out, "{name}:");
        }
    };
    for (idx, instr) in program.instructions.iter().enumerate() {
        emit_labels(&mut out, idx as u32);
        let text = match *instr {
            Instr::Alu { alu, rd, rs1, rs2 } => format!("{} {rd}, {rs1}, {rs2}", alu.mnemonic()),
            Instr::Addi { rd, rs1, imm } => format!("ADDI {rd}, {rs1}, {imm}"),
            Instr::Ldi { rd, imm } => format!("LDI {rd}, {imm:#x}"),
            Instr::Ld { rd, rs1, imm } => format!("LD {rd}, {rs1}, {imm}"),
            Instr::St { rs2, rs1, imm } => format!("ST {rs2}, {rs1}, {imm}"),
            Instr::Branch { cond, rs1, rs2, target } => {
                format!("{} {rs1}, {rs2}, {}", cond.mnemonic(), target_name(target))
            }
            Instr::Jal { rd, target } => format!("JAL {rd}, {}", target_name(target)),
            Instr::Jr { rs1 } => format!("JR {rs1}"),
            Instr::Out { rs1 } => format!("OUT {rs1}"),
            Instr::Halt => "HALT".to_string(),
        };
        let _ = writeln!(out, "    {text}");
    }
    emit_labels(&mut out, program.instructions.len() as u32);

    let mut data_labels: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for (name, sym) in &program.symbols {
        if sym.section == Section::Data {
            data_labels.entry(sym.value).or_default().push(name);
        }
    }
    if !program.data.is_empty() || !data_labels.is_empty() {
        out.push_str(".data\n");
        let addr = |i: usize| program.data_base + 4 * i as u32;
        for (i, w) in program.data.iter().enumerate() {
            for name in data_labels.get(&addr(i)).into_iter().flatten() {
                let _ = writeln!(out, "{name}:");
            }
            let _ = writeln!(out, "    .word {w:#x}");
        }
        for name in data_labels.get(&addr(program.data.len())).into_iter().flatten() {
            let _ = writeln!(out, "{name}:");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(usize, AsmErrorKind)> {
        assemble(src).unwrap_err().0.iter().map(|e| (e.line, e.kind)).collect()
    }

    #[test]
    fn add_parses_to_one_instruction() {
        let p = assemble("ADD r1, r2, r3").unwrap();
        assert_eq!(
            p.instructions,
            vec![Instr::Alu { alu: AluOp::Add, rd: Reg(1), rs1: Reg(2), rs2: Reg(3) }]
        );
    }

    #[test]
    fn register_out_of_range() {
        assert_eq!(kinds("ADD r16, r0, r0"), vec![(1, AsmErrorKind::RegisterOutOfRange)]);
    }

    #[test]
    fn self_loop_resolves_to_own_index() {
        let p = assemble("loop: BEQ r1, r0, loop").unwrap();
        assert_eq!(p.instructions[0].target(), Some(0));
    }

    #[test]
    fn reports_every_error_with_line_numbers() {
        let src = "a: HALT\na: HALT\nFOO r1\nADDI r1, r1, 40000\nBEQ r1, r2, nowhere\nADD r1, r2\n";
        assert_eq!(
            kinds(src),
            vec![
                (2, AsmErrorKind::DuplicateLabel),
                (3, AsmErrorKind::UnknownMnemonic),
                (4, AsmErrorKind::ImmediateOverflow),
                (5, AsmErrorKind::UndefinedLabel),
                (6, AsmErrorKind::SyntaxError),
            ]
        );
    }

    #[test]
    fn case_insensitive_mnemonics_and_aliases() {
        let a = assemble("add r1, sp, LR\nhalt").unwrap();
        let b = assemble("ADD R1, r14, r15\nHALT").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn data_labels_are_byte_addresses() {
        let p = assemble(".data\nx: .word 1, 2\ny: .word -1\n.text\nstart: LDI r1, y\nHALT").unwrap();
        assert_eq!(p.data, vec![1, 2, u32::MAX]);
        assert_eq!(p.instructions[0], Instr::Ldi { rd: Reg(1), imm: DATA_BASE + 8 });
        assert_eq!(p.entry, 0);
    }

    #[test]
    fn entry_follows_start_label() {
        let p = assemble("HALT\nstart: HALT").unwrap();
        assert_eq!(p.entry, 1);
    }

    #[test]
    fn word_outside_data_and_instr_inside_data_rejected() {
        assert_eq!(kinds(".word 3\nHALT")[0].1, AsmErrorKind::SyntaxError);
        assert_eq!(kinds(".data\nHALT")[0].1, AsmErrorKind::SyntaxError);
    }

    #[test]
    fn ldi_accepts_full_32_bit_range() {
        let p = assemble("LDI r1, 0xFFFFFFFF\nLDI r2, -2147483648\nHALT").unwrap();
        assert_eq!(p.instructions[0], Instr::Ldi { rd: Reg(1), imm: u32::MAX });
        assert_eq!(p.instructions[1], Instr::Ldi { rd: Reg(2), imm: 0x8000_0000 });
        assert_eq!(kinds("LDI r1, 0x100000000\nHALT")[0].1, AsmErrorKind::ImmediateOverflow);
    }

    #[test]
    fn empty_source_is_an_error() {
        assert_eq!(kinds("; nothing\n"), vec![(1, AsmErrorKind::SyntaxError)]);
    }

    #[test]
    fn disassembly_round_trips() {
        let src = "start:\n  LDI r1, table\nloop: LD r2, r1, 0\n BNE r2, r0, loop\n JAL lr, f\n HALT\nf: JR r15\n.data\ntable: .word 0, 0x10\nend:\n";
        let p = assemble(src).unwrap();
        let again = assemble(&disassemble(&p)).unwrap();
        assert_eq!(again, p);
    }
}
