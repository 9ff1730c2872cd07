//! Instruction set of the mini-RISC guest machine.
//!
//! Sixteen 32-bit integer registers, `r0` hardwired to zero, `r14` used as the
//! stack pointer and `r15` as the link register by convention. Code lives in a
//! separate instruction store addressed by instruction index; data memory is
//! byte addressed with word-aligned accesses.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A 32-bit machine word. Arithmetic on words always wraps modulo 2^32.
pub type Word = u32;

pub const NUM_REGS: usize = 16;
pub const SP: Reg = Reg(14);
pub const LR: Reg = Reg(15);

/// Register index in `0..16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reg(pub u8);

impl Reg {
    pub fn new(index: u8) -> Option<Self> {
        (usize::from(index) < NUM_REGS).then_some(Reg(index))
    }

    #[inline]
    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    Divu,
    And,
    Or,
    Xor,
    Sll,
    Srl,
    Sra,
}

impl AluOp {
    pub const ALL: [AluOp; 10] = [
        AluOp::Add,
        AluOp::Sub,
        AluOp::Mul,
        AluOp::Divu,
        AluOp::And,
        AluOp::Or,
        AluOp::Xor,
        AluOp::Sll,
        AluOp::Srl,
        AluOp::Sra,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "ADD",
            AluOp::Sub => "SUB",
            AluOp::Mul => "MUL",
            AluOp::Divu => "DIVU",
            AluOp::And => "AND",
            AluOp::Or => "OR",
            AluOp::Xor => "XOR",
            AluOp::Sll => "SLL",
            AluOp::Srl => "SRL",
            AluOp::Sra => "SRA",
        }
    }

    /// Evaluates the operation; `None` only for division by zero.
    #[inline]
    pub fn eval(self, a: Word, b: Word) -> Option<Word> {
        Some(match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Mul => a.wrapping_mul(b),
            AluOp::Divu => return a.checked_div(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
            AluOp::Sll => a << (b & 31),
            AluOp::Srl => a >> (b & 31),
            AluOp::Sra => ((a as i32) >> (b & 31)) as u32,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchCond {
    Eq,
    Ne,
    /// Signed less-than.
    Lt,
}

impl BranchCond {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BranchCond::Eq => "BEQ",
            BranchCond::Ne => "BNE",
            BranchCond::Lt => "BLT",
        }
    }

    #[inline]
    pub fn holds(self, a: Word, b: Word) -> bool {
        match self {
            BranchCond::Eq => a == b,
            BranchCond::Ne => a != b,
            BranchCond::Lt => (a as i32) < (b as i32),
        }
    }
}

/// A decoded instruction. Branch and jump targets are absolute instruction
/// indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Instr {
    Alu { alu: AluOp, rd: Reg, rs1: Reg, rs2: Reg },
    /// `imm` is the sign-extended 16-bit immediate.
    Addi { rd: Reg, rs1: Reg, imm: i32 },
    Ldi { rd: Reg, imm: Word },
    Ld { rd: Reg, rs1: Reg, imm: i32 },
    St { rs2: Reg, rs1: Reg, imm: i32 },
    Branch { cond: BranchCond, rs1: Reg, rs2: Reg, target: u32 },
    Jal { rd: Reg, target: u32 },
    Jr { rs1: Reg },
    Out { rs1: Reg },
    Halt,
}

impl Instr {
    /// Static branch/jump target, if the instruction has one.
    pub fn target(&self) -> Option<u32> {
        match *self {
            Instr::Branch { target, .. } | Instr::Jal { target, .. } => Some(target),
            _ => None,
        }
    }
}

/// Range of a sign-extended 16-bit immediate.
pub const IMM16_MIN: i64 = i16::MIN as i64;
pub const IMM16_MAX: i64 = i16::MAX as i64;
