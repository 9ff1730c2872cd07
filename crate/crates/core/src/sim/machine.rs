use serde::{Deserialize, Serialize};

use super::cache::{Cache, CacheConfig};
use super::counters::{Counter, PmuCounters};
use super::isa::{AluOp, Instr, Reg, Word, LR, NUM_REGS, SP};
use crate::asm::Program;

/// Machine-level configuration shared by every run of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    /// Data memory size in bytes (multiple of 4).
    pub mem_size: usize,
    pub icache: CacheConfig,
    pub dcache: CacheConfig,
    /// Maximum number of words the OUT port accepts before trapping.
    pub output_capacity: usize,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            mem_size: 64 * 1024,
            icache: CacheConfig::default(),
            dcache: CacheConfig::default(),
            output_capacity: 4096,
        }
    }
}

/// Initialized memory words placed at `base` before the program starts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputImage {
    pub base: u32,
    pub words: Vec<Word>,
}

impl InputImage {
    pub fn empty() -> Self {
        Self {
            base: 0,
            words: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trap {
    Misaligned { addr: u32 },
    OutOfBounds { addr: u32 },
    DivideByZero,
    JumpOutOfProgram { target: u32 },
    PcOutOfBounds { pc: u32 },
    OutputOverflow,
}

impl Trap {
    fn code(self) -> (u8, u32) {
        match self {
            Trap::Misaligned { addr } => (1, addr),
            Trap::OutOfBounds { addr } => (2, addr),
            Trap::DivideByZero => (3, 0),
            Trap::JumpOutOfProgram { target } => (4, target),
            Trap::PcOutOfBounds { pc } => (5, pc),
            Trap::OutputOverflow => (6, 0),
        }
    }

    fn from_code(code: u8, payload: u32) -> Option<Self> {
        Some(match code {
            1 => Trap::Misaligned { addr: payload },
            2 => Trap::OutOfBounds { addr: payload },
            3 => Trap::DivideByZero,
            4 => Trap::JumpOutOfProgram { target: payload },
            5 => Trap::PcOutOfBounds { pc: payload },
            6 => Trap::OutputOverflow,
            _ => return None,
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("memory size {0} is not a positive multiple of 4")]
    BadMemorySize(usize),
    #[error("{what} [{start:#x}, {end:#x}) does not fit in {mem_size} bytes of memory")]
    DoesNotFit {
        what: &'static str,
        start: u64,
        end: u64,
        mem_size: usize,
    },
    #[error("{what} base {base:#x} is not word aligned")]
    Misaligned { what: &'static str, base: u32 },
    #[error("invalid cache geometry")]
    BadCache,
    #[error("entry point {entry} outside program of {len} instructions")]
    BadEntry { entry: u32, len: usize },
}

/// Full architectural state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineState {
    pub pc: u32,
    pub regs: [Word; NUM_REGS],
    pub mem: Vec<u8>,
    pub output: Vec<Word>,
    pub tick: u64,
    pub halted: bool,
    pub trap: Option<Trap>,
}

/// A checkpoint is a value copy of the machine state.
pub type Checkpoint = MachineState;

const CHECKPOINT_MAGIC: &[u8; 4] = b"PMCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed checkpoint: {0}")]
pub struct CheckpointDecodeError(&'static str);

impl MachineState {
    /// Reset state: data segment and input loaded, `sp` at the top of memory,
    /// every other register zero.
    pub fn boot(
        program: &Program,
        input: &InputImage,
        config: &MachineConfig,
    ) -> Result<Self, LoadError> {
        if config.mem_size == 0 || !config.mem_size.is_multiple_of(4) || config.mem_size > u32::MAX as usize
        {
            return Err(LoadError::BadMemorySize(config.mem_size));
        }
        if !config.icache.is_valid() || !config.dcache.is_valid() {
            return Err(LoadError::BadCache);
        }
        if program.entry as usize >= program.instructions.len() {
            return Err(LoadError::BadEntry {
                entry: program.entry,
                len: program.instructions.len(),
            });
        }
        let mut mem = vec![0u8; config.mem_size];
        place(&mut mem, "data segment", program.data_base, &program.data)?;
        place(&mut mem, "input image", input.base, &input.words)?;
        let mut regs = [0; NUM_REGS];
        regs[SP.index()] = config.mem_size as Word;
        Ok(Self {
            pc: program.entry,
            regs,
            mem,
            output: Vec::new(),
            tick: 0,
            halted: false,
            trap: None,
        })
    }

    pub fn reg(&self, reg: Reg) -> Word {
        self.regs[reg.index()]
    }

    /// Reads an aligned word; `None` when out of range or misaligned.
    pub fn load_word(&self, addr: u32) -> Option<Word> {
        let a = addr as usize;
        if !addr.is_multiple_of(4) || a + 4 > self.mem.len() {
            return None;
        }
        Some(u32::from_le_bytes(self.mem[a..a + 4].try_into().unwrap()))
    }

    /// Canonical little-endian serialization with fields in fixed order:
    /// magic, version, tick, pc, halted, trap code + payload, registers,
    /// output length + words, memory length + bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.mem.len() + 4 * self.output.len() + 128);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.tick.to_le_bytes());
        out.extend_from_slice(&self.pc.to_le_bytes());
        out.push(u8::from(self.halted));
        let (code, payload) = self.trap.map_or((0, 0), Trap::code);
        out.push(code);
        out.extend_from_slice(&payload.to_le_bytes());
        for r in &self.regs {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out.extend_from_slice(&(self.output.len() as u32).to_le_bytes());
        for w in &self.output {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&(self.mem.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.mem);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointDecodeError> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(CheckpointDecodeError("bad magic"));
        }
        if r.u32()? != CHECKPOINT_VERSION {
            return Err(CheckpointDecodeError("unsupported version"));
        }
        let tick = r.u64()?;
        let pc = r.u32()?;
        let halted = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(CheckpointDecodeError("bad halted flag")),
        };
        let code = r.u8()?;
        let payload = r.u32()?;
        let trap = match code {
            0 => None,
            c => Some(Trap::from_code(c, payload).ok_or(CheckpointDecodeError("bad trap"))?),
        };
        let mut regs = [0; NUM_REGS];
        for reg in &mut regs {
            *reg = r.u32()?;
        }
        let out_len = r.u32()? as usize;
        let output = (0..out_len).map(|_| r.u32()).collect::<Result<_, _>>()?;
        let mem_len = r.u32()? as usize;
        let mem = r.take(mem_len)?.to_vec();
        if r.pos != bytes.len() {
            return Err(CheckpointDecodeError("trailing bytes"));
        }
        Ok(Self {
            pc,
            regs,
            mem,
            output,
            tick,
            halted,
            trap,
        })
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointDecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointDecodeError("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointDecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointDecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointDecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn place(mem: &mut [u8], what: &'static str, base: u32, words: &[Word]) -> Result<(), LoadError> {
    if words.is_empty() {
        return Ok(());
    }
    if !base.is_multiple_of(4) {
        return Err(LoadError::Misaligned { what, base });
    }
    let start = u64::from(base);
    let end = start + 4 * words.len() as u64;
    if end > mem.len() as u64 {
        return Err(LoadError::DoesNotFit {
            what,
            start,
            end,
            mem_size: mem.len(),
        });
    }
    for (i, w) in words.iter().enumerate() {
        let a = base as usize + 4 * i;
        mem[a..a + 4].copy_from_slice(&w.to_le_bytes());
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Space {
    Inst = 0,
    Data = 1,
}

/// An executing machine: architectural state plus the instrumented memory
/// hierarchy and its counters.
#[derive(Debug, Clone)]
pub struct Machine<'p> {
    program: &'p Program,
    pub state: MachineState,
    counters: PmuCounters,
    icache: Cache,
    dcache: Cache,
    open_row: Option<u64>,
    output_capacity: usize,
}

impl<'p> Machine<'p> {
    pub fn new(
        program: &'p Program,
        input: &InputImage,
        config: &MachineConfig,
    ) -> Result<Self, LoadError> {
        Ok(Self {
            program,
            state: MachineState::boot(program, input, config)?,
            counters: PmuCounters::new(),
            icache: Cache::new(config.icache),
            dcache: Cache::new(config.dcache),
            open_row: None,
            output_capacity: config.output_capacity,
        })
    }

    pub fn counters(&self) -> &PmuCounters {
        &self.counters
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    /// Executes exactly one instruction. A halted machine is left untouched.
    pub fn step(&mut self) {
        if self.state.halted {
            return;
        }
        let pc = self.state.pc;
        let Some(&instr) = self.program.instructions.get(pc as usize) else {
            self.raise(Trap::PcOutOfBounds { pc });
            return;
        };
        self.state.tick += 1;
        self.counters.bump(Counter::NumCycles);
        self.fetch(pc);
        match self.exec_instr(instr) {
            Ok(next) => {
                self.counters.bump(Counter::CommittedInsts);
                self.counters.bump(Counter::CommittedOps);
                if let Some(next) = next {
                    self.state.pc = next;
                } else {
                    self.state.pc = pc.wrapping_add(1);
                }
            }
            Err(trap) => self.raise(trap),
        }
    }

    fn raise(&mut self, trap: Trap) {
        self.state.trap = Some(trap);
        self.state.halted = true;
    }

    #[inline]
    fn read(&mut self, reg: Reg) -> Word {
        self.counters.bump(Counter::IntRegReads);
        self.state.regs[reg.index()]
    }

    #[inline]
    fn write(&mut self, reg: Reg, value: Word) {
        if !reg.is_zero() {
            self.counters.bump(Counter::IntRegWrites);
            self.state.regs[reg.index()] = value;
        }
    }

    fn jump_target(&self, target: u32) -> Result<Option<u32>, Trap> {
        if (target as usize) < self.program.instructions.len() {
            Ok(Some(target))
        } else {
            Err(Trap::JumpOutOfProgram { target })
        }
    }

    /// Returns the next pc when it differs from pc + 1.
    fn exec_instr(&mut self, instr: Instr) -> Result<Option<u32>, Trap> {
        use Counter::*;
        let c = &mut self.counters;
        match instr {
            Instr::Alu { alu, rd, rs1, rs2 } => {
                let a = self.read(rs1);
                let b = self.read(rs2);
                self.counters.bump(IntAluAccesses);
                self.counters.bump(match alu {
                    AluOp::Mul => OpIntMult,
                    AluOp::Divu => OpIntDiv,
                    AluOp::Sll | AluOp::Srl | AluOp::Sra => {
                        OpShift
                    }
                    _ => OpIntAlu,
                });
                let v = alu.eval(a, b).ok_or(Trap::DivideByZero)?;
                self.write(rd, v);
                Ok(None)
            }
            Instr::Addi { rd, rs1, imm } => {
                let a = self.read(rs1);
                self.counters.bump(IntAluAccesses);
                self.counters.bump(ImmOperands);
                self.counters.bump(OpIntAlu);
                self.write(rd, a.wrapping_add(imm as u32));
                Ok(None)
            }
            Instr::Ldi { rd, imm } => {
                c.bump(ImmOperands);
                c.bump(OpIntAlu);
                // A 32-bit immediate is materialized as two micro-ops.
                c.bump(CommittedOps);
                self.write(rd, imm);
                Ok(None)
            }
            Instr::Ld { rd, rs1, imm } => {
                let base = self.read(rs1);
                let addr = self.data_addr(base, imm)?;
                self.count_mem_ref(rs1, OpMemRead, NumLoads);
                self.dcache_access(addr, false);
                let v = self.state.load_word(addr).expect("address checked");
                self.write(rd, v);
                Ok(None)
            }
            Instr::St { rs2, rs1, imm } => {
                let value = self.read(rs2);
                let base = self.read(rs1);
                let addr = self.data_addr(base, imm)?;
                self.count_mem_ref(rs1, OpMemWrite, NumStores);
                self.dcache_access(addr, true);
                let a = addr as usize;
                self.state.mem[a..a + 4].copy_from_slice(&value.to_le_bytes());
                Ok(None)
            }
            Instr::Branch {
                cond,
                rs1,
                rs2,
                target,
            } => {
                let a = self.read(rs1);
                let b = self.read(rs2);
                self.counters.bump(NumBranches);
                self.counters.bump(OpBranch);
                if cond.holds(a, b) {
                    self.counters.bump(BranchesTaken);
                    self.jump_target(target)
                } else {
                    self.counters.bump(BranchesNotTaken);
                    Ok(None)
                }
            }
            Instr::Jal { rd, target } => {
                c.bump(NumJumps);
                c.bump(OpJump);
                if rd == LR {
                    c.bump(NumFuncCalls);
                }
                let next = self.jump_target(target)?;
                self.write(rd, self.state.pc.wrapping_add(1));
                Ok(next)
            }
            Instr::Jr { rs1 } => {
                let target = self.read(rs1);
                self.counters.bump(NumJumps);
                self.counters.bump(NumIndirectJumps);
                self.counters.bump(OpJump);
                if rs1 == LR {
                    self.counters.bump(NumReturns);
                }
                self.jump_target(target)
            }
            Instr::Out { rs1 } => {
                let v = self.read(rs1);
                if self.state.output.len() >= self.output_capacity {
                    return Err(Trap::OutputOverflow);
                }
                self.counters.bump(OpIo);
                self.counters.bump(IobusWrites);
                self.counters.add(IobusBytes, 4);
                if v == 0 {
                    self.counters.bump(IobusZeroWords);
                }
                if (v as i32) < 0 {
                    self.counters.bump(IobusNegativeWords);
                }
                self.state.output.push(v);
                Ok(None)
            }
            Instr::Halt => {
                c.bump(OpNop);
                self.state.halted = true;
                Ok(None)
            }
        }
    }

    fn data_addr(&self, base: Word, imm: i32) -> Result<u32, Trap> {
        let addr = base.wrapping_add(imm as u32);
        if !addr.is_multiple_of(4) {
            Err(Trap::Misaligned { addr })
        } else if addr as usize + 4 > self.state.mem.len() {
            Err(Trap::OutOfBounds { addr })
        } else {
            Ok(addr)
        }
    }

    fn count_mem_ref(&mut self, base: Reg, class: Counter, kind: Counter) {
        self.counters.bump(Counter::ImmOperands);
        self.counters.bump(class);
        self.counters.bump(kind);
        self.counters.bump(Counter::NumMemRefs);
        if base == SP {
            self.counters.bump(Counter::NumStackRefs);
        }
    }

    fn fetch(&mut self, pc: u32) {
        use Counter::*;
        let addr = pc.wrapping_mul(4);
        let access = self.icache.access(addr, false);
        self.counters.bump(IcacheReadAccesses);
        if access.hit {
            self.counters.bump(IcacheReadHits);
            return;
        }
        self.counters.bump(IcacheReadMisses);
        if access.replaced {
            self.counters.bump(IcacheReplacements);
        }
        self.bus_read(addr, Space::Inst);
    }

    fn dcache_access(&mut self, addr: u32, write: bool) {
        use Counter::*;
        let access = self.dcache.access(addr, write);
        self.counters.bump(DcacheOverallAccesses);
        let (accesses, hits, misses) = if write {
            (DcacheWriteAccesses, DcacheWriteHits, DcacheWriteMisses)
        } else {
            (DcacheReadAccesses, DcacheReadHits, DcacheReadMisses)
        };
        self.counters.bump(accesses);
        if access.hit {
            self.counters.bump(hits);
            return;
        }
        self.counters.bump(misses);
        self.counters.bump(DcacheOverallMisses);
        if access.replaced {
            self.counters.bump(DcacheReplacements);
        }
        if let Some(victim) = access.writeback {
            self.counters.bump(DcacheWritebacks);
            self.bus_write(victim);
        }
        self.bus_read(addr, Space::Data);
    }

    fn bus_read(&mut self, addr: u32, space: Space) {
        use Counter::*;
        let bytes = u64::from(match space {
            Space::Inst => self.icache.config().line_bytes(),
            Space::Data => self.dcache.config().line_bytes(),
        });
        let c = &mut self.counters;
        c.bump(MembusTransactions);
        c.bump(MembusReadReqs);
        c.add(MembusBytes, bytes);
        c.add(MembusBytesRead, bytes);
        c.bump(MemCtrlsReads);
        c.add(MemCtrlsBytesRead, bytes);
        match space {
            Space::Inst => {
                c.bump(MembusIcacheReqs);
                c.bump(MemCtrlsInstReads);
            }
            Space::Data => {
                c.bump(MembusDcacheReqs);
                c.bump(MemCtrlsDataReads);
            }
        }
        self.touch_row(addr, space);
    }

    fn bus_write(&mut self, addr: u32) {
        use Counter::*;
        let bytes = u64::from(self.dcache.config().line_bytes());
        let c = &mut self.counters;
        c.bump(MembusTransactions);
        c.bump(MembusWriteReqs);
        c.add(MembusBytes, bytes);
        c.add(MembusBytesWritten, bytes);
        c.bump(MembusDcacheReqs);
        c.bump(MemCtrlsWrites);
        c.add(MemCtrlsBytesWritten, bytes);
        self.touch_row(addr, Space::Data);
    }

    /// Single open-row DRAM model with 1 KiB rows.
    fn touch_row(&mut self, addr: u32, space: Space) {
        let row = ((space as u64) << 32) | u64::from(addr >> 10);
        if self.open_row == Some(row) {
            self.counters.bump(Counter::MemCtrlsRowHits);
        } else {
            self.counters.bump(Counter::MemCtrlsRowMisses);
            self.open_row = Some(row);
        }
    }
}
