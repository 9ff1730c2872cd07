//! Deterministic, tick-counted emulator with an instrumented memory hierarchy.
//!
//! One tick is one executed instruction. Every instruction fetch goes
//! through a direct-mapped read-only icache; every `LD`/`ST` goes through a
//! write-back, write-allocate dcache. Misses and writebacks generate
//! `membus`/`mem_ctrls` traffic; `OUT` generates `iobus` traffic. See
//! `docs/counters.md` for the per-mnemonic counter table.

mod cache;
mod counters;
pub mod isa;
mod machine;
mod run;

pub use cache::{Access, Cache, CacheConfig};
pub use counters::{counter_catalog, CatalogEntry, Counter, CounterClass, PmuCounters, NUM_COUNTERS};
pub use machine::{
    Checkpoint, CheckpointDecodeError, InputImage, LoadError, Machine, MachineConfig, MachineState,
    Trap,
};
pub use run::{
    run, run_scheduled, CheckpointSchedule, DumpPlan, ExitStatus, RunTrace, ScheduleError, StatsDump,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    fn machine_for<'p>(program: &'p crate::asm::Program) -> Machine<'p> {
        Machine::new(program, &InputImage::empty(), &MachineConfig::default()).unwrap()
    }

    fn delta(before: &PmuCounters, after: &PmuCounters) -> Vec<(&'static str, u64)> {
        before
            .iter()
            .zip(after.iter())
            .filter(|(b, a)| a.1 != b.1)
            .map(|(b, a)| (a.0, a.1 - b.1))
            .collect()
    }

    #[test]
    fn add_updates_register_and_counters() {
        let p = assemble("LDI r2, 3\nLDI r3, 4\nADD r1, r2, r3\nHALT").unwrap();
        let mut m = machine_for(&p);
        m.step();
        m.step();
        let before = m.counters().clone();
        let tick = m.state.tick;
        m.step();
        assert_eq!(m.state.regs[1], 7);
        assert_eq!(m.state.tick, tick + 1);
        let d = delta(&before, m.counters());
        let get = |n: &str| d.iter().find(|(k, _)| *k == n).map(|x| x.1).unwrap_or(0);
        assert_eq!(get("cpu.committedInsts"), 1);
        assert_eq!(get("cpu.num_int_register_reads"), 2);
        assert_eq!(get("cpu.num_int_register_writes"), 1);
    }

    #[test]
    fn cold_load_misses_dcache_and_goes_to_memory() {
        // LD is in the same icache line as the preceding instruction, so only
        // the data side generates bus traffic.
        let p = assemble("LDI r2, 0x2000\nLD r1, r2, 0\nHALT").unwrap();
        let mut m = machine_for(&p);
        m.step();
        let before = m.counters().clone();
        m.step();
        let after = m.counters();
        let d = |c: Counter| after.get(c) - before.get(c);
        assert_eq!(d(Counter::NumLoads), 1);
        assert_eq!(d(Counter::DcacheReadAccesses), 1);
        assert_eq!(d(Counter::DcacheReadMisses), 1);
        assert_eq!(d(Counter::MembusTransactions), 1);
        assert_eq!(d(Counter::MemCtrlsReads), 1);
        assert_eq!(d(Counter::IcacheReadHits), 1);
    }

    #[test]
    fn divide_by_zero_traps_and_halts() {
        let p = assemble("LDI r2, 9\nDIVU r1, r2, r3\nHALT").unwrap();
        let mut m = machine_for(&p);
        m.step();
        m.step();
        assert_eq!(m.state.trap, Some(Trap::DivideByZero));
        assert!(m.state.halted);
        let frozen = m.state.clone();
        let counters = m.counters().clone();
        m.step();
        assert_eq!(m.state, frozen);
        assert_eq!(m.counters(), &counters);
    }

    #[test]
    fn memory_traps() {
        for (src, trap) in [
            ("LDI r1, 2\nLD r2, r1, 0\nHALT", Trap::Misaligned { addr: 2 }),
            ("LDI r1, 0x10000\nST r2, r1, 0\nHALT", Trap::OutOfBounds { addr: 0x10000 }),
            ("LDI r1, 99\nJR r1\nHALT", Trap::JumpOutOfProgram { target: 99 }),
        ] {
            let p = assemble(src).unwrap();
            let t = run(&p, &InputImage::empty(), &DumpPlan::final_only(), 100, &MachineConfig::default()).unwrap();
            assert_eq!(t.exit, ExitStatus::Trapped { trap }, "{src}");
        }
    }

    #[test]
    fn output_overflow_traps() {
        let p = assemble("loop: OUT r0\nJAL r0, loop").unwrap();
        let config = MachineConfig { output_capacity: 3, ..Default::default() };
        let t = run(&p, &InputImage::empty(), &DumpPlan::final_only(), 100, &config).unwrap();
        assert_eq!(t.exit, ExitStatus::Trapped { trap: Trap::OutputOverflow });
        assert_eq!(t.output().len(), 3);
    }

    #[test]
    fn r0_stays_zero() {
        let p = assemble("LDI r0, 5\nADDI r0, r0, 1\nJAL r0, next\nnext: HALT").unwrap();
        let t = run(&p, &InputImage::empty(), &DumpPlan::final_only(), 100, &MachineConfig::default()).unwrap();
        assert_eq!(t.final_checkpoint.regs[0], 0);
        assert_eq!(t.exit, ExitStatus::Halted);
    }

    #[test]
    fn single_halt_gives_one_dump() {
        let p = assemble("HALT").unwrap();
        let plan = CheckpointSchedule::Every(10).plan(1).unwrap();
        let t = run(&p, &InputImage::empty(), &plan, 100, &MachineConfig::default()).unwrap();
        assert_eq!(t.dumps.len(), 1);
        let s = t.final_stats();
        assert_eq!(s.get(Counter::CommittedInsts), 1);
        for c in Counter::ALL {
            if matches!(
                c.class(),
                CounterClass::CpuBranch | CounterClass::CpuRegfile | CounterClass::CpuMemops | CounterClass::CpuDcache | CounterClass::Iobus
            ) {
                assert_eq!(s.get(*c), 0, "{}", c.name());
            }
        }
    }

    #[test]
    fn hundred_tick_program_ten_checkpoints() {
        // 99 ADDIs then HALT: exactly 100 ticks.
        let src = format!("{}HALT\n", "ADDI r1, r1, 1\n".repeat(99));
        let p = assemble(&src).unwrap();
        let (t, plan) = run_scheduled(&p, &InputImage::empty(), CheckpointSchedule::Count(10), 1000, &MachineConfig::default()).unwrap();
        assert_eq!(plan.checkpoint_count(), 10);
        let ticks: Vec<u64> = t.dumps.iter().map(|d| d.tick).collect();
        assert_eq!(ticks, (1..=10).map(|i| i * 10).collect::<Vec<_>>());
        assert_eq!(t.final_checkpoint.tick, 100);
    }

    #[test]
    fn infinite_loop_exhausts_budget() {
        let p = assemble("loop: JAL r0, loop").unwrap();
        let t = run(&p, &InputImage::empty(), &DumpPlan::final_only(), 777, &MachineConfig::default()).unwrap();
        assert_eq!(t.exit, ExitStatus::BudgetExceeded);
        assert_eq!(t.ticks(), 777);
    }

    #[test]
    fn every_schedule_honours_reference_granularities() {
        for k in [10u64, 20, 50, 100] {
            let plan = CheckpointSchedule::Every(k).plan(1000).unwrap();
            assert_eq!(plan.checkpoint_count() as u64, 1000 / k);
            assert!(plan.ticks.iter().all(|t| t % k == 0));
        }
        assert_eq!(CheckpointSchedule::Every(0).plan(10), Err(ScheduleError::ZeroInterval));
        assert_eq!("every:20".parse::<CheckpointSchedule>(), Ok(CheckpointSchedule::Every(20)));
        assert_eq!("count:10".parse::<CheckpointSchedule>(), Ok(CheckpointSchedule::Count(10)));
    }

    #[test]
    fn checkpoint_bytes_round_trip() {
        let p = assemble("LDI r3, 7\nLDI r2, 0x40\nST r3, r2, 0\nOUT r3\nHALT").unwrap();
        let t = run(&p, &InputImage { base: 0x1000, words: vec![1, 2] }, &DumpPlan::final_only(), 100, &MachineConfig::default()).unwrap();
        let bytes = t.final_checkpoint.to_bytes();
        let back = MachineState::from_bytes(&bytes).unwrap();
        assert_eq!(back, t.final_checkpoint);
        assert_eq!(back.to_bytes(), bytes);
        assert!(MachineState::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn writeback_counted_only_for_dirty_victims() {
        // Two stores 256 bytes apart conflict in the 16-line dcache.
        let src = "LDI r1, 0x2000\nST r1, r1, 0\nLD r2, r1, 256\nLD r2, r1, 0\nHALT";
        let p = assemble(src).unwrap();
        let t = run(&p, &InputImage::empty(), &DumpPlan::final_only(), 100, &MachineConfig::default()).unwrap();
        let s = t.final_stats();
        assert_eq!(s.get(Counter::DcacheWritebacks), 1);
        assert_eq!(s.get(Counter::DcacheWriteMisses), 1);
        assert_eq!(s.get(Counter::DcacheReadMisses), 2);
        assert_eq!(s.get(Counter::MemCtrlsWrites), 1);
    }

    mod props {
        use super::*;
        use crate::sim::isa::{AluOp, BranchCond, Instr, Reg};
        use proptest::prelude::*;

        fn arb_instr(len: u32) -> impl Strategy<Value = Instr> {
            let reg = (0u8..16).prop_map(Reg);
            let target = 0..len;
            prop_oneof![
                (0usize..10, reg.clone(), reg.clone(), reg.clone())
                    .prop_map(|(i, rd, rs1, rs2)| Instr::Alu { alu: AluOp::ALL[i], rd, rs1, rs2 }),
                (reg.clone(), reg.clone(), -64i32..64).prop_map(|(rd, rs1, imm)| Instr::Addi { rd, rs1, imm }),
                (reg.clone(), 0u32..0x3000).prop_map(|(rd, imm)| Instr::Ldi { rd, imm: imm & !3 }),
                (reg.clone(), reg.clone(), -16i32..16).prop_map(|(rd, rs1, imm)| Instr::Ld { rd, rs1, imm: imm * 4 }),
                (reg.clone(), reg.clone(), -16i32..16).prop_map(|(rs2, rs1, imm)| Instr::St { rs2, rs1, imm: imm * 4 }),
                (0usize..3, reg.clone(), reg.clone(), target.clone()).prop_map(|(c, rs1, rs2, target)| Instr::Branch {
                    cond: [BranchCond::Eq, BranchCond::Ne, BranchCond::Lt][c],
                    rs1,
                    rs2,
                    target
                }),
                (reg.clone(), target).prop_map(|(rd, target)| Instr::Jal { rd, target }),
                reg.clone().prop_map(|rs1| Instr::Out { rs1 }),
                Just(Instr::Halt),
            ]
        }

        fn arb_program() -> impl Strategy<Value = crate::asm::Program> {
            (2u32..40).prop_flat_map(|len| {
                proptest::collection::vec(arb_instr(len), len as usize).prop_map(|instructions| crate::asm::Program {
                    instructions,
                    data_base: crate::asm::DATA_BASE,
                    data: vec![],
                    entry: 0,
                    symbols: Default::default(),
                })
            })
        }

        proptest! {
            #[test]
            fn random_programs_keep_invariants(p in arb_program()) {
                let config = MachineConfig::default();
                let plan = CheckpointSchedule::Every(7).plan(300).unwrap();
                let mut m = Machine::new(&p, &InputImage::empty(), &config).unwrap();
                let mut prev = m.counters().clone();
                for _ in 0..300 {
                    let tick = m.state.tick;
                    let halted = m.state.halted;
                    m.step();
                    prop_assert_eq!(m.state.regs[0], 0);
                    if halted {
                        prop_assert_eq!(m.state.tick, tick);
                    } else if m.state.trap.is_none() {
                        prop_assert_eq!(m.state.tick, tick + 1);
                    }
                    prop_assert!(m.counters().dominates(&prev));
                    prev = m.counters().clone();
                }
                let s = m.counters();
                prop_assert_eq!(s.get(Counter::DcacheReadAccesses), s.get(Counter::DcacheReadHits) + s.get(Counter::DcacheReadMisses));
                prop_assert_eq!(s.get(Counter::DcacheWriteAccesses), s.get(Counter::DcacheWriteHits) + s.get(Counter::DcacheWriteMisses));
                prop_assert_eq!(s.get(Counter::IcacheReadAccesses), s.get(Counter::IcacheReadHits) + s.get(Counter::IcacheReadMisses));
                prop_assert!(s.get(Counter::DcacheWritebacks) <= s.get(Counter::DcacheReplacements));

                let a = run(&p, &InputImage::empty(), &plan, 300, &config).unwrap();
                let b = run(&p, &InputImage::empty(), &plan, 300, &config).unwrap();
                prop_assert_eq!(a.final_checkpoint.to_bytes(), b.final_checkpoint.to_bytes());
                prop_assert_eq!(&a, &b);
                for w in a.dumps.windows(2) {
                    prop_assert!(w[1].counters.dominates(&w[0].counters));
                }
            }
        }
    }
}
