//! Single-bit-upset campaigns in the integer register file.
//!
//! A campaign runs the golden (fault-free) execution once, then `n_runs`
//! executions that each flip one bit of one register right before one
//! instruction. Each run gets its own RNG stream derived from the master seed
//! and its index, so results do not depend on scheduling.

mod store;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asm::Program;
use crate::benchmarks::{Benchmark, BenchmarkConfig, BenchmarkName};
use crate::exec::Execution;
use crate::sim::isa::Reg;
use crate::sim::{
    run, CheckpointSchedule, DumpPlan, ExitStatus, InputImage, Machine, MachineConfig, PmuCounters,
    RunTrace,
};
use crate::{Error, Result};

pub use store::{load_campaign, save_campaign};

/// One injected upset. The bit is flipped immediately before the instruction
/// that executes at `tick` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultSpec {
    pub tick: u64,
    pub reg: Reg,
    pub bit: u8,
}

impl FaultSpec {
    pub fn new(tick: u64, reg: u8, bit: u8) -> Result<Self> {
        if tick == 0 || reg == 0 || reg > 15 || bit > 31 {
            return Err(Error::Config(format!(
                "invalid fault (tick {tick}, r{reg}, bit {bit}): need tick >= 1, reg in 1..=15, bit in 0..=31"
            )));
        }
        Ok(Self {
            tick,
            reg: Reg(reg),
            bit,
        })
    }
}

/// Draws a fault uniformly over ticks `1..=golden_ticks`, registers `r1..=r15`
/// and bits `0..=31`.
pub fn sample_fault<R: Rng + ?Sized>(rng: &mut R, golden_ticks: u64) -> FaultSpec {
    assert!(golden_ticks >= 1, "golden run must execute at least one instruction");
    FaultSpec {
        tick: rng.gen_range(1..=golden_ticks),
        reg: Reg(rng.gen_range(1..=15)),
        bit: rng.gen_range(0..=31),
    }
}

/// The RNG stream for run `index` of a campaign seeded with `master_seed`.
pub fn run_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs with `fault` applied. Until `fault.tick` the execution is identical to
/// the fault-free one.
pub fn run_with_fault(
    program: &Program,
    input: &InputImage,
    fault: &FaultSpec,
    plan: &DumpPlan,
    budget: u64,
    config: &MachineConfig,
) -> Result<RunTrace> {
    let machine = Machine::new(program, input, config)?;
    let mut pending = true;
    let reg = fault.reg.index();
    let mask = 1u32 << fault.bit;
    Ok(machine.execute(plan, budget, |state| {
        if pending && state.tick + 1 == fault.tick {
            state.regs[reg] ^= mask;
            pending = false;
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Crash,
    Faulty,
    Benign,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Crash => "crash",
            Outcome::Faulty => "faulty",
            Outcome::Benign => "benign",
        }
    }

    /// Binary label used downstream: Benign = 0, Faulty = 1, crashes excluded.
    pub fn label(self) -> Option<u8> {
        match self {
            Outcome::Benign => Some(0),
            Outcome::Faulty => Some(1),
            Outcome::Crash => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "crash" => Ok(Outcome::Crash),
            "faulty" => Ok(Outcome::Faulty),
            "benign" => Ok(Outcome::Benign),
            _ => Err(format!("unknown outcome `{s}`")),
        }
    }
}

/// Compares the final checkpoint with the golden one. Registers, pc and tick
/// are not part of the comparison; only the outcome is.
pub fn classify_outcome(trace: &RunTrace, golden: &RunTrace) -> Outcome {
    if trace.exit.is_crash() {
        Outcome::Crash
    } else if trace.final_checkpoint.output != golden.final_checkpoint.output
        || trace.final_checkpoint.mem != golden.final_checkpoint.mem
    {
        Outcome::Faulty
    } else {
        Outcome::Benign
    }
}

/// A labeled injection run with its counter dumps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    pub run: usize,
    pub fault: FaultSpec,
    pub outcome: Outcome,
    pub exit: ExitStatus,
    /// Dumps S1..Sn; the last is taken at exit.
    pub stats_checkpoints: Vec<PmuCounters>,
    /// Tick at which each dump was read.
    pub checkpoint_ticks: Vec<u64>,
    pub run_ticks: u64,
}

impl RunRecord {
    pub fn from_trace(run: usize, fault: FaultSpec, outcome: Outcome, trace: RunTrace) -> Self {
        let (checkpoint_ticks, stats_checkpoints) =
            trace.dumps.into_iter().map(|d| (d.tick, d.counters)).unzip();
        Self {
            run,
            fault,
            outcome,
            exit: trace.exit,
            stats_checkpoints,
            checkpoint_ticks,
            run_ticks: trace.final_checkpoint.tick,
        }
    }

    pub fn final_stats(&self) -> &PmuCounters {
        self.stats_checkpoints
            .last()
            .expect("a record always has its exit dump")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub benchmark: BenchmarkName,
    pub n_runs: usize,
    /// Master seed; run `i` draws its fault from `run_stream(seed, i)`.
    pub seed: u64,
    /// Seed of the benchmark input; defaults to `seed`.
    pub input_seed: Option<u64>,
    pub checkpoints: CheckpointSchedule,
    /// Faulty runs may execute `budget_factor` times the golden length.
    pub budget_factor: f64,
    /// Tick budget of the golden run itself.
    pub golden_budget: u64,
    pub bench: BenchmarkConfig,
    pub machine: MachineConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkName::Qsort,
            n_runs: 2000,
            seed: 1,
            input_seed: None,
            checkpoints: CheckpointSchedule::Count(10),
            budget_factor: 2.0,
            golden_budget: 50_000_000,
            bench: BenchmarkConfig::default(),
            machine: MachineConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget_factor.is_finite() && self.budget_factor >= 1.0) {
            return Err(Error::Config(format!(
                "budget_factor must be a finite number >= 1, got {}",
                self.budget_factor
            )));
        }
        match self.checkpoints {
            CheckpointSchedule::Every(0) | CheckpointSchedule::Count(0) => {
                return Err(Error::Config("checkpoint schedule must be at least 1".into()))
            }
            _ => {}
        }
        if self.golden_budget == 0 {
            return Err(Error::Config("golden_budget must be positive".into()));
        }
        Ok(())
    }

    pub fn input_seed(&self) -> u64 {
        self.input_seed.unwrap_or(self.seed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub crash: usize,
    pub faulty: usize,
    pub benign: usize,
}

impl OutcomeCounts {
    pub fn total(&self) -> usize {
        self.crash + self.faulty + self.benign
    }

    pub fn fraction(&self, outcome: Outcome) -> f64 {
        let n = match outcome {
            Outcome::Crash => self.crash,
            Outcome::Faulty => self.faulty,
            Outcome::Benign => self.benign,
        };
        if self.total() == 0 {
            0.0
        } else {
            n as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub golden: RunTrace,
    pub plan: DumpPlan,
    pub budget: u64,
    /// Ordered by run index.
    pub records: Vec<RunRecord>,
}

impl CampaignResult {
    pub fn counts(&self) -> OutcomeCounts {
        let mut c = OutcomeCounts::default();
        for r in &self.records {
            match r.outcome {
                Outcome::Crash => c.crash += 1,
                Outcome::Faulty => c.faulty += 1,
                Outcome::Benign => c.benign += 1,
            }
        }
        c
    }

    pub fn checkpoint_count(&self) -> usize {
        self.plan.checkpoint_count()
    }
}

/// Runs a full campaign. The output does not depend on `exec`.
pub fn run_campaign(config: &CampaignConfig, exec: Execution) -> Result<CampaignResult> {
    config.validate()?;
    let bench = Benchmark::new(config.benchmark, config.bench);
    let program = bench.program();
    let input = bench.generate_input(config.input_seed());

    let probe = run(&program, &input, &DumpPlan::final_only(), config.golden_budget, &config.machine)?;
    if probe.exit != ExitStatus::Halted {
        return Err(Error::Config(format!(
            "golden run of {} did not halt cleanly: {}",
            config.benchmark,
            probe.exit.describe()
        )));
    }
    let golden_ticks = probe.ticks();
    let plan = config.checkpoints.plan(golden_ticks)?;
    let golden = run(&program, &input, &plan, config.golden_budget, &config.machine)?;
    let budget = (config.budget_factor * golden_ticks as f64).ceil() as u64;

    let records = exec.map_indexed(config.n_runs, |i| {
        let mut rng = run_stream(config.seed, i as u64);
        let fault = sample_fault(&mut rng, golden_ticks);
        let trace = run_with_fault(&program, &input, &fault, &plan, budget, &config.machine)
            .expect("machine configuration already validated by the golden run");
        let outcome = classify_outcome(&trace, &golden);
        RunRecord::from_trace(i, fault, outcome, trace)
    });

    Ok(CampaignResult {
        config: config.clone(),
        golden,
        plan,
        budget,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    #[test]
    fn degenerate_tick_range() {
        let mut rng = run_stream(3, 0);
        for _ in 0..100 {
            let f = sample_fault(&mut rng, 1);
            assert_eq!(f.tick, 1);
            assert_ne!(f.reg.0, 0);
            assert!(f.bit < 32);
        }
    }

    #[test]
    fn tick_distribution_is_uniform() {
        let mut rng = run_stream(11, 0);
        let mut counts = [0u32; 100];
        let mut regs = [0u32; 16];
        for _ in 0..100_000 {
            let f = sample_fault(&mut rng, 100);
            counts[(f.tick - 1) as usize] += 1;
            regs[f.reg.index()] += 1;
        }
        assert_eq!(regs[0], 0);
        // Binomial(1e5, 0.01): sigma = sqrt(1e5 * 0.01 * 0.99) ~ 31.5.
        let sigma = (100_000.0f64 * 0.01 * 0.99).sqrt();
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 5.0 * sigma, "{c}");
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 1000.0).powi(2) / 1000.0).sum();
        // 99 degrees of freedom; the 0.999 quantile is about 148.2.
        assert!(chi2 < 148.2, "chi2 = {chi2}");
    }

    #[test]
    fn flip_applies_before_the_instruction_at_that_tick() {
        let p = assemble("LDI r5, 4\nOUT r5\nHALT").unwrap();
        let plan = DumpPlan::final_only();
        let fault = FaultSpec::new(2, 5, 0).unwrap();
        let t = run_with_fault(&p, &InputImage::empty(), &fault, &plan, 10, &MachineConfig::default())
            .unwrap();
        assert_eq!(t.output(), &[5]);
    }

    #[test]
    fn dead_register_fault_is_benign() {
        let p = assemble("LDI r5, 4\nLDI r6, 1\nOUT r6\nHALT").unwrap();
        let cfg = MachineConfig::default();
        let golden = run(&p, &InputImage::empty(), &DumpPlan::final_only(), 10, &cfg).unwrap();
        let fault = FaultSpec::new(3, 5, 7).unwrap();
        let t = run_with_fault(&p, &InputImage::empty(), &fault, &DumpPlan::final_only(), 10, &cfg)
            .unwrap();
        assert_eq!(t.final_checkpoint.mem, golden.final_checkpoint.mem);
        assert_eq!(t.output(), golden.output());
        assert_eq!(classify_outcome(&t, &golden), Outcome::Benign);
    }

    #[test]
    fn corrupted_return_address_traps() {
        let p = assemble("JAL r15, f\nHALT\nf: JR r15").unwrap();
        let cfg = MachineConfig::default();
        let golden = run(&p, &InputImage::empty(), &DumpPlan::final_only(), 10, &cfg).unwrap();
        let fault = FaultSpec::new(2, 15, 20).unwrap();
        let t = run_with_fault(&p, &InputImage::empty(), &fault, &DumpPlan::final_only(), 10, &cfg)
            .unwrap();
        assert!(matches!(t.exit, ExitStatus::Trapped { .. }));
        assert_eq!(classify_outcome(&t, &golden), Outcome::Crash);
    }

    #[test]
    fn wrong_output_is_faulty_and_div_zero_is_crash() {
        let p = assemble("LDI r1, 6\nLDI r2, 3\nDIVU r3, r1, r2\nOUT r3\nHALT").unwrap();
        let cfg = MachineConfig::default();
        let plan = DumpPlan::final_only();
        let golden = run(&p, &InputImage::empty(), &plan, 10, &cfg).unwrap();
        // 6 ^ 1 = 7 still divides to 2; 6 ^ 4 = 2 does not.
        let masked = run_with_fault(&p, &InputImage::empty(), &FaultSpec::new(3, 1, 0).unwrap(), &plan, 10, &cfg).unwrap();
        assert_eq!(classify_outcome(&masked, &golden), Outcome::Benign);
        let wrong = run_with_fault(&p, &InputImage::empty(), &FaultSpec::new(3, 1, 2).unwrap(), &plan, 10, &cfg).unwrap();
        assert_eq!(wrong.output(), &[0]);
        assert_eq!(classify_outcome(&wrong, &golden), Outcome::Faulty);
        let p0 = assemble("LDI r2, 1\nDIVU r3, r3, r2\nHALT").unwrap();
        let g0 = run(&p0, &InputImage::empty(), &plan, 10, &cfg).unwrap();
        let z = run_with_fault(&p0, &InputImage::empty(), &FaultSpec::new(2, 2, 0).unwrap(), &plan, 10, &cfg).unwrap();
        assert_eq!(classify_outcome(&z, &g0), Outcome::Crash);
        assert_eq!(z.exit, ExitStatus::Trapped { trap: crate::sim::Trap::DivideByZero });
    }

    #[test]
    fn invalid_faults_rejected() {
        assert!(FaultSpec::new(0, 1, 0).is_err());
        assert!(FaultSpec::new(1, 0, 0).is_err());
        assert!(FaultSpec::new(1, 16, 0).is_err());
        assert!(FaultSpec::new(1, 1, 32).is_err());
    }

    #[test]
    fn zero_runs_still_produce_golden() {
        let config = CampaignConfig { benchmark: BenchmarkName::Bitcount, n_runs: 0, ..Default::default() };
        let result = run_campaign(&config, Execution::Sequential).unwrap();
        assert!(result.records.is_empty());
        assert_eq!(result.golden.exit, ExitStatus::Halted);
        assert_eq!(result.golden.dumps.len(), 10);
    }

    #[test]
    fn parallel_equals_serial() {
        let config = CampaignConfig { benchmark: BenchmarkName::BasicmathFx, n_runs: 60, seed: 5, ..Default::default() };
        let a = run_campaign(&config, Execution::Sequential).unwrap();
        let b = run_campaign(&config, Execution::Parallel { jobs: 4 }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts().total(), 60);
        for r in &a.records {
            if r.outcome != Outcome::Crash {
                assert_eq!(r.stats_checkpoints.len(), 10);
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = CampaignConfig { budget_factor: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = CampaignConfig { checkpoints: CheckpointSchedule::Every(0), ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
