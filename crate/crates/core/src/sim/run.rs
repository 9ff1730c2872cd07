use serde::{Deserialize, Serialize};

use super::counters::PmuCounters;
use super::machine::{Checkpoint, InputImage, LoadError, Machine, MachineConfig, MachineState, Trap};
use crate::asm::Program;

/// When intermediate stats dumps are taken during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointSchedule {
    /// A dump every `k` ticks.
    Every(u64),
    /// `n` checkpoints spread evenly over a reference run length.
    Count(usize),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("checkpoint interval must be at least 1 tick")]
    ZeroInterval,
    #[error("checkpoint count must be at least 1")]
    ZeroCount,
    #[error("reference run length must be at least 1 tick")]
    EmptyReference,
}

impl CheckpointSchedule {
    /// Resolves the schedule against a reference run length (the golden run's
    /// tick count). The last checkpoint is always the dump taken at exit, so a
    /// resolved plan lists only the intermediate ticks.
    pub fn plan(&self, reference_ticks: u64) -> Result<DumpPlan, ScheduleError> {
        if reference_ticks == 0 {
            return Err(ScheduleError::EmptyReference);
        }
        let ticks = match *self {
            CheckpointSchedule::Every(0) => return Err(ScheduleError::ZeroInterval),
            CheckpointSchedule::Every(k) => (1..)
                .map(|i| i * k)
                .take_while(|&t| t < reference_ticks)
                .collect(),
            CheckpointSchedule::Count(0) => return Err(ScheduleError::ZeroCount),
            CheckpointSchedule::Count(n) => {
                let n = n as u64;
                (1..n).map(|i| (i * reference_ticks).div_ceil(n)).collect()
            }
        };
        Ok(DumpPlan { ticks })
    }

    pub fn describe(&self) -> String {
        match self {
            CheckpointSchedule::Every(k) => format!("every:{k}"),
            CheckpointSchedule::Count(n) => format!("count:{n}"),
        }
    }
}

impl std::str::FromStr for CheckpointSchedule {
    type Err = String;

    /// Parses `count:N` or `every:K`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("expected count:N or every:K, got `{s}`"))?;
        let value: u64 = value
            .trim()
            .parse()
            .map_err(|_| format!("bad number in checkpoint schedule `{s}`"))?;
        match kind.trim() {
            "count" => Ok(CheckpointSchedule::Count(value as usize)),
            "every" => Ok(CheckpointSchedule::Every(value)),
            other => Err(format!("unknown checkpoint schedule kind `{other}`")),
        }
    }
}

/// Intermediate dump ticks, non-decreasing. A final dump at exit is always
/// appended, so a plan yields `ticks.len() + 1` dumps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DumpPlan {
    pub ticks: Vec<u64>,
}

impl DumpPlan {
    pub fn final_only() -> Self {
        Self::default()
    }

    pub fn checkpoint_count(&self) -> usize {
        self.ticks.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExitStatus {
    Halted,
    Trapped { trap: Trap },
    BudgetExceeded,
}

impl ExitStatus {
    pub fn is_crash(&self) -> bool {
        !matches!(self, ExitStatus::Halted)
    }

    pub fn describe(&self) -> String {
        match self {
            ExitStatus::Halted => "halted".into(),
            ExitStatus::Trapped { trap } => format!("trapped:{}", trap_name(trap)),
            ExitStatus::BudgetExceeded => "budget_exceeded".into(),
        }
    }
}

fn trap_name(trap: &Trap) -> &'static str {
    match trap {
        Trap::Misaligned { .. } => "misaligned",
        Trap::OutOfBounds { .. } => "out_of_bounds",
        Trap::DivideByZero => "divide_by_zero",
        Trap::JumpOutOfProgram { .. } => "jump_out_of_program",
        Trap::PcOutOfBounds { .. } => "pc_out_of_bounds",
        Trap::OutputOverflow => "output_overflow",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsDump {
    /// Tick at which the counters were read.
    pub tick: u64,
    pub counters: PmuCounters,
}

/// Everything observable about one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTrace {
    /// Checkpoint dumps S1..Sn; the last one is taken at exit.
    pub dumps: Vec<StatsDump>,
    pub final_checkpoint: Checkpoint,
    pub exit: ExitStatus,
}

impl RunTrace {
    pub fn ticks(&self) -> u64 {
        self.final_checkpoint.tick
    }

    pub fn final_stats(&self) -> &PmuCounters {
        &self.dumps.last().expect("a trace always has a final dump").counters
    }

    pub fn output(&self) -> &[u32] {
        &self.final_checkpoint.output
    }
}

impl<'p> Machine<'p> {
    /// Runs until halt, trap or budget exhaustion, calling `before_step` with
    /// the state right before each instruction executes. Dumps scheduled after
    /// the machine stops repeat the final counters, which no longer change.
    pub fn execute<F>(mut self, plan: &DumpPlan, budget: u64, mut before_step: F) -> RunTrace
    where
        F: FnMut(&mut MachineState),
    {
        let mut dumps = Vec::with_capacity(plan.checkpoint_count());
        let mut next = 0;
        let exit = loop {
            while next < plan.ticks.len() && plan.ticks[next] <= self.state.tick {
                dumps.push(StatsDump {
                    tick: self.state.tick,
                    counters: self.counters().clone(),
                });
                next += 1;
            }
            if self.state.halted {
                break match self.state.trap {
                    Some(trap) => ExitStatus::Trapped { trap },
                    None => ExitStatus::Halted,
                };
            }
            if self.state.tick >= budget {
                break ExitStatus::BudgetExceeded;
            }
            before_step(&mut self.state);
            self.step();
        };
        let last = StatsDump {
            tick: self.state.tick,
            counters: self.counters().clone(),
        };
        dumps.resize(plan.ticks.len(), last.clone());
        dumps.push(last);
        RunTrace {
            dumps,
            final_checkpoint: self.state,
            exit,
        }
    }
}

/// Runs `program` on `input` to completion with the given dump plan.
pub fn run(
    program: &Program,
    input: &InputImage,
    plan: &DumpPlan,
    tick_budget: u64,
    config: &MachineConfig,
) -> Result<RunTrace, LoadError> {
    Ok(Machine::new(program, input, config)?.execute(plan, tick_budget, |_| {}))
}

/// Runs once to learn the reference length, then again with `schedule`
/// resolved against it. Returns the trace and the resolved plan.
pub fn run_scheduled(
    program: &Program,
    input: &InputImage,
    schedule: CheckpointSchedule,
    tick_budget: u64,
    config: &MachineConfig,
) -> Result<(RunTrace, DumpPlan), crate::Error> {
    let probe = run(program, input, &DumpPlan::final_only(), tick_budget, config)?;
    let plan = schedule.plan(probe.ticks().max(1))?;
    let trace = run(program, input, &plan, tick_budget, config)?;
    Ok((trace, plan))
}
