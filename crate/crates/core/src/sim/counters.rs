//! Hierarchical event counters, the stand-in for the simulator's stats dump.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Counter class used to group features. Top-level classes follow the first
/// name segment; the `cpu` class is split into sub-classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CounterClass {
    CpuIcache,
    CpuDcache,
    CpuCommit,
    CpuBranch,
    CpuRegfile,
    CpuMemops,
    CpuOpclass,
    MemCtrls,
    Membus,
    Iobus,
}

impl CounterClass {
    pub const ALL: [CounterClass; 10] = [
        CounterClass::CpuIcache,
        CounterClass::CpuDcache,
        CounterClass::CpuCommit,
        CounterClass::CpuBranch,
        CounterClass::CpuRegfile,
        CounterClass::CpuMemops,
        CounterClass::CpuOpclass,
        CounterClass::MemCtrls,
        CounterClass::Membus,
        CounterClass::Iobus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CounterClass::CpuIcache => "cpu.icache",
            CounterClass::CpuDcache => "cpu.dcache",
            CounterClass::CpuCommit => "cpu.commit",
            CounterClass::CpuBranch => "cpu.branch",
            CounterClass::CpuRegfile => "cpu.regfile",
            CounterClass::CpuMemops => "cpu.memops",
            CounterClass::CpuOpclass => "cpu.opclass",
            CounterClass::MemCtrls => "mem_ctrls",
            CounterClass::Membus => "membus",
            CounterClass::Iobus => "iobus",
        }
    }

    /// First segment of the class name: one of `cpu`, `mem_ctrls`, `membus`, `iobus`.
    pub fn top_level(self) -> &'static str {
        let name = self.name();
        name.split('.').next().unwrap_or(name)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for CounterClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! counters {
    ($($variant:ident => $name:literal, $class:ident;)*) => {
        /// Every hardware event counter, in catalog order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        #[repr(u8)]
        pub enum Counter {
            $($variant,)*
        }

        impl Counter {
            pub const ALL: &'static [Counter] = &[$(Counter::$variant,)*];

            pub const fn name(self) -> &'static str {
                match self {
                    $(Counter::$variant => $name,)*
                }
            }

            pub const fn class(self) -> CounterClass {
                match self {
                    $(Counter::$variant => CounterClass::$class,)*
                }
            }
        }
    };
}

counters! {
    IcacheReadAccesses => "cpu.icache.read_accesses", CpuIcache;
    IcacheReadHits => "cpu.icache.read_hits", CpuIcache;
    IcacheReadMisses => "cpu.icache.read_misses", CpuIcache;
    IcacheReplacements => "cpu.icache.replacements", CpuIcache;

    DcacheReadAccesses => "cpu.dcache.read_accesses", CpuDcache;
    DcacheReadHits => "cpu.dcache.read_hits", CpuDcache;
    DcacheReadMisses => "cpu.dcache.read_misses", CpuDcache;
    DcacheWriteAccesses => "cpu.dcache.write_accesses", CpuDcache;
    DcacheWriteHits => "cpu.dcache.write_hits", CpuDcache;
    DcacheWriteMisses => "cpu.dcache.write_misses", CpuDcache;
    DcacheWritebacks => "cpu.dcache.writebacks", CpuDcache;
    DcacheReplacements => "cpu.dcache.replacements", CpuDcache;
    DcacheOverallAccesses => "cpu.dcache.overall_accesses", CpuDcache;
    DcacheOverallMisses => "cpu.dcache.overall_misses", CpuDcache;

    CommittedInsts => "cpu.committedInsts", CpuCommit;
    CommittedOps => "cpu.committedOps", CpuCommit;
    NumCycles => "cpu.numCycles", CpuCommit;
    NumFuncCalls => "cpu.num_func_calls", CpuCommit;

    NumBranches => "cpu.num_branches", CpuBranch;
    BranchesTaken => "cpu.branches_taken", CpuBranch;
    BranchesNotTaken => "cpu.branches_not_taken", CpuBranch;
    NumJumps => "cpu.num_jumps", CpuBranch;
    NumIndirectJumps => "cpu.num_indirect_jumps", CpuBranch;
    NumReturns => "cpu.num_returns", CpuBranch;

    IntRegReads => "cpu.num_int_register_reads", CpuRegfile;
    IntRegWrites => "cpu.num_int_register_writes", CpuRegfile;
    IntAluAccesses => "cpu.num_int_alu_accesses", CpuRegfile;
    ImmOperands => "cpu.num_imm_operands", CpuRegfile;

    NumLoads => "cpu.num_loads", CpuMemops;
    NumStores => "cpu.num_stores", CpuMemops;
    NumMemRefs => "cpu.num_mem_refs", CpuMemops;
    NumStackRefs => "cpu.num_stack_refs", CpuMemops;

    OpIntAlu => "cpu.op_class.IntAlu", CpuOpclass;
    OpIntMult => "cpu.op_class.IntMult", CpuOpclass;
    OpIntDiv => "cpu.op_class.IntDiv", CpuOpclass;
    OpShift => "cpu.op_class.Shift", CpuOpclass;
    OpMemRead => "cpu.op_class.MemRead", CpuOpclass;
    OpMemWrite => "cpu.op_class.MemWrite", CpuOpclass;
    OpBranch => "cpu.op_class.Branch", CpuOpclass;
    OpJump => "cpu.op_class.Jump", CpuOpclass;
    OpIo => "cpu.op_class.Io", CpuOpclass;
    OpNop => "cpu.op_class.Nop", CpuOpclass;

    MemCtrlsReads => "mem_ctrls.reads", MemCtrls;
    MemCtrlsWrites => "mem_ctrls.writes", MemCtrls;
    MemCtrlsBytesRead => "mem_ctrls.bytes_read", MemCtrls;
    MemCtrlsBytesWritten => "mem_ctrls.bytes_written", MemCtrls;
    MemCtrlsInstReads => "mem_ctrls.inst_reads", MemCtrls;
    MemCtrlsDataReads => "mem_ctrls.data_reads", MemCtrls;
    MemCtrlsRowHits => "mem_ctrls.row_hits", MemCtrls;
    MemCtrlsRowMisses => "mem_ctrls.row_misses", MemCtrls;

    MembusTransactions => "membus.transactions", Membus;
    MembusReadReqs => "membus.read_reqs", Membus;
    MembusWriteReqs => "membus.write_reqs", Membus;
    MembusBytes => "membus.bytes", Membus;
    MembusBytesRead => "membus.bytes_read", Membus;
    MembusBytesWritten => "membus.bytes_written", Membus;
    MembusIcacheReqs => "membus.icache_reqs", Membus;
    MembusDcacheReqs => "membus.dcache_reqs", Membus;

    IobusWrites => "iobus.writes", Iobus;
    IobusBytes => "iobus.bytes", Iobus;
    IobusZeroWords => "iobus.zero_words", Iobus;
    IobusNegativeWords => "iobus.negative_words", Iobus;
}

pub const NUM_COUNTERS: usize = Counter::ALL.len();

impl Counter {
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Counter> {
        Counter::ALL.iter().copied().find(|c| c.name() == name)
    }
}

/// One catalog entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub class: CounterClass,
}

/// Ordered list of every counter with its class. The catalog is the same for
/// every run of a given machine configuration.
pub fn counter_catalog() -> Vec<CatalogEntry> {
    Counter::ALL
        .iter()
        .map(|c| CatalogEntry {
            name: c.name(),
            class: c.class(),
        })
        .collect()
}

/// A dump of every counter at one point in time.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PmuCounters {
    values: [u64; NUM_COUNTERS],
}

impl Default for PmuCounters {
    fn default() -> Self {
        Self {
            values: [0; NUM_COUNTERS],
        }
    }
}

impl PmuCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: [u64; NUM_COUNTERS]) -> Self {
        Self { values }
    }

    /// Builds a dump from a slice in catalog order; `None` on a width mismatch.
    pub fn from_slice(values: &[u64]) -> Option<Self> {
        Some(Self {
            values: values.try_into().ok()?,
        })
    }

    #[inline]
    pub fn bump(&mut self, counter: Counter) {
        self.values[counter.index()] += 1;
    }

    #[inline]
    pub fn add(&mut self, counter: Counter, amount: u64) {
        self.values[counter.index()] += amount;
    }

    #[inline]
    pub fn get(&self, counter: Counter) -> u64 {
        self.values[counter.index()]
    }

    pub fn get_by_name(&self, name: &str) -> Option<u64> {
        Counter::from_name(name).map(|c| self.get(c))
    }

    pub fn values(&self) -> &[u64; NUM_COUNTERS] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, u64)> + '_ {
        Counter::ALL
            .iter()
            .map(move |&c| (c.name(), self.values[c.index()]))
    }

    /// True when no counter in `self` is smaller than in `earlier`.
    pub fn dominates(&self, earlier: &PmuCounters) -> bool {
        self.values
            .iter()
            .zip(earlier.values.iter())
            .all(|(now, then)| now >= then)
    }
}

impl fmt::Debug for PmuCounters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

impl Serialize for PmuCounters {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.iter())
    }
}

impl<'de> Deserialize<'de> for PmuCounters {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let map = std::collections::BTreeMap::<String, u64>::deserialize(deserializer)?;
        let mut out = PmuCounters::new();
        for (name, value) in map {
            let counter = Counter::from_name(&name)
                .ok_or_else(|| D::Error::custom(format!("unknown counter `{name}`")))?;
            out.values[counter.index()] = value;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn names_are_unique_and_classes_match_prefix() {
        let catalog = counter_catalog();
        let names: HashSet<_> = catalog.iter().map(|e| e.name).collect();
        assert_eq!(names.len(), catalog.len());
        for entry in &catalog {
            let top = entry.name.split('.').next().unwrap();
            assert!(["cpu", "mem_ctrls", "membus", "iobus"].contains(&top));
            assert_eq!(top, entry.class.top_level());
        }
    }

    #[test]
    fn catalog_contains_reference_counter_names() {
        let catalog = counter_catalog();
        let find = |n: &str| catalog.iter().find(|e| e.name == n).map(|e| e.class);
        assert_eq!(find("cpu.num_func_calls"), Some(CounterClass::CpuCommit));
        assert_eq!(find("mem_ctrls.reads"), Some(CounterClass::MemCtrls));
    }

    #[test]
    fn every_class_is_populated() {
        for class in CounterClass::ALL {
            assert!(Counter::ALL.iter().any(|c| c.class() == class), "{class}");
        }
    }

    #[test]
    fn index_matches_catalog_position() {
        for (i, c) in Counter::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }

    #[test]
    fn serde_round_trip() {
        let mut counters = PmuCounters::new();
        counters.add(Counter::MembusBytes, 48);
        counters.bump(Counter::IobusWrites);
        let text = serde_json::to_string(&counters).unwrap();
        let back: PmuCounters = serde_json::from_str(&text).unwrap();
        assert_eq!(back, counters);
    }
}
