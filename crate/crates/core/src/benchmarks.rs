//! Guest workloads, seeded input generators and host-side reference oracles.
//!
//! Every benchmark reads its input image from [`INPUT_BASE`]: one word with
//! the element count followed by the elements. The shipped assembly lives in
//! `crates/core/guest/`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asm::{assemble, Program};
use crate::sim::isa::Word;
use crate::sim::InputImage;

/// Address of the input image's count word.
pub const INPUT_BASE: u32 = 0x1000;

pub const QSORT_SOURCE: &str = include_str!("../guest/qsort.s");
pub const BASICMATH_FX_SOURCE: &str = include_str!("../guest/basicmath_fx.s");
pub const BITCOUNT_SOURCE: &str = include_str!("../guest/bitcount.s");
pub const BITCOUNT_SWAR_SOURCE: &str = include_str!("../guest/bitcount_swar.s");

/// Q16.16 value of 1.5, the evaluation point of the cubic.
pub const CUBIC_X: i32 = 0x18000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkName {
    Qsort,
    BasicmathFx,
    Bitcount,
}

impl BenchmarkName {
    pub const ALL: [BenchmarkName; 3] = [
        BenchmarkName::Qsort,
        BenchmarkName::BasicmathFx,
        BenchmarkName::Bitcount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkName::Qsort => "qsort",
            BenchmarkName::BasicmathFx => "basicmath_fx",
            BenchmarkName::Bitcount => "bitcount",
        }
    }
}

impl fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown benchmark `{0}` (expected qsort, basicmath_fx or bitcount)")]
pub struct UnknownBenchmark(pub String);

impl FromStr for BenchmarkName {
    type Err = UnknownBenchmark;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchmarkName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| UnknownBenchmark(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitcountStrategy {
    /// Clear the lowest set bit until zero; data-dependent loop count.
    #[default]
    Kernighan,
    /// Branch-free parallel bit sums.
    Swar,
}

/// Input sizes and variants; these are knobs, not fixed workload facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub qsort_len: usize,
    /// qsort values are drawn uniformly from `-qsort_range..=qsort_range`.
    pub qsort_range: i32,
    pub basicmath_triples: usize,
    pub bitcount_len: usize,
    pub bitcount_strategy: BitcountStrategy,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            qsort_len: 256,
            qsort_range: 1_000_000,
            basicmath_triples: 64,
            bitcount_len: 256,
            bitcount_strategy: BitcountStrategy::Kernighan,
        }
    }
}

/// Coefficient bound for basicmath_fx: values lie in [-8.0, 8.0] in Q16.16.
const COEFF_BOUND: i32 = 8 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Benchmark {
    pub name: BenchmarkName,
    pub source: &'static str,
    pub config: BenchmarkConfig,
}

impl Benchmark {
    pub fn new(name: BenchmarkName, config: BenchmarkConfig) -> Self {
        let source = match (name, config.bitcount_strategy) {
            (BenchmarkName::Qsort, _) => QSORT_SOURCE,
            (BenchmarkName::BasicmathFx, _) => BASICMATH_FX_SOURCE,
            (BenchmarkName::Bitcount, BitcountStrategy::Kernighan) => BITCOUNT_SOURCE,
            (BenchmarkName::Bitcount, BitcountStrategy::Swar) => BITCOUNT_SWAR_SOURCE,
        };
        Self {
            name,
            source,
            config,
        }
    }

    pub fn program(&self) -> Program {
        assemble(self.source).expect("shipped benchmark sources assemble")
    }

    pub fn generate_input(&self, seed: u64) -> InputImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &self.config;
        let payload: Vec<Word> = match self.name {
            BenchmarkName::Qsort => (0..c.qsort_len)
                .map(|_| rng.gen_range(-c.qsort_range..=c.qsort_range) as u32)
                .collect(),
            BenchmarkName::BasicmathFx => (0..3 * c.basicmath_triples)
                .map(|_| rng.gen_range(-COEFF_BOUND..=COEFF_BOUND) as u32)
                .collect(),
            BenchmarkName::Bitcount => (0..c.bitcount_len).map(|_| rng.gen::<u32>()).collect(),
        };
        let count = match self.name {
            BenchmarkName::BasicmathFx => payload.len() / 3,
            _ => payload.len(),
        };
        let mut words = Vec::with_capacity(payload.len() + 1);
        words.push(count as u32);
        words.extend(payload);
        InputImage {
            base: INPUT_BASE,
            words,
        }
    }

    /// The OUT stream a correct execution produces, computed on the host.
    pub fn reference_output(&self, input: &InputImage) -> Vec<Word> {
        reference_output(self.name, input)
    }
}

/// Generates the default-sized input for a benchmark named `name`.
pub fn generate_input(name: &str, seed: u64) -> Result<InputImage, UnknownBenchmark> {
    let name: BenchmarkName = name.parse()?;
    Ok(Benchmark::new(name, BenchmarkConfig::default()).generate_input(seed))
}

fn payload(input: &InputImage) -> &[Word] {
    let count = input.words.first().copied().unwrap_or(0) as usize;
    let rest = input.words.get(1..).unwrap_or(&[]);
    &rest[..rest.len().min(count)]
}

pub fn reference_output(name: BenchmarkName, input: &InputImage) -> Vec<Word> {
    match name {
        BenchmarkName::Qsort => {
            let mut v: Vec<i32> = payload(input).iter().map(|&w| w as i32).collect();
            v.sort_unstable();
            v.into_iter().map(|x| x as u32).collect()
        }
        BenchmarkName::Bitcount => payload(input).iter().map(|w| w.count_ones()).collect(),
        BenchmarkName::BasicmathFx => {
            let count = input.words.first().copied().unwrap_or(0) as usize;
            let coeffs = input.words.get(1..).unwrap_or(&[]);
            let mut out = Vec::with_capacity(2 * count);
            for t in coeffs.chunks_exact(3).take(count) {
                let (a, b, c) = (t[0] as i32, t[1] as i32, t[2] as i32);
                let x = CUBIC_X;
                let p = q_mul(q_mul(x.wrapping_add(a), x).wrapping_add(b), x).wrapping_add(c);
                out.push(p as u32);
                let disc = q_mul(a, a).wrapping_sub(b.wrapping_mul(3));
                out.push(sqrt_q16(disc.wrapping_abs() as u32));
            }
            out
        }
    }
}

/// Q16.16 multiply, `(a * b) >> 16` truncated to 32 bits.
pub fn q_mul(a: i32, b: i32) -> i32 {
    ((i64::from(a) * i64::from(b)) >> 16) as i32
}

/// Q16.16 square root with 8 fractional bits: `floor(sqrt(raw)) << 8`.
pub fn sqrt_q16(raw: u32) -> u32 {
    (u64::from(raw).isqrt() as u32).wrapping_shl(8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(words: &[u32]) -> InputImage {
        let mut w = vec![words.len() as u32];
        w.extend_from_slice(words);
        InputImage {
            base: INPUT_BASE,
            words: w,
        }
    }

    #[test]
    fn generator_is_deterministic_and_seed_sensitive() {
        let a = generate_input("qsort", 7).unwrap();
        assert_eq!(a, generate_input("qsort", 7).unwrap());
        assert_ne!(a, generate_input("qsort", 8).unwrap());
        assert_eq!(a.words.len(), 257);
        assert_eq!(generate_input("basicmath_fx", 1).unwrap().words.len(), 1 + 3 * 64);
        assert!(generate_input("unknown", 0).is_err());
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(reference_output(BenchmarkName::Qsort, &image(&[3, 1, 2])), vec![1, 2, 3]);
        assert_eq!(
            reference_output(BenchmarkName::Qsort, &image(&[5, (-4i32) as u32, 0])),
            vec![(-4i32) as u32, 0, 5]
        );
        assert_eq!(reference_output(BenchmarkName::Bitcount, &image(&[0xFF, 0])), vec![8, 0]);
        assert_eq!(sqrt_q16(4 << 16), 0x0002_0000);
        assert_eq!(q_mul(3 << 16, -(2 << 16)), -(6 << 16));
        assert_eq!(q_mul(0x18000, 0x18000), 0x24000);
    }

    #[test]
    fn basicmath_values_stay_in_positive_signed_range() {
        // The guest square root uses signed compares, so |a^2 - 3b| must stay
        // below 2^31 for every admissible coefficient.
        let worst = q_mul(COEFF_BOUND, COEFF_BOUND) as i64 + 3 * COEFF_BOUND as i64;
        assert!(worst < i32::MAX as i64);
    }
}
