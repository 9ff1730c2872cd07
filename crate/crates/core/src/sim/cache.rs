//! Direct-mapped cache metadata. Data values always come from the flat memory
//! image; the caches only decide which events are counted.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Number of lines (sets); must be a power of two.
    pub lines: usize,
    /// Words per line; must be a power of two.
    pub words_per_line: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            lines: 16,
            words_per_line: 4,
        }
    }
}

impl CacheConfig {
    pub fn line_bytes(&self) -> u32 {
        (self.words_per_line * 4) as u32
    }

    pub fn is_valid(&self) -> bool {
        self.lines.is_power_of_two() && self.words_per_line.is_power_of_two()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Line {
    valid: bool,
    dirty: bool,
    tag: u32,
}

/// What happened on one cache access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub hit: bool,
    /// A valid line was replaced.
    pub replaced: bool,
    /// Byte address of a dirty victim line that must be written back.
    pub writeback: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cache {
    config: CacheConfig,
    line_shift: u32,
    set_mask: u32,
    lines: Vec<Line>,
}

impl Cache {
    pub fn new(config: CacheConfig) -> Self {
        assert!(config.is_valid(), "cache geometry must be powers of two");
        Self {
            config,
            line_shift: config.line_bytes().trailing_zeros(),
            set_mask: (config.lines - 1) as u32,
            lines: vec![Line::default(); config.lines],
        }
    }

    pub fn config(&self) -> CacheConfig {
        self.config
    }

    /// Accesses the line containing `addr`; on a miss the line is filled.
    /// `write` marks the line dirty (write-allocate, write-back).
    #[inline]
    pub fn access(&mut self, addr: u32, write: bool) -> Access {
        let block = addr >> self.line_shift;
        let set = (block & self.set_mask) as usize;
        let tag = block >> self.set_mask.count_ones();
        let line = &mut self.lines[set];
        if line.valid && line.tag == tag {
            line.dirty |= write;
            return Access {
                hit: true,
                replaced: false,
                writeback: None,
            };
        }
        let replaced = line.valid;
        let writeback = (line.valid && line.dirty).then(|| {
            let victim_block = (line.tag << self.set_mask.count_ones()) | set as u32;
            victim_block << self.line_shift
        });
        *line = Line {
            valid: true,
            dirty: write,
            tag,
        };
        Access {
            hit: false,
            replaced,
            writeback,
        }
    }
}
