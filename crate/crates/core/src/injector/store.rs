//! On-disk layout of a campaign directory.
//!
//! ```text
//! manifest.json           config, golden summary, dump plan, outcome counts
//! golden_checkpoint.bin   final golden machine state (MachineState::to_bytes)
//! golden_stats.csv        checkpoint,tick,<counters...>
//! records.csv             run,fault_tick,fault_reg,fault_bit,outcome,exit,run_ticks
//! stats.csv               run,checkpoint,tick,<counters...>
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CampaignConfig, CampaignResult, FaultSpec, Outcome, OutcomeCounts, RunRecord};
use crate::io::{parse_error, read_bytes, read_json, write_bytes, write_json};
use crate::sim::{Counter, DumpPlan, ExitStatus, MachineState, PmuCounters, RunTrace, StatsDump};
use crate::{Error, Result};

pub const FORMAT: &str = "pmufault-campaign";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    format_version: u32,
    tool_version: String,
    config: CampaignConfig,
    golden_ticks: u64,
    golden_exit: ExitStatus,
    plan: DumpPlan,
    budget: u64,
    checkpoint_count: usize,
    counts: OutcomeCounts,
    counters: Vec<String>,
}

fn counter_header(lead: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain(Counter::ALL.iter().map(|c| c.name().to_string()))
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| parse_error(path, e))
}

pub fn save_campaign(result: &CampaignResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let manifest = Manifest {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: result.config.clone(),
        golden_ticks: result.golden.ticks(),
        golden_exit: result.golden.exit,
        plan: result.plan.clone(),
        budget: result.budget,
        checkpoint_count: result.checkpoint_count(),
        counts: result.counts(),
        counters: Counter::ALL.iter().map(|c| c.name().to_string()).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_bytes(
        &dir.join("golden_checkpoint.bin"),
        &result.golden.final_checkpoint.to_bytes(),
    )?;

    let path = dir.join("golden_stats.csv");
    let mut w = csv_writer(&path)?;
    let wrap = |e| parse_error(&path, e);
    w.write_record(counter_header(&["checkpoint", "tick"])).map_err(wrap)?;
    for (i, d) in result.golden.dumps.iter().enumerate() {
        write_counter_row(&mut w, &[i as u64, d.tick], &d.counters).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })?;

    let path = dir.join("records.csv");
    let mut w = csv_writer(&path)?;
    let wrap = |e| parse_error(&path, e);
    w.write_record(["run", "fault_tick", "fault_reg", "fault_bit", "outcome", "exit", "run_ticks"])
        .map_err(wrap)?;
    for r in &result.records {
        let exit = serde_json::to_string(&r.exit).expect("exit status serializes");
        w.write_record([
            r.run.to_string(),
            r.fault.tick.to_string(),
            r.fault.reg.0.to_string(),
            r.fault.bit.to_string(),
            r.outcome.to_string(),
            exit,
            r.run_ticks.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })?;

    let path = dir.join("stats.csv");
    let mut w = csv_writer(&path)?;
    let wrap = |e| parse_error(&path, e);
    w.write_record(counter_header(&["run", "checkpoint", "tick"])).map_err(wrap)?;
    for r in &result.records {
        for (i, (tick, c)) in r.checkpoint_ticks.iter().zip(&r.stats_checkpoints).enumerate() {
            write_counter_row(&mut w, &[r.run as u64, i as u64, *tick], c).map_err(wrap)?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    Ok(())
}

fn write_counter_row<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    lead: &[u64],
    counters: &PmuCounters,
) -> csv::Result<()> {
    let row: Vec<String> = lead
        .iter()
        .chain(counters.values().iter())
        .map(|v| v.to_string())
        .collect();
    w.write_record(&row)
}

/// Parses rows of `<lead columns...>,<counters...>` with the canonical header.
fn read_counter_rows(path: &Path, lead: &[&str]) -> Result<Vec<(Vec<u64>, PmuCounters)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| parse_error(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| parse_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    if header != counter_header(lead) {
        return Err(parse_error(path, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_error(path, e))?;
        let nums: Vec<u64> = rec
            .iter()
            .map(|f| f.parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_error(path, format!("row {}: {e}", line + 1)))?;
        let (l, c) = nums.split_at(lead.len());
        let counters = PmuCounters::from_slice(c)
            .ok_or_else(|| parse_error(path, format!("row {}: wrong counter count", line + 1)))?;
        rows.push((l.to_vec(), counters));
    }
    Ok(rows)
}

pub fn load_campaign(dir: &Path) -> Result<CampaignResult> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format != FORMAT || manifest.format_version != FORMAT_VERSION {
        return Err(parse_error(
            &dir.join("manifest.json"),
            format!("not a {FORMAT} v{FORMAT_VERSION} manifest"),
        ));
    }
    let n = manifest.checkpoint_count;
    let final_checkpoint = MachineState::from_bytes(&read_bytes(&dir.join("golden_checkpoint.bin"))?)?;

    let dumps: Vec<StatsDump> = read_counter_rows(&dir.join("golden_stats.csv"), &["checkpoint", "tick"])?
        .into_iter()
        .map(|(l, counters)| StatsDump { tick: l[1], counters })
        .collect();
    let golden = RunTrace {
        dumps,
        final_checkpoint,
        exit: manifest.golden_exit,
    };

    let path = dir.join("records.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| parse_error(&path, e))?;
    let mut records = Vec::new();
    for (line, rec) in r.deserialize::<RecordRow>().enumerate() {
        let row = rec.map_err(|e| parse_error(&path, e))?;
        let fault = FaultSpec::new(row.fault_tick, row.fault_reg, row.fault_bit)?;
        let outcome: Outcome = row
            .outcome
            .parse()
            .map_err(|e| parse_error(&path, format!("row {}: {e}", line + 1)))?;
        let exit: ExitStatus = serde_json::from_str(&row.exit)
            .map_err(|e| parse_error(&path, format!("row {}: {e}", line + 1)))?;
        if row.run != records.len() {
            return Err(parse_error(&path, format!("row {}: runs out of order", line + 1)));
        }
        records.push(RunRecord {
            run: row.run,
            fault,
            outcome,
            exit,
            stats_checkpoints: Vec::with_capacity(n),
            checkpoint_ticks: Vec::with_capacity(n),
            run_ticks: row.run_ticks,
        });
    }

    let stats_path = dir.join("stats.csv");
    for (l, counters) in read_counter_rows(&stats_path, &["run", "checkpoint", "tick"])? {
        let (run, cp, tick) = (l[0] as usize, l[1] as usize, l[2]);
        let rec = records
            .get_mut(run)
            .ok_or_else(|| parse_error(&stats_path, format!("unknown run {run}")))?;
        if cp != rec.stats_checkpoints.len() {
            return Err(parse_error(&stats_path, format!("run {run}: checkpoints out of order")));
        }
        rec.stats_checkpoints.push(counters);
        rec.checkpoint_ticks.push(tick);
    }
    if let Some(bad) = records.iter().find(|r| r.stats_checkpoints.len() != n) {
        return Err(parse_error(
            &stats_path,
            format!("run {} has {} checkpoints, expected {n}", bad.run, bad.stats_checkpoints.len()),
        ));
    }

    Ok(CampaignResult {
        config: manifest.config,
        golden,
        plan: manifest.plan,
        budget: manifest.budget,
        records,
    })
}

#[derive(Deserialize)]
struct RecordRow {
    run: usize,
    fault_tick: u64,
    fault_reg: u8,
    fault_bit: u8,
    outcome: String,
    exit: String,
    run_ticks: u64,
}
