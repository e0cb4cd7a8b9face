//! File formats: edge lists, solutions, colorings, ledger CSV, trace JSONL
//! and audit JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mpcforest_core::audit::AuditReport;
use mpcforest_core::mpc::LedgerEntry;
use mpcforest_core::pipeline::{Trace, TraceRecord};
use mpcforest_core::treecolor::PeelLayers;
use mpcforest_core::{Graph, Mode, RoundLedger, Solution, VertexId};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const LEDGER_HEADER: &str = "round,tag,max_sent,max_recv,max_resident,global_words";

pub fn read_graph(path: &Path) -> Result<Graph, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input { path: path.into(), message: e.to_string() })?;
    Graph::parse_edge_list(&text).map_err(|e| CliError::graph(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Matchings as `u v` lines, independent sets as `v` lines, both sorted.
pub fn solution_text(sol: &Solution) -> String {
    let mut out = String::new();
    match sol.mode {
        Mode::Matching => {
            for (u, v) in &sol.matched_edges {
                let _ = writeln!(out, "{u} {v}");
            }
        }
        Mode::Mis => {
            for v in &sol.independent_set {
                let _ = writeln!(out, "{v}");
            }
        }
    }
    out
}

pub fn parse_solution(mode: Mode, text: &str) -> Result<Solution, String> {
    let mut sol = Solution::empty(mode);
    for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let nums: Vec<VertexId> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format!("line {}: bad vertex {t:?}", idx + 1)))
            .collect::<Result<_, _>>()?;
        match (mode, nums.as_slice()) {
            (Mode::Matching, &[u, v]) => {
                sol.matched_edges.insert((u.min(v), u.max(v)));
            }
            (Mode::Mis, &[v]) => {
                sol.independent_set.insert(v);
            }
            _ => return Err(format!("line {}: wrong number of fields", idx + 1)),
        }
    }
    Ok(sol)
}

/// One `v color` line per vertex.
pub fn coloring_text(colors: &[u32]) -> String {
    let mut out = String::with_capacity(colors.len() * 8);
    for (v, c) in colors.iter().enumerate() {
        let _ = writeln!(out, "{v} {c}");
    }
    out
}

pub fn parse_coloring(text: &str) -> Result<Vec<u32>, String> {
    let mut colors = Vec::new();
    for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut it = line.split_whitespace().map(str::parse::<u64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(v)), Some(Ok(c)), None) if v == colors.len() as u64 && c <= u32::MAX as u64 => {
                colors.push(c as u32)
            }
            _ => return Err(format!("line {}: expected `{} color`", idx + 1, colors.len())),
        }
    }
    Ok(colors)
}

pub fn ledger_csv(ledger: &RoundLedger) -> String {
    let mut out = String::from(LEDGER_HEADER);
    out.push('\n');
    for e in &ledger.entries {
        let _ =
            writeln!(out, "{},{},{},{},{},{}", e.round, e.tag, e.max_sent, e.max_recv, e.max_resident, e.global_words);
    }
    out
}

pub fn parse_ledger_csv(text: &str) -> Result<RoundLedger, String> {
    let mut lines = text.lines();
    if lines.next() != Some(LEDGER_HEADER) {
        return Err("missing ledger header".into());
    }
    let mut ledger = RoundLedger::default();
    for (idx, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || format!("ledger row {}: {line:?}", idx + 1);
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad());
        let entry = LedgerEntry {
            round: num(f[0])?,
            tag: f[1].to_string(),
            max_sent: num(f[2])?,
            max_recv: num(f[3])?,
            max_resident: num(f[4])?,
            global_words: num(f[5])?,
        };
        ledger.peak_global_words = ledger.peak_global_words.max(entry.global_words);
        ledger.entries.push(entry);
    }
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Phase {
        j: u32,
        ell: u32,
        h_size: u64,
        h_plus_size: u64,
        store_words_total: u64,
        max_store_words: u64,
        pending_count: u64,
        removed_count: u64,
    },
    Peel {
        iteration: u32,
        size: usize,
        high_degree: usize,
    },
}

impl From<&TraceRecord> for TraceLine {
    fn from(r: &TraceRecord) -> Self {
        TraceLine::Phase {
            j: r.j,
            ell: r.ell,
            h_size: r.h_size,
            h_plus_size: r.h_plus_size,
            store_words_total: r.store_words_total,
            max_store_words: r.max_store_words,
            pending_count: r.pending_count,
            removed_count: r.removed_count,
        }
    }
}

fn jsonl(lines: impl Iterator<Item = TraceLine>) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(&line).expect("trace lines serialize"));
        out.push('\n');
    }
    out
}

pub fn trace_jsonl(trace: &Trace) -> String {
    jsonl(trace.records.iter().map(TraceLine::from))
}

pub fn peel_jsonl(peel: &PeelLayers) -> String {
    jsonl(peel.sizes.iter().enumerate().map(|(i, &(size, high_degree))| TraceLine::Peel {
        iteration: i as u32 + 1,
        size,
        high_degree,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub passed: bool,
    pub hard: bool,
    pub measured: f64,
    pub bound: f64,
    pub location: String,
}

pub fn audit_json(report: &AuditReport) -> String {
    let records: Vec<CheckRecord> = report
        .checks
        .iter()
        .map(|c| CheckRecord {
            check: c.name.clone(),
            passed: c.passed,
            hard: c.hard,
            measured: if c.measured.is_finite() { c.measured } else { -1.0 },
            bound: if c.bound.is_finite() { c.bound } else { -1.0 },
            location: c.location.clone(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("audit records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_round_trips() {
        let ledger = RoundLedger {
            entries: vec![
                LedgerEntry {
                    round: 1,
                    tag: "sort".into(),
                    max_sent: 3,
                    max_recv: 4,
                    max_resident: 9,
                    global_words: 40,
                },
                LedgerEntry {
                    round: 2,
                    tag: "finish".into(),
                    max_sent: 1,
                    max_recv: 1,
                    max_resident: 9,
                    global_words: 41,
                },
            ],
            peak_global_words: 41,
        };
        let text = ledger_csv(&ledger);
        assert!(text.starts_with("round,tag,max_sent,max_recv,max_resident,global_words\n1,sort,3,4,9,40\n"));
        assert_eq!(parse_ledger_csv(&text).unwrap(), ledger);
        assert!(parse_ledger_csv("round,tag\n").is_err());
    }

    #[test]
    fn solutions_round_trip() {
        let mut sol = Solution::empty(Mode::Matching);
        sol.matched_edges.extend([(0, 1), (2, 5)]);
        assert_eq!(solution_text(&sol), "0 1\n2 5\n");
        assert_eq!(parse_solution(Mode::Matching, "0 1\n5 2\n").unwrap(), sol);
        let mut mis = Solution::empty(Mode::Mis);
        mis.independent_set.extend([0, 2]);
        assert_eq!(parse_solution(Mode::Mis, &solution_text(&mis)).unwrap(), mis);
        assert!(parse_solution(Mode::Mis, "0 1\n").is_err());
    }

    #[test]
    fn coloring_round_trips() {
        assert_eq!(coloring_text(&[1, 2, 1]), "0 1\n1 2\n2 1\n");
        assert_eq!(parse_coloring("0 1\n1 2\n2 1\n").unwrap(), vec![1, 2, 1]);
        assert!(parse_coloring("1 1\n").is_err());
    }

    #[test]
    fn trace_lines_are_tagged() {
        let line = TraceLine::Peel { iteration: 1, size: 10, high_degree: 2 };
        assert_eq!(serde_json::to_string(&line).unwrap(), r#"{"kind":"peel","iteration":1,"size":10,"high_degree":2}"#);
    }
}
