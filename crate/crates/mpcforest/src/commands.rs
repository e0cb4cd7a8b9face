//! The subcommands as library functions; the binary maps their errors to
//! exit codes.

use std::path::{Path, PathBuf};

use mpcforest_core::audit::{self, AuditReport};
use mpcforest_core::graph::{gen_forest_union, gen_hub_union, gen_random_tree};
use mpcforest_core::pipeline::{self, RunOptions, RunOutput};
use mpcforest_core::treecolor::{self, ColorOptions, TreeColoring};
use mpcforest_core::{Graph, Mode, Solution};
use serde::Serialize;

use crate::config::{Algorithm, GraphKind, RunConfig};
use crate::error::CliError;
use crate::io;

pub fn generate(kind: GraphKind, n: usize, alpha: u32, density: f64, seed: u64) -> Graph {
    match kind {
        GraphKind::Tree => gen_random_tree(n, seed),
        GraphKind::ForestUnion => gen_forest_union(n, alpha, density, seed),
        GraphKind::HubUnion => gen_hub_union(n, alpha, seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GenSummary {
    pub n: usize,
    pub m: usize,
    pub max_degree: usize,
}

pub fn cmd_gen(kind: GraphKind, n: usize, alpha: u32, seed: u64, out: &Path) -> Result<GenSummary, CliError> {
    if n == 0 {
        return Err(CliError::Invalid("--n must be positive".into()));
    }
    if alpha == 0 {
        return Err(CliError::Invalid("--alpha must be positive".into()));
    }
    let g = generate(kind, n, alpha, 1.0, seed);
    io::write_text(out, &g.to_edge_list())?;
    Ok(GenSummary { n: g.n(), m: g.m(), max_degree: g.max_degree() })
}

pub fn load_graph(cfg: &RunConfig) -> Result<Graph, CliError> {
    match &cfg.input {
        Some(path) => io::read_graph(path),
        None => Ok(generate(cfg.kind, cfg.n, cfg.alpha, cfg.density, cfg.seed)),
    }
}

fn mode_of(alg: Algorithm) -> Option<Mode> {
    match alg {
        Algorithm::Mm => Some(Mode::Matching),
        Algorithm::Mis => Some(Mode::Mis),
        Algorithm::Color4 => None,
    }
}

/// Result of one algorithm run, before anything is written.
#[derive(Debug, Clone)]
pub enum Outcome {
    Solved(Box<RunOutput>),
    Colored(Box<TreeColoring>),
}

impl Outcome {
    pub fn ledger(&self) -> &mpcforest_core::RoundLedger {
        match self {
            Outcome::Solved(o) => &o.ledger,
            Outcome::Colored(c) => &c.ledger,
        }
    }

    pub fn rounds(&self) -> u64 {
        self.ledger().total_rounds()
    }
}

/// Runs the configured algorithm (the pipelined driver for mm and mis).
pub fn execute(cfg: &RunConfig, g: &Graph) -> Result<Outcome, CliError> {
    let sim = cfg.sim_config(g.n(), g.m())?;
    match mode_of(cfg.algorithm) {
        Some(mode) => {
            let out = pipeline::run_pipelined(g, mode, &sim, RunOptions { record_snapshots: cfg.audit })?;
            Ok(Outcome::Solved(Box::new(out)))
        }
        None => {
            treecolor::check_forest(g)?;
            let opts = ColorOptions { retries: cfg.retries, ..ColorOptions::default() };
            Ok(Outcome::Colored(Box::new(treecolor::four_color_tree(g, &sim, opts)?)))
        }
    }
}

/// Verifier and ledger checks, plus the trace audits when snapshots exist.
pub fn audit_outcome(cfg: &RunConfig, g: &Graph, outcome: &Outcome) -> Result<AuditReport, CliError> {
    let sim = cfg.sim_config(g.n(), g.m())?;
    let mut report = match outcome {
        Outcome::Solved(o) => audit::verify_solution(g, &o.solution),
        Outcome::Colored(c) => audit::verify_coloring(g, &c.colors, 4),
    };
    report.merge(audit::audit_ledger(outcome.ledger(), &sim, g.n(), g.m()));
    if let Outcome::Solved(o) = outcome {
        if o.trace.snapshots.is_some() {
            let p24 = audit::audit_property24(g, o).map_err(|e| CliError::Verify(e.to_string()))?;
            report.merge(p24);
            let mem = audit::audit_memory(g, o, &sim).map_err(|e| CliError::Verify(e.to_string()))?;
            report.merge(mem);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub max_degree: usize,
    pub rounds: u64,
    pub peak_global_words: u64,
    /// Matched edges, set size, or number of colors used.
    pub size: usize,
    pub soft_violations: usize,
    pub out: PathBuf,
}

pub const SOLUTION_FILE: &str = "solution.txt";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const AUDIT_FILE: &str = "audit.json";

/// Writes the solution (or coloring), ledger, trace and audit report to
/// `cfg.out`, then fails with a verifier error if any hard check failed.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let g = load_graph(cfg)?;
    let outcome = execute(cfg, &g)?;
    let dir = &cfg.out;
    let (solution, trace, size) = match &outcome {
        Outcome::Solved(o) => (io::solution_text(&o.solution), io::trace_jsonl(&o.trace), o.solution.len()),
        Outcome::Colored(c) => {
            let mut used = c.colors.clone();
            used.sort_unstable();
            used.dedup();
            (io::coloring_text(&c.colors), io::peel_jsonl(&c.peel), used.len())
        }
    };
    io::write_text(&dir.join(SOLUTION_FILE), &solution)?;
    io::write_text(&dir.join(TRACE_FILE), &trace)?;
    let ledger_path = dir.join(LEDGER_FILE);
    io::write_text(&ledger_path, &io::ledger_csv(outcome.ledger()))?;

    let mut report = audit_outcome(cfg, &g, &outcome)?;
    // The ledger is checked again as read back from disk.
    let text = std::fs::read_to_string(&ledger_path).map_err(|e| CliError::io(&ledger_path, e))?;
    let reloaded =
        io::parse_ledger_csv(&text).map_err(|message| CliError::Input { path: ledger_path.clone(), message })?;
    let sim = cfg.sim_config(g.n(), g.m())?;
    report.merge(audit::audit_ledger(&reloaded, &sim, g.n(), g.m()));
    io::write_text(&dir.join(AUDIT_FILE), &io::audit_json(&report))?;

    if let Some(first) = report.failures().next() {
        return Err(CliError::Verify(format!("{} (measured {}, bound {})", first.name, first.measured, first.bound)));
    }
    Ok(RunSummary {
        algorithm: cfg.algorithm,
        n: g.n(),
        m: g.m(),
        max_degree: g.max_degree(),
        rounds: outcome.rounds(),
        peak_global_words: outcome.ledger().peak_global_words,
        size,
        soft_violations: report.soft_violations(),
        out: dir.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompareReport {
    pub n: usize,
    pub m: usize,
    pub pipelined_rounds: u64,
    pub unpipelined_rounds: u64,
    pub pipelined_size: usize,
    pub unpipelined_size: usize,
    pub identical: bool,
}

/// Test hook for the comparison: damages the pipelined solution before
/// comparing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Corruption {
    #[default]
    None,
    DropOne,
}

fn corrupt(sol: &mut Solution, g: &Graph) {
    match sol.mode {
        Mode::Matching => {
            if let Some(&e) = sol.matched_edges.iter().next() {
                sol.matched_edges.remove(&e);
            } else if let Some(&e) = g.edges().first() {
                sol.matched_edges.insert(e);
            }
        }
        Mode::Mis => {
            if let Some(&v) = sol.independent_set.iter().next() {
                sol.independent_set.remove(&v);
            } else {
                sol.independent_set.insert(0);
            }
        }
    }
}

/// Runs both drivers with the same seed. The report is returned even on a
/// mismatch, alongside the error.
pub fn compare(cfg: &RunConfig, g: &Graph, hook: Corruption) -> Result<CompareReport, CliError> {
    let mode = mode_of(cfg.algorithm).ok_or_else(|| CliError::Invalid("compare needs --alg mm or mis".into()))?;
    let sim = cfg.sim_config(g.n(), g.m())?;
    let mut piped = pipeline::run_pipelined(g, mode, &sim, RunOptions::default())?;
    let flat = pipeline::run_unpipelined(g, mode, &sim, RunOptions::default())?;
    if hook == Corruption::DropOne {
        corrupt(&mut piped.solution, g);
    }
    Ok(CompareReport {
        n: g.n(),
        m: g.m(),
        pipelined_rounds: piped.ledger.total_rounds(),
        unpipelined_rounds: flat.ledger.total_rounds(),
        pipelined_size: piped.solution.len(),
        unpipelined_size: flat.solution.len(),
        identical: piped.solution == flat.solution,
    })
}

pub fn cmd_compare(cfg: &RunConfig, hook: Corruption) -> Result<CompareReport, CliError> {
    let g = load_graph(cfg)?;
    let report = compare(cfg, &g, hook)?;
    if !report.identical {
        return Err(CliError::Mismatch(format!(
            "pipelined {} ({} rounds) vs unpipelined {} ({} rounds)",
            report.pipelined_size, report.pipelined_rounds, report.unpipelined_size, report.unpipelined_rounds
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub mean_rounds: f64,
    pub max_rounds: u64,
    pub peak_global_words: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub repetitions: u32,
    /// Measure plain Luby on the whole graph instead of the configured
    /// algorithm.
    pub baseline: bool,
}

fn bench_one(base: &RunConfig, n: usize, rep: u32, baseline: bool) -> Result<(u64, u64), CliError> {
    let cfg = RunConfig { n, seed: base.seed.wrapping_add(u64::from(rep)), input: None, audit: false, ..base.clone() };
    let g = load_graph(&cfg)?;
    if baseline {
        let (set, rounds) = pipeline::luby_baseline(&g, cfg.seed);
        let mut sol = Solution::empty(Mode::Mis);
        sol.independent_set = set;
        if !audit::verify_mis(&g, &sol).passed() {
            return Err(CliError::Verify(format!("baseline MIS failed at n = {n}")));
        }
        return Ok((rounds, (g.n() + 2 * g.m()) as u64));
    }
    let outcome = execute(&cfg, &g)?;
    let report = audit_outcome(&cfg, &g, &outcome)?;
    if let Some(first) = report.failures().next() {
        return Err(CliError::Verify(format!("{} at n = {n}", first.name)));
    }
    Ok((outcome.rounds(), outcome.ledger().peak_global_words))
}

/// One row per size; repetitions run on separate threads with seeds
/// `seed, seed+1, ...`.
pub fn cmd_bench(base: &RunConfig, spec: &BenchSpec) -> Result<Vec<BenchRow>, CliError> {
    if spec.repetitions == 0 {
        return Err(CliError::Invalid("--repetitions must be positive".into()));
    }
    if spec.sizes.is_empty() || spec.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Invalid("--sizes must be non-empty and strictly ascending".into()));
    }
    if spec.sizes[0] < 2 {
        return Err(CliError::Invalid("--sizes must be at least 2".into()));
    }
    base.validate()?;
    let mut rows = Vec::with_capacity(spec.sizes.len());
    for &n in &spec.sizes {
        let results: Vec<Result<(u64, u64), CliError>> = std::thread::scope(|scope| {
            let handles: Vec<_> =
                (0..spec.repetitions).map(|rep| scope.spawn(move || bench_one(base, n, rep, spec.baseline))).collect();
            handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
        });
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let total: u64 = results.iter().map(|r| r.0).sum();
        rows.push(BenchRow {
            n,
            mean_rounds: total as f64 / results.len() as f64,
            max_rounds: results.iter().map(|r| r.0).max().unwrap_or(0),
            peak_global_words: results.iter().map(|r| r.1).max().unwrap_or(0),
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,mean_rounds,max_rounds,peak_global_words\n");
    for r in rows {
        out.push_str(&format!("{},{:.3},{},{}\n", r.n, r.mean_rounds, r.max_rounds, r.peak_global_words));
    }
    out
}
