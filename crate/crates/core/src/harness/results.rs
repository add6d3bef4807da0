use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::episode::{parse_budget, run_episode_traced, PlannerKind, RunRecord};
use super::scenario::Scenario;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Reads every row of a results file.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e),
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Appends rows to a results file, one flush per row.
pub struct ResultsWriter {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
    run_id: u64,
}

impl ResultsWriter {
    /// Opens (or creates) the file and picks a run id one past the largest
    /// already present.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let exists = path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        let run_id = if exists {
            read_records(path)?.iter().map(|r| r.run_id).max().unwrap_or(0) + 1
        } else {
            1
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let writer = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
        Ok(Self {
            path: path.to_path_buf(),
            writer,
            run_id,
        })
    }

    pub fn run_id(&self) -> u64 {
        self.run_id
    }

    pub fn write(&mut self, record: &mut RunRecord) -> Result<()> {
        record.run_id = self.run_id;
        self.writer.serialize(&*record)?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Per-planner means relative to the reference planner's means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub planner: PlannerKind,
    pub episodes: usize,
    pub success_rate: f64,
    pub cost: f64,
    pub effort: f64,
    pub iterations: f64,
    pub effort_per_iteration: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub reference: PlannerKind,
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn row(&self, planner: PlannerKind) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.planner == planner)
    }
}

impl fmt::Display for AggregateTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "relative to {}", self.reference)?;
        writeln!(
            f,
            "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10}",
            "planner", "episodes", "success", "cost", "effort", "iters", "effort/it", "mean cost"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>8} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>10.3} {:>10.2}",
                r.planner.as_str(),
                r.episodes,
                r.success_rate,
                r.cost,
                r.effort,
                r.iterations,
                r.effort_per_iteration,
                r.mean_cost
            )?;
        }
        Ok(())
    }
}

fn ratio(x: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if x == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        x / reference
    }
}

struct Means {
    n: usize,
    success: f64,
    cost: f64,
    effort: f64,
    iterations: f64,
    per_iteration: f64,
}

fn means<'a>(records: impl Iterator<Item = &'a RunRecord>, metric: &dyn Fn(&RunRecord) -> f64) -> Means {
    let rs: Vec<&RunRecord> = records.collect();
    let n = rs.len() as f64;
    let avg = |f: &dyn Fn(&RunRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
    Means {
        n: rs.len(),
        success: avg(&|r| r.success as u8 as f64),
        cost: avg(metric),
        effort: avg(&|r| r.effort as f64),
        iterations: avg(&|r| r.iterations as f64),
        per_iteration: avg(&|r| r.effort_per_iteration),
    }
}

/// Normalizes per-planner means by `reference` (or the first planner present
/// when it is absent). Every planner must cover the same (scenario, seed) pairs.
pub fn aggregate(records: &[RunRecord], reference: PlannerKind) -> Result<AggregateTable> {
    aggregate_by(records, reference, &|r| r.cost as f64)
}

/// As [`aggregate`] with a custom cost metric.
pub fn aggregate_by(
    records: &[RunRecord],
    reference: PlannerKind,
    cost: &dyn Fn(&RunRecord) -> f64,
) -> Result<AggregateTable> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut groups: BTreeMap<PlannerKind, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.planner).or_default().push(r);
    }
    let keyset = |rs: &[&RunRecord]| -> BTreeSet<(String, u64)> {
        rs.iter().map(|r| (r.scenario.clone(), r.seed)).collect()
    };
    let first = keyset(groups.values().next().expect("non-empty"));
    if groups.values().any(|rs| keyset(rs) != first) {
        return Err(Error::MismatchedScenarioSets);
    }
    let reference = if groups.contains_key(&reference) {
        reference
    } else {
        *groups.keys().next().expect("non-empty")
    };
    let base = means(groups[&reference].iter().copied(), cost);
    let rows = groups
        .iter()
        .map(|(planner, rs)| {
            let m = means(rs.iter().copied(), cost);
            AggregateRow {
                planner: *planner,
                episodes: m.n,
                success_rate: m.success,
                cost: ratio(m.cost, base.cost),
                effort: ratio(m.effort, base.effort),
                iterations: ratio(m.iterations, base.iterations),
                effort_per_iteration: ratio(m.per_iteration, base.per_iteration),
                mean_cost: m.cost,
            }
        })
        .collect();
    Ok(AggregateTable { reference, rows })
}

pub struct SuiteOutput {
    pub run_id: u64,
    pub records: Vec<RunRecord>,
    pub table: AggregateTable,
}

/// Runs every (scenario, planner, seed) combination, appending each record to
/// `out_dir/results.csv` as it completes and writing the aggregate table to
/// `out_dir/summary.txt`.
pub fn run_suite(
    scenarios: &[Scenario],
    planners: &[PlannerKind],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<SuiteOutput> {
    let mut writer = ResultsWriter::open(&out_dir.join(RESULTS_FILE))?;
    let mut records = Vec::new();
    for s in scenarios {
        for &p in planners {
            for &seed in seeds {
                let (mut r, _) = run_episode_traced(s, p, seed, s.planner);
                writer.write(&mut r)?;
                records.push(r);
            }
        }
    }
    let table = aggregate(&records, PlannerKind::Proposed)?;
    let summary = out_dir.join(SUMMARY_FILE);
    let text = format!("run {}\n{table}", writer.run_id());
    std::fs::write(&summary, text).map_err(|e| Error::io(&summary, e))?;
    Ok(SuiteOutput {
        run_id: writer.run_id(),
        records,
        table,
    })
}

/// Combined schedule against the inadmissible-only variant.
pub fn ablation_heuristics(scenarios: &[Scenario], seeds: &[u64], out_dir: &Path) -> Result<SuiteOutput> {
    run_suite(
        scenarios,
        &[PlannerKind::Proposed, PlannerKind::InadmissibleOnly],
        seeds,
        out_dir,
    )
}

/// A recorded episode that did not reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub recorded: RunRecord,
    pub replayed: RunRecord,
}

/// Re-executes every record of `scenario` (optionally restricted to one run
/// id) and returns those whose metrics or trace differ.
pub fn replay(records: &[RunRecord], scenario: &Scenario, run_id: Option<u64>) -> Result<(usize, Vec<ReplayMismatch>)> {
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for rec in records {
        if rec.scenario != scenario.name || run_id.is_some_and(|id| id != rec.run_id) {
            continue;
        }
        let planner = crate::planner::PlannerConfig {
            budget: parse_budget(&rec.budget)?,
            ..scenario.planner
        };
        let (mut again, _) = run_episode_traced(scenario, rec.planner, rec.seed, planner);
        again.run_id = rec.run_id;
        checked += 1;
        if !same(rec, &again) {
            mismatches.push(ReplayMismatch {
                recorded: rec.clone(),
                replayed: again,
            });
        }
    }
    Ok((checked, mismatches))
}

/// Field equality, with the float compared through its text form as stored.
fn same(a: &RunRecord, b: &RunRecord) -> bool {
    let norm = |r: &RunRecord| RunRecord {
        effort_per_iteration: r.effort_per_iteration.to_string().parse().unwrap_or(f64::NAN),
        ..r.clone()
    };
    norm(a) == norm(b)
}
