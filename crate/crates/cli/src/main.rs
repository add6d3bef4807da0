//! `touchloc`: run, compare, ablate and replay contact-localization episodes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use touchloc::harness::{
    ablation_heuristics, parse_budget, presets, read_records, replay, run_episode_traced, run_suite,
    PlannerKind,
    Scenario, RESULTS_FILE,
};

#[derive(Parser)]
#[command(name = "touchloc", version, about = "Contact-only object localization and docking on voxel grids")]
struct Cli {
    /// Directory for results.csv and summary.txt.
    #[arg(long, global = true, env = "TOUCHLOC_OUTPUT_DIR", default_value = "results")]
    output: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (repeatable).
    #[arg(short, long = "scenario")]
    scenarios: Vec<PathBuf>,

    /// Built-in scenario by name (repeatable): shelf, mobile, cube, particle_only.
    #[arg(short, long = "preset")]
    presets: Vec<String>,

    /// Override the planner budget, e.g. `backups:500` or `ms:1000`.
    #[arg(long)]
    budget: Option<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Vec<Scenario>> {
        let mut out = Vec::new();
        for path in &self.scenarios {
            out.push(Scenario::load(path).with_context(|| format!("loading {}", path.display()))?);
        }
        for name in &self.presets {
            let text = presets::get(name).with_context(|| format!("unknown preset {name:?}"))?;
            out.push(Scenario::from_toml(text)?);
        }
        if out.is_empty() {
            bail!("give at least one --scenario or --preset");
        }
        if let Some(b) = &self.budget {
            let budget = parse_budget(b)?;
            for s in &mut out {
                s.planner.budget = budget;
            }
        }
        Ok(out)
    }
}

#[derive(Args)]
struct SeedArgs {
    /// Number of seeds.
    #[arg(long, default_value_t = 10)]
    seeds: u64,

    /// First seed.
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
}

impl SeedArgs {
    fn list(&self) -> Vec<u64> {
        (self.first_seed..self.first_seed + self.seeds).collect()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a single episode and append its record.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "rtdp")]
        planner: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print every executed motion and its observation.
        #[arg(long)]
        trace: bool,
    },
    /// Run planners over seeds and print the relative metrics table.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated planner names.
        #[arg(long, default_value = "rtdp,tbl,frontier", value_delimiter = ',')]
        planners: Vec<String>,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Compare the combined heuristic schedule with the inadmissible-only one.
    Ablate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Re-execute recorded episodes and check they reproduce exactly.
    Replay {
        /// Results file; defaults to results.csv in the output directory.
        #[arg(long)]
        results: Option<PathBuf>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Only this run block.
        #[arg(long)]
        run_id: Option<u64>,
    },
    /// Print a built-in scenario file, or list them.
    Preset { name: Option<String> },
}

fn print_table(table: &touchloc::harness::AggregateTable, out: &Path) {
    print!("{table}");
    println!("results: {}", out.join(RESULTS_FILE).display());
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            planner,
            seed,
            trace,
        } => {
            let scenarios = scenario.load()?;
            let kind: PlannerKind = planner.parse()?;
            if trace {
                for s in &scenarios {
                    let (_, steps) = run_episode_traced(s, kind, seed, s.planner);
                    println!("{}: truth {:?}", s.name, s.truth_for_seed(seed));
                    for t in steps {
                        println!("  phase {} {} {} -> {}", t.phase, t.from, t.action, t.observation);
                    }
                }
            }
            let out = run_suite(&scenarios, &[kind], &[seed], &cli.output)?;
            for r in &out.records {
                println!(
                    "{} {} seed={} success={} cost={} iterations={} effort={}{}",
                    r.scenario,
                    r.planner,
                    r.seed,
                    r.success,
                    r.cost,
                    r.iterations,
                    r.effort,
                    if r.failure.is_empty() {
                        String::new()
                    } else {
                        format!(" failure=\"{}\"", r.failure)
                    }
                );
            }
            Ok(true)
        }
        Command::Compare {
            scenario,
            planners,
            seeds,
        } => {
            let scenarios = scenario.load()?;
            let kinds = planners
                .iter()
                .map(|p| p.parse::<PlannerKind>())
                .collect::<touchloc::Result<Vec<_>>>()?;
            let out = run_suite(&scenarios, &kinds, &seeds.list(), &cli.output)?;
            print_table(&out.table, &cli.output);
            Ok(true)
        }
        Command::Ablate { scenario, seeds } => {
            let scenarios = scenario.load()?;
            let out = ablation_heuristics(&scenarios, &seeds.list(), &cli.output)?;
            print_table(&out.table, &cli.output);
            Ok(true)
        }
        Command::Replay {
            results,
            scenario,
            run_id,
        } => {
            let path = results.unwrap_or_else(|| cli.output.join(RESULTS_FILE));
            let records = read_records(&path)?;
            let mut ok = true;
            for s in scenario.load()? {
                let (checked, mismatches) = replay(&records, &s, run_id)?;
                println!("{}: replayed {checked}, mismatched {}", s.name, mismatches.len());
                for m in &mismatches {
                    println!(
                        "  run {} {} seed {}: recorded cost {} digest {}, replayed cost {} digest {}",
                        m.recorded.run_id,
                        m.recorded.planner,
                        m.recorded.seed,
                        m.recorded.cost,
                        m.recorded.trace_digest,
                        m.replayed.cost,
                        m.replayed.trace_digest
                    );
                }
                ok &= mismatches.is_empty() && checked > 0;
            }
            Ok(ok)
        }
        Command::Preset { name: None } => {
            for (name, _) in presets::ALL {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Preset { name: Some(name) } => {
            let text = presets::get(&name).with_context(|| format!("unknown preset {name:?}"))?;
            print!("{text}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
