//! Closed-loop execution against a simulated ground truth, scenario files,
//! per-episode records and aggregate tables.

mod episode;
mod results;
mod scenario;

pub use episode::{
    parse_budget, run_episode, run_episode_traced, simulate_observation, trace_digest,
    PlannerKind, RunRecord, TraceStep,
};
pub use results::{
    ablation_heuristics, aggregate, aggregate_by, read_records, replay, run_suite, AggregateRow,
    AggregateTable, ReplayMismatch, ResultsWriter, SuiteOutput, RESULTS_FILE, SUMMARY_FILE,
};
pub use scenario::{
    presets, ObjectSpec, Scenario, ScenarioFile, TruthSpec, VolumeSpec, VolumetricSpec,
    FORMAT_VERSION,
};
