use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use std::collections::HashSet;

use crate::baselines::{frontier_step, relocate, TblSelector};
use crate::error::{Error, Result};
use crate::model::{BeliefKey, BeliefModel, Heuristic, SpatialModel};
use crate::outcome::ObservationKind;
use crate::particle::{
    expected_observation, generate_hypotheses, ParticleBelief, ParticleModel, PoseHypothesis,
};
use crate::planner::{Budget, PartialPolicy, PlannerConfig, PlannerSession};
use crate::volumetric::{VolumetricBelief, VolumetricModel};
use crate::workspace::{discretize_action, ActionSpec, Config, VoxelSet};

use super::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlannerKind {
    /// Combined admissible-then-inadmissible schedule.
    #[serde(rename = "rtdp")]
    Proposed,
    /// Inadmissible values from the first backup.
    #[serde(rename = "rtdp-inad")]
    InadmissibleOnly,
    #[serde(rename = "tbl")]
    Tbl,
    #[serde(rename = "frontier")]
    Frontier,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [
        PlannerKind::Proposed,
        PlannerKind::InadmissibleOnly,
        PlannerKind::Tbl,
        PlannerKind::Frontier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Proposed => "rtdp",
            PlannerKind::InadmissibleOnly => "rtdp-inad",
            PlannerKind::Tbl => "tbl",
            PlannerKind::Frontier => "frontier",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown planner {s:?}")))
    }
}

/// Per-episode metrics. Every field is deterministic given the scenario,
/// seed, planner and a backup-count budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub scenario: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub budget: String,
    pub success: bool,
    pub failure: String,
    /// Unit steps traveled by the probe, docking included.
    pub cost: u64,
    pub phase1_cost: u64,
    pub phase2_cost: u64,
    pub dock_cost: u64,
    /// Planner invocations (one per step for the greedy baselines).
    pub iterations: u64,
    pub phase1_iterations: u64,
    pub phase2_iterations: u64,
    /// Belief-action evaluations.
    pub effort: u64,
    pub effort_per_iteration: f64,
    pub backups: u64,
    pub phase1_steps: u64,
    pub phase2_steps: u64,
    pub initial_hypotheses: u64,
    pub final_hypotheses: u64,
    /// Steps at which the truth was missing from the belief.
    pub violations: u64,
    /// Digest of the executed action/observation sequence.
    pub trace_digest: String,
}

/// One executed motion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub phase: u8,
    pub from: Config,
    pub action: ActionSpec,
    pub observation: ObservationKind,
}

/// Ground-truth observation: the same prediction the particle model makes,
/// evaluated at the true pose.
pub fn simulate_observation(
    scenario: &Scenario,
    truth: &PoseHypothesis,
    q: Config,
    action: ActionSpec,
) -> Result<ObservationKind> {
    let disc = discretize_action(&scenario.ws, &scenario.probe, q, action)?;
    expected_observation(&scenario.template, truth, &disc, &scenario.probe)
}

fn budget_label(b: Budget) -> String {
    match b {
        Budget::Backups(n) => format!("backups:{n}"),
        Budget::WallClockMs(ms) => format!("ms:{ms}"),
    }
}

pub fn parse_budget(s: &str) -> Result<Budget> {
    let (kind, n) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidConfig(format!("budget {s:?} is not kind:value")))?;
    let n: u64 = n
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("budget {s:?} has a bad value")))?;
    match kind {
        "backups" => Ok(Budget::Backups(n)),
        "ms" => Ok(Budget::WallClockMs(n)),
        _ => Err(Error::InvalidConfig(format!("unknown budget kind {kind:?}"))),
    }
}

#[derive(Default)]
struct Tally {
    cost: u64,
    steps: u64,
    iterations: u64,
    effort: u64,
    backups: u64,
}

enum Selector {
    Planner(PlannerConfig),
    Tbl(TblSelector),
    Frontier(f64),
}

struct Episode<'s> {
    scenario: &'s Scenario,
    truth: PoseHypothesis,
    truth_voxels: VoxelSet,
    selector: Selector,
    trace: Vec<TraceStep>,
    violations: u64,
}

/// Picks the next motions with the configured planner. The planner replans
/// on a policy miss and whenever a belief repeats, since a stale policy can
/// cycle. The baselines relocate when nothing within reach is informative.
fn next_moves<M>(
    selector: &mut Selector,
    session: &mut Option<PlannerSession<'_, M>>,
    policy: &mut PartialPolicy,
    visited: &mut HashSet<BeliefKey>,
    model: &M,
    b: &M::Belief,
    tally: &mut Tally,
) -> Result<Vec<ActionSpec>>
where
    M: SpatialModel + Heuristic<<M as BeliefModel>::Belief>,
{
    let greedy = match selector {
        Selector::Planner(_) => {
            let session = session.as_mut().expect("planner session");
            let key = model.key(b);
            let repeated = !visited.insert(key.clone());
            if !repeated {
                if let Some(a) = policy.get(&key) {
                    return Ok(vec![a]);
                }
            }
            let (p, stats) = session.plan(b);
            tally.iterations += 1;
            tally.effort += stats.evaluations;
            tally.backups += stats.backups;
            *policy = p;
            return policy.get(&key).map(|a| vec![a]).ok_or(Error::DeadEnd);
        }
        Selector::Tbl(t) => {
            tally.iterations += 1;
            tally.effort += model.actions(b).len() as u64;
            t.step(model, b)
        }
        Selector::Frontier(eps) => {
            tally.iterations += 1;
            tally.effort += model.actions(b).len() as u64;
            frontier_step(model, b, *eps)
        }
    };
    match greedy {
        Ok(a) => Ok(vec![a]),
        Err(Error::NoInformativeAction) => {
            let eps = match selector {
                Selector::Tbl(t) => t.epsilon(),
                Selector::Frontier(eps) => *eps,
                Selector::Planner(_) => unreachable!(),
            };
            let r = relocate(model, b, eps)?;
            tally.effort += r.evaluations * model.actions(b).len() as u64;
            Ok(r.moves)
        }
        Err(e) => Err(e),
    }
}

impl Episode<'_> {
    fn observe(&mut self, phase: u8, q: Config, action: ActionSpec) -> Result<(ObservationKind, u64)> {
        let obs = simulate_observation(self.scenario, &self.truth, q, action)?;
        let disc = discretize_action(&self.scenario.ws, &self.scenario.probe, q, action)?;
        self.trace.push(TraceStep {
            phase,
            from: q,
            action: disc.spec(),
            observation: obs,
        });
        Ok((obs, obs.traveled(disc.len() as u32) as u64))
    }

    fn phase1(&mut self, tally: &mut Tally) -> Result<VolumetricBelief> {
        let s = self.scenario;
        let model = VolumetricModel::new(
            s.ws,
            s.probe.clone(),
            s.volumetric,
            s.lengths.clone(),
            self.weight(),
        )?;
        let mut b = model.initial_belief(s.start, &s.volume);
        let mut session = match &self.selector {
            Selector::Planner(cfg) => Some(PlannerSession::new(&model, *cfg)?),
            _ => None,
        };
        let mut policy = PartialPolicy::default();
        let mut visited = HashSet::new();
        while !model.is_phase1_terminal(&b) {
            if tally.steps as usize >= s.max_steps {
                return Err(Error::StepLimit { phase: 1 });
            }
            let moves = match next_moves(
                &mut self.selector,
                &mut session,
                &mut policy,
                &mut visited,
                &model,
                &b,
                tally,
            ) {
                Ok(m) => m,
                // Greedy baselines with nothing left to learn hand over early.
                Err(Error::NoInformativeAction) => break,
                Err(e) => return Err(e),
            };
            for action in moves {
                let (obs, traveled) = self.observe(1, b.q, action)?;
                b = model.apply_observation(&b, action, obs)?;
                tally.cost += traveled;
                tally.steps += 1;
                if !self.truth_voxels.is_subset(&b.po) {
                    self.violations += 1;
                }
            }
        }
        Ok(b)
    }

    fn phase2(&mut self, start: ParticleBelief, tally: &mut Tally) -> Result<ParticleBelief> {
        let s = self.scenario;
        let model = ParticleModel::new(
            s.ws,
            s.probe.clone(),
            s.template.clone(),
            s.lengths.clone(),
            self.particle_weight(),
        )?;
        let mut session = match &self.selector {
            Selector::Planner(cfg) => Some(PlannerSession::new(&model, *cfg)?),
            _ => None,
        };
        let mut policy = PartialPolicy::default();
        let mut visited = HashSet::new();
        let mut b = start;
        while !model.is_terminal(&b) {
            if tally.steps as usize >= s.max_steps {
                return Err(Error::StepLimit { phase: 2 });
            }
            let moves = next_moves(
                &mut self.selector,
                &mut session,
                &mut policy,
                &mut visited,
                &model,
                &b,
                tally,
            )?;
            for action in moves {
                let (obs, traveled) = self.observe(2, b.q, action)?;
                b = model.apply_observation(&b, action, obs)?;
                tally.cost += traveled;
                tally.steps += 1;
                if b.hypotheses.binary_search(&self.truth).is_err() {
                    self.violations += 1;
                }
                if b.hypotheses.is_empty() {
                    return Err(Error::NoFeasiblePose);
                }
            }
        }
        Ok(b)
    }

    fn weight(&self) -> f64 {
        match &self.selector {
            Selector::Planner(cfg) => cfg.weight,
            _ => self.scenario.planner.weight,
        }
    }

    fn particle_weight(&self) -> f64 {
        match &self.selector {
            Selector::Planner(cfg) => cfg.particle_weight(),
            _ => self.scenario.planner.particle_weight(),
        }
    }

    /// Executes the docking moves; each must arrive where planned.
    fn dock(&mut self, b: &ParticleBelief) -> Result<(u64, Config)> {
        let s = self.scenario;
        let model = ParticleModel::new(s.ws, s.probe.clone(), s.template.clone(), s.lengths.clone(), 1.0)?;
        let moves = model.dock_action(b)?;
        let mut q = b.q;
        let mut cost = 0;
        for m in moves {
            let (_, traveled) = self.observe(3, q, m)?;
            if traveled != m.length as u64 {
                return Err(Error::InconsistentObservation { config: q });
            }
            cost += traveled;
            q = q.step(m.direction, m.length as i32);
        }
        Ok((cost, q))
    }
}

/// Runs one closed-loop episode. Failures are recorded, not returned.
pub fn run_episode(scenario: &Scenario, kind: PlannerKind, seed: u64) -> RunRecord {
    run_episode_traced(scenario, kind, seed, scenario.planner).0
}

/// As [`run_episode`] with an explicit planner configuration, also returning
/// the executed trace.
pub fn run_episode_traced(
    scenario: &Scenario,
    kind: PlannerKind,
    seed: u64,
    planner: PlannerConfig,
) -> (RunRecord, Vec<TraceStep>) {
    let truth = scenario.truth_for_seed(seed);
    let selector = match kind {
        PlannerKind::Proposed => Selector::Planner(planner),
        PlannerKind::InadmissibleOnly => Selector::Planner(PlannerConfig {
            schedule_fraction: 0.0,
            ..planner
        }),
        PlannerKind::Tbl => Selector::Tbl(TblSelector::new(&crate::baselines::BaselineConfig {
            seed,
            ..scenario.baseline
        })),
        PlannerKind::Frontier => Selector::Frontier(scenario.baseline.ig_epsilon),
    };
    let mut ep = Episode {
        scenario,
        truth,
        truth_voxels: truth.voxels(&scenario.ws, &scenario.template),
        selector,
        trace: Vec::new(),
        violations: 0,
    };
    let mut record = RunRecord {
        run_id: 0,
        scenario: scenario.name.clone(),
        planner: kind,
        seed,
        budget: budget_label(planner.budget),
        success: false,
        failure: String::new(),
        cost: 0,
        phase1_cost: 0,
        phase2_cost: 0,
        dock_cost: 0,
        iterations: 0,
        phase1_iterations: 0,
        phase2_iterations: 0,
        effort: 0,
        effort_per_iteration: 0.0,
        backups: 0,
        phase1_steps: 0,
        phase2_steps: 0,
        initial_hypotheses: 0,
        final_hypotheses: 0,
        violations: 0,
        trace_digest: String::new(),
    };

    let mut t1 = Tally::default();
    let mut t2 = Tally::default();
    let outcome = (|| -> Result<()> {
        let b1 = ep.phase1(&mut t1)?;
        let hyps = generate_hypotheses(
            &scenario.ws,
            &scenario.probe,
            &scenario.template,
            &b1.po,
            &b1.history,
        )?;
        record.initial_hypotheses = hyps.len() as u64;
        if hyps.binary_search(&truth).is_err() {
            ep.violations += 1;
        }
        let b2 = ep.phase2(ParticleBelief::new(b1.q, hyps), &mut t2)?;
        record.final_hypotheses = b2.hypotheses.len() as u64;
        let (dock_cost, q) = ep.dock(&b2)?;
        record.dock_cost = dock_cost;
        let model = ParticleModel::new(
            scenario.ws,
            scenario.probe.clone(),
            scenario.template.clone(),
            scenario.lengths.clone(),
            1.0,
        )?;
        let done = ParticleBelief {
            q,
            hypotheses: b2.hypotheses.clone(),
        };
        if !model.is_goal(&done) || q != truth.dock(&scenario.template) {
            return Err(Error::AmbiguousGoal);
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => record.success = true,
        Err(e) => record.failure = e.to_string(),
    }

    record.phase1_cost = t1.cost;
    record.phase2_cost = t2.cost;
    record.cost = t1.cost + t2.cost + record.dock_cost;
    record.phase1_iterations = t1.iterations;
    record.phase2_iterations = t2.iterations;
    record.iterations = t1.iterations + t2.iterations;
    record.effort = t1.effort + t2.effort;
    record.backups = t1.backups + t2.backups;
    record.effort_per_iteration = if record.iterations == 0 {
        0.0
    } else {
        record.effort as f64 / record.iterations as f64
    };
    record.phase1_steps = t1.steps;
    record.phase2_steps = t2.steps;
    record.violations = ep.violations;
    record.trace_digest = trace_digest(&ep.trace);
    (record, ep.trace)
}

pub fn trace_digest(trace: &[TraceStep]) -> String {
    let mut h = Sha256::new();
    for s in trace {
        h.update(format!("{} {} {} {}\n", s.phase, s.from, s.action, s.observation));
    }
    hex::encode(&h.finalize()[..8])
}
