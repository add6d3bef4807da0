//! Trial-based belief-space value iteration with an admissible and an
//! inadmissible value function, most-likely-successor descent and partial
//! policy extraction. Generic over both belief phases.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionOutcomes, BeliefKey, BeliefModel, Heuristic};
use crate::outcome::ObservationKind;
use crate::workspace::ActionSpec;

/// Value assigned to beliefs with no useful action.
pub const DEAD_END_COST: f64 = 1e6;

/// Expanded beliefs kept between planning calls; past this the expansion
/// cache is dropped (values are kept).
const NODE_CACHE_LIMIT: usize = 200_000;

/// Planning budget per call to [`PlannerSession::plan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Backups(u64),
    WallClockMs(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub budget: Budget,
    /// Maximum trial depth.
    pub horizon: usize,
    /// Fraction of the budget during which trials follow the admissible values.
    pub schedule_fraction: f64,
    /// Weight of the inadmissible heuristic's uncertainty term.
    pub weight: f64,
    /// Weight used in particle space, where uncertainty is counted in bits
    /// rather than voxels; `weight` when absent.
    pub particle_weight: Option<f64>,
    /// Stop early once a trial driven by the inadmissible values reaches a
    /// terminal belief with every residual below this tolerance.
    pub convergence_tol: Option<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            budget: Budget::Backups(2000),
            horizon: 50,
            schedule_fraction: 0.5,
            weight: 0.5,
            particle_weight: Some(4.0),
            convergence_tol: Some(1e-6),
        }
    }
}

impl PlannerConfig {
    pub fn particle_weight(&self) -> f64 {
        self.particle_weight.unwrap_or(self.weight)
    }

    pub fn validate(&self) -> Result<()> {
        match self.budget {
            Budget::Backups(0) | Budget::WallClockMs(0) => {
                return Err(Error::InvalidConfig("budget must be positive".into()))
            }
            _ => {}
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.schedule_fraction) {
            return Err(Error::InvalidConfig("schedule_fraction must lie in [0, 1]".into()));
        }
        if !(self.weight > 0.0) || self.particle_weight.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::InvalidConfig("weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueType {
    Admissible,
    Inadmissible,
}

/// Backed-up values; missing entries fall back to the heuristics.
#[derive(Debug, Clone, Default)]
pub struct ValueTable {
    v_ad: HashMap<BeliefKey, f64>,
    v_inad: HashMap<BeliefKey, f64>,
}

impl ValueTable {
    pub fn get(&self, ty: ValueType, key: &BeliefKey) -> Option<f64> {
        match ty {
            ValueType::Admissible => self.v_ad.get(key).copied(),
            ValueType::Inadmissible => self.v_inad.get(key).copied(),
        }
    }

    pub fn set(&mut self, ty: ValueType, key: BeliefKey, v: f64) {
        match ty {
            ValueType::Admissible => self.v_ad.insert(key, v),
            ValueType::Inadmissible => self.v_inad.insert(key, v),
        };
    }

    pub fn len(&self) -> usize {
        self.v_ad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_ad.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &BeliefKey> {
        self.v_ad.keys()
    }

    /// One `key v_ad v_inad` line per entry, sorted by key.
    pub fn dump(&self) -> String {
        let mut keys: Vec<&BeliefKey> = self.v_ad.keys().collect();
        keys.sort();
        let mut out = String::from("# key v_ad v_inad\n");
        for k in keys {
            let inad = self.v_inad.get(k).copied().unwrap_or(f64::NAN);
            let _ = writeln!(out, "{k} {} {}", self.v_ad[k], inad);
        }
        out
    }
}

/// Actions for the beliefs visited while planning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialPolicy {
    actions: HashMap<BeliefKey, ActionSpec>,
}

impl PartialPolicy {
    pub fn get(&self, key: &BeliefKey) -> Option<ActionSpec> {
        self.actions.get(key).copied()
    }

    pub fn contains(&self, key: &BeliefKey) -> bool {
        self.actions.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Counters for one planning call or a whole session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStats {
    pub backups: u64,
    /// Belief-action Q evaluations.
    pub evaluations: u64,
    pub trials: u64,
    /// Longest single backup, with the descent step that follows it, in
    /// microseconds.
    pub slowest_backup_us: u64,
}

impl std::ops::AddAssign for PlanStats {
    fn add_assign(&mut self, o: Self) {
        self.backups += o.backups;
        self.evaluations += o.evaluations;
        self.trials += o.trials;
        self.slowest_backup_us = self.slowest_backup_us.max(o.slowest_backup_us);
    }
}

/// Result of one Bellman backup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackupResult {
    pub best_ad: ActionSpec,
    pub best_inad: ActionSpec,
    pub v_ad: f64,
    pub v_inad: f64,
    pub residual_ad: f64,
    pub residual_inad: f64,
}

#[derive(Debug, Clone)]
pub struct Successor {
    pub key: BeliefKey,
    pub probability: f64,
    pub kind: ObservationKind,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub action: ActionSpec,
    /// Expected unit steps traveled.
    pub cost: f64,
    pub successors: Vec<Successor>,
}

impl Edge {
    /// Most probable successor; ties prefer no-collision, then the lowest
    /// collision index.
    pub fn most_likely(&self) -> &Successor {
        self.most_likely_of(|_| true).expect("every action has an outcome")
    }

    /// Most probable successor satisfying `keep`, same tie-breaks.
    pub fn most_likely_of(&self, keep: impl Fn(&Successor) -> bool) -> Option<&Successor> {
        self.successors
            .iter()
            .filter(|s| keep(s))
            .reduce(|best, s| {
                let better = s.probability > best.probability
                    || (s.probability == best.probability && s.kind.tie_order(best.kind).is_lt());
                if better {
                    s
                } else {
                    best
                }
            })
    }
}

/// Expected distance traveled by an action.
pub fn action_cost<B>(outcomes: &ActionOutcomes<B>) -> f64 {
    outcomes.expected_cost()
}

struct Node<B> {
    belief: B,
    terminal: bool,
    terminal_cost: f64,
    h_ad: f64,
    h_inad: f64,
    edges: Option<Rc<Vec<Edge>>>,
    /// Greedy inadmissible action as of the latest backup.
    last_inad: Option<ActionSpec>,
    /// Largest value change made by the latest backup.
    residual: f64,
}

/// What a trial did.
#[derive(Debug, Clone, Default)]
pub struct TrialResult {
    /// Beliefs backed up, in order.
    pub visited: Vec<BeliefKey>,
    pub reached_terminal: bool,
    /// Whether every step followed the inadmissible values.
    pub inadmissible_only: bool,
    /// Largest residual of the value type driving each step.
    pub max_residual: f64,
}

/// A planning session: the model, its configuration, and the value table and
/// expansion cache that persist across replanning calls.
pub struct PlannerSession<'m, M: BeliefModel> {
    model: &'m M,
    config: PlannerConfig,
    table: ValueTable,
    nodes: HashMap<BeliefKey, Node<M::Belief>>,
    totals: PlanStats,
    call: PlanStats,
    started: Instant,
}

impl<'m, M> PlannerSession<'m, M>
where
    M: BeliefModel + Heuristic<<M as BeliefModel>::Belief>,
{
    pub fn new(model: &'m M, config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            model,
            config,
            table: ValueTable::default(),
            nodes: HashMap::new(),
            totals: PlanStats::default(),
            call: PlanStats::default(),
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }

    pub fn totals(&self) -> PlanStats {
        self.totals
    }

    /// Records a belief and returns its key.
    pub fn register(&mut self, b: &M::Belief) -> BeliefKey {
        let key = self.model.key(b);
        if !self.nodes.contains_key(&key) {
            let terminal = self.model.is_terminal(b);
            let node = Node {
                belief: b.clone(),
                terminal,
                terminal_cost: if terminal { self.model.terminal_cost(b) } else { 0.0 },
                h_ad: if terminal { 0.0 } else { self.model.admissible(b) },
                h_inad: if terminal { 0.0 } else { self.model.inadmissible(b) },
                edges: None,
                last_inad: None,
                residual: f64::INFINITY,
            };
            self.nodes.insert(key, node);
        }
        key
    }

    pub fn belief(&self, key: &BeliefKey) -> Option<&M::Belief> {
        self.nodes.get(key).map(|n| &n.belief)
    }

    pub fn is_terminal(&self, key: &BeliefKey) -> bool {
        self.nodes[key].terminal
    }

    /// Current value estimate of a registered belief.
    pub fn value(&self, ty: ValueType, key: &BeliefKey) -> f64 {
        let node = &self.nodes[key];
        if node.terminal {
            return node.terminal_cost;
        }
        self.table.get(ty, key).unwrap_or(match ty {
            ValueType::Admissible => node.h_ad,
            ValueType::Inadmissible => node.h_inad,
        })
    }

    /// Outcome structure of every useful action from a registered belief.
    pub fn edges(&mut self, key: &BeliefKey) -> Rc<Vec<Edge>> {
        if let Some(e) = &self.nodes[key].edges {
            return e.clone();
        }
        let groups = self.model.expand(&self.nodes[key].belief);
        let mut edges = Vec::with_capacity(groups.len());
        for g in groups {
            let cost = action_cost(&g);
            let successors = g
                .outcomes
                .iter()
                .map(|o| Successor {
                    key: self.register(&o.successor),
                    probability: o.probability,
                    kind: o.kind,
                })
                .collect();
            edges.push(Edge {
                action: g.action,
                cost,
                successors,
            });
        }
        let edges = Rc::new(edges);
        self.nodes.get_mut(key).expect("registered").edges = Some(edges.clone());
        edges
    }

    /// `C(b, a) + Σ P(z) V(b')`.
    pub fn q_value(&mut self, ty: ValueType, edge: &Edge) -> f64 {
        self.call.evaluations += 1;
        edge.cost
            + edge
                .successors
                .iter()
                .map(|s| s.probability * self.value(ty, &s.key))
                .sum::<f64>()
    }

    /// Updates both value functions at `key` to their minimum Q. Ties go to
    /// the first action in canonical (length, direction) order.
    pub fn backup(&mut self, key: &BeliefKey) -> Result<BackupResult> {
        self.call.backups += 1;
        let edges = self.edges(key);
        if edges.is_empty() {
            self.table.set(ValueType::Admissible, *key, DEAD_END_COST);
            self.table.set(ValueType::Inadmissible, *key, DEAD_END_COST);
            return Err(Error::DeadEnd);
        }
        let old_ad = self.value(ValueType::Admissible, key);
        let old_inad = self.value(ValueType::Inadmissible, key);
        let (mut best_ad, mut best_inad) = ((f64::INFINITY, edges[0].action), (f64::INFINITY, edges[0].action));
        for e in edges.iter() {
            let qa = self.q_value(ValueType::Admissible, e);
            let qi = self.q_value(ValueType::Inadmissible, e);
            if qa < best_ad.0 {
                best_ad = (qa, e.action);
            }
            if qi < best_inad.0 {
                best_inad = (qi, e.action);
            }
        }
        self.table.set(ValueType::Admissible, *key, best_ad.0);
        self.table.set(ValueType::Inadmissible, *key, best_inad.0);
        let residual = (best_ad.0 - old_ad).abs().max((best_inad.0 - old_inad).abs());
        if let Some(n) = self.nodes.get_mut(key) {
            n.last_inad = Some(best_inad.1);
            n.residual = residual;
        }
        Ok(BackupResult {
            best_ad: best_ad.1,
            best_inad: best_inad.1,
            v_ad: best_ad.0,
            v_inad: best_inad.0,
            residual_ad: (best_ad.0 - old_ad).abs(),
            residual_inad: (best_inad.0 - old_inad).abs(),
        })
    }

    fn note_duration(&mut self, since: Instant) {
        let us = since.elapsed().as_micros() as u64;
        self.call.slowest_backup_us = self.call.slowest_backup_us.max(us);
    }

    /// Terminal, or its latest backup left both values in place and they
    /// agree, all within the convergence tolerance.
    fn settled(&self, key: &BeliefKey) -> bool {
        let node = &self.nodes[key];
        if node.terminal {
            return true;
        }
        let tol = self.config.convergence_tol.unwrap_or(1e-9);
        let gap = (self.value(ValueType::Inadmissible, key) - self.value(ValueType::Admissible, key)).abs();
        node.residual <= tol && gap <= tol
    }

    /// Under a wall-clock budget the last hundredth is kept for policy
    /// extraction.
    fn exhausted(&self) -> bool {
        match self.config.budget {
            Budget::Backups(n) => self.call.backups >= n,
            Budget::WallClockMs(ms) => self.started.elapsed() >= Duration::from_micros(ms * 990),
        }
    }

    fn admissible_phase(&self) -> bool {
        let eps = self.config.schedule_fraction;
        match self.config.budget {
            Budget::Backups(n) => (self.call.backups as f64) < eps * n as f64,
            Budget::WallClockMs(ms) => self.started.elapsed().as_secs_f64() * 1e3 < eps * ms as f64,
        }
    }

    /// One descent from `start`: back up, act by the scheduled value type,
    /// move to the most likely successor; stop at a terminal belief, the
    /// horizon, a dead end or when the budget runs out.
    pub fn trial(&mut self, start: &BeliefKey) -> TrialResult {
        self.call.trials += 1;
        let mut result = TrialResult {
            inadmissible_only: true,
            ..TrialResult::default()
        };
        let mut key = *start;
        for _ in 0..self.config.horizon {
            if self.nodes[&key].terminal {
                result.reached_terminal = true;
                break;
            }
            if self.exhausted() {
                break;
            }
            let use_ad = self.admissible_phase();
            let t0 = Instant::now();
            let Ok(r) = self.backup(&key) else {
                result.visited.push(key);
                self.note_duration(t0);
                break;
            };
            result.visited.push(key);
            let (action, residual) = if use_ad {
                result.inadmissible_only = false;
                (r.best_ad, r.residual_ad)
            } else {
                (r.best_inad, r.residual_inad)
            };
            result.max_residual = result.max_residual.max(residual);
            let edges = self.edges(&key);
            let edge = edges
                .iter()
                .find(|e| e.action == action)
                .expect("chosen action has an edge");
            // Descend into the most likely successor whose two values still
            // disagree; once all agree, into the most likely one.
            key = edge
                .most_likely_of(|s| !self.settled(&s.key))
                .unwrap_or_else(|| edge.most_likely())
                .key;
            self.note_duration(t0);
        }
        if !result.reached_terminal && self.nodes[&key].terminal {
            result.reached_terminal = true;
        }
        result
    }

    /// Runs trials from `b` until the budget is spent (or the inadmissible
    /// values converge along the greedy path) and returns the greedy
    /// inadmissible action for every belief backed up.
    pub fn plan(&mut self, b: &M::Belief) -> (PartialPolicy, PlanStats) {
        self.call = PlanStats::default();
        self.started = Instant::now();
        if self.nodes.len() > NODE_CACHE_LIMIT {
            self.nodes.clear();
        }
        let start = self.register(b);
        let mut visited = Vec::new();
        let mut seen = HashSet::new();
        if !self.nodes[&start].terminal {
            while !self.exhausted() {
                let t = self.trial(&start);
                for k in &t.visited {
                    if seen.insert(*k) {
                        visited.push(*k);
                    }
                }
                if t.visited.is_empty() {
                    break;
                }
                if let Some(tol) = self.config.convergence_tol {
                    if t.reached_terminal && t.inadmissible_only && t.max_residual < tol {
                        break;
                    }
                }
            }
        }
        let policy = self.extract(&visited);
        let stats = self.call;
        self.totals += stats;
        (policy, stats)
    }

    /// Greedy actions under the final values. Under a wall-clock budget this
    /// stops at the deadline; beliefs not reached by then keep the action of
    /// their latest backup.
    fn extract(&mut self, visited: &[BeliefKey]) -> PartialPolicy {
        let cutoff = match self.config.budget {
            Budget::Backups(_) => None,
            Budget::WallClockMs(ms) => Some(Duration::from_millis(ms)),
        };
        let mut actions = HashMap::new();
        for key in visited {
            let late = cutoff.is_some_and(|c| self.started.elapsed() >= c);
            let action = if late {
                self.nodes.get(key).and_then(|n| n.last_inad)
            } else {
                self.greedy_action(key)
            };
            if let Some(a) = action {
                actions.insert(*key, a);
            }
        }
        PartialPolicy { actions }
    }

    /// `argmin_a Q_inad(b, a)` under the current values.
    pub fn greedy_action(&mut self, key: &BeliefKey) -> Option<ActionSpec> {
        let edges = self.edges(key);
        let mut best: Option<(f64, ActionSpec)> = None;
        for e in edges.iter() {
            let q = self.q_value(ValueType::Inadmissible, e);
            if best.map_or(true, |(v, _)| q < v) {
                best = Some((q, e.action));
            }
        }
        best.map(|(_, a)| a)
    }
}
