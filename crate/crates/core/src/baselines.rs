//! Greedy comparison planners driven by expected information gain: a sampled
//! maximum-gain selector and a nearest-informative-action selector.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionOutcomes, BeliefModel, SpatialModel};
use crate::workspace::{ActionSpec, Config, Direction, VoxelSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub tbl_samples: usize,
    pub seed: u64,
    pub ig_epsilon: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            tbl_samples: 32,
            seed: 0,
            ig_epsilon: 1e-9,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tbl_samples == 0 {
            return Err(Error::InvalidConfig("tbl_samples must be at least 1".into()));
        }
        if !(self.ig_epsilon > 0.0) {
            return Err(Error::InvalidConfig("ig_epsilon must be positive".into()));
        }
        Ok(())
    }
}

fn log_count(n: usize) -> f64 {
    (n.max(1) as f64).log2()
}

/// Expected reduction of `log2` of the belief's cardinality, in bits.
pub fn information_gain<M: BeliefModel>(
    model: &M,
    b: &M::Belief,
    group: &ActionOutcomes<M::Belief>,
) -> f64 {
    let after: f64 = group
        .outcomes
        .iter()
        .map(|o| o.probability * log_count(model.uncertainty(&o.successor)))
        .sum();
    (log_count(model.uncertainty(b)) - after).max(0.0)
}

struct Scored {
    action: ActionSpec,
    gain: f64,
    cost: f64,
}

fn score<M: BeliefModel>(model: &M, b: &M::Belief) -> Vec<Scored> {
    model
        .expand(b)
        .iter()
        .map(|g| Scored {
            action: g.action,
            gain: information_gain(model, b, g),
            cost: g.expected_cost(),
        })
        .collect()
}

/// Picks the sampled action with the highest gain; ties go to the shorter
/// expected path, then canonical action order.
pub struct TblSelector {
    rng: ChaCha8Rng,
    samples: usize,
    epsilon: f64,
}

impl TblSelector {
    pub fn new(config: &BaselineConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            samples: config.tbl_samples,
            epsilon: config.ig_epsilon,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn step<M: BeliefModel>(&mut self, model: &M, b: &M::Belief) -> Result<ActionSpec> {
        let valid = model.actions(b);
        if valid.is_empty() {
            return Err(Error::DeadEnd);
        }
        let scored = score(model, b);
        let lookup = |a: ActionSpec| scored.iter().find(|s| s.action == a);
        let drawn: Vec<ActionSpec> = (0..self.samples)
            .map(|_| valid[self.rng.gen_range(0..valid.len())])
            .collect();
        let pick = |cands: &mut dyn Iterator<Item = &Scored>| -> Option<ActionSpec> {
            cands
                .filter(|s| s.gain >= self.epsilon)
                .min_by(|x, y| {
                    y.gain
                        .total_cmp(&x.gain)
                        .then(x.cost.total_cmp(&y.cost))
                        .then(x.action.cmp(&y.action))
                })
                .map(|s| s.action)
        };
        if let Some(a) = pick(&mut drawn.iter().filter_map(|&a| lookup(a))) {
            return Ok(a);
        }
        pick(&mut scored.iter()).ok_or(Error::NoInformativeAction)
    }
}

/// Cheapest action with gain at least `epsilon`; ties go to the higher gain,
/// then canonical action order.
pub fn frontier_step<M: BeliefModel>(model: &M, b: &M::Belief, epsilon: f64) -> Result<ActionSpec> {
    score(model, b)
        .into_iter()
        .filter(|s| s.gain >= epsilon)
        .min_by(|x, y| {
            x.cost
                .total_cmp(&y.cost)
                .then(y.gain.total_cmp(&x.gain))
                .then(x.action.cmp(&y.action))
        })
        .map(|s| s.action)
        .ok_or(Error::NoInformativeAction)
}

/// Route to a relocation target, with the number of belief expansions spent
/// finding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relocation {
    pub target: Config,
    pub moves: Vec<ActionSpec>,
    pub evaluations: u64,
}

/// Whether a motion of at most `reach` steps from `q` could touch `occupied`.
/// Contact is felt one cell past the last waypoint, hence `reach + 1`.
fn sweep_hits<M: SpatialModel>(model: &M, occupied: &VoxelSet, q: Config, reach: u32) -> bool {
    let ws = model.workspace();
    Direction::for_ndim(ws.ndim()).iter().any(|&d| {
        (1..=reach as i32 + 1)
            .map(|s| q.step(d, s))
            .take_while(|&n| model.probe().fits(ws, n))
            .any(|n| {
                model
                    .probe()
                    .cells(n)
                    .any(|c| occupied.contains(ws.index(c)))
            })
    })
}

/// Nearest configuration, reached through voxels the object cannot occupy,
/// from which some action gains at least `epsilon` bits. Used by the greedy
/// baselines when nothing within one motion is informative.
pub fn relocate<M: SpatialModel>(model: &M, b: &M::Belief, epsilon: f64) -> Result<Relocation> {
    let ws = model.workspace();
    let probe = model.probe();
    let occupied = model.occupancy(b);
    let reach = model
        .actions(b)
        .iter()
        .map(|a| a.length)
        .max()
        .unwrap_or(0);
    let clear = |q: Config| probe.fits(ws, q) && probe.cells(q).all(|c| !occupied.contains(ws.index(c)));
    let start = model.config(b);
    let dirs = Direction::for_ndim(ws.ndim());
    let mut prev: Vec<Option<(usize, Direction)>> = vec![None; ws.len()];
    let mut seen = vec![false; ws.len()];
    let s = ws.index(start.0);
    seen[s] = true;
    let mut queue = VecDeque::from([start]);
    let mut evaluations = 0;
    let mut found = None;
    while let Some(q) = queue.pop_front() {
        if q != start && sweep_hits(model, &occupied, q, reach) {
            let moved = model.with_config(b, q);
            evaluations += 1;
            if model
                .expand(&moved)
                .iter()
                .any(|g| information_gain(model, &moved, g) >= epsilon)
            {
                found = Some(q);
                break;
            }
        }
        let qi = ws.index(q.0);
        for &d in dirs {
            let n = q.step(d, 1);
            if let Some(ni) = ws.try_index(n.0) {
                if !seen[ni] && clear(n) {
                    seen[ni] = true;
                    prev[ni] = Some((qi, d));
                    queue.push_back(n);
                }
            }
        }
    }
    let target = found.ok_or(Error::NoInformativeAction)?;
    let mut steps = Vec::new();
    let mut at = ws.index(target.0);
    while at != s {
        let (p, d) = prev[at].expect("path recorded");
        steps.push(d);
        at = p;
    }
    steps.reverse();
    let mut moves: Vec<ActionSpec> = Vec::new();
    for d in steps {
        match moves.last_mut() {
            Some(m) if m.direction == d => m.length += 1,
            _ => moves.push(ActionSpec::new(d, 1)),
        }
    }
    Ok(Relocation {
        target,
        moves,
        evaluations,
    })
}
