//! Fine belief: a uniform set of discrete object poses, deterministic
//! per-pose contact predictions and the docking goal.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionOutcomes, BeliefKey, BeliefModel, Heuristic, KeyBuilder, SpatialModel};
use crate::outcome::{ObservationKind, Outcome};
use crate::volumetric::CollisionRecord;
use crate::workspace::{
    candidate_actions, contact_cells, dist2, max_reach, ActionSpec, Config, Coord, Direction,
    DiscretizedAction, GridWorkspace, ProbeShape, VoxelSet,
};

/// Target object: one voxel-offset set per discrete orientation, and the
/// probe configuration (relative to the pose translation) that completes the
/// task for each orientation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    rotations: Vec<Vec<Coord>>,
    docks: Vec<Coord>,
}

impl ObjectTemplate {
    pub fn new(rotations: Vec<Vec<Coord>>, docks: Vec<Coord>) -> Result<Self> {
        if rotations.is_empty() {
            return Err(Error::InvalidTemplate("no rotations".into()));
        }
        if docks.len() != rotations.len() {
            return Err(Error::InvalidTemplate(format!(
                "{} rotations but {} docking offsets",
                rotations.len(),
                docks.len()
            )));
        }
        let n = rotations[0].len();
        for (r, cells) in rotations.iter().enumerate() {
            if cells.is_empty() || cells.len() != n {
                return Err(Error::InvalidTemplate(format!(
                    "rotation {r} has {} cells, expected {n}",
                    cells.len()
                )));
            }
            let mut sorted = cells.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != n {
                return Err(Error::InvalidTemplate(format!("rotation {r} repeats a cell")));
            }
        }
        Ok(Self { rotations, docks })
    }

    /// `count` quarter turns about the z axis of a base shape and its dock.
    pub fn planar_rotations(base: Vec<Coord>, dock: Coord, count: usize) -> Result<Self> {
        if !(1..=4).contains(&count) {
            return Err(Error::InvalidTemplate("planar rotation count must be 1..=4".into()));
        }
        let turn = |c: Coord| [-c[1], c[0], c[2]];
        let mut rotations = vec![base];
        let mut docks = vec![dock];
        for k in 1..count {
            rotations.push(rotations[k - 1].iter().map(|&c| turn(c)).collect());
            docks.push(turn(docks[k - 1]));
        }
        Self::new(rotations, docks)
    }

    /// Pairs of rotations with the same cells up to translation but different
    /// docks. Contact can never tell such poses apart.
    pub fn ambiguous_rotations(&self) -> Vec<(usize, usize)> {
        let normalized: Vec<(Vec<Coord>, Coord)> = self
            .rotations
            .iter()
            .zip(&self.docks)
            .map(|(cells, dock)| {
                let min = (0..3).map(|k| cells.iter().map(|c| c[k]).min().unwrap_or(0));
                let min: Vec<i32> = min.collect();
                let shift = |c: &Coord| [c[0] - min[0], c[1] - min[1], c[2] - min[2]];
                let mut cs: Vec<Coord> = cells.iter().map(shift).collect();
                cs.sort_unstable();
                (cs, shift(dock))
            })
            .collect();
        let mut out = Vec::new();
        for i in 0..normalized.len() {
            for j in i + 1..normalized.len() {
                if normalized[i].0 == normalized[j].0 && normalized[i].1 != normalized[j].1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn rotations(&self) -> &[Vec<Coord>] {
        &self.rotations
    }

    pub fn docks(&self) -> &[Coord] {
        &self.docks
    }

    pub fn rotation_count(&self) -> usize {
        self.rotations.len()
    }

    /// Voxel count `N`.
    pub fn n_object(&self) -> usize {
        self.rotations[0].len()
    }

    /// Largest center distance between two cells of the object.
    pub fn diameter(&self) -> f64 {
        self.rotations
            .iter()
            .flat_map(|cells| {
                cells
                    .iter()
                    .flat_map(move |&a| cells.iter().map(move |&b| dist2(a, b)))
            })
            .max()
            .map_or(0.0, |d| (d as f64).sqrt())
    }

    /// Largest per-axis span in cells over every rotation.
    pub fn extent(&self) -> usize {
        let mut best = 1;
        for cells in &self.rotations {
            for k in 0..3 {
                let lo = cells.iter().map(|c| c[k]).min().unwrap_or(0);
                let hi = cells.iter().map(|c| c[k]).max().unwrap_or(0);
                best = best.max((hi - lo + 1) as usize);
            }
        }
        best
    }
}

/// A discrete object pose on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoseHypothesis {
    pub translation: Coord,
    pub rotation: u32,
}

impl PoseHypothesis {
    pub fn cells<'a>(&self, template: &'a ObjectTemplate) -> impl Iterator<Item = Coord> + 'a {
        let t = self.translation;
        template.rotations[self.rotation as usize]
            .iter()
            .map(move |o| [t[0] + o[0], t[1] + o[1], t[2] + o[2]])
    }

    pub fn dock(&self, template: &ObjectTemplate) -> Config {
        Config(Config(self.translation).translate(template.docks[self.rotation as usize]))
    }

    pub fn voxels(&self, ws: &GridWorkspace, template: &ObjectTemplate) -> VoxelSet {
        ws.set_of(self.cells(template))
    }

    pub fn fits(&self, ws: &GridWorkspace, template: &ObjectTemplate) -> bool {
        self.cells(template).all(|c| ws.contains(c))
    }
}

/// Probe configuration plus the surviving hypotheses, kept sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParticleBelief {
    pub q: Config,
    pub hypotheses: Vec<PoseHypothesis>,
}

impl ParticleBelief {
    pub fn new(q: Config, mut hypotheses: Vec<PoseHypothesis>) -> Self {
        hypotheses.sort_unstable();
        hypotheses.dedup();
        Self { q, hypotheses }
    }
}

/// Every pose inside `po` that touches the contact surface of each record.
pub fn generate_hypotheses(
    ws: &GridWorkspace,
    probe: &ProbeShape,
    template: &ObjectTemplate,
    po: &VoxelSet,
    history: &[CollisionRecord],
) -> Result<Vec<PoseHypothesis>> {
    let surfaces: Vec<Vec<usize>> = history
        .iter()
        .map(|r| contact_cells(ws, r.config, r.direction, probe))
        .collect();
    let mut out = Vec::new();
    for (r, cells) in template.rotations.iter().enumerate() {
        let anchor = cells[0];
        // Every admissible pose places its first cell on a PO voxel.
        for i in po.iter() {
            let c = ws.coord(i);
            let h = PoseHypothesis {
                translation: [c[0] - anchor[0], c[1] - anchor[1], c[2] - anchor[2]],
                rotation: r as u32,
            };
            let mut idx = Vec::with_capacity(cells.len());
            let inside = h.cells(template).all(|v| match ws.try_index(v) {
                Some(j) if po.contains(j) => {
                    idx.push(j);
                    true
                }
                _ => false,
            });
            if inside && surfaces.iter().all(|s| s.iter().any(|j| idx.contains(j))) {
                out.push(h);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(Error::NoFeasiblePose);
    }
    Ok(out)
}

/// Smallest `k ≥ 0` such that the probe footprint at `q + k·d` overlaps the
/// pose, if any.
pub fn first_overlap(
    template: &ObjectTemplate,
    h: &PoseHypothesis,
    q: Config,
    direction: Direction,
    shape: &ProbeShape,
) -> Option<u32> {
    let axis = direction.axis();
    let sign = direction.sign();
    let mut best: Option<u32> = None;
    for c in h.cells(template) {
        for p in shape.cells(q) {
            let aligned = (0..3).all(|k| k == axis || c[k] == p[k]);
            if !aligned {
                continue;
            }
            let k = (c[axis] - p[axis]) * sign;
            if k >= 0 && best.map_or(true, |b| (k as u32) < b) {
                best = Some(k as u32);
            }
        }
    }
    best
}

fn observation_from_overlap(
    overlap: Option<u32>,
    start: Config,
    len: usize,
) -> Result<ObservationKind> {
    match overlap {
        Some(0) => Err(Error::StartInCollision { config: start }),
        Some(k) if (k - 1) as usize <= len => Ok(ObservationKind::Collision { index: k - 1 }),
        _ => Ok(ObservationKind::NoCollision),
    }
}

/// Observation the probe receives executing `action` if the object is at `h`.
/// Contact is reported at the last waypoint before the footprint would enter
/// the object.
pub fn expected_observation(
    template: &ObjectTemplate,
    h: &PoseHypothesis,
    action: &DiscretizedAction,
    shape: &ProbeShape,
) -> Result<ObservationKind> {
    let k = first_overlap(template, h, action.start, action.direction, shape);
    observation_from_overlap(k, action.start, action.len())
}

/// Phase-2 belief MDP.
#[derive(Debug, Clone)]
pub struct ParticleModel {
    pub ws: GridWorkspace,
    pub probe: ProbeShape,
    pub template: ObjectTemplate,
    pub lengths: Vec<u32>,
    /// Weight of the `log2 |H|` term in the inadmissible heuristic.
    pub weight: f64,
}

impl ParticleModel {
    pub fn new(
        ws: GridWorkspace,
        probe: ProbeShape,
        template: ObjectTemplate,
        lengths: Vec<u32>,
        weight: f64,
    ) -> Result<Self> {
        if lengths.is_empty() || lengths.contains(&0) {
            return Err(Error::InvalidConfig("action lengths must be positive".into()));
        }
        Ok(Self {
            ws,
            probe,
            template,
            lengths,
            weight,
        })
    }

    /// Hypotheses grouped by predicted observation, with counting probabilities.
    /// Groups come in order: collisions by index, then no-collision.
    pub fn partition_by_observation(
        &self,
        b: &ParticleBelief,
        action: ActionSpec,
    ) -> Result<Vec<Outcome<ParticleBelief>>> {
        let disc = crate::workspace::discretize_action(&self.ws, &self.probe, b.q, action)?;
        let mut groups: BTreeMap<u32, Vec<PoseHypothesis>> = BTreeMap::new();
        for h in &b.hypotheses {
            let kind = expected_observation(&self.template, h, &disc, &self.probe)?;
            let slot = match kind {
                ObservationKind::Collision { index } => index,
                ObservationKind::NoCollision => u32::MAX,
            };
            groups.entry(slot).or_default().push(*h);
        }
        let total = b.hypotheses.len() as f64;
        Ok(groups
            .into_iter()
            .map(|(slot, hs)| {
                let (kind, steps) = if slot == u32::MAX {
                    (ObservationKind::NoCollision, disc.len() as u32)
                } else {
                    (ObservationKind::Collision { index: slot }, slot)
                };
                let q = disc.config(steps as usize);
                Outcome {
                    kind,
                    config: q,
                    probability: hs.len() as f64 / total,
                    traveled: steps,
                    successor: ParticleBelief { q, hypotheses: hs },
                }
            })
            .collect())
    }

    /// Successor for an observed outcome; hypotheses predicting anything else
    /// are dropped.
    pub fn apply_observation(
        &self,
        b: &ParticleBelief,
        action: ActionSpec,
        kind: ObservationKind,
    ) -> Result<ParticleBelief> {
        let disc = crate::workspace::discretize_action(&self.ws, &self.probe, b.q, action)?;
        let mut kept = Vec::new();
        for h in &b.hypotheses {
            if expected_observation(&self.template, h, &disc, &self.probe)? == kind {
                kept.push(*h);
            }
        }
        let q = disc.config(kind.traveled(disc.len() as u32) as usize);
        Ok(ParticleBelief { q, hypotheses: kept })
    }

    /// Docking configuration shared by every hypothesis, if they agree.
    pub fn common_dock(&self, b: &ParticleBelief) -> Option<Config> {
        let first = b.hypotheses.first()?.dock(&self.template);
        b.hypotheses[1..]
            .iter()
            .all(|h| h.dock(&self.template) == first)
            .then_some(first)
    }

    pub fn is_goal(&self, b: &ParticleBelief) -> bool {
        self.common_dock(b) == Some(b.q)
    }

    pub fn occupied_by_any(&self, b: &ParticleBelief) -> VoxelSet {
        let mut set = self.ws.empty_set();
        for h in &b.hypotheses {
            set.union_with(&h.voxels(&self.ws, &self.template));
        }
        set
    }

    fn clear(&self, blocked: &VoxelSet, q: Config) -> bool {
        self.probe.fits(&self.ws, q) && self.probe.cells(q).all(|c| !blocked.contains(self.ws.index(c)))
    }

    fn segment_clear(&self, blocked: &VoxelSet, from: Config, d: Direction, n: i32) -> bool {
        (1..=n).all(|i| self.clear(blocked, from.step(d, i)))
    }

    /// Axis-aligned moves from `b.q` to the common dock. Tries the x, y, z
    /// order first, then the other axis orders, then a shortest grid path,
    /// avoiding the voxels of every remaining hypothesis.
    pub fn dock_action(&self, b: &ParticleBelief) -> Result<Vec<ActionSpec>> {
        let dock = self.common_dock(b).ok_or(Error::AmbiguousGoal)?;
        let blocked = self.occupied_by_any(b);
        let ndim = self.ws.ndim();
        for order in axis_orders(ndim) {
            let mut q = b.q;
            let mut moves = Vec::new();
            let mut ok = true;
            for axis in order {
                let delta = dock.0[axis] - q.0[axis];
                if delta == 0 {
                    continue;
                }
                let d = Direction::from_axis(axis, delta.signum());
                if !self.segment_clear(&blocked, q, d, delta.abs()) {
                    ok = false;
                    break;
                }
                moves.push(ActionSpec::new(d, delta.unsigned_abs()));
                q = q.step(d, delta.abs());
            }
            if ok {
                return Ok(moves);
            }
        }
        self.dock_search(b.q, dock, &blocked).ok_or(Error::AmbiguousGoal)
    }

    fn dock_search(&self, start: Config, dock: Config, blocked: &VoxelSet) -> Option<Vec<ActionSpec>> {
        let dirs = Direction::for_ndim(self.ws.ndim());
        let mut prev: Vec<Option<(usize, Direction)>> = vec![None; self.ws.len()];
        let s = self.ws.try_index(start.0)?;
        let goal = self.ws.try_index(dock.0)?;
        let mut seen = vec![false; self.ws.len()];
        seen[s] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(q) = queue.pop_front() {
            let qi = self.ws.index(q.0);
            if qi == goal {
                break;
            }
            for &d in dirs {
                let n = q.step(d, 1);
                if let Some(ni) = self.ws.try_index(n.0) {
                    if !seen[ni] && self.clear(blocked, n) {
                        seen[ni] = true;
                        prev[ni] = Some((qi, d));
                        queue.push_back(n);
                    }
                }
            }
        }
        if !seen[goal] {
            return None;
        }
        let mut steps = Vec::new();
        let mut at = goal;
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
        Some(moves)
    }

    /// Distance to the nearest hypothesized dock.
    pub fn nearest_dock(&self, b: &ParticleBelief) -> f64 {
        b.hypotheses
            .iter()
            .map(|h| b.q.manhattan(h.dock(&self.template)))
            .min()
            .unwrap_or(0) as f64
    }

    fn direction_outcomes(
        &self,
        b: &ParticleBelief,
        direction: Direction,
        lengths: &[u32],
    ) -> Vec<ActionOutcomes<ParticleBelief>> {
        let cap = lengths.iter().copied().max().unwrap_or(0);
        let reach = max_reach(&self.ws, &self.probe, b.q, direction, cap) as usize;
        if reach == 0 {
            return Vec::new();
        }
        // Stop index per hypothesis: Some(i) for contact at waypoint i.
        let mut stops: Vec<Option<usize>> = Vec::with_capacity(b.hypotheses.len());
        for h in &b.hypotheses {
            match first_overlap(&self.template, h, b.q, direction, &self.probe) {
                Some(0) => return Vec::new(),
                Some(k) => stops.push(Some(k as usize - 1)),
                None => stops.push(None),
            }
        }
        let mut by_index: BTreeMap<usize, Vec<PoseHypothesis>> = BTreeMap::new();
        for (h, s) in b.hypotheses.iter().zip(&stops) {
            if let Some(i) = *s {
                if i <= reach {
                    by_index.entry(i).or_default().push(*h);
                }
            }
        }
        let total = b.hypotheses.len() as f64;
        let mut effective: Vec<usize> = lengths
            .iter()
            .map(|&l| (l as usize).min(reach))
            .filter(|&l| l > 0)
            .collect();
        effective.sort_unstable();
        effective.dedup();
        effective
            .into_iter()
            .map(|n| {
                let mut outcomes: Vec<Outcome<ParticleBelief>> = by_index
                    .range(..=n)
                    .map(|(&i, hs)| {
                        let q = b.q.step(direction, i as i32);
                        Outcome {
                            kind: ObservationKind::Collision { index: i as u32 },
                            config: q,
                            probability: hs.len() as f64 / total,
                            traveled: i as u32,
                            successor: ParticleBelief {
                                q,
                                hypotheses: hs.clone(),
                            },
                        }
                    })
                    .collect();
                let free: Vec<PoseHypothesis> = b
                    .hypotheses
                    .iter()
                    .zip(&stops)
                    .filter(|(_, s)| s.map_or(true, |i| i > n))
                    .map(|(h, _)| *h)
                    .collect();
                if !free.is_empty() {
                    let q = b.q.step(direction, n as i32);
                    outcomes.push(Outcome {
                        kind: ObservationKind::NoCollision,
                        config: q,
                        probability: free.len() as f64 / total,
                        traveled: n as u32,
                        successor: ParticleBelief { q, hypotheses: free },
                    });
                }
                ActionOutcomes {
                    action: ActionSpec::new(direction, n as u32),
                    outcomes,
                }
            })
            .collect()
    }
}

fn axis_orders(ndim: usize) -> Vec<Vec<usize>> {
    if ndim == 2 {
        vec![vec![0, 1], vec![1, 0]]
    } else {
        vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ]
    }
}

impl BeliefModel for ParticleModel {
    type Belief = ParticleBelief;

    fn key(&self, b: &ParticleBelief) -> BeliefKey {
        let mut k = KeyBuilder::new("particle");
        k.config(b.q).u64(b.hypotheses.len() as u64);
        for h in &b.hypotheses {
            k.config(Config(h.translation)).u64(h.rotation as u64);
        }
        k.finish()
    }

    fn config(&self, b: &ParticleBelief) -> Config {
        b.q
    }

    /// Every hypothesis agrees on the dock; the remaining moves are fixed.
    fn is_terminal(&self, b: &ParticleBelief) -> bool {
        self.common_dock(b).is_some()
    }

    fn terminal_cost(&self, b: &ParticleBelief) -> f64 {
        match self.dock_action(b) {
            Ok(moves) => moves.iter().map(|m| m.length as f64).sum(),
            Err(_) => f64::INFINITY,
        }
    }

    fn uncertainty(&self, b: &ParticleBelief) -> usize {
        b.hypotheses.len()
    }

    fn actions(&self, b: &ParticleBelief) -> Vec<ActionSpec> {
        candidate_actions(&self.ws, &self.probe, b.q, &self.lengths)
    }

    fn outcomes(&self, b: &ParticleBelief, action: ActionSpec) -> Result<Vec<Outcome<ParticleBelief>>> {
        self.partition_by_observation(b, action)
    }

    fn expand(&self, b: &ParticleBelief) -> Vec<ActionOutcomes<ParticleBelief>> {
        let mut out: Vec<_> = Direction::for_ndim(self.ws.ndim())
            .iter()
            .flat_map(|&d| self.direction_outcomes(b, d, &self.lengths))
            .filter(|g| !(g.outcomes.len() == 1 && g.outcomes[0].successor == *b))
            .collect();
        out.sort_by_key(|g| g.action);
        out
    }
}

impl SpatialModel for ParticleModel {
    fn workspace(&self) -> &GridWorkspace {
        &self.ws
    }

    fn probe(&self) -> &ProbeShape {
        &self.probe
    }

    fn occupancy(&self, b: &ParticleBelief) -> VoxelSet {
        self.occupied_by_any(b)
    }

    fn with_config(&self, b: &ParticleBelief, q: Config) -> ParticleBelief {
        ParticleBelief {
            q,
            hypotheses: b.hypotheses.clone(),
        }
    }
}

impl Heuristic<ParticleBelief> for ParticleModel {
    fn admissible(&self, b: &ParticleBelief) -> f64 {
        self.nearest_dock(b)
    }

    fn inadmissible(&self, b: &ParticleBelief) -> f64 {
        let n = b.hypotheses.len().max(1) as f64;
        self.admissible(b) + self.weight * n.log2()
    }
}
