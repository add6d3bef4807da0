//! Coarse belief over the possibly-occupied voxel set `PO` and the contact
//! history, with its swept-volume transitions and sequential contact
//! likelihood model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionOutcomes, BeliefKey, BeliefModel, Heuristic, KeyBuilder, SpatialModel};
use crate::outcome::{ObservationKind, Outcome};
use crate::particle::ObjectTemplate;
use crate::workspace::{
    candidate_actions, contact_cells, discretize_action, dist2, max_reach, ActionSpec, Config,
    Coord, Direction, DiscretizedAction, GridWorkspace, ProbeShape, VoxelSet,
};

/// A contact observed while at `config` moving along `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CollisionRecord {
    pub config: Config,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumetricBelief {
    pub q: Config,
    pub po: VoxelSet,
    pub history: Vec<CollisionRecord>,
}

/// Object voxel count `N`, distance bound `D_max`, history smoothing `ε`
/// and phase threshold `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumetricParams {
    pub n_object: usize,
    pub d_max: f64,
    pub eps_hist: f64,
    pub delta: usize,
}

impl VolumetricParams {
    /// Defaults derived from the object template: `D_max` is the template
    /// diameter plus one voxel diagonal, `δ` the cell count of a box twice the
    /// template extent on each axis.
    pub fn for_template(template: &ObjectTemplate, ndim: usize) -> Self {
        let extent = 2 * template.extent();
        Self {
            n_object: template.n_object(),
            d_max: template.diameter() + (ndim as f64).sqrt(),
            eps_hist: 0.1,
            delta: extent.pow(ndim as u32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_object == 0 {
            return Err(Error::InvalidConfig("n_object must be at least 1".into()));
        }
        if !(self.d_max > 0.0) {
            return Err(Error::InvalidConfig("d_max must be positive".into()));
        }
        if !(self.eps_hist > 0.0) {
            return Err(Error::InvalidConfig("eps_hist must be positive".into()));
        }
        if self.delta < self.n_object {
            return Err(Error::InvalidConfig("delta must be at least n_object".into()));
        }
        Ok(())
    }
}

/// Phase-1 belief MDP: geometry, parameters and the action set.
#[derive(Debug, Clone)]
pub struct VolumetricModel {
    pub ws: GridWorkspace,
    pub probe: ProbeShape,
    pub params: VolumetricParams,
    pub lengths: Vec<u32>,
    /// Weight of the residual-volume term in the inadmissible heuristic.
    pub weight: f64,
}

impl VolumetricModel {
    pub fn new(
        ws: GridWorkspace,
        probe: ProbeShape,
        params: VolumetricParams,
        lengths: Vec<u32>,
        weight: f64,
    ) -> Result<Self> {
        params.validate()?;
        if lengths.is_empty() || lengths.contains(&0) {
            return Err(Error::InvalidConfig("action lengths must be positive".into()));
        }
        Ok(Self {
            ws,
            probe,
            params,
            lengths,
            weight,
        })
    }

    /// Initial belief: the hypothesis volume minus the probe's own footprint.
    pub fn initial_belief(&self, q: Config, volume: &VoxelSet) -> VolumetricBelief {
        let mut po = volume.clone();
        for c in self.probe.cells(q) {
            if let Some(i) = self.ws.try_index(c) {
                po.remove(i);
            }
        }
        VolumetricBelief {
            q,
            po,
            history: Vec::new(),
        }
    }

    fn surface_coords(&self, q: Config, direction: Direction) -> Vec<Coord> {
        contact_cells(&self.ws, q, direction, &self.probe)
            .into_iter()
            .map(|i| self.ws.coord(i))
            .collect()
    }

    /// `PO` after a motion with no contact: the swept volume is free.
    pub fn apply_no_collision(
        &self,
        b: &VolumetricBelief,
        action: &DiscretizedAction,
    ) -> VolumetricBelief {
        let mut po = b.po.clone();
        for &q in &action.waypoints {
            for c in self.probe.cells(q) {
                po.remove(self.ws.index(c));
            }
        }
        VolumetricBelief {
            q: action.end(),
            po,
            history: b.history.clone(),
        }
    }

    /// `PO` after contact at waypoint `i` (0 = the start): the swept prefix is
    /// free and nothing farther than `D_max` from the contact surface can be
    /// occupied. The record is appended unless already present.
    pub fn apply_collision(
        &self,
        b: &VolumetricBelief,
        action: &DiscretizedAction,
        i: usize,
    ) -> Result<VolumetricBelief> {
        if i > action.len() {
            return Err(Error::InvalidAction {
                start: action.start,
                action: action.spec(),
            });
        }
        let q_i = action.config(i);
        let surface = self.surface_coords(q_i, action.direction);
        if surface.is_empty() {
            return Err(Error::EmptySurface {
                config: q_i,
                direction: action.direction.to_string(),
            });
        }
        let mut po = b.po.clone();
        for &q in &action.waypoints[..i] {
            for c in self.probe.cells(q) {
                po.remove(self.ws.index(c));
            }
        }
        let next = self.collision_successor(b, po, q_i, action.direction, &surface);
        let touched = surface
            .iter()
            .any(|&c| next.po.contains(self.ws.index(c)));
        if !touched {
            return Err(Error::InconsistentObservation { config: q_i });
        }
        Ok(next)
    }

    fn collision_successor(
        &self,
        b: &VolumetricBelief,
        mut po: VoxelSet,
        q_i: Config,
        direction: Direction,
        surface: &[Coord],
    ) -> VolumetricBelief {
        let limit = self.params.d_max * self.params.d_max;
        let far: Vec<usize> = po
            .iter()
            .filter(|&i| {
                let c = self.ws.coord(i);
                surface.iter().all(|&s| dist2(c, s) as f64 > limit)
            })
            .collect();
        for i in far {
            po.remove(i);
        }
        let record = CollisionRecord {
            config: q_i,
            direction,
        };
        let mut history = b.history.clone();
        if !history.contains(&record) {
            history.push(record);
        }
        VolumetricBelief {
            q: q_i,
            po,
            history,
        }
    }

    /// Successor for an observed outcome of `action`.
    pub fn apply_observation(
        &self,
        b: &VolumetricBelief,
        action: ActionSpec,
        kind: ObservationKind,
    ) -> Result<VolumetricBelief> {
        let disc = discretize_action(&self.ws, &self.probe, b.q, action)?;
        match kind {
            ObservationKind::NoCollision => Ok(self.apply_no_collision(b, &disc)),
            ObservationKind::Collision { index } => self.apply_collision(b, &disc, index as usize),
        }
    }

    /// Contact likelihood from the fraction of `PO` the surface covers.
    pub fn collision_likelihood_po(
        &self,
        b: &VolumetricBelief,
        q_i: Config,
        direction: Direction,
    ) -> f64 {
        let surface = contact_cells(&self.ws, q_i, direction, &self.probe);
        self.po_likelihood(&b.po, b.po.count(), &surface)
    }

    fn po_likelihood(&self, po: &VoxelSet, po_count: usize, surface: &[usize]) -> f64 {
        if surface.is_empty() {
            return 0.0;
        }
        let hit = surface.iter().filter(|&&i| po.contains(i)).count() as f64;
        let denom = (po_count as f64 - self.params.n_object as f64).max(1.0);
        (hit / denom).min(1.0)
    }

    /// Contact likelihood implied by one earlier contact: grows with surface
    /// overlap, falls linearly to zero at `D_max` separation.
    pub fn collision_likelihood_history(
        &self,
        q_i: Config,
        direction: Direction,
        record: &CollisionRecord,
    ) -> f64 {
        let s_i = self.surface_coords(q_i, direction);
        let s_j = self.surface_coords(record.config, record.direction);
        self.history_likelihood(&s_i, &s_j)
    }

    fn history_likelihood(&self, s_i: &[Coord], s_j: &[Coord]) -> f64 {
        if s_i.is_empty() || s_j.is_empty() {
            return 0.0;
        }
        let eps = self.params.eps_hist;
        let overlap = s_i.iter().filter(|c| s_j.contains(c)).count() as f64;
        let dist = s_i
            .iter()
            .flat_map(|&a| s_j.iter().map(move |&b| dist2(a, b)))
            .min()
            .map_or(0.0, |d| (d as f64).sqrt());
        let ratio = (overlap + eps) / (s_j.len() as f64 + eps);
        let falloff = 1.0 - dist.max(0.0) / self.params.d_max;
        (ratio * falloff).clamp(0.0, 1.0)
    }

    /// Normalized probability of contact at `q_i` combining the `PO` term and
    /// every history term.
    pub fn per_config_collision_prob(
        &self,
        b: &VolumetricBelief,
        q_i: Config,
        direction: Direction,
    ) -> f64 {
        let history = self.history_surfaces(b);
        self.collision_prob(b, b.po.count(), q_i, direction, &history)
    }

    fn history_surfaces(&self, b: &VolumetricBelief) -> Vec<Vec<Coord>> {
        b.history
            .iter()
            .map(|r| self.surface_coords(r.config, r.direction))
            .collect()
    }

    fn collision_prob(
        &self,
        b: &VolumetricBelief,
        po_count: usize,
        q_i: Config,
        direction: Direction,
        history: &[Vec<Coord>],
    ) -> f64 {
        let cells = contact_cells(&self.ws, q_i, direction, &self.probe);
        let l_po = self.po_likelihood(&b.po, po_count, &cells);
        if l_po == 0.0 {
            return 0.0;
        }
        let surface: Vec<Coord> = cells.iter().map(|&i| self.ws.coord(i)).collect();
        let (mut hit, mut miss) = (l_po, 1.0 - l_po);
        for s_j in history {
            let l = self.history_likelihood(&surface, s_j);
            hit *= l;
            miss *= 1.0 - l;
        }
        combine(hit, miss)
    }

    /// Sequential outcome distribution of `action` from `b`. Zero-probability
    /// outcomes are omitted.
    pub fn enumerate_outcomes(
        &self,
        b: &VolumetricBelief,
        action: ActionSpec,
    ) -> Result<Vec<Outcome<VolumetricBelief>>> {
        let disc = discretize_action(&self.ws, &self.probe, b.q, action)?;
        let mut group = self.direction_outcomes(b, action.direction, &[disc.len() as u32]);
        Ok(group.pop().map(|g| g.outcomes).unwrap_or_default())
    }

    /// Outcome distributions for every length in `lengths` along one direction,
    /// sharing per-waypoint work. Lengths are clipped at the grid boundary.
    fn direction_outcomes(
        &self,
        b: &VolumetricBelief,
        direction: Direction,
        lengths: &[u32],
    ) -> Vec<ActionOutcomes<VolumetricBelief>> {
        let cap = lengths.iter().copied().max().unwrap_or(0);
        let reach = max_reach(&self.ws, &self.probe, b.q, direction, cap) as usize;
        if reach == 0 {
            return Vec::new();
        }
        let po_count = b.po.count();
        let history = self.history_surfaces(b);
        let configs: Vec<Config> = (0..=reach).map(|i| b.q.step(direction, i as i32)).collect();
        let p_contact: Vec<f64> = configs
            .iter()
            .map(|&q| self.collision_prob(b, po_count, q, direction, &history))
            .collect();

        // po_after[i] = PO minus the footprints of q_1..q_i.
        let mut po_after = Vec::with_capacity(reach + 1);
        po_after.push(b.po.clone());
        for &q in &configs[1..] {
            let mut next = po_after.last().cloned().expect("non-empty");
            for c in self.probe.cells(q) {
                next.remove(self.ws.index(c));
            }
            po_after.push(next);
        }

        let mut collided: Vec<Option<VolumetricBelief>> = vec![None; reach + 1];
        let mut effective: Vec<usize> = lengths
            .iter()
            .map(|&l| (l as usize).min(reach))
            .filter(|&l| l > 0)
            .collect();
        effective.sort_unstable();
        effective.dedup();

        let mut out = Vec::with_capacity(effective.len());
        for n in effective {
            let mut outcomes = Vec::new();
            let mut survive = 1.0;
            for i in 0..=n {
                let p = survive * p_contact[i];
                if p > 0.0 {
                    let succ = collided[i]
                        .get_or_insert_with(|| {
                            let surface = self.surface_coords(configs[i], direction);
                            self.collision_successor(
                                b,
                                po_after[i].clone(),
                                configs[i],
                                direction,
                                &surface,
                            )
                        })
                        .clone();
                    outcomes.push(Outcome {
                        kind: ObservationKind::Collision { index: i as u32 },
                        config: configs[i],
                        probability: p,
                        traveled: i as u32,
                        successor: succ,
                    });
                }
                survive *= 1.0 - p_contact[i];
            }
            if survive > 0.0 {
                outcomes.push(Outcome {
                    kind: ObservationKind::NoCollision,
                    config: configs[n],
                    probability: survive,
                    traveled: n as u32,
                    successor: VolumetricBelief {
                        q: configs[n],
                        po: po_after[n].clone(),
                        history: b.history.clone(),
                    },
                });
            }
            out.push(ActionOutcomes {
                action: ActionSpec::new(direction, n as u32),
                outcomes,
            });
        }
        out
    }

    /// `|PO| ≤ δ`.
    pub fn is_phase1_terminal(&self, b: &VolumetricBelief) -> bool {
        b.po.count() <= self.params.delta
    }

    /// Distance from the probe footprint to the nearest `PO` voxel.
    pub fn distance_to_po(&self, b: &VolumetricBelief) -> f64 {
        let fp: Vec<Coord> = self.probe.cells(b.q).collect();
        b.po
            .iter()
            .map(|i| {
                let c = self.ws.coord(i);
                fp.iter().map(|&f| dist2(c, f)).min().unwrap_or(0)
            })
            .min()
            .map_or(0.0, |d| (d as f64).sqrt())
    }
}

fn combine(hit: f64, miss: f64) -> f64 {
    if hit + miss <= 0.0 {
        0.0
    } else {
        hit / (hit + miss)
    }
}

impl BeliefModel for VolumetricModel {
    type Belief = VolumetricBelief;

    fn key(&self, b: &VolumetricBelief) -> BeliefKey {
        let mut k = KeyBuilder::new("volumetric");
        k.config(b.q).words(b.po.words()).u64(b.history.len() as u64);
        for r in &b.history {
            k.config(r.config).u64(r.direction.index() as u64);
        }
        k.finish()
    }

    fn config(&self, b: &VolumetricBelief) -> Config {
        b.q
    }

    fn is_terminal(&self, b: &VolumetricBelief) -> bool {
        self.is_phase1_terminal(b)
    }

    fn terminal_cost(&self, _b: &VolumetricBelief) -> f64 {
        0.0
    }

    fn uncertainty(&self, b: &VolumetricBelief) -> usize {
        b.po.count()
    }

    fn actions(&self, b: &VolumetricBelief) -> Vec<ActionSpec> {
        candidate_actions(&self.ws, &self.probe, b.q, &self.lengths)
    }

    fn outcomes(
        &self,
        b: &VolumetricBelief,
        action: ActionSpec,
    ) -> Result<Vec<Outcome<VolumetricBelief>>> {
        self.enumerate_outcomes(b, action)
    }

    fn expand(&self, b: &VolumetricBelief) -> Vec<ActionOutcomes<VolumetricBelief>> {
        let mut out: Vec<_> = Direction::for_ndim(self.ws.ndim())
            .iter()
            .flat_map(|&d| self.direction_outcomes(b, d, &self.lengths))
            .filter(|g| !(g.outcomes.len() == 1 && g.outcomes[0].successor == *b))
            .collect();
        out.sort_by_key(|g| g.action);
        out
    }
}

impl SpatialModel for VolumetricModel {
    fn workspace(&self) -> &GridWorkspace {
        &self.ws
    }

    fn probe(&self) -> &ProbeShape {
        &self.probe
    }

    fn occupancy(&self, b: &VolumetricBelief) -> VoxelSet {
        b.po.clone()
    }

    fn with_config(&self, b: &VolumetricBelief, q: Config) -> VolumetricBelief {
        VolumetricBelief { q, ..b.clone() }
    }
}

impl Heuristic<VolumetricBelief> for VolumetricModel {
    /// Zero once terminal; otherwise the distance to `PO` less the one step of
    /// reach a contact provides. Any reduction of `PO` needs at least that much
    /// travel.
    fn admissible(&self, b: &VolumetricBelief) -> f64 {
        if self.is_phase1_terminal(b) {
            return 0.0;
        }
        (self.distance_to_po(b) - 1.0).max(0.0)
    }

    fn inadmissible(&self, b: &VolumetricBelief) -> f64 {
        if self.is_phase1_terminal(b) {
            return 0.0;
        }
        let excess = b.po.count().saturating_sub(self.params.delta) as f64;
        let area = self.probe.cross_section(self.ws.ndim()) as f64;
        self.admissible(b) + self.weight * excess / area
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    dims: Vec<usize>,
    q: Coord,
    po_runs: String,
    #[serde(default)]
    history: Vec<CollisionRecord>,
}

const SNAPSHOT_FORMAT: &str = "volumetric-belief";
const SNAPSHOT_VERSION: u32 = 1;

impl VolumetricBelief {
    /// Versioned TOML snapshot. `po_runs` lists alternating absent/present run
    /// lengths over the grid's linear voxel order, starting with absent.
    pub fn to_snapshot(&self, ws: &GridWorkspace) -> String {
        let runs = self
            .po
            .to_runs()
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            dims: ws.extents().to_vec(),
            q: self.q.0,
            po_runs: runs,
            history: self.history.clone(),
        };
        toml::to_string(&snap).expect("snapshot serializes")
    }

    pub fn from_snapshot(text: &str) -> Result<(GridWorkspace, VolumetricBelief)> {
        let snap: Snapshot = toml::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Snapshot(format!("unexpected format {:?}", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {}", snap.version)));
        }
        let ws = GridWorkspace::new(&snap.dims)?;
        let runs = snap
            .po_runs
            .split_whitespace()
            .map(|r| r.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Snapshot(format!("po_runs: {e}")))?;
        let po = VoxelSet::from_runs(ws.len(), &runs)
            .ok_or_else(|| Error::Snapshot("po_runs do not cover the grid".into()))?;
        Ok((
            ws,
            VolumetricBelief {
                q: Config(snap.q),
                po,
                history: snap.history,
            },
        ))
    }
}
