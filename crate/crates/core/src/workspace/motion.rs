use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::{dist2, Coord, GridWorkspace, VoxelSet};
use crate::error::{Error, Result};

/// Probe reference-cell position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Config(pub Coord);

impl Config {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self([x, y, z])
    }

    pub fn xy(x: i32, y: i32) -> Self {
        Self([x, y, 0])
    }

    pub fn step(self, direction: Direction, steps: i32) -> Self {
        let u = direction.unit();
        Self([
            self.0[0] + u[0] * steps,
            self.0[1] + u[1] * steps,
            self.0[2] + u[2] * steps,
        ])
    }

    pub fn translate(self, offset: Coord) -> Coord {
        [
            self.0[0] + offset[0],
            self.0[1] + offset[1],
            self.0[2] + offset[2],
        ]
    }

    /// L1 distance; the length of any axis-aligned path between the two.
    pub fn manhattan(self, other: Config) -> u32 {
        (0..3).map(|k| self.0[k].abs_diff(other.0[k])).sum()
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Signed unit axis direction. Declaration order is the canonical tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::PosX,
        Direction::NegX,
        Direction::PosY,
        Direction::NegY,
        Direction::PosZ,
        Direction::NegZ,
    ];

    /// Directions that can move within a grid of `ndim` axes.
    pub fn for_ndim(ndim: usize) -> &'static [Direction] {
        &Self::ALL[..2 * ndim.clamp(1, 3)]
    }

    pub fn axis(self) -> usize {
        self as usize / 2
    }

    pub fn sign(self) -> i32 {
        if self as usize % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn unit(self) -> Coord {
        let mut u = [0; 3];
        u[self.axis()] = self.sign();
        u
    }

    pub fn from_axis(axis: usize, sign: i32) -> Direction {
        Self::ALL[axis * 2 + usize::from(sign < 0)]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        ["+x", "-x", "+y", "-y", "+z", "-z"][self as usize]
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown direction {s:?}"))
    }
}

/// Straight-line probe motion. Ordering is (length, direction), which is the
/// tie-break order used by every planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionSpec {
    pub length: u32,
    pub direction: Direction,
}

impl ActionSpec {
    pub fn new(direction: Direction, length: u32) -> Self {
        Self { length, direction }
    }
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.direction, self.length)
    }
}

impl FromStr for ActionSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.len() < 3 {
            return Err(format!("bad action {s:?}"));
        }
        let (d, n) = s.split_at(2);
        let direction = d.parse()?;
        let length = n.parse().map_err(|_| format!("bad action length in {s:?}"))?;
        Ok(Self { length, direction })
    }
}

/// Cells occupied by the probe, as offsets from its reference cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeShape {
    offsets: Vec<Coord>,
    // Per direction: offsets of the cells one step ahead of the leading face.
    faces: [Vec<Coord>; 6],
}

impl ProbeShape {
    /// Offsets must be non-empty, unique, and contiguous along every axis line
    /// (so the leading face never re-enters cells swept earlier in a move).
    pub fn new(offsets: Vec<Coord>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidProbe("probe needs at least one cell".into()));
        }
        let mut sorted = offsets.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != offsets.len() {
            return Err(Error::InvalidProbe("duplicate offsets".into()));
        }
        for d in Direction::ALL {
            let u = d.unit();
            for &o in &offsets {
                // o and o + m·u both present requires every intermediate cell.
                let mut gap = false;
                for m in 1..=64 {
                    let c = [o[0] + u[0] * m, o[1] + u[1] * m, o[2] + u[2] * m];
                    let present = offsets.contains(&c);
                    if present && gap {
                        return Err(Error::InvalidProbe(format!(
                            "shape is not contiguous along {d} at {o:?}"
                        )));
                    }
                    gap |= !present;
                }
            }
        }
        let faces = Direction::ALL.map(|d| {
            let u = d.unit();
            offsets
                .iter()
                .map(|o| [o[0] + u[0], o[1] + u[1], o[2] + u[2]])
                .filter(|c| !offsets.contains(c))
                .collect()
        });
        Ok(Self { offsets, faces })
    }

    pub fn single() -> Self {
        Self::new(vec![[0, 0, 0]]).expect("single cell is valid")
    }

    /// Axis-aligned box of `w × h × d` cells anchored at the reference cell.
    pub fn cuboid(w: i32, h: i32, d: i32) -> Result<Self> {
        let mut offsets = Vec::new();
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    offsets.push([x, y, z]);
                }
            }
        }
        Self::new(offsets)
    }

    pub fn offsets(&self) -> &[Coord] {
        &self.offsets
    }

    /// Offsets of the contact-surface cells when moving along `direction`.
    pub fn face_offsets(&self, direction: Direction) -> &[Coord] {
        &self.faces[direction.index()]
    }

    /// Largest leading-face size over the axis directions of a grid.
    pub fn cross_section(&self, ndim: usize) -> usize {
        Direction::for_ndim(ndim)
            .iter()
            .map(|d| self.faces[d.index()].len())
            .max()
            .unwrap_or(1)
    }

    pub fn fits(&self, ws: &GridWorkspace, q: Config) -> bool {
        self.offsets.iter().all(|&o| ws.contains(q.translate(o)))
    }

    pub fn cells(&self, q: Config) -> impl Iterator<Item = Coord> + '_ {
        self.offsets.iter().map(move |&o| q.translate(o))
    }
}

/// An action expanded into its unit-step waypoints `q_1..q_n` (start excluded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscretizedAction {
    pub start: Config,
    pub direction: Direction,
    pub waypoints: Vec<Config>,
}

impl DiscretizedAction {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// The action actually executed after boundary clipping.
    pub fn spec(&self) -> ActionSpec {
        ActionSpec::new(self.direction, self.waypoints.len() as u32)
    }

    /// Configuration `q_i`; index 0 is the start.
    pub fn config(&self, i: usize) -> Config {
        if i == 0 {
            self.start
        } else {
            self.waypoints[i - 1]
        }
    }

    pub fn end(&self) -> Config {
        *self.waypoints.last().unwrap_or(&self.start)
    }
}

/// Expands `action` into waypoints, clipping at the last in-bounds one.
pub fn discretize_action(
    ws: &GridWorkspace,
    shape: &ProbeShape,
    start: Config,
    action: ActionSpec,
) -> Result<DiscretizedAction> {
    let waypoints: Vec<Config> = (1..=action.length as i32)
        .map(|i| start.step(action.direction, i))
        .take_while(|&q| shape.fits(ws, q))
        .collect();
    if waypoints.is_empty() {
        return Err(Error::InvalidAction { start, action });
    }
    Ok(DiscretizedAction {
        start,
        direction: action.direction,
        waypoints,
    })
}

pub fn probe_voxels(ws: &GridWorkspace, q: Config, shape: &ProbeShape) -> VoxelSet {
    ws.set_of(shape.cells(q))
}

/// Union of probe footprints over `q_1..q_n`.
pub fn swept_voxels(ws: &GridWorkspace, action: &DiscretizedAction, shape: &ProbeShape) -> VoxelSet {
    swept_prefix(ws, action, shape, action.len())
}

/// Union of probe footprints over `q_1..q_i`; empty for `i = 0`.
pub fn swept_prefix(
    ws: &GridWorkspace,
    action: &DiscretizedAction,
    shape: &ProbeShape,
    i: usize,
) -> VoxelSet {
    let mut set = ws.empty_set();
    for &q in &action.waypoints[..i] {
        for c in shape.cells(q) {
            set.insert(ws.index(c));
        }
    }
    set
}

/// In-bounds indices of the cells just ahead of the probe's leading face.
pub fn contact_cells(
    ws: &GridWorkspace,
    q: Config,
    direction: Direction,
    shape: &ProbeShape,
) -> Vec<usize> {
    shape
        .face_offsets(direction)
        .iter()
        .filter_map(|&o| ws.try_index(q.translate(o)))
        .collect()
}

/// Contact surface of the probe at `q` moving along `direction`.
pub fn contact_surface(
    ws: &GridWorkspace,
    q: Config,
    direction: Direction,
    shape: &ProbeShape,
) -> Result<VoxelSet> {
    let cells = contact_cells(ws, q, direction, shape);
    if cells.is_empty() {
        return Err(Error::EmptySurface {
            config: q,
            direction: direction.to_string(),
        });
    }
    Ok(VoxelSet::from_indices(ws.len(), cells))
}

/// Voxels strictly farther than `d_max` from every voxel of `surface`.
pub fn elimination_set(ws: &GridWorkspace, surface: &VoxelSet, d_max: f64) -> VoxelSet {
    let src: Vec<Coord> = ws.coords(surface).collect();
    let limit = d_max * d_max;
    let mut out = ws.empty_set();
    for i in 0..ws.len() {
        let c = ws.coord(i);
        if src.iter().all(|&s| dist2(c, s) as f64 > limit) {
            out.insert(i);
        }
    }
    out
}

/// Minimum center-to-center distance between two voxel sets.
pub fn set_distance(ws: &GridWorkspace, a: &VoxelSet, b: &VoxelSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    if a.intersects(b) {
        return Ok(0.0);
    }
    let bs: Vec<Coord> = ws.coords(b).collect();
    let best = ws
        .coords(a)
        .flat_map(|p| bs.iter().map(move |&q| dist2(p, q)))
        .min()
        .expect("both sets non-empty");
    Ok((best as f64).sqrt())
}

/// Every distinct valid action from `q` for the given lengths, in canonical order.
/// Lengths that run off the grid are clipped; duplicates after clipping are dropped.
pub fn candidate_actions(
    ws: &GridWorkspace,
    shape: &ProbeShape,
    q: Config,
    lengths: &[u32],
) -> Vec<ActionSpec> {
    let mut out = Vec::new();
    for &d in Direction::for_ndim(ws.ndim()) {
        let reach = max_reach(ws, shape, q, d, lengths.iter().copied().max().unwrap_or(0));
        for &len in lengths {
            let eff = len.min(reach);
            if eff > 0 {
                out.push(ActionSpec::new(d, eff));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Number of unit steps the probe can take along `direction` (capped at `cap`).
pub fn max_reach(
    ws: &GridWorkspace,
    shape: &ProbeShape,
    q: Config,
    direction: Direction,
    cap: u32,
) -> u32 {
    (1..=cap)
        .take_while(|&i| shape.fits(ws, q.step(direction, i as i32)))
        .count() as u32
}
