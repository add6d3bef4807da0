use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer voxel coordinates. Two-dimensional grids use `z = 0`.
pub type Coord = [i32; 3];

/// A finite voxel grid with unit edge length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridWorkspace {
    dims: [usize; 3],
    ndim: usize,
}

impl GridWorkspace {
    /// Builds a grid from two or three extents.
    pub fn new(extents: &[usize]) -> Result<Self> {
        if !(2..=3).contains(&extents.len()) {
            return Err(Error::InvalidGrid(format!(
                "expected 2 or 3 extents, got {}",
                extents.len()
            )));
        }
        if extents.iter().any(|&e| e == 0) {
            return Err(Error::InvalidGrid("every extent must be at least 1".into()));
        }
        let mut dims = [1usize; 3];
        dims[..extents.len()].copy_from_slice(extents);
        if dims.iter().product::<usize>() > u32::MAX as usize {
            return Err(Error::InvalidGrid("grid too large".into()));
        }
        Ok(Self {
            dims,
            ndim: extents.len(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Extents actually declared (2 or 3 entries).
    pub fn extents(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    /// Total voxel count.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, c: Coord) -> bool {
        (0..3).all(|k| c[k] >= 0 && (c[k] as usize) < self.dims[k])
    }

    /// Linear index of an in-bounds coordinate.
    #[inline]
    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.contains(c), "{c:?} outside {:?}", self.dims);
        c[0] as usize + self.dims[0] * (c[1] as usize + self.dims[1] * c[2] as usize)
    }

    #[inline]
    pub fn try_index(&self, c: Coord) -> Option<usize> {
        self.contains(c).then(|| self.index(c))
    }

    #[inline]
    pub fn coord(&self, index: usize) -> Coord {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        let y = rest % self.dims[1];
        let z = rest / self.dims[1];
        [x as i32, y as i32, z as i32]
    }

    pub fn empty_set(&self) -> VoxelSet {
        VoxelSet::empty(self.len())
    }

    pub fn full_set(&self) -> VoxelSet {
        VoxelSet::full(self.len())
    }

    /// All voxels in the inclusive box `[min, max]`, clipped to the grid.
    pub fn box_set(&self, min: Coord, max: Coord) -> VoxelSet {
        let mut set = self.empty_set();
        for z in min[2].max(0)..=max[2].min(self.dims[2] as i32 - 1) {
            for y in min[1].max(0)..=max[1].min(self.dims[1] as i32 - 1) {
                for x in min[0].max(0)..=max[0].min(self.dims[0] as i32 - 1) {
                    set.insert(self.index([x, y, z]));
                }
            }
        }
        set
    }

    /// Set of the given coordinates; out-of-bounds ones are ignored.
    pub fn set_of<I: IntoIterator<Item = Coord>>(&self, coords: I) -> VoxelSet {
        let mut set = self.empty_set();
        for c in coords {
            if let Some(i) = self.try_index(c) {
                set.insert(i);
            }
        }
        set
    }

    pub fn coords<'a>(&'a self, set: &'a VoxelSet) -> impl Iterator<Item = Coord> + 'a {
        set.iter().map(move |i| self.coord(i))
    }

    /// Length of the grid's main diagonal in voxel units.
    pub fn diagonal(&self) -> f64 {
        self.dims
            .iter()
            .map(|&d| ((d - 1) as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Squared center-to-center distance between two voxels.
#[inline]
pub fn dist2(a: Coord, b: Coord) -> i64 {
    (0..3)
        .map(|k| {
            let d = (a[k] - b[k]) as i64;
            d * d
        })
        .sum()
}

/// Dense bit-array membership over the voxels of a [`GridWorkspace`].
///
/// Every binary operation assumes both operands were built for the same grid.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelSet {
    universe: usize,
    words: Vec<u64>,
}

impl VoxelSet {
    pub fn empty(universe: usize) -> Self {
        Self {
            universe,
            words: vec![0; universe.div_ceil(64)],
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut set = Self {
            universe,
            words: vec![u64::MAX; universe.div_ceil(64)],
        };
        set.trim();
        set
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(universe: usize, indices: I) -> Self {
        let mut set = Self::empty(universe);
        for i in indices {
            set.insert(i);
        }
        set
    }

    fn trim(&mut self) {
        let tail = self.universe % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    /// Number of voxels in the underlying grid.
    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Cardinality.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.universe && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.universe, "voxel {i} outside universe {}", self.universe);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        if i < self.universe {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn union_with(&mut self, other: &VoxelSet) {
        debug_assert_eq!(self.universe, other.universe);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn difference_with(&mut self, other: &VoxelSet) {
        debug_assert_eq!(self.universe, other.universe);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn intersect_with(&mut self, other: &VoxelSet) {
        debug_assert_eq!(self.universe, other.universe);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn union(&self, other: &VoxelSet) -> VoxelSet {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn difference(&self, other: &VoxelSet) -> VoxelSet {
        let mut out = self.clone();
        out.difference_with(other);
        out
    }

    pub fn intersection(&self, other: &VoxelSet) -> VoxelSet {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn complement(&self) -> VoxelSet {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        out.trim();
        out
    }

    pub fn intersection_count(&self, other: &VoxelSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn intersects(&self, other: &VoxelSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn is_subset(&self, other: &VoxelSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Set members in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    /// Run lengths of alternating absent/present stretches, starting with absent.
    pub fn to_runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for i in 0..self.universe {
            let bit = self.contains(i);
            if bit == current {
                len += 1;
            } else {
                runs.push(len);
                current = bit;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    /// Inverse of [`VoxelSet::to_runs`]; `None` if the runs do not cover `universe` exactly.
    pub fn from_runs(universe: usize, runs: &[usize]) -> Option<Self> {
        if runs.iter().sum::<usize>() != universe {
            return None;
        }
        let mut set = Self::empty(universe);
        let mut pos = 0;
        for (k, &len) in runs.iter().enumerate() {
            if k % 2 == 1 {
                for i in pos..pos + len {
                    set.insert(i);
                }
            }
            pos += len;
        }
        Some(set)
    }
}

impl fmt::Debug for VoxelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
