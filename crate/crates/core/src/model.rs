//! Interface shared by both belief phases, the planner and the baselines.

use std::fmt;
use std::hash::{Hash, Hasher};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::outcome::Outcome;
use crate::workspace::{ActionSpec, Config, GridWorkspace, ProbeShape, VoxelSet};

/// SHA-256 fingerprint of a canonical belief encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BeliefKey(pub [u8; 32]);

impl Hash for BeliefKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        let mut prefix = [0u8; 8];
        prefix.copy_from_slice(&self.0[..8]);
        state.write_u64(u64::from_le_bytes(prefix));
    }
}

impl fmt::Debug for BeliefKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BeliefKey({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for BeliefKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl BeliefKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// Incremental builder for [`BeliefKey`]s.
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(tag: &str) -> Self {
        let mut h = Sha256::new();
        h.update((tag.len() as u32).to_le_bytes());
        h.update(tag.as_bytes());
        Self(h)
    }

    pub fn config(&mut self, q: Config) -> &mut Self {
        for c in q.0 {
            self.0.update(c.to_le_bytes());
        }
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn words(&mut self, words: &[u64]) -> &mut Self {
        self.u64(words.len() as u64);
        for w in words {
            self.0.update(w.to_le_bytes());
        }
        self
    }

    pub fn finish(self) -> BeliefKey {
        BeliefKey(self.0.finalize().into())
    }
}

/// Outcome distribution of one action.
#[derive(Debug, Clone)]
pub struct ActionOutcomes<B> {
    pub action: ActionSpec,
    pub outcomes: Vec<Outcome<B>>,
}

impl<B> ActionOutcomes<B> {
    /// Expected number of unit steps traveled.
    pub fn expected_cost(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| o.probability * o.traveled as f64)
            .sum()
    }
}

/// A finite belief MDP over probe motions.
pub trait BeliefModel {
    type Belief: Clone + fmt::Debug;

    fn key(&self, b: &Self::Belief) -> BeliefKey;

    fn config(&self, b: &Self::Belief) -> Config;

    fn is_terminal(&self, b: &Self::Belief) -> bool;

    /// Remaining cost once a terminal belief is reached.
    fn terminal_cost(&self, b: &Self::Belief) -> f64;

    /// Cardinality of the uniform belief (|PO| or |H|).
    fn uncertainty(&self, b: &Self::Belief) -> usize;

    /// Geometrically valid actions in canonical order.
    fn actions(&self, b: &Self::Belief) -> Vec<ActionSpec>;

    /// Non-zero-probability outcomes of `action`, in tie-break order.
    fn outcomes(&self, b: &Self::Belief, action: ActionSpec) -> Result<Vec<Outcome<Self::Belief>>>;

    /// Outcome distributions of every useful action. Actions whose only outcome
    /// returns to `b` itself are dropped.
    fn expand(&self, b: &Self::Belief) -> Vec<ActionOutcomes<Self::Belief>> {
        let key = self.key(b);
        self.actions(b)
            .into_iter()
            .filter_map(|action| {
                let outcomes = self.outcomes(b, action).ok()?;
                let self_loop = outcomes.len() == 1 && self.key(&outcomes[0].successor) == key;
                (!self_loop).then_some(ActionOutcomes { action, outcomes })
            })
            .collect()
    }
}

/// Admissible / inadmissible cost-to-go estimates for a belief type.
pub trait Heuristic<B> {
    fn admissible(&self, b: &B) -> f64;
    fn inadmissible(&self, b: &B) -> f64;
}

/// Beliefs tied to a voxel grid, where the probe can travel without touching
/// anything that may be occupied.
pub trait SpatialModel: BeliefModel {
    fn workspace(&self) -> &GridWorkspace;

    fn probe(&self) -> &ProbeShape;

    /// Voxels the object may occupy under `b`.
    fn occupancy(&self, b: &Self::Belief) -> VoxelSet;

    /// `b` with the probe moved to `q` through free space.
    fn with_config(&self, b: &Self::Belief, q: Config) -> Self::Belief;
}
