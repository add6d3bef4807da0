use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::workspace::Config;

/// What a probe motion reports back: contact while at waypoint `index`
/// (0 = blocked at the start), or free travel to the end of the motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservationKind {
    Collision { index: u32 },
    NoCollision,
}

impl ObservationKind {
    /// Unit steps traveled before stopping, for a motion of `length` steps.
    pub fn traveled(self, length: u32) -> u32 {
        match self {
            ObservationKind::Collision { index } => index,
            ObservationKind::NoCollision => length,
        }
    }

    pub fn is_collision(self) -> bool {
        matches!(self, ObservationKind::Collision { .. })
    }

    /// Preference among equally likely outcomes: no-collision first, then
    /// collisions by increasing index.
    pub fn tie_order(self, other: ObservationKind) -> Ordering {
        use ObservationKind::*;
        match (self, other) {
            (NoCollision, NoCollision) => Ordering::Equal,
            (NoCollision, Collision { .. }) => Ordering::Less,
            (Collision { .. }, NoCollision) => Ordering::Greater,
            (Collision { index: a }, Collision { index: b }) => a.cmp(&b),
        }
    }
}

impl fmt::Display for ObservationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservationKind::Collision { index } => write!(f, "collision@{index}"),
            ObservationKind::NoCollision => f.write_str("free"),
        }
    }
}

/// One possible result of executing an action from a belief.
#[derive(Debug, Clone)]
pub struct Outcome<B> {
    pub kind: ObservationKind,
    /// Probe configuration after the motion stops.
    pub config: Config,
    pub probability: f64,
    /// Unit steps traveled.
    pub traveled: u32,
    pub successor: B,
}
