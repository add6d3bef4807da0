use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::particle::{ObjectTemplate, PoseHypothesis};
use crate::planner::PlannerConfig;
use crate::volumetric::VolumetricParams;
use crate::workspace::{Config, Coord, GridWorkspace, ProbeShape, VoxelSet};

pub const FORMAT_VERSION: u32 = 1;

/// Object shape as listed in a scenario file: either one base shape turned
/// in quarter steps about z, or explicit per-rotation cell lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    #[serde(default)]
    pub cells: Vec<Coord>,
    #[serde(default)]
    pub dock: Option<Coord>,
    #[serde(default = "one")]
    pub quarter_turns: usize,
    #[serde(default)]
    pub rotations: Vec<Vec<Coord>>,
    #[serde(default)]
    pub docks: Vec<Coord>,
}

fn one() -> usize {
    1
}

/// Ground-truth pose; random (drawn from the episode seed) when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub translation: Option<Coord>,
    #[serde(default)]
    pub rotation: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSpec {
    pub min: Coord,
    pub max: Coord,
}

/// Overrides of the template-derived phase-1 parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumetricSpec {
    pub delta: Option<usize>,
    pub d_max: Option<f64>,
    pub eps_hist: Option<f64>,
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub name: String,
    pub grid: Vec<usize>,
    #[serde(default = "single_probe")]
    pub probe: Vec<Coord>,
    pub object: ObjectSpec,
    #[serde(default)]
    pub truth: TruthSpec,
    pub volume: VolumeSpec,
    pub start: Coord,
    pub lengths: Vec<u32>,
    #[serde(default)]
    pub volumetric: VolumetricSpec,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn single_probe() -> Vec<Coord> {
    vec![[0, 0, 0]]
}

fn default_max_steps() -> usize {
    400
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub ws: GridWorkspace,
    pub probe: ProbeShape,
    pub template: ObjectTemplate,
    pub truth: TruthSpec,
    pub volume: VoxelSet,
    pub start: Config,
    pub lengths: Vec<u32>,
    pub volumetric: VolumetricParams,
    pub planner: PlannerConfig,
    pub baseline: BaselineConfig,
    pub seed: u64,
    pub max_steps: usize,
    /// Poses a random truth is drawn from.
    candidates: Vec<PoseHypothesis>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioFile = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn from_file(f: ScenarioFile) -> Result<Self> {
        if f.format_version != FORMAT_VERSION {
            return Err(Error::InvalidScenario(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                f.format_version
            )));
        }
        let ws = GridWorkspace::new(&f.grid)?;
        let probe = ProbeShape::new(f.probe)?;
        let template = if f.object.rotations.is_empty() {
            let dock = f
                .object
                .dock
                .ok_or_else(|| Error::InvalidScenario("object.dock is required".into()))?;
            ObjectTemplate::planar_rotations(f.object.cells, dock, f.object.quarter_turns)?
        } else {
            ObjectTemplate::new(f.object.rotations, f.object.docks)?
        };
        if let Some((a, b)) = template.ambiguous_rotations().first() {
            return Err(Error::InvalidScenario(format!(
                "rotations {a} and {b} occupy the same cells but dock differently"
            )));
        }
        if f.lengths.is_empty() || f.lengths.contains(&0) {
            return Err(Error::InvalidScenario("lengths must be positive".into()));
        }
        let volume = ws.box_set(f.volume.min, f.volume.max);
        if volume.is_empty() {
            return Err(Error::InvalidScenario("hypothesis volume is empty".into()));
        }
        let start = Config(f.start);
        if !probe.fits(&ws, start) {
            return Err(Error::InvalidScenario(format!("probe does not fit at start {start}")));
        }
        let mut volumetric = VolumetricParams::for_template(&template, ws.ndim());
        if let Some(d) = f.volumetric.delta {
            volumetric.delta = d;
        }
        if let Some(d) = f.volumetric.d_max {
            volumetric.d_max = d;
        }
        if let Some(e) = f.volumetric.eps_hist {
            volumetric.eps_hist = e;
        }
        volumetric.validate()?;
        if volumetric.d_max < template.diameter() {
            return Err(Error::InvalidScenario("d_max is smaller than the object diameter".into()));
        }
        f.planner.validate()?;
        f.baseline.validate()?;

        let mut scenario = Self {
            name: f.name,
            ws,
            probe,
            template,
            truth: f.truth,
            volume,
            start,
            lengths: f.lengths,
            volumetric,
            planner: f.planner,
            baseline: f.baseline,
            seed: f.seed,
            max_steps: f.max_steps,
            candidates: Vec::new(),
        };
        scenario.candidates = scenario.feasible_poses();
        match scenario.truth.translation {
            Some(t) => {
                let h = PoseHypothesis {
                    translation: t,
                    rotation: scenario.truth.rotation,
                };
                if !scenario.candidates.contains(&h) {
                    return Err(Error::InvalidScenario(
                        "true pose must lie inside the hypothesis volume, clear of the start, with a reachable dock"
                            .into(),
                    ));
                }
            }
            None if scenario.candidates.is_empty() => {
                return Err(Error::InvalidScenario("no pose fits inside the hypothesis volume".into()))
            }
            None => {}
        }
        Ok(scenario)
    }

    /// Poses inside the volume, clear of the start footprint, whose dock the
    /// probe can occupy.
    fn feasible_poses(&self) -> Vec<PoseHypothesis> {
        let start_cells: Vec<Coord> = self.probe.cells(self.start).collect();
        let mut out = Vec::new();
        for r in 0..self.template.rotation_count() as u32 {
            let anchor = self.template.rotations()[r as usize][0];
            for i in self.volume.iter() {
                let c = self.ws.coord(i);
                let h = PoseHypothesis {
                    translation: [c[0] - anchor[0], c[1] - anchor[1], c[2] - anchor[2]],
                    rotation: r,
                };
                let cells: Vec<Coord> = h.cells(&self.template).collect();
                let inside = cells
                    .iter()
                    .all(|&v| self.ws.try_index(v).is_some_and(|j| self.volume.contains(j)));
                let clear = cells.iter().all(|v| !start_cells.contains(v));
                let dock = h.dock(&self.template);
                let dock_ok = self.probe.fits(&self.ws, dock)
                    && self.probe.cells(dock).all(|p| !cells.contains(&p));
                if inside && clear && dock_ok {
                    out.push(h);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Ground truth for an episode seed.
    pub fn truth_for_seed(&self, seed: u64) -> PoseHypothesis {
        match self.truth.translation {
            Some(t) => PoseHypothesis {
                translation: t,
                rotation: self.truth.rotation,
            },
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7472_7574_68);
                self.candidates[rng.gen_range(0..self.candidates.len())]
            }
        }
    }
}

/// Built-in scenario files.
pub mod presets {
    pub const SHELF: &str = include_str!("../../../../scenarios/shelf.toml");
    pub const MOBILE: &str = include_str!("../../../../scenarios/mobile.toml");
    pub const CUBE: &str = include_str!("../../../../scenarios/cube.toml");
    pub const PARTICLE: &str = include_str!("../../../../scenarios/particle_only.toml");

    pub const ALL: [(&str, &str); 4] = [
        ("shelf", SHELF),
        ("mobile", MOBILE),
        ("cube", CUBE),
        ("particle_only", PARTICLE),
    ];

    pub fn get(name: &str) -> Option<&'static str> {
        ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
format_version = 1
name = "tiny"
grid = [12, 12]
start = [1, 1, 0]
lengths = [1, 2, 4]

[object]
cells = [[0, 0, 0], [1, 0, 0]]
dock = [-1, 0, 0]
quarter_turns = 2

[volume]
min = [5, 5, 0]
max = [8, 8, 0]
"#;

    #[test]
    fn parses_and_applies_defaults() {
        let s = Scenario::from_toml(TINY).unwrap();
        assert_eq!(s.template.rotation_count(), 2);
        assert_eq!(s.volume.count(), 16);
        assert_eq!(s.volumetric.n_object, 2);
        assert_eq!(s.volumetric.delta, 16);
        assert_eq!(s.planner, PlannerConfig::default());
        assert_eq!(s.max_steps, 400);
        let t = s.truth_for_seed(3);
        assert_eq!(t, s.truth_for_seed(3));
        let cells = t.voxels(&s.ws, &s.template);
        assert!(cells.is_subset(&s.volume));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Scenario::from_toml(&TINY.replace("format_version = 1", "format_version = 2")).is_err());
        assert!(Scenario::from_toml(&TINY.replace("lengths = [1, 2, 4]", "lengths = []")).is_err());
        let outside = format!("{TINY}\n[truth]\ntranslation = [0, 0, 0]\n");
        assert!(matches!(Scenario::from_toml(&outside), Err(Error::InvalidScenario(_))));
        let inside = format!("{TINY}\n[truth]\ntranslation = [6, 6, 0]\n");
        assert!(Scenario::from_toml(&inside).is_ok());
        assert!(Scenario::from_toml(&TINY.replace("name", "nmae")).is_err());
        assert!(Scenario::from_toml(&TINY.replace("quarter_turns = 2", "quarter_turns = 4")).is_err());
    }

    #[test]
    fn presets_parse() {
        for (name, text) in presets::ALL {
            let s = Scenario::from_toml(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }
}
