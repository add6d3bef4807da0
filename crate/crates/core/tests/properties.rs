use proptest::prelude::*;

use touchloc::baselines::information_gain;
use touchloc::model::BeliefModel;
use touchloc::particle::{
    expected_observation, generate_hypotheses, ObjectTemplate, ParticleBelief, ParticleModel,
    PoseHypothesis,
};
use touchloc::volumetric::{VolumetricBelief, VolumetricModel, VolumetricParams};
use touchloc::workspace::{
    discretize_action, ActionSpec, Config, Direction, GridWorkspace, ProbeShape, VoxelSet,
};

const SIDE: i32 = 14;

fn template() -> ObjectTemplate {
    ObjectTemplate::planar_rotations(vec![[0, 0, 0], [1, 0, 0], [0, 1, 0]], [-1, 0, 0], 4).unwrap()
}

fn world() -> (GridWorkspace, ProbeShape, ObjectTemplate) {
    let ws = GridWorkspace::new(&[SIDE as usize, SIDE as usize]).unwrap();
    (ws, ProbeShape::single(), template())
}

fn volumetric() -> VolumetricModel {
    let (ws, probe, t) = world();
    VolumetricModel::new(ws, probe, VolumetricParams::for_template(&t, 2), vec![1, 2, 4], 1.0).unwrap()
}

fn particle() -> ParticleModel {
    let (ws, probe, t) = world();
    ParticleModel::new(ws, probe, t, vec![1, 2, 4], 1.0).unwrap()
}

fn direction() -> impl Strategy<Value = Direction> {
    prop::sample::select(Direction::for_ndim(2).to_vec())
}

fn action() -> impl Strategy<Value = ActionSpec> {
    (direction(), prop::sample::select(vec![1u32, 2, 4])).prop_map(|(d, l)| ActionSpec::new(d, l))
}

/// A truth pose inside the box [4, 9]², a start outside it.
fn episode_setup() -> impl Strategy<Value = (PoseHypothesis, Config)> {
    (4..8i32, 4..8i32, 0..4u32, 0..SIDE, 0..3i32).prop_map(|(x, y, r, s, side)| {
        let truth = PoseHypothesis {
            translation: [x + 1, y + 1, 0],
            rotation: r,
        };
        let start = match side {
            0 => Config::xy(s, 1),
            1 => Config::xy(1, s),
            _ => Config::xy(s, SIDE - 2),
        };
        (truth, start)
    })
}

fn volume(ws: &GridWorkspace) -> VoxelSet {
    ws.box_set([3, 3, 0], [10, 10, 0])
}

fn voxel_set(universe: usize) -> impl Strategy<Value = VoxelSet> {
    prop::collection::vec(0..universe, 0..universe).prop_map(move |v| VoxelSet::from_indices(universe, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn voxel_set_algebra(a in voxel_set(150), b in voxel_set(150)) {
        prop_assert_eq!(a.union(&b).count() + a.intersection(&b).count(), a.count() + b.count());
        prop_assert_eq!(a.intersection_count(&b), a.intersection(&b).count());
        prop_assert_eq!(a.difference(&b).count(), a.count() - a.intersection_count(&b));
        prop_assert_eq!(a.complement().complement(), a.clone());
        prop_assert!(a.intersection(&b).is_subset(&a));
        prop_assert_eq!(a.intersects(&b), a.intersection_count(&b) > 0);
        prop_assert_eq!(VoxelSet::from_runs(150, &a.to_runs()), Some(a.clone()));
        let listed: Vec<usize> = a.iter().collect();
        prop_assert!(listed.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(listed.len(), a.count());
    }

    #[test]
    fn volumetric_updates_keep_the_truth(
        (truth, start) in episode_setup(),
        actions in prop::collection::vec(action(), 1..25),
    ) {
        let m = volumetric();
        let t = template();
        let truth_cells = truth.voxels(&m.ws, &t);
        prop_assume!(!truth_cells.contains(m.ws.index(start.0)));
        let mut b: VolumetricBelief = m.initial_belief(start, &volume(&m.ws));
        for a in actions {
            let Ok(disc) = discretize_action(&m.ws, &m.probe, b.q, a) else { continue };
            let obs = expected_observation(&t, &truth, &disc, &m.probe).unwrap();
            let outcomes = m.outcomes(&b, a).unwrap();
            let total: f64 = outcomes.iter().map(|o| o.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
            prop_assert!(outcomes.iter().any(|o| o.kind == obs), "observed {} has no mass", obs);
            let next = m.apply_observation(&b, a, obs).unwrap();
            prop_assert!(next.po.is_subset(&b.po));
            prop_assert!(truth_cells.is_subset(&next.po));
            b = next;
        }
        let hyps = generate_hypotheses(&m.ws, &m.probe, &t, &b.po, &b.history).unwrap();
        prop_assert!(hyps.binary_search(&truth).is_ok());
    }

    #[test]
    fn particle_outcomes_partition_the_hypotheses(
        (truth, start) in episode_setup(),
        actions in prop::collection::vec(action(), 1..20),
    ) {
        let m = particle();
        let t = template();
        let v = volume(&m.ws);
        let hyps = generate_hypotheses(&m.ws, &m.probe, &t, &v, &[]).unwrap();
        prop_assume!(hyps.binary_search(&truth).is_ok());
        prop_assume!(!truth.voxels(&m.ws, &t).contains(m.ws.index(start.0)));
        let occupied: Vec<_> = hyps
            .iter()
            .copied()
            .filter(|h| !h.voxels(&m.ws, &t).contains(m.ws.index(start.0)))
            .collect();
        let mut b = ParticleBelief::new(start, occupied);
        for a in actions {
            let Ok(disc) = discretize_action(&m.ws, &m.probe, b.q, a) else { continue };
            let parts = m.partition_by_observation(&b, a).unwrap();
            let total: f64 = parts.iter().map(|o| o.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            let mut union: Vec<PoseHypothesis> =
                parts.iter().flat_map(|o| o.successor.hypotheses.iter().copied()).collect();
            union.sort_unstable();
            prop_assert_eq!(&union, &b.hypotheses);
            for p in &parts {
                let gain = information_gain(&m, &b, &touchloc::model::ActionOutcomes {
                    action: a,
                    outcomes: parts.clone(),
                });
                prop_assert!(gain >= 0.0 && gain <= (b.hypotheses.len() as f64).log2() + 1e-12);
                prop_assert!(!p.successor.hypotheses.is_empty());
            }
            let obs = expected_observation(&t, &truth, &disc, &m.probe).unwrap();
            let next = m.apply_observation(&b, a, obs).unwrap();
            prop_assert!(next.hypotheses.binary_search(&truth).is_ok());
            b = next;
        }
    }

    #[test]
    fn heuristics_vanish_exactly_at_terminal_beliefs((truth, start) in episode_setup()) {
        use touchloc::model::Heuristic;
        let m = particle();
        let t = template();
        let solved = ParticleBelief::new(truth.dock(&t), vec![truth]);
        prop_assert_eq!(m.admissible(&solved), 0.0);
        prop_assert_eq!(m.inadmissible(&solved), 0.0);
        let far = ParticleBelief::new(start, vec![truth]);
        prop_assert!(m.admissible(&far) <= m.inadmissible(&far));
    }
}
