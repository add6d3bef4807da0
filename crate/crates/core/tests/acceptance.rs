//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 3 8` runs only the listed criteria.

use std::collections::{HashMap, HashSet, VecDeque};
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use touchloc::harness::{presets, run_episode, run_episode_traced, PlannerKind, RunRecord, Scenario, TraceStep};
use touchloc::model::{BeliefKey, BeliefModel, Heuristic};
use touchloc::outcome::ObservationKind;
use touchloc::particle::{generate_hypotheses, ObjectTemplate, ParticleBelief, ParticleModel, PoseHypothesis};
use touchloc::planner::{Budget, PartialPolicy, PlannerConfig, PlannerSession, ValueType};
use touchloc::volumetric::{CollisionRecord, VolumetricModel, VolumetricParams};
use touchloc::workspace::{discretize_action, ActionSpec, Config, Coord, Direction, GridWorkspace, ProbeShape};
use touchloc::Error;

const SCENARIOS: [&str; 4] = ["shelf", "mobile", "cube", "particle_only"];

fn preset(name: &str) -> Scenario {
    Scenario::from_toml(presets::get(name).expect("preset exists")).expect("preset parses")
}

/// Episodes are shared between criteria.
#[derive(Default)]
struct Runs(HashMap<(String, PlannerKind, u64), RunRecord>);

impl Runs {
    fn get(&mut self, s: &Scenario, kind: PlannerKind, seed: u64) -> &RunRecord {
        self.0
            .entry((s.name.clone(), kind, seed))
            .or_insert_with(|| run_episode(s, kind, seed))
    }

    fn mean(&mut self, s: &Scenario, kind: PlannerKind, seeds: u64, f: impl Fn(&RunRecord) -> f64) -> f64 {
        (0..seeds).map(|seed| f(self.get(s, kind, seed))).sum::<f64>() / seeds as f64
    }
}

fn model_volumetric(s: &Scenario) -> VolumetricModel {
    VolumetricModel::new(s.ws, s.probe.clone(), s.volumetric, s.lengths.clone(), s.planner.weight).unwrap()
}

fn model_particle(s: &Scenario) -> ParticleModel {
    ParticleModel::new(s.ws, s.probe.clone(), s.template.clone(), s.lengths.clone(), s.planner.particle_weight())
        .unwrap()
}

// ---------------------------------------------------------------------------
// Independent geometry oracles.

fn add(a: Coord, b: Coord) -> Coord {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn footprint(probe: &ProbeShape, q: Coord) -> Vec<Coord> {
    probe.offsets().iter().map(|&o| add(q, o)).collect()
}

fn shift(q: Coord, d: Direction, k: i32) -> Coord {
    let u = d.unit();
    [q[0] + u[0] * k, q[1] + u[1] * k, q[2] + u[2] * k]
}

fn in_grid(ws: &GridWorkspace, c: Coord) -> bool {
    let dims = ws.dims();
    (0..3).all(|k| c[k] >= 0 && (c[k] as usize) < dims[k])
}

/// Advances the probe one cell at a time; contact at waypoint `i` when the
/// next cell layer holds part of the object.
fn stepwise_observation(
    ws: &GridWorkspace,
    probe: &ProbeShape,
    object: &[Coord],
    start: Coord,
    action: ActionSpec,
) -> Option<Result<ObservationKind, ()>> {
    let d = action.direction;
    let mut n = 0;
    while n < action.length as i32 && footprint(probe, shift(start, d, n + 1)).iter().all(|&c| in_grid(ws, c)) {
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let hits = |q: Coord| footprint(probe, q).iter().any(|c| object.contains(c));
    if hits(start) {
        return Some(Err(()));
    }
    for i in 0..=n {
        if hits(shift(start, d, i + 1)) {
            return Some(Ok(ObservationKind::Collision { index: i as u32 }));
        }
    }
    Some(Ok(ObservationKind::NoCollision))
}

/// Every pose whose cells lie in `po` and touch each recorded contact layer.
fn brute_force_hypotheses(
    ws: &GridWorkspace,
    probe: &ProbeShape,
    template: &ObjectTemplate,
    po: &[Coord],
    history: &[CollisionRecord],
) -> Vec<PoseHypothesis> {
    let layers: Vec<Vec<Coord>> = history
        .iter()
        .map(|r| {
            let here = footprint(probe, r.config.0);
            footprint(probe, shift(r.config.0, r.direction, 1))
                .into_iter()
                .filter(|c| !here.contains(c) && in_grid(ws, *c))
                .collect()
        })
        .collect();
    let dims = ws.dims();
    let mut out = Vec::new();
    for r in 0..template.rotation_count() {
        for x in -8..dims[0] as i32 + 8 {
            for y in -8..dims[1] as i32 + 8 {
                let h = PoseHypothesis {
                    translation: [x, y, 0],
                    rotation: r as u32,
                };
                let cells: Vec<Coord> = h.cells(template).collect();
                if cells.iter().all(|c| po.contains(c))
                    && layers.iter().all(|l| l.iter().any(|c| cells.contains(c)))
                {
                    out.push(h);
                }
            }
        }
    }
    out.sort();
    out
}

fn random_template(rng: &mut ChaCha8Rng, max_cells: usize) -> ObjectTemplate {
    let pool: [Coord; 6] = [[1, 0, 0], [0, 1, 0], [1, 1, 0], [2, 0, 0], [0, 2, 0], [-1, 1, 0]];
    loop {
        let n = rng.gen_range(1..=max_cells);
        let mut cells = vec![[0, 0, 0]];
        cells.extend(pool.choose_multiple(rng, n - 1).copied());
        let turns = *[1usize, 2, 4].choose(rng).unwrap();
        if let Ok(t) = ObjectTemplate::planar_rotations(cells, [-1, 0, 0], turns) {
            return t;
        }
    }
}

fn random_probe(rng: &mut ChaCha8Rng) -> ProbeShape {
    match rng.gen_range(0..3) {
        0 => ProbeShape::single(),
        1 => ProbeShape::cuboid(2, 1, 1).unwrap(),
        _ => ProbeShape::cuboid(2, 2, 1).unwrap(),
    }
}

fn random_config(rng: &mut ChaCha8Rng, ws: &GridWorkspace, probe: &ProbeShape) -> Config {
    let dims = ws.dims();
    loop {
        let q = Config::xy(rng.gen_range(0..dims[0] as i32), rng.gen_range(0..dims[1] as i32));
        if probe.fits(ws, q) {
            return q;
        }
    }
}

// ---------------------------------------------------------------------------

type Verdict = (bool, String);

/// `|sum - 1|` of the outcome probabilities; infinite on an error or a
/// non-positive probability.
fn normalization_error<B>(outcomes: touchloc::Result<Vec<touchloc::outcome::Outcome<B>>>) -> f64 {
    match outcomes {
        Ok(o) if o.iter().all(|o| o.probability > 0.0) => {
            (o.iter().map(|o| o.probability).sum::<f64>() - 1.0).abs()
        }
        _ => f64::INFINITY,
    }
}

fn criterion1() -> Verdict {
    const PER_PHASE: usize = 5000;
    let scenarios: Vec<Scenario> = ["shelf", "mobile", "cube"].map(preset).into();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs = [0usize; 2];
    let mut worst = 0.0f64;
    let mut bad = 0;
    let mut check = |err: f64| {
        worst = worst.max(err);
        bad += usize::from(err > 1e-9);
    };
    while pairs[0] < PER_PHASE || pairs[1] < PER_PHASE {
        let s = &scenarios[rng.gen_range(0..scenarios.len())];
        let truth = s.truth_for_seed(rng.gen());
        let target = truth.dock(&s.template);
        let vm = model_volumetric(s);
        let mut b = vm.initial_belief(s.start, &s.volume);
        // Random walk biased towards the object so contacts happen.
        for _ in 0..rng.gen_range(5..60) {
            if vm.is_terminal(&b) {
                break;
            }
            let actions = vm.actions(&b);
            let a = *actions.choose(&mut rng).unwrap();
            if pairs[0] < PER_PHASE {
                check(normalization_error(vm.outcomes(&b, a)));
                pairs[0] += 1;
            }
            let toward = actions
                .iter()
                .copied()
                .min_by_key(|x| b.q.step(x.direction, 1).manhattan(target) * 16 + x.length)
                .unwrap();
            let step = if rng.gen_bool(0.6) { toward } else { a };
            let obs = touchloc::harness::simulate_observation(s, &truth, b.q, step).unwrap();
            b = vm.apply_observation(&b, step, obs).unwrap();
        }
        if pairs[1] >= PER_PHASE {
            continue;
        }
        let Ok(hyps) = generate_hypotheses(&s.ws, &s.probe, &s.template, &b.po, &b.history) else {
            check(f64::INFINITY);
            continue;
        };
        let pm = model_particle(s);
        let mut p = ParticleBelief::new(b.q, hyps);
        for _ in 0..rng.gen_range(1..25) {
            if pairs[1] >= PER_PHASE {
                break;
            }
            let a = *pm.actions(&p).choose(&mut rng).unwrap();
            check(normalization_error(pm.outcomes(&p, a)));
            pairs[1] += 1;
            let obs = touchloc::harness::simulate_observation(s, &truth, p.q, a).unwrap();
            p = pm.apply_observation(&p, a, obs).unwrap();
        }
    }
    drop(check);
    (
        bad == 0,
        format!(
            "{} volumetric + {} particle pairs, max |sum - 1| = {worst:.1e}, {bad} bad",
            pairs[0], pairs[1]
        ),
    )
}

/// Re-derives both beliefs from an executed trace, with observations
/// recomputed by the stepwise oracle, and counts steps losing the truth.
fn independent_violations(s: &Scenario, truth: &PoseHypothesis, trace: &[TraceStep]) -> Result<u64, String> {
    let object: Vec<Coord> = truth.cells(&s.template).collect();
    let truth_cells = truth.voxels(&s.ws, &s.template);
    let vm = model_volumetric(s);
    let pm = model_particle(s);
    let mut b = vm.initial_belief(s.start, &s.volume);
    let mut particles: Option<ParticleBelief> = None;
    let mut violations = 0;
    for step in trace {
        let expected = stepwise_observation(&s.ws, &s.probe, &object, step.from.0, step.action);
        if expected != Some(Ok(step.observation)) {
            return Err(format!("observation {} differs from the oracle {expected:?}", step.observation));
        }
        match step.phase {
            1 => {
                b = vm.apply_observation(&b, step.action, step.observation).map_err(|e| e.to_string())?;
                violations += u64::from(!truth_cells.is_subset(&b.po));
            }
            2 => {
                let p = match particles.take() {
                    Some(p) => p,
                    None => {
                        let hyps = generate_hypotheses(&s.ws, &s.probe, &s.template, &b.po, &b.history)
                            .map_err(|e| e.to_string())?;
                        violations += u64::from(hyps.binary_search(truth).is_err());
                        ParticleBelief::new(b.q, hyps)
                    }
                };
                let next = pm.apply_observation(&p, step.action, step.observation).map_err(|e| e.to_string())?;
                violations += u64::from(next.hypotheses.binary_search(truth).is_err());
                particles = Some(next);
            }
            _ => {}
        }
    }
    Ok(violations)
}

fn criterion2() -> Verdict {
    let scenarios: Vec<Scenario> = SCENARIOS.map(preset).into();
    let mut reported = 0;
    let mut rederived = 0;
    let mut errors = Vec::new();
    let mut succeeded = 0;
    for i in 0..1000u64 {
        let s = &scenarios[(i % 4) as usize];
        let kind = PlannerKind::ALL[((i / 4) % 4) as usize];
        let seed = 10_000 + i;
        let (record, trace) = run_episode_traced(s, kind, seed, s.planner);
        reported += record.violations;
        succeeded += u64::from(record.success);
        match independent_violations(s, &s.truth_for_seed(seed), &trace) {
            Ok(v) => rederived += v,
            Err(e) => errors.push(format!("{} {kind} seed {seed}: {e}", s.name)),
        }
    }
    for e in errors.iter().take(3) {
        println!("    {e}");
    }
    (
        reported == 0 && rederived == 0 && errors.is_empty(),
        format!(
            "1000 episodes ({succeeded} succeeded), violations reported {reported}, re-derived {rederived}, trace errors {}",
            errors.len()
        ),
    )
}

fn criterion3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hyp_mismatch = 0;
    let mut nonempty = 0;
    for _ in 0..200 {
        let ws = GridWorkspace::new(&[rng.gen_range(6..=16), rng.gen_range(6..=16)]).unwrap();
        let template = random_template(&mut rng, 4);
        let probe = random_probe(&mut rng);
        let dims = ws.dims();
        let (x0, y0) = (rng.gen_range(0..dims[0] as i32 / 2), rng.gen_range(0..dims[1] as i32 / 2));
        let (x1, y1) = (rng.gen_range(x0..dims[0] as i32), rng.gen_range(y0..dims[1] as i32));
        let mut po_cells = Vec::new();
        for x in x0..=x1 {
            for y in y0..=y1 {
                if rng.gen_bool(0.85) {
                    po_cells.push([x, y, 0]);
                }
            }
        }
        let po = ws.set_of(po_cells.iter().copied());
        // Half the histories come from real contacts with a pose inside PO.
        let anchor = *po_cells.choose(&mut rng).unwrap_or(&[x0, y0, 0]);
        let truth = PoseHypothesis {
            translation: anchor,
            rotation: rng.gen_range(0..template.rotation_count() as u32),
        };
        let object: Vec<Coord> = truth.cells(&template).collect();
        let consistent = rng.gen_bool(0.5);
        let mut history = Vec::new();
        for _ in 0..rng.gen_range(0..4) {
            let config = random_config(&mut rng, &ws, &probe);
            let direction = *Direction::for_ndim(2).choose(&mut rng).unwrap();
            if !consistent {
                history.push(CollisionRecord { config, direction });
                continue;
            }
            let action = ActionSpec::new(direction, 16);
            if let Some(Ok(ObservationKind::Collision { index })) =
                stepwise_observation(&ws, &probe, &object, config.0, action)
            {
                history.push(CollisionRecord {
                    config: Config(shift(config.0, direction, index as i32)),
                    direction,
                });
            }
        }
        let expected = brute_force_hypotheses(&ws, &probe, &template, &po_cells, &history);
        let got = generate_hypotheses(&ws, &probe, &template, &po, &history);
        let same = match got {
            Ok(h) => h == expected,
            Err(Error::NoFeasiblePose) => expected.is_empty(),
            Err(_) => false,
        };
        nonempty += usize::from(!expected.is_empty());
        hyp_mismatch += usize::from(!same);
    }

    let mut obs_mismatch = 0;
    let mut collisions = 0;
    let mut pairs = 0;
    while pairs < 1000 {
        let ws = GridWorkspace::new(&[rng.gen_range(6..=16), rng.gen_range(6..=16)]).unwrap();
        let template = random_template(&mut rng, 4);
        let probe = random_probe(&mut rng);
        let h = PoseHypothesis {
            translation: [rng.gen_range(1..ws.dims()[0] as i32 - 2), rng.gen_range(1..ws.dims()[1] as i32 - 2), 0],
            rotation: rng.gen_range(0..template.rotation_count() as u32),
        };
        if !h.fits(&ws, &template) {
            continue;
        }
        let object: Vec<Coord> = h.cells(&template).collect();
        let q = random_config(&mut rng, &ws, &probe);
        // Usually head for the object along the axis with the larger gap.
        let direction = if rng.gen_bool(0.7) {
            let (dx, dy) = (object[0][0] - q.0[0], object[0][1] - q.0[1]);
            if dx.abs() >= dy.abs() {
                Direction::from_axis(0, if dx >= 0 { 1 } else { -1 })
            } else {
                Direction::from_axis(1, if dy >= 0 { 1 } else { -1 })
            }
        } else {
            *Direction::for_ndim(2).choose(&mut rng).unwrap()
        };
        let action = ActionSpec::new(direction, rng.gen_range(1..=8));
        let expected = stepwise_observation(&ws, &probe, &object, q.0, action);
        let got = discretize_action(&ws, &probe, q, action)
            .ok()
            .map(|d| touchloc::particle::expected_observation(&template, &h, &d, &probe));
        let same = match (&expected, &got) {
            (None, None) => true,
            (Some(Ok(a)), Some(Ok(b))) => a == b,
            (Some(Err(())), Some(Err(Error::StartInCollision { .. }))) => true,
            _ => false,
        };
        if expected.is_none() {
            continue;
        }
        collisions += usize::from(matches!(expected, Some(Ok(ObservationKind::Collision { .. }))));
        obs_mismatch += usize::from(!same);
        pairs += 1;
    }
    (
        hyp_mismatch == 0 && obs_mismatch == 0,
        format!(
            "hypotheses: 200 instances ({nonempty} non-empty), {hyp_mismatch} mismatches; \
             observations: {pairs} pairs ({collisions} contacts), {obs_mismatch} mismatches"
        ),
    )
}

// ---------------------------------------------------------------------------
// Exact belief-MDP solution for tiny instances.

struct Exact<B> {
    beliefs: Vec<B>,
    index: HashMap<BeliefKey, usize>,
    value: Vec<f64>,
}

const DEAD_END: f64 = 1e6;

fn solve_exact<M: BeliefModel>(m: &M, b0: &M::Belief, cap: usize) -> Option<Exact<M::Belief>> {
    let mut beliefs = vec![b0.clone()];
    let mut index = HashMap::from([(m.key(b0), 0)]);
    let mut edges: Vec<Vec<Vec<(f64, f64, usize)>>> = Vec::new();
    let mut queue = VecDeque::from([0]);
    while let Some(i) = queue.pop_front() {
        while edges.len() <= i {
            edges.push(Vec::new());
        }
        if m.is_terminal(&beliefs[i]) {
            continue;
        }
        for g in m.expand(&beliefs[i].clone()) {
            let mut e = Vec::new();
            for o in g.outcomes {
                let k = m.key(&o.successor);
                let j = *index.entry(k).or_insert_with(|| {
                    beliefs.push(o.successor.clone());
                    queue.push_back(beliefs.len() - 1);
                    beliefs.len() - 1
                });
                e.push((o.probability, o.traveled as f64, j));
            }
            edges[i].push(e);
        }
        if beliefs.len() > cap {
            return None;
        }
    }
    edges.resize(beliefs.len(), Vec::new());
    let mut value: Vec<f64> = beliefs
        .iter()
        .map(|b| if m.is_terminal(b) { m.terminal_cost(b) } else { 0.0 })
        .collect();
    for _ in 0..1_000_000 {
        let mut change = 0.0f64;
        for i in 0..beliefs.len() {
            if m.is_terminal(&beliefs[i]) {
                continue;
            }
            let v = edges[i]
                .iter()
                .map(|e| e.iter().map(|(p, c, j)| p * (c + value[*j])).sum::<f64>())
                .fold(DEAD_END, f64::min);
            change = change.max((v - value[i]).abs());
            value[i] = v;
        }
        if change < 1e-12 {
            break;
        }
    }
    Some(Exact { beliefs, index, value })
}

/// Expected cost of closed-loop execution over the model's own outcome
/// distribution, replanning whenever the policy has no entry or a belief
/// repeats along the path.
fn executed_cost<M: BeliefModel + Heuristic<M::Belief>>(
    m: &M,
    session: &mut PlannerSession<M>,
    policy: &mut PartialPolicy,
    b: &M::Belief,
    path: &mut Vec<BeliefKey>,
) -> f64 {
    if m.is_terminal(b) {
        return m.terminal_cost(b);
    }
    if path.len() > 60 {
        return f64::INFINITY;
    }
    let key = m.key(b);
    if policy.get(&key).is_none() || path.contains(&key) {
        *policy = session.plan(b).0;
    }
    let Some(a) = policy.get(&key) else { return f64::INFINITY };
    let outcomes = m.outcomes(b, a).unwrap();
    path.push(key);
    let mut total = 0.0;
    for o in outcomes {
        total += o.probability * (o.traveled as f64 + executed_cost(m, session, policy, &o.successor, path));
    }
    path.pop();
    total
}

struct TinyResult {
    optimum: f64,
    executed: f64,
    beliefs: usize,
    /// Largest excess of a backed-up admissible value or heuristic over the optimum.
    ad_excess: f64,
}

fn check_tiny<M: BeliefModel + Heuristic<M::Belief>>(m: &M, b0: &M::Belief) -> Option<TinyResult> {
    let exact = solve_exact(m, b0, 500)?;
    let optimum = exact.value[0];
    // Skip instances where some outcome strands the probe.
    if optimum >= 1e3 || m.is_terminal(b0) {
        return None;
    }
    let mut ad_excess = f64::NEG_INFINITY;
    for (b, v) in exact.beliefs.iter().zip(&exact.value) {
        ad_excess = ad_excess.max(m.admissible(b) - v);
    }
    let cfg = PlannerConfig {
        budget: Budget::Backups(20_000),
        horizon: 60,
        convergence_tol: None,
        ..PlannerConfig::default()
    };
    let mut session = PlannerSession::new(m, cfg).unwrap();
    let mut policy = PartialPolicy::default();
    let executed = executed_cost(m, &mut session, &mut policy, b0, &mut Vec::new());
    for key in session.table().keys() {
        if let (Some(v), Some(&i)) = (session.table().get(ValueType::Admissible, key), exact.index.get(key)) {
            ad_excess = ad_excess.max(v - exact.value[i]);
        }
    }
    Some(TinyResult {
        optimum,
        executed,
        beliefs: exact.beliefs.len(),
        ad_excess,
    })
}

fn tiny_particle(rng: &mut ChaCha8Rng) -> Option<(ParticleModel, ParticleBelief)> {
    let side = rng.gen_range(5..=7);
    let ws = GridWorkspace::new(&[side, side]).unwrap();
    let probe = ProbeShape::single();
    let template = random_template(rng, 2);
    let q = Config::xy(rng.gen_range(0..side as i32), 0);
    let mut hyps = Vec::new();
    for _ in 0..rng.gen_range(2..=4) {
        let h = PoseHypothesis {
            translation: [rng.gen_range(1..side as i32), rng.gen_range(2..side as i32), 0],
            rotation: rng.gen_range(0..template.rotation_count() as u32),
        };
        let cells: Vec<Coord> = h.cells(&template).collect();
        let dock = h.dock(&template);
        if h.fits(&ws, &template) && probe.fits(&ws, dock) && !cells.contains(&dock.0) && !cells.contains(&q.0) {
            hyps.push(h);
        }
    }
    if hyps.len() < 2 {
        return None;
    }
    let w = PlannerConfig::default().particle_weight();
    let m = ParticleModel::new(ws, probe, template, vec![1, 2], w).unwrap();
    Some((m, ParticleBelief::new(q, hyps)))
}

fn tiny_volumetric(rng: &mut ChaCha8Rng) -> Option<(VolumetricModel, touchloc::volumetric::VolumetricBelief)> {
    let (w, h) = (rng.gen_range(3..=5), rng.gen_range(3..=4));
    let ws = GridWorkspace::new(&[w, h]).unwrap();
    let x0 = rng.gen_range(0..w as i32 - 1);
    let volume = ws.box_set([x0, h as i32 - 2, 0], [x0 + 1, h as i32 - 1, 0]);
    let params = VolumetricParams {
        n_object: 1,
        d_max: rng.gen_range(1.0..2.5),
        eps_hist: 0.1,
        delta: rng.gen_range(1..=2),
    };
    let weight = PlannerConfig::default().weight;
    let m = VolumetricModel::new(ws, ProbeShape::single(), params, vec![1, 2], weight).ok()?;
    let b = m.initial_belief(Config::xy(rng.gen_range(0..w as i32), 0), &volume);
    Some((m, b))
}

fn criterion4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut results = Vec::new();
    for _ in 0..3000 {
        if results.len() == 10 {
            break;
        }
        results.extend(tiny_volumetric(&mut rng).and_then(|(m, b)| check_tiny(&m, &b)));
    }
    let volumetric = results.len();
    while results.len() < 20 {
        results.extend(tiny_particle(&mut rng).and_then(|(m, b)| check_tiny(&m, &b)));
    }
    let particle = results.len() - volumetric;
    let worst_ratio = results.iter().map(|r| r.executed / r.optimum).fold(0.0, f64::max);
    let worst_excess = results.iter().map(|r| r.ad_excess).fold(f64::NEG_INFINITY, f64::max);
    let largest = results.iter().map(|r| r.beliefs).max().unwrap_or(0);
    (
        results.len() == 20 && worst_ratio <= 1.05 && worst_excess <= 1e-9,
        format!(
            "{} instances ({particle} particle, {volumetric} volumetric, up to {largest} beliefs), \
             worst executed/optimal {worst_ratio:.4} (<= 1.05), max v_ad - v* {worst_excess:.2e} (<= 1e-9)",
            results.len()
        ),
    )
}

fn criterion5(runs: &mut Runs) -> Verdict {
    let s = preset("shelf");
    let cost = |r: &RunRecord| r.cost as f64;
    let base = runs.mean(&s, PlannerKind::Proposed, 30, cost);
    let tbl = runs.mean(&s, PlannerKind::Tbl, 30, cost) / base;
    let frontier = runs.mean(&s, PlannerKind::Frontier, 30, cost) / base;
    (
        tbl >= 1.3 && frontier >= 1.3,
        format!("shelf, 30 seeds, proposed mean cost {base:.1}: TBL {tbl:.2}, Frontier {frontier:.2} (>= 1.3)"),
    )
}

fn criterion6(runs: &mut Runs) -> Verdict {
    let shelf = preset("shelf");
    let particle = preset("particle_only");
    let p1 = |r: &RunRecord| r.phase1_cost as f64;
    let p2 = |r: &RunRecord| (r.phase2_cost + r.dock_cost) as f64;
    let ratios = |runs: &mut Runs, s: &Scenario, f: &dyn Fn(&RunRecord) -> f64| {
        let base = runs.mean(s, PlannerKind::Proposed, 30, f);
        [PlannerKind::Tbl, PlannerKind::Frontier].map(|k| runs.mean(s, k, 30, f) / base)
    };
    let [v_tbl, v_frontier] = ratios(runs, &shelf, &p1);
    let [p_tbl, p_frontier] = ratios(runs, &particle, &p2);
    (
        [v_tbl, v_frontier, p_tbl, p_frontier].iter().all(|&r| r >= 1.3),
        format!(
            "volumetric phase (shelf): TBL {v_tbl:.2}, Frontier {v_frontier:.2}; \
             particle phase (particle_only): TBL {p_tbl:.2}, Frontier {p_frontier:.2} (each >= 1.3, 30 seeds)"
        ),
    )
}

fn criterion7(runs: &mut Runs) -> Verdict {
    let ablation = |runs: &mut Runs, name: &str| {
        let s = preset(name);
        let cost = runs.mean(&s, PlannerKind::InadmissibleOnly, 30, |r| r.cost as f64)
            / runs.mean(&s, PlannerKind::Proposed, 30, |r| r.cost as f64);
        let per_it = runs.mean(&s, PlannerKind::InadmissibleOnly, 30, |r| r.effort_per_iteration)
            / runs.mean(&s, PlannerKind::Proposed, 30, |r| r.effort_per_iteration);
        (cost, per_it)
    };
    let (cost, per_it) = ablation(runs, "mobile");
    let (shelf_cost, shelf_per_it) = ablation(runs, "shelf");
    (
        cost >= 1.1 && per_it < 1.0,
        format!(
            "mobile, 30 seeds: inadmissible-only cost {cost:.2} (>= 1.1), effort/iteration {per_it:.2} (< 1); \
             shelf for reference: cost {shelf_cost:.2}, effort/iteration {shelf_per_it:.2}"
        ),
    )
}

fn csv_bytes(r: &RunRecord) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(r).unwrap();
    w.into_inner().unwrap()
}

fn criterion8(runs: &mut Runs) -> Verdict {
    let mut compared = 0;
    let mut differing = 0;
    for name in SCENARIOS {
        let s = preset(name);
        for kind in PlannerKind::ALL {
            for seed in [0, 7] {
                let first = csv_bytes(runs.get(&s, kind, seed));
                let second = csv_bytes(&run_episode(&s, kind, seed));
                compared += 1;
                differing += usize::from(first != second);
            }
        }
    }

    let shelf = preset("shelf");
    let vm = model_volumetric(&shelf);
    let pm = model_particle(&shelf);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut late = 0;
    let mut worst = (f64::NEG_INFINITY, 0);
    for trial in 0..100 {
        let ms = rng.gen_range(5..=40);
        let cfg = PlannerConfig {
            budget: Budget::WallClockMs(ms),
            convergence_tol: None,
            ..shelf.planner
        };
        let (elapsed, stats) = if trial % 2 == 0 {
            let b = vm.initial_belief(shelf.start, &shelf.volume);
            let mut session = PlannerSession::new(&vm, cfg).unwrap();
            let t = Instant::now();
            let (_, stats) = session.plan(&b);
            (t.elapsed(), stats)
        } else {
            let hyps = generate_hypotheses(&shelf.ws, &shelf.probe, &shelf.template, &shelf.volume, &[]).unwrap();
            let b = ParticleBelief::new(shelf.start, hyps);
            let mut session = PlannerSession::new(&pm, cfg).unwrap();
            let t = Instant::now();
            let (_, stats) = session.plan(&b);
            (t.elapsed(), stats)
        };
        let allowed = ms as f64 * 1e3 + stats.slowest_backup_us as f64;
        let taken = elapsed.as_micros() as f64;
        let over = taken - ms as f64 * 1e3;
        if over > worst.0 {
            worst = (over, stats.slowest_backup_us);
        }
        late += usize::from(taken > allowed);
    }
    (
        differing == 0 && late == 0,
        format!(
            "{compared} repeated episodes, {differing} differ; wall-clock budgets met {}/100 \
             (largest overshoot {:.0} us, slowest backup in that run {} us)",
            100 - late,
            worst.0,
            worst.1
        ),
    )
}

fn criterion9(runs: &mut Runs) -> Verdict {
    let mut parts = Vec::new();
    let mut all = true;
    for name in SCENARIOS {
        let s = preset(name);
        let ok = (0..50).filter(|&seed| runs.get(&s, PlannerKind::Proposed, seed).success).count();
        all &= ok == 50;
        parts.push(format!("{name} {ok}/50"));
    }
    (all, parts.join(", "))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| a.parse::<u32>().is_err() && !"acceptance".contains(a.as_str())) {
        // A name filter meant for other test targets.
        return ExitCode::SUCCESS;
    }
    let selected: HashSet<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);

    let mut runs = Runs::default();
    let mut failed = Vec::new();
    let criteria: [(u32, &str, &dyn Fn(&mut Runs) -> Verdict); 9] = [
        (1, "normalization", &|_| criterion1()),
        (2, "soundness", &|_| criterion2()),
        (3, "oracle equivalence", &|_| criterion3()),
        (4, "tiny-scale optimality", &|_| criterion4()),
        (5, "baseline cost ratios", &criterion5),
        (6, "phase ablation", &criterion6),
        (7, "heuristic ablation", &criterion7),
        (8, "determinism and budget", &criterion8),
        (9, "desk-scale success", &criterion9),
    ];
    for (n, title, check) in criteria {
        if !wanted(n) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = check(&mut runs);
        println!(
            "criterion {n} {title}: {} ({:.1}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
