//! Quenched RWDE and annealed ERRW simulators on Galton-Watson trees,
//! fresh and regeneration epochs, and empirical speed estimators.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::branching::{OffspringDistribution, Tree, DEFAULT_VERTEX_CAP, STAR};
use crate::dirichlet::{EnvTree, TreeDirichlet};
use crate::error::{Error, Result};
use crate::rng::{chunk, run_workers, stream};
use crate::Params;

/// Behaviour at the artificial parent of the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMode {
    /// The single edge back to the root is taken with probability one.
    Reflecting,
    /// The walk stops on hitting it.
    Absorbing,
}

/// Offspring law and weights used to grow the tree when the walk reaches a
/// vertex whose children have not been drawn.
#[derive(Debug, Clone)]
pub struct Growth {
    pub dist: OffspringDistribution,
    pub params: Params,
}

#[derive(Debug, Clone)]
pub struct WalkOptions {
    pub root: RootMode,
    /// `None` stops the walk at the truncation boundary.
    pub growth: Option<Growth>,
}

impl Default for WalkOptions {
    fn default() -> Self {
        Self { root: RootMode::Reflecting, growth: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// X_0, ..., X_n; `STAR` stands for the root's parent.
    pub vertices: Vec<u32>,
    /// |X_k|, with -1 for the root's parent.
    pub depths: Vec<i32>,
    pub hit_boundary: bool,
    pub absorbed: bool,
}

impl Trajectory {
    fn start(v: u32, tree: &Tree) -> Self {
        let mut t = Self::default();
        t.push(v, tree);
        t
    }

    fn push(&mut self, v: u32, tree: &Tree) {
        self.vertices.push(v);
        self.depths.push(if v == STAR { -1 } else { tree.depth(v) as i32 });
    }

    /// Number of steps taken.
    pub fn steps(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    /// One depth per line.
    pub fn write_depths<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in &self.depths {
            writeln!(w, "{d}")?;
        }
        Ok(())
    }
}

/// Every step goes to a neighbour of the previous vertex.
pub fn is_nearest_neighbour(traj: &Trajectory, tree: &Tree) -> bool {
    traj.vertices.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        match (a == STAR, b == STAR) {
            (true, true) => false,
            (true, false) => b == 0,
            (false, true) => a == 0,
            (false, false) => tree.parent(b) == a || tree.parent(a) == b,
        }
    })
}

/// Quenched walk in the environment carried by `env`.
pub fn simulate_rwde<R: Rng + ?Sized>(
    env: &mut EnvTree,
    start: u32,
    n_steps: usize,
    opts: &WalkOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    let grower = match &opts.growth {
        Some(g) => Some((&g.dist, TreeDirichlet::new(&g.params)?)),
        None => None,
    };
    let mut buf = Vec::new();
    let mut traj = Trajectory::start(start, &env.tree);
    traj.vertices.reserve(n_steps);
    traj.depths.reserve(n_steps);
    let mut v = start;
    for _ in 0..n_steps {
        if v == STAR {
            if opts.root == RootMode::Absorbing {
                traj.absorbed = true;
                break;
            }
            v = 0;
        } else {
            if env.tree.is_boundary(v) {
                match &grower {
                    Some((dist, sampler)) => env.ensure(v, dist, sampler, &mut buf, rng)?,
                    None => {
                        traj.hit_boundary = true;
                        break;
                    }
                }
            } else if env.eta_up(v).is_nan() {
                // offspring drawn directly on the tree, e.g. by a survival check
                let (dist, sampler) = grower.as_ref().ok_or_else(|| {
                    Error::Domain(format!("vertex {v} is expanded but carries no environment"))
                })?;
                env.ensure(v, dist, sampler, &mut buf, rng)?;
            }
            let mut u: f64 = rng.random();
            let up = env.eta_up(v);
            let kids = env.tree.children(v);
            let mut next = env.tree.parent(v);
            if u >= up && !kids.is_empty() {
                u -= up;
                next = kids.end - 1;
                for c in kids {
                    let e = env.eta_down(c);
                    if u < e {
                        next = c;
                        break;
                    }
                    u -= e;
                }
            }
            v = next;
        }
        traj.push(v, &env.tree);
    }
    Ok(traj)
}

/// Edge-reinforced walk: each step picks an edge out of the current vertex
/// with probability proportional to its weight plus its traversal count.
pub fn simulate_errw<R: Rng + ?Sized>(
    tree: &mut Tree,
    p: &Params,
    start: u32,
    n_steps: usize,
    opts: &WalkOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    // Local times live in arrays aligned with the vertex order; the tree
    // only grows along the visited region so this stays O(visited * nu).
    let mut up = vec![0u32; tree.len()];
    let mut down = vec![0u32; tree.len()];
    let mut out = vec![0u32; tree.len()];
    let mut traj = Trajectory::start(start, tree);
    traj.vertices.reserve(n_steps);
    traj.depths.reserve(n_steps);
    let mut v = start;
    for _ in 0..n_steps {
        if v == STAR {
            if opts.root == RootMode::Absorbing {
                traj.absorbed = true;
                break;
            }
            v = 0;
        } else {
            if tree.is_boundary(v) {
                match &opts.growth {
                    Some(g) => {
                        tree.expand(v, &g.dist, rng)?;
                        up.resize(tree.len(), 0);
                        down.resize(tree.len(), 0);
                        out.resize(tree.len(), 0);
                    }
                    None => {
                        traj.hit_boundary = true;
                        break;
                    }
                }
            }
            let vi = v as usize;
            let kids = tree.children(v);
            let total = p.alpha_p + kids.len() as f64 * p.alpha_c + out[vi] as f64;
            let mut u = rng.random::<f64>() * total;
            let w_up = p.alpha_p + up[vi] as f64;
            let mut next = tree.parent(v);
            if u >= w_up && !kids.is_empty() {
                u -= w_up;
                next = kids.end - 1;
                for c in kids {
                    let w = p.alpha_c + down[c as usize] as f64;
                    if u < w {
                        next = c;
                        break;
                    }
                    u -= w;
                }
            }
            if next == tree.parent(v) {
                up[vi] += 1;
            } else {
                down[next as usize] += 1;
            }
            out[vi] += 1;
            v = next;
        }
        traj.push(v, tree);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epochs {
    /// First-visit times, starting with 0.
    pub fresh: Vec<usize>,
    /// Fresh epochs n >= 1 after which the parent of X_n is never visited
    /// again within the trajectory.
    pub regenerations: Vec<usize>,
    /// Regenerations at or before `horizon`; later ones are too close to the
    /// end of the run to be trusted.
    pub confirmed: Vec<usize>,
    pub horizon: usize,
}

/// Fresh and regeneration epochs of a tree walk. Default `tail_margin` is a
/// fifth of the number of steps.
pub fn detect_epochs(traj: &Trajectory, tail_margin: Option<usize>) -> Epochs {
    let n = traj.steps();
    let margin = tail_margin.unwrap_or(n / 5).min(n);
    let horizon = n - margin;
    let slot = |v: u32| if v == STAR { 0 } else { v as usize + 1 };
    let size = traj.vertices.iter().map(|&v| slot(v)).max().unwrap_or(0) + 1;
    let mut first = vec![usize::MAX; size];
    let mut last = vec![0usize; size];
    for (t, &v) in traj.vertices.iter().enumerate() {
        let s = slot(v);
        if first[s] == usize::MAX {
            first[s] = t;
        }
        last[s] = t;
    }
    let mut fresh = Vec::new();
    let mut regenerations = Vec::new();
    for (t, &v) in traj.vertices.iter().enumerate() {
        if first[slot(v)] != t {
            continue;
        }
        fresh.push(t);
        // A first visit to a tree vertex comes from its parent, so the
        // parent of X_t is X_{t-1}.
        if t >= 1 && v != STAR && last[slot(traj.vertices[t - 1])] < t {
            regenerations.push(t);
        }
    }
    let confirmed = regenerations.iter().copied().filter(|&t| t <= horizon).collect();
    Epochs { fresh, regenerations, confirmed, horizon }
}

/// |X_n| / n.
pub fn speed_direct(traj: &Trajectory) -> Result<f64> {
    let n = traj.steps();
    if n == 0 {
        return Err(Error::InsufficientData("trajectory has no steps".into()));
    }
    Ok(*traj.depths.last().expect("non-empty") as f64 / n as f64)
}

/// (|X_{Theta_K}| - |X_{Theta_1}|, Theta_K - Theta_1) over the confirmed
/// regenerations.
pub fn regen_increments(traj: &Trajectory, epochs: &Epochs) -> Result<(i64, u64)> {
    let c = &epochs.confirmed;
    if c.len() < 2 {
        return Err(Error::InsufficientData(format!("{} confirmed regenerations, need 2", c.len())));
    }
    let (a, b) = (c[0], c[c.len() - 1]);
    Ok(((traj.depths[b] - traj.depths[a]) as i64, (b - a) as u64))
}

pub fn speed_regen(traj: &Trajectory, epochs: &Epochs) -> Result<f64> {
    let (dx, dt) = regen_increments(traj, epochs)?;
    Ok(dx as f64 / dt as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Rwde,
    Errw,
}

#[derive(Debug, Clone)]
pub struct ReplicateConfig {
    pub params: Params,
    pub dist: OffspringDistribution,
    pub model: Model,
    pub root: RootMode,
    pub n_steps: usize,
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
    pub tail_margin: Option<usize>,
    /// Trees not reaching this depth count as extinct and are discarded
    /// (only checked when p_0 > 0).
    pub survival_depth: u32,
    pub vertex_cap: usize,
}

impl ReplicateConfig {
    pub fn new(params: Params, dist: OffspringDistribution, n_steps: usize, replicates: usize, seed: u64) -> Self {
        Self {
            params,
            dist,
            model: Model::Rwde,
            root: RootMode::Reflecting,
            n_steps,
            replicates,
            seed,
            workers: 1,
            tail_margin: None,
            survival_depth: 60,
            vertex_cap: DEFAULT_VERTEX_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub discarded: bool,
    pub absorbed: bool,
    pub hit_cap: bool,
    pub steps: usize,
    pub speed_direct: f64,
    pub confirmed_regenerations: usize,
    pub first_regeneration: Option<usize>,
    /// Depth and time increments between the first and last confirmed
    /// regeneration.
    pub regen_increment: Option<(i64, u64)>,
}

/// Replicate index used for the RNG stream of the survival check and walk.
const REPLICATE_STREAM: u64 = 0x5741_4c4b;

fn run_one(cfg: &ReplicateConfig, index: usize) -> Result<ReplicateOutcome> {
    let mut rng = stream(cfg.seed, REPLICATE_STREAM, index as u64);
    let mut tree = Tree::root_only(cfg.vertex_cap);
    let mut outcome = ReplicateOutcome {
        discarded: false,
        absorbed: false,
        hit_cap: false,
        steps: 0,
        speed_direct: f64::NAN,
        confirmed_regenerations: 0,
        first_regeneration: None,
        regen_increment: None,
    };
    if cfg.dist.p(0) > 0.0 {
        match tree.survives_to(0, cfg.survival_depth, &cfg.dist, &mut rng) {
            Ok(true) => {}
            Ok(false) => {
                outcome.discarded = true;
                return Ok(outcome);
            }
            Err(Error::VertexCap(_)) => {
                outcome.hit_cap = true;
                return Ok(outcome);
            }
            Err(e) => return Err(e),
        }
    }
    let opts = WalkOptions {
        root: cfg.root,
        growth: Some(Growth { dist: cfg.dist.clone(), params: cfg.params }),
    };
    let run = match cfg.model {
        Model::Rwde => {
            let sampler = TreeDirichlet::new(&cfg.params)?;
            let mut env = EnvTree::from_tree(tree, &sampler, &mut rng);
            simulate_rwde(&mut env, 0, cfg.n_steps, &opts, &mut rng)
        }
        Model::Errw => simulate_errw(&mut tree, &cfg.params, 0, cfg.n_steps, &opts, &mut rng),
    };
    let traj = match run {
        Ok(t) => t,
        Err(Error::VertexCap(_)) => {
            outcome.hit_cap = true;
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    let epochs = detect_epochs(&traj, cfg.tail_margin);
    outcome.absorbed = traj.absorbed;
    outcome.steps = traj.steps();
    outcome.speed_direct = speed_direct(&traj).unwrap_or(0.0);
    outcome.confirmed_regenerations = epochs.confirmed.len();
    outcome.first_regeneration = epochs.confirmed.first().copied();
    outcome.regen_increment = regen_increments(&traj, &epochs).ok();
    Ok(outcome)
}

/// Independent replicates; replicate `i` always uses the same RNG stream so
/// the outcomes do not depend on how they are split across workers.
pub fn run_replicates(cfg: &ReplicateConfig) -> Result<Vec<ReplicateOutcome>> {
    let workers = cfg.workers.max(1);
    let parts = run_workers(workers, |w| {
        chunk(cfg.replicates, workers, w).map(|i| run_one(cfg, i)).collect::<Result<Vec<_>>>()
    });
    let mut all = Vec::with_capacity(cfg.replicates);
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSummary {
    pub replicates: usize,
    pub discarded: usize,
    pub discard_rate: f64,
    pub vertex_cap_hits: usize,
    pub absorbed: usize,
    pub speed_direct: f64,
    pub speed_direct_se: f64,
    /// Pooled ratio sum(depth increments) / sum(time increments).
    pub speed_regen: Option<f64>,
    pub speed_regen_se: Option<f64>,
    pub runs_with_regen_pair: usize,
    pub insufficient_regen: usize,
    pub mean_confirmed_regenerations: f64,
}

pub fn summarize(outcomes: &[ReplicateOutcome]) -> SpeedSummary {
    let used: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| !o.discarded && !o.hit_cap).collect();
    let n = used.len() as f64;
    let (mean, se) = mean_se(used.iter().map(|o| o.speed_direct));
    let pairs: Vec<(f64, f64)> =
        used.iter().filter_map(|o| o.regen_increment).map(|(dx, dt)| (dx as f64, dt as f64)).collect();
    let (speed_regen, speed_regen_se) = ratio_of_sums(&pairs);
    let discarded = outcomes.iter().filter(|o| o.discarded).count();
    SpeedSummary {
        replicates: outcomes.len(),
        discarded,
        discard_rate: if outcomes.is_empty() { 0.0 } else { discarded as f64 / outcomes.len() as f64 },
        vertex_cap_hits: outcomes.iter().filter(|o| o.hit_cap).count(),
        absorbed: used.iter().filter(|o| o.absorbed).count(),
        speed_direct: mean,
        speed_direct_se: se,
        speed_regen,
        speed_regen_se,
        runs_with_regen_pair: pairs.len(),
        insufficient_regen: used.len() - pairs.len(),
        mean_confirmed_regenerations: if n > 0.0 {
            used.iter().map(|o| o.confirmed_regenerations as f64).sum::<f64>() / n
        } else {
            0.0
        },
    }
}

pub(crate) fn mean_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0.0;
    let mut s = 0.0;
    let mut s2 = 0.0;
    for x in xs {
        n += 1.0;
        s += x;
        s2 += x * x;
    }
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let m = s / n;
    if n < 2.0 {
        return (m, f64::NAN);
    }
    let var = ((s2 - n * m * m) / (n - 1.0)).max(0.0);
    (m, (var / n).sqrt())
}

/// sum x / sum y with its delta-method standard error.
pub(crate) fn ratio_of_sums(pairs: &[(f64, f64)]) -> (Option<f64>, Option<f64>) {
    let n = pairs.len() as f64;
    if pairs.is_empty() {
        return (None, None);
    }
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    if sy == 0.0 {
        return (None, None);
    }
    let r = sx / sy;
    if pairs.len() < 2 {
        return (Some(r), None);
    }
    let my = sy / n;
    let var = pairs.iter().map(|&(x, y)| (x - r * y).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(r), Some((var / n).sqrt() / my))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::sample_tree;

    fn ray_env(len: usize, forward: f64) -> EnvTree {
        let mut t = Tree::root_only(len + 1);
        for v in 0..len as u32 {
            t.attach(v, 1).unwrap();
        }
        let n = t.len();
        let mut up = vec![1.0 - forward; n];
        up[n - 1] = f64::NAN;
        let mut down = vec![forward; n];
        down[0] = f64::NAN;
        EnvTree::from_parts(t, up, down).unwrap()
    }

    #[test]
    fn deterministic_descent() {
        let mut env = ray_env(50, 1.0 - 1e-300);
        let mut rng = stream(1, 0, 0);
        let traj = simulate_rwde(&mut env, 0, 40, &WalkOptions::default(), &mut rng).unwrap();
        assert_eq!(traj.depths, (0..=40).collect::<Vec<i32>>());
        assert!(is_nearest_neighbour(&traj, &env.tree));
        let ep = detect_epochs(&traj, None);
        assert_eq!(ep.fresh, (0..=40).collect::<Vec<_>>());
        assert_eq!(ep.confirmed, (1..=32).collect::<Vec<_>>());
        assert_eq!(speed_direct(&traj).unwrap(), 1.0);
        assert_eq!(speed_regen(&traj, &ep).unwrap(), 1.0);
    }

    #[test]
    fn boundary_stops_the_walk() {
        let mut env = ray_env(5, 1.0 - 1e-300);
        let mut rng = stream(1, 0, 0);
        let traj = simulate_rwde(&mut env, 0, 40, &WalkOptions::default(), &mut rng).unwrap();
        assert!(traj.hit_boundary);
        assert_eq!(traj.steps(), 5);
    }

    #[test]
    fn ray_drift() {
        let p = 0.7;
        let mut env = ray_env(400, p);
        let mut rng = stream(2, 0, 0);
        let n = 100;
        let xs: Vec<f64> = (0..10_000)
            .map(|_| {
                let t = simulate_rwde(&mut env, 200, n, &WalkOptions::default(), &mut rng).unwrap();
                assert!(!t.hit_boundary);
                (t.depths[n] - t.depths[0]) as f64 / n as f64
            })
            .collect();
        let (m, se) = mean_se(xs.into_iter());
        assert!((m - (2.0 * p - 1.0)).abs() < 4.0 * se, "{m}");
    }

    #[test]
    fn epochs_by_hand() {
        let t = Trajectory { vertices: vec![0, 1, 0, 1], depths: vec![0, 1, 0, 1], ..Default::default() };
        let ep = detect_epochs(&t, Some(0));
        assert_eq!(ep.fresh, vec![0, 1]);
        assert!(ep.regenerations.is_empty());
        let t = Trajectory { vertices: vec![0, 1, 0, 2, 3], depths: vec![0, 1, 0, 1, 2], ..Default::default() };
        let ep = detect_epochs(&t, Some(1));
        assert_eq!(ep.fresh, vec![0, 1, 3, 4]);
        assert_eq!(ep.regenerations, vec![3, 4]);
        assert_eq!(ep.confirmed, vec![3]);
        assert!(speed_regen(&t, &ep).is_err());
    }

    #[test]
    fn errw_first_step() {
        let p = Params::new(1.5, 0.5).unwrap();
        let d = OffspringDistribution::deterministic(2);
        let mut rng = stream(3, 0, 0);
        let mut counts = [0usize; 3];
        let n = 200_000;
        for _ in 0..n {
            let mut tree = sample_tree(&d, 2, 100, &mut rng).unwrap();
            let t = simulate_errw(&mut tree, &p, 0, 1, &WalkOptions::default(), &mut rng).unwrap();
            match t.vertices[1] {
                1 => counts[0] += 1,
                2 => counts[1] += 1,
                STAR => counts[2] += 1,
                _ => unreachable!(),
            }
        }
        let total = 2.0 * 0.5 + 1.5;
        for (i, w) in [0.5, 0.5, 1.5].iter().enumerate() {
            let q = w / total;
            let se = (q * (1.0 - q) / n as f64).sqrt();
            assert!((counts[i] as f64 / n as f64 - q).abs() < 4.0 * se);
        }
    }

    #[test]
    fn absorbing_root() {
        let p = Params::new(1.0, 1.0).unwrap();
        let mut rng = stream(4, 0, 0);
        let mut tree = sample_tree(&OffspringDistribution::deterministic(1), 5, 100, &mut rng).unwrap();
        let opts = WalkOptions { root: RootMode::Absorbing, growth: None };
        let mut hits = 0;
        for _ in 0..1000 {
            let t = simulate_errw(&mut tree, &p, 0, 1000, &opts, &mut rng).unwrap();
            assert!(t.absorbed || t.hit_boundary || t.steps() == 1000);
            if t.absorbed {
                hits += 1;
                assert_eq!(*t.vertices.last().unwrap(), STAR);
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn growth_and_determinism() {
        let p = Params::new(1.0, 1.0).unwrap();
        let d = OffspringDistribution::new(vec![0.0, 0.5, 0.5]).unwrap();
        let mut cfg = ReplicateConfig::new(p, d, 2000, 6, 9);
        let a = run_replicates(&cfg).unwrap();
        cfg.workers = 3;
        let b = run_replicates(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.model = Model::Errw;
        let c = run_replicates(&cfg).unwrap();
        assert!(c.iter().all(|o| o.steps == 2000 && !o.discarded));
    }

    #[test]
    fn extinct_trees_are_discarded() {
        let p = Params::new(1.0, 1.0).unwrap();
        let d = OffspringDistribution::new(vec![0.25, 0.25, 0.5]).unwrap();
        let cfg = ReplicateConfig::new(p, d, 100, 400, 5);
        let s = summarize(&run_replicates(&cfg).unwrap());
        // q = 0.5
        let se = (0.25f64 / 400.0).sqrt();
        assert!((s.discard_rate - 0.5).abs() < 4.0 * se, "{}", s.discard_rate);
    }

    #[test]
    fn ratio_of_sums_se() {
        let pairs = [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)];
        let (r, se) = ratio_of_sums(&pairs);
        assert_eq!(r, Some(0.5));
        assert!(se.unwrap().abs() < 1e-15);
        assert_eq!(ratio_of_sums(&[]), (None, None));
    }

    #[test]
    fn depth_dump() {
        let t = Trajectory { vertices: vec![STAR, 0], depths: vec![-1, 0], ..Default::default() };
        let mut buf = Vec::new();
        t.write_depths(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "-1\n0\n");
    }
}
