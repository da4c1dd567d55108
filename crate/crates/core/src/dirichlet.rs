//! Dirichlet environments and the gamma-product path calculus of the
//! annealed walk.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::branching::{OffspringDistribution, Tree};
use crate::error::{Error, Result};
use crate::specfun::ln_gamma_pos;
use crate::Params;

/// Maximum number of vertices in an oracle digraph.
pub const MAX_ORACLE_VERTICES: usize = 64;

const MAX_RESAMPLE: usize = 1000;

fn gamma_dist(shape: f64) -> Result<Gamma<f64>> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::Domain(format!("Dirichlet weight must be positive, got {shape}")));
    }
    Gamma::new(shape, 1.0).map_err(|e| Error::Domain(e.to_string()))
}

/// One Dirichlet draw: independent unit-rate gamma variates, normalized.
pub fn sample_dirichlet<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let dists = weights.iter().map(|&w| gamma_dist(w)).collect::<Result<Vec<_>>>()?;
    for _ in 0..MAX_RESAMPLE {
        let g: Vec<f64> = dists.iter().map(|d| d.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        if g.iter().all(|&x| x > 0.0) && total.is_finite() {
            return Ok(g.into_iter().map(|x| x / total).collect());
        }
    }
    Err(Error::Domain("gamma variates kept underflowing".into()))
}

/// Sampler for the tree law Dirichlet(alpha_p, alpha_c, ..., alpha_c).
#[derive(Debug, Clone)]
pub struct TreeDirichlet {
    parent: Gamma<f64>,
    child: Gamma<f64>,
}

impl TreeDirichlet {
    pub fn new(p: &Params) -> Result<Self> {
        Ok(Self { parent: gamma_dist(p.alpha_p)?, child: gamma_dist(p.alpha_c)? })
    }

    /// Fill `out` with (eta_0, eta_1, ..., eta_nu), eta_0 toward the parent.
    pub fn sample_into<R: Rng + ?Sized>(&self, nu: usize, out: &mut Vec<f64>, rng: &mut R) {
        for _ in 0..MAX_RESAMPLE {
            out.clear();
            out.push(self.parent.sample(rng));
            for _ in 0..nu {
                out.push(self.child.sample(rng));
            }
            let total: f64 = out.iter().sum();
            if out.iter().all(|&x| x > 0.0) && total.is_finite() {
                for x in out.iter_mut() {
                    *x /= total;
                }
                return;
            }
        }
        panic!("gamma variates kept underflowing");
    }
}

/// E[prod D_j^{s_j}] for D ~ Dirichlet(weights).
pub fn dirichlet_moment(weights: &[f64], exponents: &[f64]) -> Result<f64> {
    if weights.len() != exponents.len() {
        return Err(Error::Domain("weights and exponents differ in length".into()));
    }
    let mut sa = 0.0;
    let mut ss = 0.0;
    let mut acc = 0.0;
    for (&a, &s) in weights.iter().zip(exponents) {
        if !(a > 0.0) {
            return Err(Error::Domain(format!("Dirichlet weight must be positive, got {a}")));
        }
        if !(a + s > 0.0) {
            return Err(Error::DivergentMoment(a + s));
        }
        sa += a;
        ss += s;
        acc += ln_gamma_pos(a + s) - ln_gamma_pos(a);
    }
    if !(sa + ss > 0.0) {
        return Err(Error::DivergentMoment(sa + ss));
    }
    Ok((acc + ln_gamma_pos(sa) - ln_gamma_pos(sa + ss)).exp())
}

/// Directed edge weights on a small graph.
#[derive(Debug, Clone)]
pub struct WeightedDigraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    out: Vec<Vec<usize>>,
    lookup: HashMap<(usize, usize), usize>,
}

/// Edge local times keyed by (tail, head).
pub type EdgeCounts = BTreeMap<(usize, usize), u64>;

impl WeightedDigraph {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_ORACLE_VERTICES {
            return Err(Error::Graph(format!("{n} vertices exceed the cap of {MAX_ORACLE_VERTICES}")));
        }
        Ok(Self { n, edges: Vec::new(), weights: Vec::new(), out: vec![Vec::new(); n], lookup: HashMap::new() })
    }

    pub fn add_edge(&mut self, from: usize, to: usize, weight: f64) -> Result<usize> {
        if from >= self.n || to >= self.n {
            return Err(Error::Graph(format!("edge ({from},{to}) outside 0..{}", self.n)));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::Graph(format!("edge ({from},{to}) has non-positive weight {weight}")));
        }
        if self.lookup.contains_key(&(from, to)) {
            return Err(Error::Graph(format!("parallel edge ({from},{to})")));
        }
        let id = self.edges.len();
        self.edges.push((from, to));
        self.weights.push(weight);
        self.out[from].push(id);
        self.lookup.insert((from, to), id);
        Ok(id)
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_id(&self, from: usize, to: usize) -> Option<usize> {
        self.lookup.get(&(from, to)).copied()
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        self.edge_id(from, to).map(|id| self.weights[id])
    }

    /// Heads of the edges leaving `v`.
    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[v].iter().map(move |&id| self.edges[id].1)
    }

    pub fn out_weights(&self, v: usize) -> Vec<f64> {
        self.out[v].iter().map(|&id| self.weights[id]).collect()
    }

    /// Same graph with weights alpha_e + shift_e.
    pub fn shifted(&self, shift: &EdgeCounts) -> Result<Self> {
        let mut g = self.clone();
        for (&(a, b), &n) in shift {
            let id = self.edge_id(a, b).ok_or_else(|| Error::InvalidPath(format!("no edge ({a},{b})")))?;
            g.weights[id] += n as f64;
        }
        Ok(g)
    }

    fn check_path(&self, path: &[usize]) -> Result<()> {
        if let Some(&v) = path.iter().find(|&&v| v >= self.n) {
            return Err(Error::InvalidPath(format!("vertex {v} outside the graph")));
        }
        for w in path.windows(2) {
            if self.edge_id(w[0], w[1]).is_none() {
                return Err(Error::InvalidPath(format!("no edge ({},{})", w[0], w[1])));
            }
        }
        Ok(())
    }
}

/// Counts of each directed edge traversed by `path`.
pub fn edge_local_times(path: &[usize]) -> EdgeCounts {
    let mut m = EdgeCounts::new();
    for w in path.windows(2) {
        *m.entry((w[0], w[1])).or_insert(0) += 1;
    }
    m
}

/// ln of the annealed probability of `path` (its first vertex given):
/// sum over vertices of lnG(A_y) - lnG(A_y + N_y) plus sum over edges of
/// lnG(alpha_e + N_e) - lnG(alpha_e).
pub fn ln_errw_path_probability(g: &WeightedDigraph, path: &[usize]) -> Result<f64> {
    g.check_path(path)?;
    let counts = edge_local_times(path);
    let mut out_n: BTreeMap<usize, u64> = BTreeMap::new();
    let mut acc = 0.0;
    for (&(a, b), &n) in &counts {
        *out_n.entry(a).or_insert(0) += n;
        let w = g.weight(a, b).expect("checked");
        acc += ln_gamma_pos(w + n as f64) - ln_gamma_pos(w);
    }
    for (&y, &n) in &out_n {
        let total: f64 = g.out_weights(y).iter().sum();
        acc += ln_gamma_pos(total) - ln_gamma_pos(total + n as f64);
    }
    Ok(acc)
}

/// Annealed (edge-reinforced) probability of `path`.
pub fn errw_path_probability(g: &WeightedDigraph, path: &[usize]) -> Result<f64> {
    ln_errw_path_probability(g, path).map(f64::exp)
}

/// Step-by-step urn product: at each step the chosen edge has probability
/// (alpha_e + N_e) / sum over edges leaving the current vertex.
pub fn sequential_urn_probability(g: &WeightedDigraph, path: &[usize]) -> Result<f64> {
    g.check_path(path)?;
    let mut counts: HashMap<usize, u64> = HashMap::new();
    let mut prob = 1.0;
    for w in path.windows(2) {
        let (x, y) = (w[0], w[1]);
        let mut total = 0.0;
        for &id in &g.out[x] {
            total += g.weights[id] + counts.get(&id).copied().unwrap_or(0) as f64;
        }
        let id = g.edge_id(x, y).expect("checked");
        prob *= (g.weights[id] + counts.get(&id).copied().unwrap_or(0) as f64) / total;
        *counts.entry(id).or_insert(0) += 1;
    }
    Ok(prob)
}

/// P(g2 | alpha + N(g1)) * P(g1 | alpha).
pub fn two_path_product(g: &WeightedDigraph, g1: &[usize], g2: &[usize]) -> Result<f64> {
    let first = ln_errw_path_probability(g, g1)?;
    let shifted = g.shifted(&edge_local_times(g1))?;
    Ok((first + ln_errw_path_probability(&shifted, g2)?).exp())
}

/// A sampled environment on every vertex of `g`: for each vertex the
/// Dirichlet draw over its outgoing edges, indexed by edge id.
pub fn sample_graph_environment<R: Rng + ?Sized>(g: &WeightedDigraph, rng: &mut R) -> Result<Vec<f64>> {
    let mut eta = vec![0.0; g.edges.len()];
    for v in 0..g.n {
        if g.out[v].is_empty() {
            continue;
        }
        let draw = sample_dirichlet(&g.out_weights(v), rng)?;
        for (&id, p) in g.out[v].iter().zip(draw) {
            eta[id] = p;
        }
    }
    Ok(eta)
}

/// Quenched probability of `path` in the environment `eta` (by edge id).
pub fn quenched_path_probability(g: &WeightedDigraph, eta: &[f64], path: &[usize]) -> Result<f64> {
    g.check_path(path)?;
    Ok(path.windows(2).map(|w| eta[g.edge_id(w[0], w[1]).expect("checked")]).product())
}

/// A Galton-Watson tree carrying a Dirichlet environment on every expanded
/// vertex: `eta_up[v]` = eta(v, v_*), `eta_down[c]` = eta(parent(c), c).
#[derive(Debug, Clone)]
pub struct EnvTree {
    pub tree: Tree,
    eta_up: Vec<f64>,
    eta_down: Vec<f64>,
}

impl EnvTree {
    /// A lone root; offspring and environment are drawn on demand.
    pub fn root_only(cap: usize) -> Self {
        Self { tree: Tree::root_only(cap), eta_up: vec![f64::NAN], eta_down: vec![f64::NAN] }
    }

    /// Wrap a tree and draw the environment on all expanded vertices.
    pub fn from_tree<R: Rng + ?Sized>(tree: Tree, sampler: &TreeDirichlet, rng: &mut R) -> Self {
        let n = tree.len();
        let mut env = Self { tree, eta_up: vec![f64::NAN; n], eta_down: vec![f64::NAN; n] };
        let mut buf = Vec::new();
        for v in 0..n as u32 {
            if env.tree.is_expanded(v) {
                env.draw(v, sampler, &mut buf, rng);
            }
        }
        env
    }

    /// Explicit environment, for hand-built test cases. `eta_down[0]` is
    /// ignored.
    pub fn from_parts(tree: Tree, eta_up: Vec<f64>, eta_down: Vec<f64>) -> Result<Self> {
        if eta_up.len() != tree.len() || eta_down.len() != tree.len() {
            return Err(Error::Domain("environment length differs from tree size".into()));
        }
        let env = Self { tree, eta_up, eta_down };
        for v in 0..env.tree.len() as u32 {
            if env.tree.is_expanded(v) {
                let s: f64 = env.eta_up(v) + env.tree.children(v).map(|c| env.eta_down(c)).sum::<f64>();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Domain(format!("exit probabilities at {v} sum to {s}")));
                }
            }
        }
        Ok(env)
    }

    fn draw<R: Rng + ?Sized>(&mut self, v: u32, sampler: &TreeDirichlet, buf: &mut Vec<f64>, rng: &mut R) {
        let kids = self.tree.children(v);
        sampler.sample_into(kids.len(), buf, rng);
        self.eta_up[v as usize] = buf[0];
        for (i, c) in kids.enumerate() {
            self.eta_down[c as usize] = buf[i + 1];
        }
    }

    /// Draw offspring and environment at `v` if missing. Offspring drawn
    /// directly on `tree` get their environment here too.
    pub fn ensure<R: Rng + ?Sized>(
        &mut self,
        v: u32,
        dist: &OffspringDistribution,
        sampler: &TreeDirichlet,
        buf: &mut Vec<f64>,
        rng: &mut R,
    ) -> Result<()> {
        if !self.tree.is_expanded(v) {
            self.tree.expand(v, dist, rng)?;
        }
        self.eta_up.resize(self.tree.len(), f64::NAN);
        self.eta_down.resize(self.tree.len(), f64::NAN);
        if self.eta_up[v as usize].is_nan() {
            self.draw(v, sampler, buf, rng);
        }
        Ok(())
    }

    pub fn eta_up(&self, v: u32) -> f64 {
        self.eta_up[v as usize]
    }

    pub fn eta_down(&self, c: u32) -> f64 {
        self.eta_down[c as usize]
    }

    /// Ratios A_i = eta(v, vi) / eta(v, v_*).
    pub fn ratios(&self, v: u32) -> Vec<f64> {
        let e0 = self.eta_up(v);
        self.tree.children(v).map(|c| self.eta_down(c) / e0).collect()
    }
}

/// Environment on a breadth-first tree truncated at `depth`.
pub fn sample_env_tree<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    p: &Params,
    depth: u32,
    cap: usize,
    rng: &mut R,
) -> Result<EnvTree> {
    let tree = crate::branching::sample_tree(dist, depth, cap, rng)?;
    let sampler = TreeDirichlet::new(p)?;
    Ok(EnvTree::from_tree(tree, &sampler, rng))
}
