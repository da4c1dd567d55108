//! Offspring distributions and Galton-Watson trees.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the probability sum accepted from user input.
pub const SUM_TOL: f64 = 1e-9;

/// Finite-support offspring law (p_0, ..., p_N) with cached derived values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<usize, f64>", into = "BTreeMap<usize, f64>")]
pub struct OffspringDistribution {
    probs: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
    d: Option<usize>,
    q: Option<f64>,
}

impl PartialEq for OffspringDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

impl TryFrom<BTreeMap<usize, f64>> for OffspringDistribution {
    type Error = Error;
    fn try_from(map: BTreeMap<usize, f64>) -> Result<Self> {
        Self::from_map(&map)
    }
}

impl From<OffspringDistribution> for BTreeMap<usize, f64> {
    fn from(d: OffspringDistribution) -> Self {
        d.to_map()
    }
}

impl OffspringDistribution {
    /// Build from (p_0, ..., p_N). Entries must be nonnegative and sum to 1
    /// within [`SUM_TOL`]; the vector is renormalized exactly.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if let Some((n, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("p_{n} = {p} is not a nonnegative number")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}, not 1")));
        }
        let mut probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let mean = probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let d = probs.iter().enumerate().skip(1).find(|(_, p)| **p > 0.0).map(|(n, _)| n);
        let mut dist = Self { probs, cdf, mean, d, q: None };
        dist.q = dist.solve_extinction().ok();
        Ok(dist)
    }

    pub fn from_map(map: &BTreeMap<usize, f64>) -> Result<Self> {
        let len = map.keys().next_back().map_or(0, |n| n + 1);
        let mut probs = vec![0.0; len];
        for (&n, &p) in map {
            probs[n] = p;
        }
        Self::new(probs)
    }

    pub fn to_map(&self) -> BTreeMap<usize, f64> {
        self.probs.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(n, p)| (n, *p)).collect()
    }

    /// Point mass at `n` children.
    pub fn deterministic(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Self::new(probs).expect("point mass is valid")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn max_offspring(&self) -> usize {
        self.probs.len() - 1
    }

    /// d = min{n >= 1 : p_n > 0}.
    pub fn min_support(&self) -> Option<usize> {
        self.d
    }

    /// The deterministic ray p_1 = 1: critical, yet never extinct.
    pub fn is_ray(&self) -> bool {
        self.probs.len() == 2 && self.probs[1] == 1.0
    }

    /// Supercritical, or the ray.
    pub fn is_supported(&self) -> bool {
        self.q.is_some()
    }

    pub fn require_supported(&self) -> Result<()> {
        self.solve_extinction().map(|_| ())
    }

    /// Extinction probability q, the smallest fixed point of f in [0, 1].
    pub fn extinction_prob(&self) -> Result<f64> {
        match self.q {
            Some(q) => Ok(q),
            None => self.solve_extinction(),
        }
    }

    /// f'(q).
    pub fn fprime_at_q(&self) -> Result<f64> {
        Ok(self.gen_fn_deriv(self.extinction_prob()?))
    }

    /// f(s) by Horner's rule.
    pub fn gen_fn(&self, s: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    /// f'(s) by Horner's rule.
    pub fn gen_fn_deriv(&self, s: f64) -> f64 {
        self.probs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (n, p)| acc * s + n as f64 * p)
    }

    fn solve_extinction(&self) -> Result<f64> {
        if self.is_ray() {
            return Ok(0.0);
        }
        if self.mean <= 1.0 {
            return Err(Error::Unsupported(format!(
                "offspring mean {} is not supercritical",
                self.mean
            )));
        }
        if self.probs[0] == 0.0 {
            return Ok(0.0);
        }
        let g = |s: f64| self.gen_fn(s) - s;
        // g(0) = p_0 > 0 and g < 0 just below 1 because f'(1) = m > 1.
        let mut hi = 0.5;
        let mut eps = 0.5;
        while g(hi) >= 0.0 {
            eps *= 0.5;
            hi = 1.0 - eps;
            if eps < 1e-15 {
                return Err(Error::Inconsistent("no sign change of f(s)-s below 1".into()));
            }
        }
        // f(s) - s is convex, so [0, hi] holds exactly one root.
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        let mut q = 0.5 * (lo + hi);
        for _ in 0..5 {
            let d = self.gen_fn_deriv(q) - 1.0;
            if d == 0.0 {
                break;
            }
            let next = q - g(q) / d;
            if !(next >= lo - 1e-12 && next <= hi + 1e-12) {
                break;
            }
            q = next;
        }
        if g(q).abs() > 1e-12 {
            return Err(Error::Inconsistent(format!("extinction root residual {}", g(q))));
        }
        Ok(q.max(0.0))
    }

    /// Draw an offspring count.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.probs.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.probs.len() - 1)
    }
}

/// Parent sentinel for the root: its artificial parent.
pub const STAR: u32 = u32::MAX;

/// Default vertex cap for sampled trees.
pub const DEFAULT_VERTEX_CAP: usize = 10_000_000;

/// Flat Galton-Watson tree. Vertex 0 is the root; children of a vertex are
/// contiguous and always have larger indices than their parent. Vertices
/// whose offspring has not been drawn yet form the truncation boundary.
#[derive(Debug, Clone, Default)]
pub struct Tree {
    parent: Vec<u32>,
    depth: Vec<u32>,
    first_child: Vec<u32>,
    n_children: Vec<u32>,
    expanded: Vec<bool>,
    cap: usize,
}

impl Tree {
    /// A lone root with no offspring drawn.
    pub fn root_only(cap: usize) -> Self {
        Self {
            parent: vec![STAR],
            depth: vec![0],
            first_child: vec![0],
            n_children: vec![0],
            expanded: vec![false],
            cap,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, v: u32) -> u32 {
        self.parent[v as usize]
    }

    pub fn depth(&self, v: u32) -> u32 {
        self.depth[v as usize]
    }

    pub fn n_children(&self, v: u32) -> u32 {
        self.n_children[v as usize]
    }

    pub fn children(&self, v: u32) -> std::ops::Range<u32> {
        let f = self.first_child[v as usize];
        f..f + self.n_children[v as usize]
    }

    pub fn is_expanded(&self, v: u32) -> bool {
        self.expanded[v as usize]
    }

    /// True for vertices on the truncation boundary.
    pub fn is_boundary(&self, v: u32) -> bool {
        !self.expanded[v as usize]
    }

    /// Attach `n` children to an unexpanded vertex.
    pub fn attach(&mut self, v: u32, n: usize) -> Result<()> {
        debug_assert!(!self.expanded[v as usize]);
        if self.parent.len() + n > self.cap {
            return Err(Error::VertexCap(self.cap));
        }
        let first = self.parent.len() as u32;
        let d = self.depth[v as usize] + 1;
        for _ in 0..n {
            self.parent.push(v);
            self.depth.push(d);
            self.first_child.push(0);
            self.n_children.push(0);
            self.expanded.push(false);
        }
        let vi = v as usize;
        self.first_child[vi] = first;
        self.n_children[vi] = n as u32;
        self.expanded[vi] = true;
        Ok(())
    }

    /// Draw the offspring of `v` if not yet drawn.
    pub fn expand<R: Rng + ?Sized>(&mut self, v: u32, dist: &OffspringDistribution, rng: &mut R) -> Result<()> {
        if self.expanded[v as usize] {
            return Ok(());
        }
        let n = dist.sample(rng);
        self.attach(v, n)
    }

    /// Number of vertices per generation.
    pub fn generation_sizes(&self) -> Vec<usize> {
        let maxd = self.depth.iter().copied().max().unwrap_or(0) as usize;
        let mut z = vec![0; maxd + 1];
        for &d in &self.depth {
            z[d as usize] += 1;
        }
        z
    }

    /// Whether some vertex at depth `depth` below `v` exists, drawing
    /// offspring on demand (depth-first).
    pub fn survives_to<R: Rng + ?Sized>(
        &mut self,
        v: u32,
        depth: u32,
        dist: &OffspringDistribution,
        rng: &mut R,
    ) -> Result<bool> {
        let target = self.depth(v) + depth;
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if self.depth(u) >= target {
                return Ok(true);
            }
            self.expand(u, dist, rng)?;
            stack.extend(self.children(u).rev());
        }
        Ok(false)
    }
}

/// Breadth-first sample of a tree truncated at `max_depth`: vertices at that
/// depth are boundary leaves.
pub fn sample_tree<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    max_depth: u32,
    cap: usize,
    rng: &mut R,
) -> Result<Tree> {
    if max_depth < 1 {
        return Err(Error::Domain("max_depth must be at least 1".into()));
    }
    let mut t = Tree::root_only(cap);
    let mut v = 0u32;
    while (v as usize) < t.len() {
        if t.depth(v) < max_depth {
            t.expand(v, dist, rng)?;
        }
        v += 1;
    }
    Ok(t)
}
