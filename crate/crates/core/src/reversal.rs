//! Exact checks of the path-reversal machinery on small trees: the map
//! Psi_x that re-hangs a tree at x, the fresh-point and two-walk reversal
//! identities, and the quenched bias identity on a truncated double tree.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::branching::OffspringDistribution;
use crate::conductance::beta_truncated;
use crate::dirichlet::{errw_path_probability, edge_local_times, sample_env_tree, EdgeCounts, EnvTree, WeightedDigraph};
use crate::error::{Error, Result};
use crate::specfun::{hyper_f, phi};
use crate::Params;

/// Relative tolerance of the path identities.
pub const PATH_TOL: f64 = 1e-10;
/// Relative tolerance of the quenched bias identity.
pub const BIAS_TOL: f64 = 1e-8;

const NONE: usize = usize::MAX;

/// Finite tree with an artificial parent of the root and a marked vertex.
/// Vertex 0 is rho_*, vertex 1 is rho; `w_up[v]` = alpha(v, v_*) and
/// `w_down[v]` = alpha(v_*, v) for v >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedTree {
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    depth: Vec<u32>,
    pub w_up: Vec<f64>,
    pub w_down: Vec<f64>,
    x: usize,
}

impl MarkedTree {
    /// `parents[i]` is the parent of vertex i + 2 (vertex 1 hangs from 0).
    pub fn from_parents(parents: &[usize], x: usize, p: &Params) -> Result<Self> {
        let n = parents.len() + 2;
        let mut parent = vec![NONE, 0];
        let mut children = vec![vec![1], vec![]];
        let mut depth = vec![0, 1];
        for (i, &q) in parents.iter().enumerate() {
            let v = i + 2;
            if q == 0 || q >= v {
                return Err(Error::Graph(format!("vertex {v} needs a parent in 1..{v}, got {q}")));
            }
            parent.push(q);
            children.push(vec![]);
            children[q].push(v);
            depth.push(depth[q] + 1);
        }
        if x == 0 || x >= n {
            return Err(Error::Domain(format!("marked vertex {x} not in the tree")));
        }
        let mut w_up = vec![f64::NAN; n];
        let mut w_down = vec![f64::NAN; n];
        for v in 1..n {
            w_up[v] = p.alpha_p;
            w_down[v] = p.alpha_c;
        }
        Ok(Self { parent, children, depth, w_up, w_down, x })
    }

    /// Complete `b`-ary tree with leaves at depth `levels` below rho.
    pub fn regular(b: usize, levels: u32, x: usize, p: &Params) -> Result<Self> {
        let mut parents = Vec::new();
        let mut frontier = vec![1usize];
        let mut next_id = 2;
        for _ in 0..levels {
            let mut next = Vec::new();
            for &v in &frontier {
                for _ in 0..b {
                    parents.push(v);
                    next.push(next_id);
                    next_id += 1;
                }
            }
            frontier = next;
        }
        Self::from_parents(&parents, x, p)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn with_x(&self, x: usize) -> Result<Self> {
        if x == 0 || x >= self.len() {
            return Err(Error::Domain(format!("marked vertex {x} not in the tree")));
        }
        Ok(Self { x, ..self.clone() })
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        (self.parent[v] != NONE).then_some(self.parent[v])
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn depth(&self, v: usize) -> u32 {
        self.depth[v]
    }

    /// Vertex reached from rho by the child indices in `word` (1-based).
    pub fn vertex(&self, word: &[usize]) -> Option<usize> {
        let mut v = 1;
        for &j in word {
            v = *self.children[v].get(j.checked_sub(1)?)?;
        }
        Some(v)
    }

    /// rho_* = s_0, rho = s_1, ..., x.
    pub fn spine(&self) -> Vec<usize> {
        let mut s = vec![self.x];
        while let Some(q) = self.parent(*s.last().unwrap()) {
            s.push(q);
        }
        s.reverse();
        s
    }

    /// Is `v` equal to or below `a`?
    pub fn is_descendant(&self, v: usize, a: usize) -> bool {
        let mut u = v;
        loop {
            if u == a {
                return true;
            }
            match self.parent(u) {
                Some(q) => u = q,
                None => return false,
            }
        }
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        if self.parent(to) == Some(from) {
            Some(self.w_down[to])
        } else if self.parent(from) == Some(to) {
            Some(self.w_up[from])
        } else {
            None
        }
    }

    /// Does alpha(y, y_*) + alpha(y, yj) = alpha(y_*, y) + alpha(yj, y) hold
    /// along the spine rho <= y < yj <= x?
    pub fn is_balanced(&self, tol: f64) -> bool {
        let s = self.spine();
        s.windows(2).skip(1).all(|w| {
            let (y, yj) = (w[0], w[1]);
            let lhs = self.w_up[y] + self.w_down[yj];
            let rhs = self.w_down[y] + self.w_up[yj];
            (lhs - rhs).abs() <= tol * lhs.abs().max(1.0)
        })
    }

    /// Weights balanced at every vertex, so any x may be marked: balance on
    /// every edge forces alpha(v, v_*) - alpha(v_*, v) to be one constant c.
    /// Downward weights are drawn from `range`, c from (-min, range.1).
    pub fn random_balanced<R: Rng + ?Sized>(&self, range: (f64, f64), rng: &mut R) -> Self {
        let mut t = self.clone();
        for v in 1..t.len() {
            t.w_down[v] = rng.random_range(range.0..range.1);
        }
        let lo = t.w_down[1..].iter().copied().fold(f64::INFINITY, f64::min);
        let c = rng.random_range((0.05 - lo)..range.1);
        for v in 1..t.len() {
            t.w_up[v] = t.w_down[v] + c;
        }
        t
    }

    /// Directed graph on the same vertex labels. With `up_to_x` the
    /// descendants of x are left isolated, giving T_*^{<=x}.
    pub fn digraph(&self, up_to_x: bool) -> Result<WeightedDigraph> {
        let mut g = WeightedDigraph::new(self.len())?;
        for v in 1..self.len() {
            if up_to_x && v != self.x && self.is_descendant(v, self.x) {
                continue;
            }
            let q = self.parent[v];
            g.add_edge(q, v, self.w_down[v])?;
            g.add_edge(v, q, self.w_up[v])?;
        }
        Ok(g)
    }

    /// Edges with tail strictly between rho_* and x on the spine and head
    /// on the spine, where Psi_x swaps weights.
    pub fn swap_set(&self) -> Vec<(usize, usize)> {
        let s = self.spine();
        let mut out = Vec::new();
        for i in 1..s.len().saturating_sub(1) {
            out.push((s[i], s[i - 1]));
            out.push((s[i], s[i + 1]));
        }
        out
    }
}

/// Vertex of a double tree: side and child-index word below its root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtLabel {
    pub plus: bool,
    pub word: Vec<usize>,
}

/// Image of a marked tree under Psi_x with the swapped weights alpha'.
/// New vertex 0 is rho^- = Psi(x_*), 1 is rho^+ = Psi(x).
#[derive(Debug, Clone)]
pub struct PsiImage {
    pub graph: WeightedDigraph,
    /// old vertex -> new vertex (NONE outside the image)
    pub map: Vec<usize>,
    pub labels: Vec<DtLabel>,
    /// Psi(rho_*)
    pub hat_x: usize,
}

impl PsiImage {
    pub fn map_path(&self, path: &[usize]) -> Result<Vec<usize>> {
        path.iter()
            .map(|&v| match self.map.get(v) {
                Some(&m) if m != NONE => Ok(m),
                _ => Err(Error::InvalidPath(format!("vertex {v} outside the image"))),
            })
            .collect()
    }
}

/// Hang `t` at its marked vertex. With `up_to_x` only T_*^{<=x} is mapped.
pub fn psi_transform(t: &MarkedTree, up_to_x: bool) -> Result<PsiImage> {
    let x = t.x;
    let xs = t.parent[x];
    let in_extent = |v: usize| !(up_to_x && v != x && t.is_descendant(v, x));
    let n = t.len();
    let mut map = vec![NONE; n];
    let mut labels = Vec::new();
    // hung parent of each old vertex in the image
    let mut order: Vec<(usize, usize)> = vec![(xs, NONE), (x, xs)];
    map[xs] = 0;
    map[x] = 1;
    labels.push(DtLabel { plus: false, word: vec![] });
    labels.push(DtLabel { plus: true, word: vec![] });
    let mut head = 0;
    while head < order.len() {
        let (u, hp) = order[head];
        head += 1;
        let mut nbrs: Vec<usize> = Vec::new();
        if let Some(q) = t.parent(u) {
            nbrs.push(q);
        }
        nbrs.extend(t.children(u).iter().copied());
        let mut j = 0;
        for w in nbrs {
            // the root edge joins x_* and x; each side grows away from it
            if w == hp || (u == xs && w == x) || (u == x && w == xs) || !in_extent(w) {
                continue;
            }
            j += 1;
            let mut label = labels[map[u]].clone();
            label.word.push(j);
            map[w] = labels.len();
            labels.push(label);
            order.push((w, u));
        }
    }
    let swap = t.swap_set();
    let mut g = WeightedDigraph::new(labels.len())?;
    for v in 1..n {
        let q = t.parent[v];
        if !in_extent(v) {
            continue;
        }
        for (a, b) in [(q, v), (v, q)] {
            let w = if swap.contains(&(a, b)) { t.weight(b, a) } else { t.weight(a, b) }.expect("tree edge");
            g.add_edge(map[a], map[b], w)?;
        }
    }
    Ok(PsiImage { graph: g, hat_x: map[0], map, labels })
}

/// Both sides of an identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub pass: bool,
}

impl Check {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        let residual = rel_diff(lhs, rhs);
        Self { lhs, rhs, residual, pass: residual <= tol }
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// A check, or the reason its hypotheses failed.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Checked(Check),
    Skipped(String),
}

impl Outcome {
    pub fn check(&self) -> Option<&Check> {
        match self {
            Outcome::Checked(c) => Some(c),
            Outcome::Skipped(_) => None,
        }
    }
}

/// Fresh-point reversal with the weight ratio kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreshCheck {
    pub check: Check,
    /// P(gamma restricted to steps >= 1)
    pub dropped_first: f64,
    /// alpha(x_*, x) / alpha(rho_*, rho)
    pub ratio: f64,
}

/// Path from rho_* to x that meets rho_* and x only at its ends.
pub fn is_fresh_arrival(path: &[usize], x: usize) -> bool {
    path.len() >= 2
        && path[0] == 0
        && *path.last().unwrap() == x
        && path[1..path.len() - 1].iter().all(|&v| v != 0 && v != x)
}

/// P(gamma) on T_*^{<=x} against the ratio times P(Psi_x(reverse gamma)
/// from step 1) on the image with alpha'.
pub fn verify_fresh_reversal(t: &MarkedTree, path: &[usize]) -> Result<std::result::Result<FreshCheck, String>> {
    if !is_fresh_arrival(path, t.x) {
        return Ok(Err("path is not a first arrival from rho_* at x".into()));
    }
    if !t.is_balanced(1e-12) {
        return Ok(Err("weights violate the balance condition".into()));
    }
    let g = t.digraph(true)?;
    let lhs = errw_path_probability(&g, path)?;
    let dropped_first = errw_path_probability(&g, &path[1..])?;
    let img = psi_transform(t, true)?;
    let rev: Vec<usize> = path.iter().rev().copied().collect();
    let mapped = img.map_path(&rev)?;
    let ratio = t.w_down[t.x] / t.w_down[1];
    let rhs = ratio * errw_path_probability(&img.graph, &mapped[1..])?;
    Ok(Ok(FreshCheck { check: Check::new(lhs, rhs, PATH_TOL), dropped_first, ratio }))
}

/// Starts at x, ends at or below x and never visits rho_*.
pub fn is_loop_below(t: &MarkedTree, path: &[usize]) -> bool {
    !path.is_empty()
        && path[0] == t.x
        && t.is_descendant(*path.last().unwrap(), t.x)
        && path.iter().all(|&v| v != 0)
}

/// P(g1 | alpha) P(g2 | alpha + N(g1)) against
/// Phi(N_(x_*,x)(g2)) P'(Psi(rev g1) from step 1) P'(Psi(g2) | alpha' + N(...)).
pub fn verify_two_walk_reversal(t: &MarkedTree, p: &Params, g1: &[usize], g2: &[usize]) -> Result<Outcome> {
    if !is_fresh_arrival(g1, t.x) {
        return Ok(Outcome::Skipped("first path is not a first arrival at x".into()));
    }
    if !is_loop_below(t, g2) {
        return Ok(Outcome::Skipped("second path must start at x, end below x and avoid rho_*".into()));
    }
    let uniform = (1..t.len()).all(|v| t.w_up[v] == p.alpha_p && t.w_down[v] == p.alpha_c);
    if !uniform {
        return Ok(Outcome::Skipped("weights are not the (alpha_p, alpha_c) pair".into()));
    }
    let g = t.digraph(false)?;
    let lhs = errw_path_probability(&g, g1)? * errw_path_probability(&g.shifted(&edge_local_times(g1))?, g2)?;

    let img = psi_transform(t, false)?;
    let rev: Vec<usize> = g1.iter().rev().copied().collect();
    let h1 = &img.map_path(&rev)?[1..];
    let h2 = img.map_path(g2)?;
    let xs = t.parent[t.x];
    let crossings = g2.windows(2).filter(|w| w[0] == xs && w[1] == t.x).count() as u64;
    let shift: EdgeCounts = edge_local_times(h1);
    let rhs = phi(crossings, p)
        * errw_path_probability(&img.graph, h1)?
        * errw_path_probability(&img.graph.shifted(&shift)?, &h2)?;
    Ok(Outcome::Checked(Check::new(lhs, rhs, PATH_TOL)))
}

/// Every walk of length at most `max_len` from `start`.
pub fn walks(g: &WeightedDigraph, start: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![start];
    fn rec(g: &WeightedDigraph, cur: &mut Vec<usize>, left: usize, out: &mut Vec<Vec<usize>>) {
        out.push(cur.clone());
        if left == 0 {
            return;
        }
        let v = *cur.last().unwrap();
        let next: Vec<usize> = g.successors(v).collect();
        for w in next {
            cur.push(w);
            rec(g, cur, left - 1, out);
            cur.pop();
        }
    }
    rec(g, &mut cur, max_len, &mut out);
    out
}

/// First arrivals at x of length at most `max_len` on T_*^{<=x}.
pub fn fresh_arrivals(t: &MarkedTree, max_len: usize) -> Result<Vec<Vec<usize>>> {
    let g = t.digraph(true)?;
    let mut out = Vec::new();
    let mut cur = vec![0usize];
    fn rec(g: &WeightedDigraph, x: usize, cur: &mut Vec<usize>, left: usize, out: &mut Vec<Vec<usize>>) {
        let v = *cur.last().unwrap();
        if v == x {
            out.push(cur.clone());
            return;
        }
        if left == 0 {
            return;
        }
        let next: Vec<usize> = g.successors(v).filter(|&w| w != 0).collect();
        for w in next {
            cur.push(w);
            rec(g, x, cur, left - 1, out);
            cur.pop();
        }
    }
    rec(&g, t.x, &mut cur, max_len, &mut out);
    Ok(out)
}

/// Inflow equals outflow at every vertex other than the ends of `path`.
pub fn flow_conserved(path: &[usize]) -> bool {
    let (Some(&a), Some(&b)) = (path.first(), path.last()) else {
        return true;
    };
    let mut net: std::collections::BTreeMap<usize, i64> = Default::default();
    for w in path.windows(2) {
        *net.entry(w[0]).or_insert(0) -= 1;
        *net.entry(w[1]).or_insert(0) += 1;
    }
    net.iter().all(|(&v, &d)| v == a || v == b || d == 0)
}

/// N_e = N_(reverse e) off the spine swap set and the two end edges.
pub fn off_spine_counts_symmetric(t: &MarkedTree, path: &[usize]) -> bool {
    let counts = edge_local_times(path);
    let swap = t.swap_set();
    let xs = t.parent[t.x];
    let get = |e: &(usize, usize)| counts.get(e).copied().unwrap_or(0);
    (1..t.len()).all(|v| {
        let q = t.parent[v];
        [(q, v), (v, q)].iter().all(|&e| {
            if swap.contains(&e) || e == (0, 1) || e == (t.x, xs) {
                return true;
            }
            get(&e) == get(&(e.1, e.0))
        })
    })
}

/// Pass counts and worst residual of one identity over an enumeration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub checked: usize,
    pub passed: usize,
    pub skipped: usize,
    pub max_residual: f64,
}

impl Tally {
    pub fn add(&mut self, c: &Check) {
        self.checked += 1;
        self.passed += usize::from(c.pass);
        self.max_residual = self.max_residual.max(c.residual);
    }

    pub fn all_pass(&self) -> bool {
        self.checked > 0 && self.passed == self.checked
    }
}

/// Fresh reversal over every x of `t` and every first arrival of length
/// at most `max_len`. Also asserts dropping the forced first step and
/// the two local-time facts on each path.
pub fn fresh_reversal_suite(t: &MarkedTree, max_len: usize) -> Result<Tally> {
    let mut tally = Tally::default();
    for x in 1..t.len() {
        let tx = t.with_x(x)?;
        for path in fresh_arrivals(&tx, max_len)? {
            match verify_fresh_reversal(&tx, &path)? {
                Ok(fc) => {
                    let mut c = fc.check;
                    if rel_diff(c.lhs, fc.dropped_first) > PATH_TOL
                        || !flow_conserved(&path)
                        || !off_spine_counts_symmetric(&tx, &path)
                    {
                        c.pass = false;
                    }
                    tally.add(&c);
                }
                Err(_) => tally.skipped += 1,
            }
        }
    }
    Ok(tally)
}

/// Two-walk reversal over all pairs with |g1|, |g2| <= `max_len`.
pub fn two_walk_suite(t: &MarkedTree, p: &Params, max_len: usize) -> Result<Tally> {
    let mut tally = Tally::default();
    let firsts = fresh_arrivals(t, max_len)?;
    let g = t.digraph(false)?;
    let seconds: Vec<Vec<usize>> = walks(&g, t.x, max_len).into_iter().filter(|w| is_loop_below(t, w)).collect();
    for g1 in &firsts {
        for g2 in &seconds {
            match verify_two_walk_reversal(t, p, g1, g2)? {
                Outcome::Checked(c) => tally.add(&c),
                Outcome::Skipped(_) => tally.skipped += 1,
            }
        }
    }
    Ok(tally)
}

/// Two environment trees whose roots are joined: the up-edge of each root
/// points at the other root.
#[derive(Debug, Clone)]
pub struct DoubleTree {
    pub minus: EnvTree,
    pub plus: EnvTree,
}

pub fn sample_double_tree<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    p: &Params,
    depth: u32,
    cap: usize,
    rng: &mut R,
) -> Result<DoubleTree> {
    let minus = sample_env_tree(dist, p, depth, cap, rng)?;
    let plus = sample_env_tree(dist, p, depth, cap, rng)?;
    Ok(DoubleTree { minus, plus })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    pub check: Check,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub k_max: u64,
}

/// Transient part of the walk on a truncated double tree: plus vertices
/// first, then minus vertices, both cut at depth `n`.
struct Chain {
    /// index of each tree vertex in the transient block, NONE if absorbed
    plus_idx: Vec<usize>,
    minus_idx: Vec<usize>,
    size: usize,
}

impl Chain {
    fn new(dt: &DoubleTree, n: u32) -> Self {
        let mut size = 0;
        let mut index = |t: &EnvTree| -> Vec<usize> {
            (0..t.tree.len() as u32)
                .map(|v| {
                    if t.tree.depth(v) < n {
                        size += 1;
                        size - 1
                    } else {
                        NONE
                    }
                })
                .collect()
        };
        let plus_idx = index(&dt.plus);
        let minus_idx = index(&dt.minus);
        Self { plus_idx, minus_idx, size }
    }

    /// I - Q without the rho^- -> rho^+ step, and that step's probability.
    fn system(&self, dt: &DoubleTree) -> (DMatrix<f64>, f64) {
        let mut m = DMatrix::<f64>::identity(self.size, self.size);
        for (t, idx, other_root) in [(&dt.plus, &self.plus_idx, self.minus_idx[0]), (&dt.minus, &self.minus_idx, NONE)] {
            for v in 0..t.tree.len() as u32 {
                let i = idx[v as usize];
                if i == NONE {
                    continue;
                }
                for c in t.tree.children(v) {
                    let j = idx[c as usize];
                    if j != NONE {
                        m[(i, j)] -= t.eta_down(c);
                    }
                }
                let up = if v == 0 { other_root } else { idx[t.tree.parent(v) as usize] };
                if up != NONE {
                    m[(i, up)] -= t.eta_up(v);
                }
            }
        }
        (m, dt.minus.eta_up(0))
    }
}

/// Expected sum over visits of Y to rho^+ of Phi(crossings of
/// (rho^-, rho^+) so far), by the absorbing chain on (vertex, crossings)
/// with crossings capped at `k_max`, against
/// (1 - beta+)/eta(rho+, rho-) F((1 - beta+)(1 - beta-)) from the truncated
/// conductances.
pub fn verify_quenched_bias(dt: &DoubleTree, n: u32, p: &Params) -> Result<BiasCheck> {
    if n == 0 {
        return Err(Error::Domain("truncation depth must be positive".into()));
    }
    let bp = beta_truncated(&dt.plus, n)?[0];
    let bm = beta_truncated(&dt.minus, n)?[0];
    if bp == 0.0 && bm == 0.0 {
        return Err(Error::Domain("neither side reaches the boundary".into()));
    }
    let chain = Chain::new(dt, n);
    let (m, back) = chain.system(dt);
    let lu = m.transpose().lu();
    let (rp, rm) = (chain.plus_idx[0], chain.minus_idx[0]);
    let mut e = DVector::<f64>::zeros(chain.size);
    e[rp] = 1.0;
    let g0 = lu.solve(&e).ok_or_else(|| Error::Inconsistent("singular absorbing chain".into()))?;
    // mass carried from block k to block k+1
    let carry = g0[rm] * back;
    if !(carry < 1.0) {
        return Err(Error::Domain(format!("return probability {carry} to rho^+ is not below 1")));
    }
    let mut k_max = 0u64;
    while phi(k_max, p) * carry.powi(k_max as i32) >= 1e-14 {
        k_max += 1;
        if k_max > 1_000_000 {
            return Err(Error::SeriesTruncation(1_000_000));
        }
    }
    let mut lhs = None;
    for attempt in 0..2 {
        let cap = k_max << attempt;
        let mut g = g0.clone();
        let mut sum = 0.0;
        let mut last = 0.0;
        for k in 0..=cap {
            if k > 0 {
                let mut rhs = DVector::<f64>::zeros(chain.size);
                rhs[rp] = g[rm] * back;
                g = lu.solve(&rhs).expect("factorised above");
            }
            last = phi(k, p) * g[rp];
            sum += last;
        }
        if last <= 1e-14 * sum {
            lhs = Some((sum, cap));
            break;
        }
    }
    let (lhs, k_max) = lhs.ok_or(Error::SeriesTruncation((k_max << 1) as usize))?;

    let q = (1.0 - bp) * (1.0 - bm);
    let rhs = (1.0 - bp) / dt.plus.eta_up(0) * hyper_f(q, p)?;
    Ok(BiasCheck { check: Check::new(lhs, rhs, BIAS_TOL), beta_plus: bp, beta_minus: bm, k_max })
}

/// `n_env` sampled double trees truncated at `depth`.
pub fn quenched_bias_suite(
    dist: &OffspringDistribution,
    p: &Params,
    depth: u32,
    n_env: usize,
    seed: u64,
) -> Result<Tally> {
    let mut tally = Tally::default();
    for i in 0..n_env {
        let mut rng = crate::rng::stream(seed, 0x3b1a5, i as u64);
        let dt = sample_double_tree(dist, p, depth, 1 << 16, &mut rng)?;
        // both sides dead before the boundary: the sums diverge together
        match verify_quenched_bias(&dt, depth, p) {
            Ok(b) => tally.add(&b.check),
            Err(Error::Domain(_)) => tally.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(tally)
}
