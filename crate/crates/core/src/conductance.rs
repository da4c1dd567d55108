//! Conductance beta of a Dirichlet-weighted Galton-Watson tree: exact
//! truncated recursion, population dynamics for its law, the constant C
//! and tail-index probes.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::branching::OffspringDistribution;
use crate::dirichlet::{EnvTree, TreeDirichlet};
use crate::error::{Error, Result};
use crate::rng::{run_workers, stream};
use crate::specfun::phi_sequence;
use crate::walk::{self, mean_se, ReplicateConfig, RootMode};
use crate::Params;

/// Escape probabilities beta^(n)(v) = P_v(reach depth n before v_*), for
/// every vertex of depth at most `n`. Vertices at depth `n` get 1 and
/// childless vertices above it get 0. Entries below depth `n` are NaN.
pub fn beta_truncated(env: &EnvTree, n: u32) -> Result<Vec<f64>> {
    let t = &env.tree;
    let mut beta = vec![f64::NAN; t.len()];
    for v in (0..t.len() as u32).rev() {
        let d = t.depth(v);
        if d > n {
            continue;
        }
        if d == n {
            beta[v as usize] = 1.0;
            continue;
        }
        if t.is_boundary(v) {
            return Err(Error::Domain(format!("environment truncated at depth {d} < {n}")));
        }
        let s: f64 = t.children(v).map(|c| env.eta_down(c) * beta[c as usize]).sum();
        beta[v as usize] = if s > 0.0 { s / (s + env.eta_up(v)) } else { 0.0 };
    }
    Ok(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub pool_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub workers: usize,
}

impl PoolConfig {
    pub fn new(pool_size: usize, iterations: usize, seed: u64) -> Self {
        Self { pool_size, iterations, seed, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMeta {
    pub params: Params,
    pub dist: OffspringDistribution,
    pub pool_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub workers: usize,
}

/// Empirical sample approximating the law of beta(rho). Extinct subtrees
/// contribute exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaPopulation {
    pub samples: Vec<f64>,
    pub meta: PoolMeta,
}

/// Slots per RNG stream; streams are keyed by block, not by worker, so a
/// pool is the same for every worker count.
const BLOCK: usize = 4096;
const POOL_STREAM: u64 = 0x504f_4f4c;
const C_STREAM_A: u64 = 0x4341;
const C_STREAM_B: u64 = 0x4342;

/// Draws (nu, eta, beta_1..beta_nu) with the beta_i taken from a pool.
pub(crate) struct TupleSampler<'a> {
    pub dist: &'a OffspringDistribution,
    pub dirichlet: TreeDirichlet,
    pub pool: &'a [f64],
}

impl<'a> TupleSampler<'a> {
    pub fn new(p: &Params, dist: &'a OffspringDistribution, pool: &'a [f64]) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::InsufficientData("empty beta pool".into()));
        }
        Ok(Self { dist, dirichlet: TreeDirichlet::new(p)?, pool })
    }

    /// Fills `eta` with (eta_0, ..., eta_nu) and `betas` with nu pool draws.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, eta: &mut Vec<f64>, betas: &mut Vec<f64>) {
        let nu = self.dist.sample(rng);
        self.dirichlet.sample_into(nu, eta, rng);
        betas.clear();
        for _ in 0..nu {
            betas.push(self.pool[rng.random_range(0..self.pool.len())]);
        }
    }

    /// s = sum eta_i beta_i for a fresh tuple, together with eta_0.
    pub fn draw_s<R: Rng + ?Sized>(&self, rng: &mut R, eta: &mut Vec<f64>, betas: &mut Vec<f64>) -> (f64, f64) {
        self.draw(rng, eta, betas);
        let s = eta[1..].iter().zip(betas.iter()).map(|(e, b)| e * b).sum();
        (eta[0], s)
    }
}

fn beta_of(eta0: f64, s: f64) -> f64 {
    if s > 0.0 {
        s / (s + eta0)
    } else {
        0.0
    }
}

/// Run `f(block, range)` over `0..n` in blocks of [`BLOCK`], spread across
/// workers, and return the per-block results in block order.
fn map_blocks<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, std::ops::Range<usize>) -> T + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let workers = workers.max(1).min(blocks.max(1));
    let parts = run_workers(workers, |w| {
        (w..blocks).step_by(workers).map(|b| (b, f(b, b * BLOCK..((b + 1) * BLOCK).min(n)))).collect::<Vec<_>>()
    });
    let mut all: Vec<(usize, T)> = parts.into_iter().flatten().collect();
    all.sort_by_key(|x| x.0);
    all.into_iter().map(|x| x.1).collect()
}

/// Population dynamics for 1/beta = 1 + eta_0 / sum eta_i beta_i: start from
/// a pool of ones and replace every slot, each iteration, by s/(s+eta_0)
/// computed from a fresh offspring count, Dirichlet draw and pool members.
pub fn sample_beta_population(p: &Params, dist: &OffspringDistribution, cfg: &PoolConfig) -> Result<BetaPopulation> {
    if cfg.pool_size == 0 {
        return Err(Error::Domain("pool size must be positive".into()));
    }
    let mut pool = vec![1.0; cfg.pool_size];
    for it in 0..cfg.iterations {
        let sampler = TupleSampler::new(p, dist, &pool)?;
        let blocks = map_blocks(cfg.pool_size, cfg.workers, |b, range| {
            let mut rng = stream(cfg.seed ^ POOL_STREAM, it as u64, b as u64);
            let mut eta = Vec::new();
            let mut betas = Vec::new();
            range
                .map(|_| {
                    let (e0, s) = sampler.draw_s(&mut rng, &mut eta, &mut betas);
                    beta_of(e0, s)
                })
                .collect::<Vec<f64>>()
        });
        pool = blocks.concat();
    }
    Ok(BetaPopulation {
        samples: pool,
        meta: PoolMeta {
            params: *p,
            dist: dist.clone(),
            pool_size: cfg.pool_size,
            iterations: cfg.iterations,
            seed: cfg.seed,
            workers: cfg.workers,
        },
    })
}

/// Mean, variance and the 5%, 25%, 50%, 75%, 95% quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub mean: f64,
    pub variance: f64,
    pub quantiles: [f64; 5],
}

pub const POOL_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

impl BetaPopulation {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Samples with beta > 0, i.e. conditioned on survival.
    pub fn survivors(&self) -> Vec<f64> {
        self.samples.iter().copied().filter(|&b| b > 0.0).collect()
    }

    pub fn stats(&self) -> PoolStats {
        let (mean, _) = mean_se(self.samples.iter().copied());
        let n = self.samples.len() as f64;
        let variance = self.samples.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        let quantiles = POOL_QUANTILES.map(|q| sorted[((q * n) as usize).min(sorted.len() - 1)]);
        PoolStats { mean, variance, quantiles }
    }

    /// Refuse a pool generated for other parameters.
    pub fn check_matches(&self, p: &Params, dist: &OffspringDistribution) -> Result<()> {
        if self.meta.params != *p {
            return Err(Error::ParameterMismatch(format!(
                "pool built for (alpha_p, alpha_c) = ({}, {}), requested ({}, {})",
                self.meta.params.alpha_p, self.meta.params.alpha_c, p.alpha_p, p.alpha_c
            )));
        }
        if self.meta.dist != *dist {
            return Err(Error::ParameterMismatch("pool built for another offspring distribution".into()));
        }
        Ok(())
    }

    /// Path of the JSON metadata written next to `csv`.
    pub fn meta_path(csv: &Path) -> PathBuf {
        let mut s = csv.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    /// One sample per line under a `beta` header, plus the metadata sidecar.
    pub fn write_csv(&self, csv: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(csv)?);
        writeln!(w, "beta")?;
        for b in &self.samples {
            writeln!(w, "{b:?}")?;
        }
        w.flush()?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(Self::meta_path(csv), meta + "\n")?;
        Ok(())
    }

    pub fn read_csv(csv: &Path) -> Result<Self> {
        let meta_text = fs::read_to_string(Self::meta_path(csv))?;
        let meta: PoolMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Io(e.to_string()))?;
        let r = BufReader::new(fs::File::open(csv)?);
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "beta" {
                    return Err(Error::Io(format!("{}: missing beta header", csv.display())));
                }
                continue;
            }
            let b: f64 = line
                .trim()
                .parse()
                .map_err(|_| Error::Io(format!("{}:{}: not a number", csv.display(), i + 1)))?;
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Io(format!("{}:{}: {b} outside [0, 1]", csv.display(), i + 1)));
            }
            samples.push(b);
        }
        Ok(Self { samples, meta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CConfig {
    pub n_samples: usize,
    /// Iterations of the population dynamics, i.e. the truncation depth.
    pub depth: usize,
    pub series_cap: usize,
    pub pool_size: usize,
    pub seed: u64,
    pub workers: usize,
}

impl CConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, depth: 60, series_cap: 400, pool_size: 100_000, seed, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    /// The last summed term exceeds 1e-3 of the partial sum.
    pub truncated: bool,
    pub terms: usize,
    pub last_term: f64,
}

/// sum_k Phi(k) a_k b_k with a_k = mean over `a` of u^k w and
/// b_k = mean over `b` of beta (1 - beta)^k, where each `a` entry is
/// (u, w) = (1 - beta, 1 / (eta_0 + s)) of one fresh tuple.
pub fn c_series(p: &Params, a: &[(f64, f64)], b: &[f64], series_cap: usize) -> Result<CEstimate> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("need at least two samples per stream".into()));
    }
    let k_max = series_cap.max(1);
    let mut ak = vec![0.0; k_max];
    let mut bk = vec![0.0; k_max];
    for &(u, w) in a {
        let mut x = w;
        for slot in ak.iter_mut() {
            *slot += x;
            x *= u;
            if x == 0.0 {
                break;
            }
        }
    }
    for &beta in b {
        let mut x = beta;
        for slot in bk.iter_mut() {
            *slot += x;
            x *= 1.0 - beta;
            if x == 0.0 {
                break;
            }
        }
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    ak.iter_mut().for_each(|x| *x /= na);
    bk.iter_mut().for_each(|x| *x /= nb);
    let phis: Vec<f64> = phi_sequence(p).take(k_max).collect();
    let terms: Vec<f64> = (0..k_max).map(|k| phis[k] * ak[k] * bk[k]).collect();
    let estimate: f64 = terms.iter().sum();
    let last_term = *terms.last().expect("k_max >= 1");

    // Two-sample U-statistic: project onto each stream.
    let ha = |u: f64, w: f64| {
        let mut x = w;
        let mut acc = 0.0;
        for k in 0..k_max {
            acc += phis[k] * bk[k] * x;
            x *= u;
            if x == 0.0 {
                break;
            }
        }
        acc
    };
    let hb = |beta: f64| {
        let mut x = beta;
        let mut acc = 0.0;
        for k in 0..k_max {
            acc += phis[k] * ak[k] * x;
            x *= 1.0 - beta;
            if x == 0.0 {
                break;
            }
        }
        acc
    };
    let var = |xs: &mut dyn Iterator<Item = f64>, n: f64| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    };
    let va = var(&mut a.iter().map(|&(u, w)| ha(u, w)), na);
    let vb = var(&mut b.iter().map(|&x| hb(x)), nb);
    Ok(CEstimate {
        estimate,
        standard_error: (va / na + vb / nb).sqrt(),
        truncated: last_term > 1e-3 * estimate,
        terms: k_max,
        last_term,
    })
}

/// Monte Carlo estimate of C = sum_k Phi(k) E[(1-beta)^{k+1}/eta_0]
/// E[beta (1-beta)^k]. The first factor is evaluated on fresh tuples as
/// E[(1-beta)^k / (eta_0 + s)]; the second on independent pool draws.
pub fn estimate_c(p: &Params, dist: &OffspringDistribution, cfg: &CConfig) -> Result<CEstimate> {
    let pool_cfg = PoolConfig { pool_size: cfg.pool_size, iterations: cfg.depth, seed: cfg.seed, workers: cfg.workers };
    let pop = sample_beta_population(p, dist, &pool_cfg)?;
    estimate_c_with_pool(p, dist, &pop, cfg)
}

pub fn estimate_c_with_pool(
    p: &Params,
    dist: &OffspringDistribution,
    pop: &BetaPopulation,
    cfg: &CConfig,
) -> Result<CEstimate> {
    pop.check_matches(p, dist)?;
    let sampler = TupleSampler::new(p, dist, &pop.samples)?;
    let a: Vec<(f64, f64)> = map_blocks(cfg.n_samples, cfg.workers, |blk, range| {
        let mut rng = stream(cfg.seed ^ C_STREAM_A, 0, blk as u64);
        let mut eta = Vec::new();
        let mut betas = Vec::new();
        range
            .map(|_| {
                let (e0, s) = sampler.draw_s(&mut rng, &mut eta, &mut betas);
                (e0 / (e0 + s), 1.0 / (e0 + s))
            })
            .collect::<Vec<_>>()
    })
    .concat();
    let b: Vec<f64> = map_blocks(cfg.n_samples, cfg.workers, |blk, range| {
        let mut rng = stream(cfg.seed ^ C_STREAM_B, 0, blk as u64);
        range.map(|_| pop.samples[rng.random_range(0..pop.samples.len())]).collect::<Vec<_>>()
    })
    .concat();
    c_series(p, &a, &b, cfg.series_cap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    /// Hill estimate of the tail index of 1/beta; infinite when the top
    /// order statistics are all equal.
    pub index: f64,
    pub order_statistics: usize,
    pub survivors: usize,
    pub light_tail: bool,
}

pub const MIN_TAIL_SURVIVORS: usize = 10_000;
/// Indices above this are reported as light tails.
pub const LIGHT_TAIL_INDEX: f64 = 100.0;

/// Hill estimator over the top 1% of 1/beta among survivors.
pub fn tail_exponent(pop: &BetaPopulation) -> Result<TailEstimate> {
    tail_exponent_of(&pop.survivors(), 0.01)
}

pub fn tail_exponent_of(survivors: &[f64], fraction: f64) -> Result<TailEstimate> {
    let n = survivors.len();
    if n < MIN_TAIL_SURVIVORS {
        return Err(Error::InsufficientData(format!("{n} survivors, need {MIN_TAIL_SURVIVORS}")));
    }
    let mut x: Vec<f64> = survivors.iter().map(|b| 1.0 / b).collect();
    x.sort_by(|a, b| b.total_cmp(a));
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
    let threshold = x[k].ln();
    let h = x[..k].iter().map(|v| v.ln() - threshold).sum::<f64>() / k as f64;
    let index = if h > 0.0 { 1.0 / h } else { f64::INFINITY };
    Ok(TailEstimate { index, order_statistics: k, survivors: n, light_tail: !(index < LIGHT_TAIL_INDEX) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerationProduct {
    /// E[Theta_1 1{tau = inf}] E[beta], with E[beta] estimated by the
    /// escape frequency of the same runs.
    pub estimate: f64,
    pub standard_error: f64,
    pub theta1_escape: f64,
    pub escape_rate: f64,
    /// Runs that neither returned to the root's parent nor produced a
    /// confirmed regeneration; they are counted as escapes with Theta_1 = 0.
    pub censored: usize,
    pub runs: usize,
}

/// Walks from the root with the root's parent absorbing.
pub fn regeneration_product(
    p: &Params,
    dist: &OffspringDistribution,
    n_steps: usize,
    replicates: usize,
    seed: u64,
    workers: usize,
) -> Result<RegenerationProduct> {
    let mut cfg = ReplicateConfig::new(*p, dist.clone(), n_steps, replicates, seed);
    cfg.root = RootMode::Absorbing;
    cfg.workers = workers;
    let outcomes = walk::run_replicates(&cfg)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut censored = 0;
    for o in outcomes.iter().filter(|o| !o.discarded && !o.hit_cap) {
        let escaped = !o.absorbed;
        let theta = if escaped {
            match o.first_regeneration {
                Some(t) => t as f64,
                None => {
                    censored += 1;
                    0.0
                }
            }
        } else {
            0.0
        };
        xs.push(theta);
        ys.push(if escaped { 1.0 } else { 0.0 });
    }
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::InsufficientData("fewer than two usable runs".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    // delta method for mx * my
    let mut vxx = 0.0;
    let mut vyy = 0.0;
    let mut vxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        vxx += (x - mx).powi(2);
        vyy += (y - my).powi(2);
        vxy += (x - mx) * (y - my);
    }
    let (vxx, vyy, vxy) = (vxx / (n - 1.0), vyy / (n - 1.0), vxy / (n - 1.0));
    let var = (my * my * vxx + mx * mx * vyy + 2.0 * mx * my * vxy) / n;
    Ok(RegenerationProduct {
        estimate: mx * my,
        standard_error: var.max(0.0).sqrt(),
        theta1_escape: mx,
        escape_rate: my,
        censored,
        runs: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::{sample_tree, Tree};
    use crate::dirichlet::sample_env_tree;
    use nalgebra::{DMatrix, DVector};

    fn ray_env(forward: &[f64]) -> EnvTree {
        let n = forward.len();
        let mut t = Tree::root_only(n + 1);
        for v in 0..n as u32 {
            t.attach(v, 1).unwrap();
        }
        let mut up = vec![f64::NAN; n + 1];
        let mut down = vec![f64::NAN; n + 1];
        for (i, &a) in forward.iter().enumerate() {
            up[i] = 1.0 - a;
            down[i + 1] = a;
        }
        EnvTree::from_parts(t, up, down).unwrap()
    }

    #[test]
    fn two_level_ray_matches_linear_solve() {
        let (a1, a2) = (0.3, 0.65);
        let env = ray_env(&[a1, a2]);
        let b = beta_truncated(&env, 2).unwrap();
        // h0 = a1 h1, h1 = a2 + (1 - a2) h0
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -a1, -(1.0 - a2), 1.0]);
        let h = m.lu().solve(&DVector::from_vec(vec![0.0, a2])).unwrap();
        assert!((b[0] - h[0]).abs() < 1e-12);
        // beta(rho1) is measured against its own parent rho
        assert!((b[1] - a2).abs() < 1e-15);
        assert!(h[1] > b[1]);
        assert_eq!(b[2], 1.0);
    }

    #[test]
    fn leaves_and_truncation() {
        let mut t = Tree::root_only(10);
        t.attach(0, 2).unwrap();
        t.attach(1, 0).unwrap();
        let env = EnvTree::from_parts(t, vec![0.5, 1.0, f64::NAN], vec![f64::NAN, 0.25, 0.25]).unwrap();
        let b = beta_truncated(&env, 1).unwrap();
        assert_eq!(b[1], 1.0);
        let b = beta_truncated(&env, 2);
        assert!(b.is_err());
        let mut t = Tree::root_only(10);
        t.attach(0, 1).unwrap();
        t.attach(1, 0).unwrap();
        let env = EnvTree::from_parts(t, vec![0.5, 1.0], vec![f64::NAN, 0.5]).unwrap();
        let b = beta_truncated(&env, 3).unwrap();
        assert_eq!(b, vec![0.0, 0.0]);
    }

    #[test]
    fn truncated_beta_is_monotone_and_converges() {
        let p = Params::new(1.0, 3.0).unwrap();
        let d = OffspringDistribution::deterministic(1);
        let mut rng = stream(11, 0, 0);
        for _ in 0..20 {
            let env = sample_env_tree(&d, &p, 61, 100, &mut rng).unwrap();
            let vals: Vec<f64> = (1..=60).map(|n| beta_truncated(&env, n).unwrap()[0]).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-15));
            assert!((vals[39] - vals[59]).abs() < 1e-6);
        }
    }

    #[test]
    fn random_tree_beta_in_unit_interval() {
        let p = Params::new(1.0, 1.0).unwrap();
        let d = OffspringDistribution::new(vec![0.3, 0.2, 0.5]).unwrap();
        let mut rng = stream(12, 0, 0);
        let tree = sample_tree(&d, 8, 1 << 16, &mut rng).unwrap();
        let env = EnvTree::from_tree(tree, &TreeDirichlet::new(&p).unwrap(), &mut rng);
        let b = beta_truncated(&env, 8).unwrap();
        assert!(b.iter().filter(|x| !x.is_nan()).all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn pool_is_worker_independent_and_round_trips() {
        let p = Params::new(1.0, 1.0).unwrap();
        let d = OffspringDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mut cfg = PoolConfig::new(10_000, 10, 3);
        let a = sample_beta_population(&p, &d, &cfg).unwrap();
        cfg.workers = 3;
        let b = sample_beta_population(&p, &d, &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.samples.iter().all(|x| (0.0..=1.0).contains(x)));
        let dir = std::env::temp_dir().join(format!("errw-pool-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pool.csv");
        a.write_csv(&path).unwrap();
        let back = BetaPopulation::read_csv(&path).unwrap();
        assert_eq!(back.samples, a.samples);
        assert_eq!(back.meta, a.meta);
        assert!(back.check_matches(&Params::new(1.0, 2.0).unwrap(), &d).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn extinct_share_matches_q() {
        // q = 0.5 for p = {0: 1/4, 1: 1/4, 2: 1/2}
        let p = Params::new(1.0, 1.0).unwrap();
        let d = OffspringDistribution::new(vec![0.25, 0.25, 0.5]).unwrap();
        let pop = sample_beta_population(&p, &d, &PoolConfig::new(50_000, 60, 4)).unwrap();
        let zeros = pop.samples.iter().filter(|&&b| b < 1e-12).count() as f64 / pop.len() as f64;
        let se = (0.25f64 / pop.len() as f64).sqrt();
        assert!((zeros - 0.5).abs() < 4.0 * se, "{zeros}");
    }

    #[test]
    fn degenerate_pool_gives_unit_constant() {
        let p = Params::new(1.0, 1.0).unwrap();
        // beta = 1 in both streams: u = 0, w = 1.
        let a = vec![(0.0, 1.0); 10];
        let b = vec![1.0; 10];
        let c = c_series(&p, &a, &b, 50).unwrap();
        assert_eq!(c.estimate, 1.0);
        assert_eq!(c.standard_error, 0.0);
        assert!(!c.truncated);
    }

    #[test]
    fn c_series_against_direct_double_sum() {
        let p = Params::new(1.3, 0.7).unwrap();
        let a = [(0.2, 1.1), (0.5, 0.9), (0.1, 1.4)];
        let b = [0.3, 0.8, 0.55];
        let got = c_series(&p, &a, &b, 200).unwrap().estimate;
        // Phi(k) (u x)^k summed over k is F(u x) with F the hypergeometric series.
        let mut want = 0.0;
        for &(u, w) in &a {
            for &beta in &b {
                want += w * beta * crate::specfun::hyper_f(u * (1.0 - beta), &p).unwrap();
            }
        }
        want /= 9.0;
        assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn hill_on_pareto_and_constants() {
        let mut rng = stream(13, 0, 0);
        // 1/beta Pareto with index 2: beta = U^{1/2}.
        let xs: Vec<f64> = (0..200_000).map(|_| rng.random::<f64>().sqrt()).collect();
        let t = tail_exponent_of(&xs, 0.01).unwrap();
        assert!((t.index - 2.0).abs() < 0.2, "{}", t.index);
        let c = tail_exponent_of(&vec![0.5; 20_000], 0.01).unwrap();
        assert!(c.light_tail && c.index.is_infinite());
        assert!(tail_exponent_of(&[0.5; 10], 0.01).is_err());
    }
}
