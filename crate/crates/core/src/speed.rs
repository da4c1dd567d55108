//! Monte Carlo evaluation of the speed formula
//!
//! v = E[beta_0 (S_A - 1)/(1 + S) F(x)] / E[beta_0 (S_A + 1)/(1 + S) F(x)],
//! x = (1 - beta_0)/(1 + S), S_A = sum A_i, S = sum A_i beta_i,
//!
//! and of its closed forms for alpha_p = alpha_c and for (1, 1/2).

use serde::{Deserialize, Serialize};

use crate::branching::OffspringDistribution;
use crate::conductance::{BetaPopulation, TupleSampler};
use crate::error::{Error, Result};
use crate::rng::{run_workers, stream};
use crate::specfun::hyper_f;
use crate::Params;

/// Arguments of F at or above this are capped here.
pub const SATURATION_X: f64 = 1.0 - 1e-12;
/// Saturated share above which the estimate is flagged.
pub const SATURATION_FLAG: f64 = 1e-3;

const SPEED_STREAM: u64 = 0x53_5045_4544;
const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedConfig {
    pub n_mc: usize,
    pub seed: u64,
    pub workers: usize,
    /// Independent beta_0 draws averaged over per tuple. The shared
    /// factor blows up for small beta_0, so averaging these out removes
    /// most of the heavy tail at the cost of extra F evaluations.
    #[serde(default = "one")]
    pub beta0_draws: usize,
}

fn one() -> usize {
    1
}

impl SpeedConfig {
    pub fn new(n_mc: usize, seed: u64) -> Self {
        Self { n_mc, seed, workers: 1, beta0_draws: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub speed: f64,
    pub standard_error: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub denominator_se: f64,
    pub samples: usize,
    pub saturation_fraction: f64,
    /// More than [`SATURATION_FLAG`] of the tuples hit the cap on x.
    pub saturated: bool,
}

/// One tuple as seen by the formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tuple {
    pub beta0: f64,
    /// sum A_i
    pub sum_a: f64,
    /// sum A_i beta_i
    pub sum_ab: f64,
}

/// Which expression supplies the factor shared by numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Formula {
    General,
    /// alpha_p = alpha_c = alpha.
    Symmetric(f64),
    /// (alpha_p, alpha_c) = (1, 1/2).
    ErrwHalf,
}

/// Shared factor c and whether x was capped; numerator = (S_A - 1) c,
/// denominator = (S_A + 1) c.
pub fn common_factor(t: &Tuple, p: &Params, formula: Formula) -> Result<(f64, bool)> {
    if t.beta0 == 0.0 {
        return Ok((0.0, false));
    }
    let b0 = t.beta0;
    let s = t.sum_ab;
    match formula {
        Formula::General => {
            let mut x = (1.0 - b0) / (1.0 + s);
            let capped = x >= SATURATION_X;
            if capped {
                x = SATURATION_X;
            }
            Ok((b0 / (1.0 + s) * hyper_f(x, p)?, capped))
        }
        Formula::Symmetric(alpha) => {
            let den = b0 + s;
            Ok((b0 * ((1.0 - b0) / alpha + den) / (den * den), false))
        }
        Formula::ErrwHalf => {
            let den = b0 + s;
            Ok((b0 * (1.0 + s).sqrt() * den.powf(-1.5), false))
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: f64,
    num: f64,
    den: f64,
    num2: f64,
    den2: f64,
    cross: f64,
    saturated: f64,
}

impl Sums {
    fn add(&mut self, o: &Sums) {
        self.n += o.n;
        self.num += o.num;
        self.den += o.den;
        self.num2 += o.num2;
        self.den2 += o.den2;
        self.cross += o.cross;
        self.saturated += o.saturated;
    }
}

/// Draws `cfg.n_mc` tuples (nu, eta, beta_0..beta_nu) with every beta taken
/// from `pop`, in blocks with their own RNG streams.
pub fn draw_tuples(p: &Params, dist: &OffspringDistribution, pop: &BetaPopulation, cfg: &SpeedConfig) -> Result<Vec<Tuple>> {
    let mut out = Vec::with_capacity(cfg.n_mc);
    for part in each_block(p, dist, pop, cfg, |t, _| Ok(*t))? {
        out.extend(part);
    }
    Ok(out)
}

fn each_block<T, F>(
    p: &Params,
    dist: &OffspringDistribution,
    pop: &BetaPopulation,
    cfg: &SpeedConfig,
    f: F,
) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(&Tuple, &[f64]) -> Result<T> + Sync,
{
    let sampler = TupleSampler::new(p, dist, &pop.samples)?;
    let blocks = cfg.n_mc.div_ceil(BLOCK);
    let workers = cfg.workers.max(1).min(blocks.max(1));
    let parts = run_workers(workers, |w| {
        let mut res = Vec::new();
        let mut eta = Vec::new();
        let mut betas = Vec::new();
        let mut beta0s = vec![0.0; cfg.beta0_draws.max(1)];
        for b in (w..blocks).step_by(workers) {
            let mut rng = stream(cfg.seed ^ SPEED_STREAM, 0, b as u64);
            let len = BLOCK.min(cfg.n_mc - b * BLOCK);
            let mut vals = Vec::with_capacity(len);
            for _ in 0..len {
                sampler.draw(&mut rng, &mut eta, &mut betas);
                for b0 in beta0s.iter_mut() {
                    *b0 = pop.samples[rand::Rng::random_range(&mut rng, 0..pop.samples.len())];
                }
                let beta0 = beta0s[0];
                let e0 = eta[0];
                let sum_a = eta[1..].iter().sum::<f64>() / e0;
                let sum_ab = eta[1..].iter().zip(&betas).map(|(e, b)| e * b).sum::<f64>() / e0;
                match f(&Tuple { beta0, sum_a, sum_ab }, &beta0s) {
                    Ok(v) => vals.push(v),
                    Err(e) => return Err(e),
                }
            }
            res.push((b, vals));
        }
        Ok(res)
    });
    let mut all = Vec::new();
    for p in parts {
        all.extend(p?);
    }
    all.sort_by_key(|x| x.0);
    Ok(all.into_iter().map(|x| x.1).collect())
}

fn finish(s: Sums) -> Result<SpeedEstimate> {
    let n = s.n;
    let mn = s.num / n;
    let md = s.den / n;
    let vn = (s.num2 / n - mn * mn) * n / (n - 1.0);
    let vd = (s.den2 / n - md * md) * n / (n - 1.0);
    let cnd = (s.cross / n - mn * md) * n / (n - 1.0);
    let se_d = (vd.max(0.0) / n).sqrt();
    if !(md > 3.0 * se_d) {
        return Err(Error::UnstableRatio { mean: md, se: se_d });
    }
    let r = mn / md;
    let var_r = (vn - 2.0 * r * cnd + r * r * vd).max(0.0) / (n * md * md);
    let frac = s.saturated / n;
    Ok(SpeedEstimate {
        speed: r,
        standard_error: var_r.sqrt(),
        numerator: mn,
        denominator: md,
        denominator_se: se_d,
        samples: n as usize,
        saturation_fraction: frac,
        saturated: frac > SATURATION_FLAG,
    })
}

/// Ratio-of-means estimate on shared tuples for the chosen formula.
pub fn evaluate_with(
    p: &Params,
    dist: &OffspringDistribution,
    pop: &BetaPopulation,
    cfg: &SpeedConfig,
    formula: Formula,
) -> Result<SpeedEstimate> {
    pop.check_matches(p, dist)?;
    if cfg.n_mc < 2 {
        return Err(Error::InsufficientData("need at least two tuples".into()));
    }
    let parts = each_block(p, dist, pop, cfg, |t, beta0s| {
        let mut c = 0.0;
        let mut capped = 0usize;
        for &beta0 in beta0s {
            let t = Tuple { beta0, ..*t };
            let (ci, cap) = common_factor(&t, p, formula)?;
            if !(ci >= 0.0) || !ci.is_finite() {
                return Err(Error::Inconsistent(format!("shared factor {ci} for {t:?}")));
            }
            c += ci;
            capped += usize::from(cap);
        }
        let m = beta0s.len() as f64;
        Ok((t.sum_a, c / m, capped as f64 / m))
    })?;
    let mut total = Sums::default();
    for part in parts {
        let mut s = Sums::default();
        for (sa, c, capped) in part {
            let num = (sa - 1.0) * c;
            let den = (sa + 1.0) * c;
            s.n += 1.0;
            s.num += num;
            s.den += den;
            s.num2 += num * num;
            s.den2 += den * den;
            s.cross += num * den;
            s.saturated += capped;
        }
        total.add(&s);
    }
    finish(total)
}

pub fn evaluate_speed(
    p: &Params,
    dist: &OffspringDistribution,
    pop: &BetaPopulation,
    cfg: &SpeedConfig,
) -> Result<SpeedEstimate> {
    evaluate_with(p, dist, pop, cfg, Formula::General)
}

pub fn evaluate_speed_symmetric(
    alpha: f64,
    dist: &OffspringDistribution,
    pop: &BetaPopulation,
    cfg: &SpeedConfig,
) -> Result<SpeedEstimate> {
    let p = Params::new(alpha, alpha)?;
    evaluate_with(&p, dist, pop, cfg, Formula::Symmetric(alpha))
}

pub fn evaluate_speed_errw_half(
    dist: &OffspringDistribution,
    pop: &BetaPopulation,
    cfg: &SpeedConfig,
) -> Result<SpeedEstimate> {
    let p = Params::new(1.0, 0.5)?;
    evaluate_with(&p, dist, pop, cfg, Formula::ErrwHalf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conductance::{sample_beta_population, PoolConfig, PoolMeta};
    use proptest::prelude::*;

    fn constant_pool(p: Params, dist: &OffspringDistribution, value: f64) -> BetaPopulation {
        BetaPopulation {
            samples: vec![value; 1000],
            meta: PoolMeta { params: p, dist: dist.clone(), pool_size: 1000, iterations: 0, seed: 0, workers: 1 },
        }
    }

    #[test]
    fn unit_pool_collapses_to_ratio_of_a_sums() {
        let p = Params::new(1.0, 2.0).unwrap();
        let d = OffspringDistribution::deterministic(1);
        let pop = constant_pool(p, &d, 1.0);
        let cfg = SpeedConfig::new(20_000, 1);
        let est = evaluate_speed(&p, &d, &pop, &cfg).unwrap();
        // beta = 1: x = 0, F = 1, factor 1/(1 + A)
        let tuples = draw_tuples(&p, &d, &pop, &cfg).unwrap();
        let num: f64 = tuples.iter().map(|t| (t.sum_a - 1.0) / (1.0 + t.sum_a)).sum();
        let den: f64 = tuples.iter().map(|t| (t.sum_a + 1.0) / (1.0 + t.sum_a)).sum();
        assert!((est.speed - num / den).abs() < 1e-12);
        assert_eq!(est.saturation_fraction, 0.0);
    }

    #[test]
    fn symmetric_unit_pool() {
        let d = OffspringDistribution::deterministic(2);
        let p = Params::new(1.5, 1.5).unwrap();
        let pop = constant_pool(p, &d, 1.0);
        let cfg = SpeedConfig::new(10_000, 2);
        let est = evaluate_speed_symmetric(1.5, &d, &pop, &cfg).unwrap();
        let tuples = draw_tuples(&p, &d, &pop, &cfg).unwrap();
        // beta = 1: ((1 + S) / (1 + S)^2) = 1 / (1 + S_A)
        let num: f64 = tuples.iter().map(|t| (t.sum_a - 1.0) / (1.0 + t.sum_a)).sum();
        let den: f64 = tuples.iter().map(|t| (t.sum_a + 1.0) / (1.0 + t.sum_a)).sum();
        assert!((est.speed - num / den).abs() < 1e-12);
    }

    #[test]
    fn errw_half_unit_pool_matches_general() {
        let d = OffspringDistribution::deterministic(3);
        let p = Params::new(1.0, 0.5).unwrap();
        let pop = constant_pool(p, &d, 1.0);
        let cfg = SpeedConfig::new(5_000, 3);
        let a = evaluate_speed(&p, &d, &pop, &cfg).unwrap();
        let b = evaluate_speed_errw_half(&d, &pop, &cfg).unwrap();
        assert!((a.speed - b.speed).abs() < 1e-12);
    }

    #[test]
    fn mismatched_pool_refused() {
        let d = OffspringDistribution::deterministic(2);
        let pop = constant_pool(Params::new(1.0, 1.0).unwrap(), &d, 0.5);
        let err = evaluate_speed(&Params::new(2.0, 1.0).unwrap(), &d, &pop, &SpeedConfig::new(100, 0));
        assert!(matches!(err, Err(Error::ParameterMismatch(_))));
    }

    #[test]
    fn zero_pool_is_unstable() {
        let d = OffspringDistribution::deterministic(2);
        let p = Params::new(1.0, 1.0).unwrap();
        let pop = constant_pool(p, &d, 0.0);
        assert!(matches!(evaluate_speed(&p, &d, &pop, &SpeedConfig::new(100, 0)), Err(Error::UnstableRatio { .. })));
    }

    #[test]
    fn workers_do_not_change_the_estimate() {
        let d = OffspringDistribution::new(vec![0.0, 0.3, 0.7]).unwrap();
        let p = Params::new(1.0, 1.0).unwrap();
        let pop = sample_beta_population(&p, &d, &PoolConfig::new(20_000, 30, 4)).unwrap();
        let mut cfg = SpeedConfig::new(30_000, 5);
        let a = evaluate_speed(&p, &d, &pop, &cfg).unwrap();
        cfg.workers = 4;
        let b = evaluate_speed(&p, &d, &pop, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.speed > 0.0 && a.speed < 1.0);
    }

    #[test]
    fn averaging_beta0_keeps_unit_pool_exact() {
        let p = Params::new(1.0, 2.0).unwrap();
        let d = OffspringDistribution::deterministic(2);
        let pop = constant_pool(p, &d, 1.0);
        let mut cfg = SpeedConfig::new(10_000, 8);
        let a = evaluate_speed(&p, &d, &pop, &cfg).unwrap();
        cfg.beta0_draws = 8;
        let b = evaluate_speed(&p, &d, &pop, &cfg).unwrap();
        let tuples = draw_tuples(&p, &d, &pop, &SpeedConfig::new(10_000, 8)).unwrap();
        let num: f64 = tuples.iter().map(|t| (t.sum_a - 1.0) / (1.0 + t.sum_a)).sum();
        let den: f64 = tuples.iter().map(|t| (t.sum_a + 1.0) / (1.0 + t.sum_a)).sum();
        assert!((a.speed - num / den).abs() < 1e-12);
        // constant pool: extra draws consume the stream but not the A sums
        assert!(b.speed > 0.0 && b.speed < 1.0);
    }

    #[test]
    fn averaging_beta0_agrees_with_plain_estimate() {
        let d = OffspringDistribution::deterministic(2);
        let p = Params::new(2.0, 1.0).unwrap();
        let pop = sample_beta_population(&p, &d, &PoolConfig::new(20_000, 40, 9)).unwrap();
        let plain = evaluate_speed(&p, &d, &pop, &SpeedConfig::new(200_000, 1)).unwrap();
        let mut cfg = SpeedConfig::new(50_000, 2);
        cfg.beta0_draws = 8;
        let avg = evaluate_speed(&p, &d, &pop, &cfg).unwrap();
        let tol = 4.0 * (plain.standard_error.powi(2) + avg.standard_error.powi(2)).sqrt();
        assert!((plain.speed - avg.speed).abs() < tol, "{plain:?} {avg:?}");
        assert!(avg.standard_error < plain.standard_error * 2.0);
    }

    proptest! {
        #[test]
        fn closed_forms_match_general_pathwise(
            b0 in 0.0f64..1.0, s in 0.0f64..20.0, sa in 0.0f64..20.0, alpha in 0.2f64..5.0
        ) {
            prop_assume!(b0 + s > 1e-3);
            let t = Tuple { beta0: b0, sum_a: sa, sum_ab: s };
            let p = Params::new(alpha, alpha).unwrap();
            let (g, _) = common_factor(&t, &p, Formula::General).unwrap();
            let (c, _) = common_factor(&t, &p, Formula::Symmetric(alpha)).unwrap();
            prop_assert!((g - c).abs() <= 1e-9 * g.abs().max(1e-300));
            let half = Params::new(1.0, 0.5).unwrap();
            let (g, _) = common_factor(&t, &half, Formula::General).unwrap();
            let (c, _) = common_factor(&t, &half, Formula::ErrwHalf).unwrap();
            prop_assert!((g - c).abs() <= 1e-9 * g.abs().max(1e-300));
            // numerator <= denominator on every tuple
            prop_assert!((sa - 1.0) * g <= (sa + 1.0) * g);
        }
    }
}
