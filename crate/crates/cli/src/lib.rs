//! Subcommands of the `errw` binary. Each `cmd_*` takes a parsed config and
//! returns the exact bytes it would write, so runs can be compared.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use errw::branching::OffspringDistribution;
use errw::conductance::{sample_beta_population, BetaPopulation, PoolConfig, PoolStats};
use errw::criteria::{classify_speed, classify_transience, RegimeReport, TransienceCase};
use errw::dirichlet::{
    errw_path_probability, quenched_path_probability, sample_graph_environment, sequential_urn_probability,
    two_path_product, WeightedDigraph,
};
use errw::reversal::{
    fresh_arrivals, fresh_reversal_suite, psi_transform, quenched_bias_suite, two_walk_suite, walks, MarkedTree,
    Tally, PATH_TOL,
};
use errw::rng::stream;
use errw::speed::{evaluate_with, Formula, SpeedConfig, SpeedEstimate};
use errw::walk::{run_replicates, summarize, Model, ReplicateConfig, RootMode, SpeedSummary};
use errw::Params;

/// Flags that override config fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Parse a JSON config, reporting the field path of any schema violation.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("config field `{path}`: {}", e.into_inner())
    })
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

fn offspring(map: &BTreeMap<usize, f64>) -> Result<OffspringDistribution> {
    OffspringDistribution::from_map(map).context("field `offspring`")
}

fn params(ap: f64, ac: f64) -> Result<Params> {
    Params::new(ap, ac).context("fields `alpha_p`/`alpha_c`")
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        bail!("field `{name}` must be positive");
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn one() -> usize {
    1
}

/// Evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    fn values(&self, name: &str) -> Result<Vec<f64>> {
        if self.steps == 0 {
            bail!("field `{name}.steps` must be positive");
        }
        if !(self.min > 0.0) || !(self.max >= self.min) || (self.steps > 1 && self.max == self.min) {
            bail!("field `{name}`: need 0 < min < max, got [{}, {}]", self.min, self.max);
        }
        if self.steps == 1 {
            return Ok(vec![self.min]);
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        Ok((0..self.steps).map(|i| if i + 1 == self.steps { self.max } else { self.min + h * i as f64 }).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    pub offspring: BTreeMap<usize, f64>,
    pub alpha_p: Axis,
    pub alpha_c: Axis,
}

pub const PHASE_HEADER: &str = "alpha_p,alpha_c,transient,positive_speed,r,phi0,criterion_value";

/// Regime reports over the grid, alpha_p varying slowest.
pub fn phase_grid(cfg: &PhaseDiagramConfig) -> Result<Vec<RegimeReport>> {
    let dist = offspring(&cfg.offspring)?;
    let mut out = Vec::new();
    for ap in cfg.alpha_p.values("alpha_p")? {
        for ac in cfg.alpha_c.values("alpha_c")? {
            let rep = classify_speed(&params(ap, ac)?, &dist)
                .with_context(|| format!("classifying (alpha_p, alpha_c) = ({ap}, {ac})"))?;
            out.push(rep);
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_phase_diagram(cfg: &PhaseDiagramConfig) -> Result<String> {
    let mut s = String::from(PHASE_HEADER);
    s.push('\n');
    for r in phase_grid(cfg)? {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.alpha_p,
            r.alpha_c,
            r.transient,
            r.positive_speed,
            opt(r.r),
            opt(r.phi0),
            opt(r.criterion_value)
        )?;
    }
    Ok(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub alpha_p: f64,
    pub alpha_c: f64,
    pub offspring: BTreeMap<usize, f64>,
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_root")]
    pub root: RootMode,
    pub n_steps: usize,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub tail_margin: Option<usize>,
    #[serde(default = "default_survival_depth")]
    pub survival_depth: u32,
}

fn default_model() -> Model {
    Model::Rwde
}

fn default_root() -> RootMode {
    RootMode::Reflecting
}

fn default_survival_depth() -> u32 {
    60
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub alpha_p: f64,
    pub alpha_c: f64,
    pub offspring: BTreeMap<usize, f64>,
    pub model: Model,
    pub n_steps: usize,
    pub seed: u64,
    pub workers: usize,
    pub summary: SpeedSummary,
    pub vertex_cap_rate: f64,
    pub regime: RegimeReport,
}

pub fn cmd_simulate(cfg: &SimulateConfig, o: Overrides) -> Result<String> {
    let p = params(cfg.alpha_p, cfg.alpha_c)?;
    let dist = offspring(&cfg.offspring)?;
    positive("n_steps", cfg.n_steps)?;
    positive("replicates", cfg.replicates)?;
    let mut rc = ReplicateConfig::new(p, dist.clone(), cfg.n_steps, cfg.replicates, o.seed.unwrap_or(cfg.seed));
    rc.model = cfg.model;
    rc.root = cfg.root;
    rc.workers = o.workers.unwrap_or(cfg.workers).max(1);
    rc.tail_margin = cfg.tail_margin;
    rc.survival_depth = cfg.survival_depth;
    let summary = summarize(&run_replicates(&rc)?);
    let report = SimulateReport {
        alpha_p: cfg.alpha_p,
        alpha_c: cfg.alpha_c,
        offspring: cfg.offspring.clone(),
        model: cfg.model,
        n_steps: cfg.n_steps,
        seed: rc.seed,
        workers: rc.workers,
        vertex_cap_rate: summary.vertex_cap_hits as f64 / summary.replicates as f64,
        summary,
        regime: classify_speed(&p, &dist)?,
    };
    to_json(&report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaChoice {
    General,
    Symmetric,
    ErrwHalf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedCmdConfig {
    pub alpha_p: f64,
    pub alpha_c: f64,
    pub offspring: BTreeMap<usize, f64>,
    /// Read the pool from this CSV (with its metadata sidecar) instead of
    /// generating one.
    #[serde(default)]
    pub pool_file: Option<PathBuf>,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_pool_iterations")]
    pub pool_iterations: usize,
    /// Write the generated pool here.
    #[serde(default)]
    pub save_pool: Option<PathBuf>,
    pub n_mc: usize,
    #[serde(default = "one")]
    pub beta0_draws: usize,
    #[serde(default = "default_formula")]
    pub formula: FormulaChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

fn default_pool_size() -> usize {
    100_000
}

fn default_pool_iterations() -> usize {
    100
}

fn default_formula() -> FormulaChoice {
    FormulaChoice::General
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedReport {
    pub alpha_p: f64,
    pub alpha_c: f64,
    pub offspring: BTreeMap<usize, f64>,
    pub formula: FormulaChoice,
    pub seed: u64,
    pub workers: usize,
    pub pool_size: usize,
    pub pool_iterations: usize,
    pub pool: PoolStats,
    pub estimate: SpeedEstimate,
    pub regime: RegimeReport,
}

/// Pool stream seed derived from the master seed; the tuple stream uses the
/// master seed itself.
const POOL_SEED_SALT: u64 = 0x706f_6f6c;

pub fn cmd_speed(cfg: &SpeedCmdConfig, o: Overrides) -> Result<String> {
    let p = params(cfg.alpha_p, cfg.alpha_c)?;
    let dist = offspring(&cfg.offspring)?;
    positive("n_mc", cfg.n_mc)?;
    positive("beta0_draws", cfg.beta0_draws)?;
    let seed = o.seed.unwrap_or(cfg.seed);
    let workers = o.workers.unwrap_or(cfg.workers).max(1);
    let pop = match &cfg.pool_file {
        Some(path) => {
            BetaPopulation::read_csv(path).with_context(|| format!("reading pool {}", path.display()))?
        }
        None => {
            positive("pool_size", cfg.pool_size)?;
            positive("pool_iterations", cfg.pool_iterations)?;
            let mut pc = PoolConfig::new(cfg.pool_size, cfg.pool_iterations, seed ^ POOL_SEED_SALT);
            pc.workers = workers;
            sample_beta_population(&p, &dist, &pc)?
        }
    };
    pop.check_matches(&p, &dist)?;
    if let Some(path) = &cfg.save_pool {
        pop.write_csv(path).with_context(|| format!("writing pool {}", path.display()))?;
    }
    let formula = match cfg.formula {
        FormulaChoice::General => Formula::General,
        FormulaChoice::Symmetric => {
            if p.alpha_p != p.alpha_c {
                bail!("field `formula`: symmetric form needs alpha_p = alpha_c");
            }
            Formula::Symmetric(p.alpha_c)
        }
        FormulaChoice::ErrwHalf => {
            if (p.alpha_p, p.alpha_c) != (1.0, 0.5) {
                bail!("field `formula`: errw_half form needs (alpha_p, alpha_c) = (1, 0.5)");
            }
            Formula::ErrwHalf
        }
    };
    let sc = SpeedConfig { n_mc: cfg.n_mc, seed, workers, beta0_draws: cfg.beta0_draws };
    let estimate = evaluate_with(&p, &dist, &pop, &sc, formula)?;
    let report = SpeedReport {
        alpha_p: cfg.alpha_p,
        alpha_c: cfg.alpha_c,
        offspring: cfg.offspring.clone(),
        formula: cfg.formula,
        seed,
        workers,
        pool_size: pop.meta.pool_size,
        pool_iterations: pop.meta.iterations,
        pool: pop.stats(),
        estimate,
        regime: classify_speed(&p, &dist)?,
    };
    to_json(&report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaConfig {
    pub alpha_p: f64,
    pub alpha_c: f64,
    pub offspring: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriteriaReport {
    pub transience_case: TransienceCase,
    #[serde(flatten)]
    pub regime: RegimeReport,
}

pub fn cmd_criteria(cfg: &CriteriaConfig) -> Result<String> {
    let p = params(cfg.alpha_p, cfg.alpha_c)?;
    let dist = offspring(&cfg.offspring)?;
    let report = CriteriaReport {
        transience_case: classify_transience(&p, &dist)?.case,
        regime: classify_speed(&p, &dist)?,
    };
    to_json(&report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Longest walk in the gamma-product vs urn comparison.
    pub path_max_len: usize,
    pub two_path_pairs: usize,
    pub mc_pairs: usize,
    pub mc_samples: usize,
    pub fresh_max_len: usize,
    pub two_walk_max_len: usize,
    pub double_trees: usize,
    pub bias_depth: u32,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            path_max_len: 8,
            two_path_pairs: 1000,
            mc_pairs: 20,
            mc_samples: 100_000,
            fresh_max_len: 7,
            two_walk_max_len: 5,
            double_trees: 100,
            bias_depth: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityResult {
    pub name: String,
    /// Relative residuals, except for Monte Carlo checks where the residual
    /// is the deviation in standard errors.
    pub tally: Tally,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub identities: Vec<IdentityResult>,
    /// Reversal under weights violating the balance condition; recorded,
    /// not required.
    pub unbalanced: Probe,
    /// Reversal under balanced general weights with the weight ratio left
    /// out; recorded, not required.
    pub dropped_ratio: Probe,
    pub all_pass: bool,
}

fn binary_tree(p: &Params) -> Result<MarkedTree> {
    Ok(MarkedTree::regular(2, 3, 1, p)?)
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn tally_rel(t: &mut Tally, a: f64, b: f64, tol: f64) {
    let r = rel(a, b);
    t.checked += 1;
    t.passed += usize::from(r <= tol);
    t.max_residual = t.max_residual.max(r);
}

fn random_walk(g: &WeightedDigraph, rng: &mut errw::rng::StreamRng, max_len: usize) -> Vec<usize> {
    use rand::Rng;
    let len = rng.random_range(1..=max_len);
    let mut path = vec![rng.random_range(0..g.n_vertices())];
    for _ in 0..len {
        let s: Vec<usize> = g.successors(*path.last().unwrap()).collect();
        path.push(s[rng.random_range(0..s.len())]);
    }
    path
}

/// Gamma product vs urn product over every walk from rho_*.
pub fn path_probability_tally(max_len: usize) -> Result<Tally> {
    let mut t = Tally::default();
    for (ap, ac) in [(1.0, 0.5), (2.0, 3.0)] {
        let g = binary_tree(&params(ap, ac)?)?.digraph(false)?;
        for w in walks(&g, 0, max_len) {
            tally_rel(&mut t, errw_path_probability(&g, &w)?, sequential_urn_probability(&g, &w)?, 1e-12);
        }
    }
    Ok(t)
}

/// Both orders of the two-path product on random pairs.
pub fn two_path_order_tally(pairs: usize, seed: u64) -> Result<Tally> {
    let g = binary_tree(&params(1.3, 0.8)?)?.digraph(false)?;
    let mut rng = stream(seed, 0x7061_6972, 0);
    let mut t = Tally::default();
    for _ in 0..pairs {
        let (a, b) = (random_walk(&g, &mut rng, 6), random_walk(&g, &mut rng, 6));
        tally_rel(&mut t, two_path_product(&g, &a, &b)?, two_path_product(&g, &b, &a)?, 1e-12);
    }
    Ok(t)
}

/// Two-path product against the Dirichlet average of the quenched
/// product; residual in standard errors, pass below 4.
pub fn two_path_mean_tally(pairs: usize, samples: usize, seed: u64) -> Result<Tally> {
    let g = binary_tree(&params(1.0, 1.0)?)?.digraph(false)?;
    let mut t = Tally::default();
    for i in 0..pairs {
        let mut rng = stream(seed, 0x6d65_616e, i as u64);
        let (a, b) = (random_walk(&g, &mut rng, 4), random_walk(&g, &mut rng, 4));
        let target = two_path_product(&g, &a, &b)?;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..samples {
            let eta = sample_graph_environment(&g, &mut rng)?;
            let x = quenched_path_probability(&g, &eta, &a)? * quenched_path_probability(&g, &eta, &b)?;
            s += x;
            s2 += x * x;
        }
        let n = samples as f64;
        let m = s / n;
        let se = ((s2 / n - m * m).max(0.0) / (n - 1.0)).sqrt();
        let z = if se > 0.0 { (m - target).abs() / se } else if m == target { 0.0 } else { f64::INFINITY };
        t.checked += 1;
        t.passed += usize::from(z < 4.0);
        t.max_residual = t.max_residual.max(z);
    }
    Ok(t)
}

pub fn cmd_verify(cfg: &VerifyConfig, o: Overrides) -> Result<String> {
    verify_json(&run_verify(cfg, o)?)
}

pub fn verify_json(r: &VerifyReport) -> Result<String> {
    to_json(r)
}

pub fn run_verify(cfg: &VerifyConfig, o: Overrides) -> Result<VerifyReport> {
    let seed = o.seed.unwrap_or(cfg.seed);
    let mut ids = Vec::new();
    let mut push = |name: &str, tally: Tally| ids.push(IdentityResult { name: name.into(), tally });
    push("path_probability", path_probability_tally(cfg.path_max_len)?);
    push("two_path_orders", two_path_order_tally(cfg.two_path_pairs, seed)?);
    push("two_path_dirichlet_mean", two_path_mean_tally(cfg.mc_pairs, cfg.mc_samples, seed)?);

    let uniform = binary_tree(&params(2.0, 0.5)?)?;
    push("fresh_reversal_alpha_pair", fresh_reversal_suite(&uniform, cfg.fresh_max_len)?);
    let mut rng = stream(seed, 0x7765_6967, 0);
    let balanced = uniform.random_balanced((0.2, 4.0), &mut rng);
    push("fresh_reversal_general_weights", fresh_reversal_suite(&balanced, cfg.fresh_max_len)?);

    let p = params(1.0, 0.5)?;
    let base = binary_tree(&p)?;
    let mut two = Tally::default();
    for x in 1..base.len() {
        let t = two_walk_suite(&base.with_x(x)?, &p, cfg.two_walk_max_len)?;
        two.checked += t.checked;
        two.passed += t.passed;
        two.skipped += t.skipped;
        two.max_residual = two.max_residual.max(t.max_residual);
    }
    push("two_walk_reversal", two);

    let bias_p = params(1.0, 1.0)?;
    let binary = OffspringDistribution::deterministic(2);
    push("quenched_bias", quenched_bias_suite(&binary, &bias_p, cfg.bias_depth, cfg.double_trees, seed)?);

    let mut probe = uniform.with_x(uniform.vertex(&[1, 2]).expect("depth-3 tree"))?;
    let y = probe.vertex(&[1]).expect("depth-3 tree");
    probe.w_up[y] += 1.0;
    let unbalanced = reversal_probe(&probe, cfg.fresh_max_len, true)?;
    let dropped_ratio = (1..balanced.len())
        .map(|x| reversal_probe(&balanced.with_x(x)?, cfg.fresh_max_len, false))
        .sum::<Result<Probe>>()?;
    let all_pass = ids.iter().all(|i| i.tally.all_pass());
    Ok(VerifyReport { seed, identities: ids, unbalanced, dropped_ratio, all_pass })
}

/// Paths on which a reversal variant outside the proved statement fails.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Probe {
    pub paths: usize,
    pub mismatches: usize,
}

impl std::iter::Sum for Probe {
    fn sum<I: Iterator<Item = Self>>(it: I) -> Self {
        it.fold(Probe::default(), |a, b| Probe { paths: a.paths + b.paths, mismatches: a.mismatches + b.mismatches })
    }
}

/// Both sides of the fresh reversal computed without the balance guard,
/// with or without the leading weight ratio.
fn reversal_probe(t: &MarkedTree, max_len: usize, with_ratio: bool) -> Result<Probe> {
    let g = t.digraph(true)?;
    let img = psi_transform(t, true)?;
    let ratio = if with_ratio { t.w_down[t.x()] / t.w_down[1] } else { 1.0 };
    let mut out = Probe::default();
    for path in fresh_arrivals(t, max_len)? {
        let rev: Vec<usize> = path.iter().rev().copied().collect();
        let mapped = img.map_path(&rev)?;
        let lhs = errw_path_probability(&g, &path)?;
        let rhs = ratio * errw_path_probability(&img.graph, &mapped[1..])?;
        out.paths += 1;
        out.mismatches += usize::from(rel(lhs, rhs) > PATH_TOL);
    }
    Ok(out)
}

/// Write to `out` or stdout.
pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
