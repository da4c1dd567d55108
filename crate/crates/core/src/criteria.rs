//! Closed-form regime classification: transience, the trap exponent r and
//! the positive-speed criteria.

use serde::{Deserialize, Serialize};

use crate::branching::OffspringDistribution;
use crate::error::{Error, Result};
use crate::specfun::ln_gamma_pos;
use crate::Params;

/// Required accuracy of the phi_0 and r roots.
pub const ROOT_RESIDUAL: f64 = 1e-10;
/// Criterion values this close to zero are reported as boundary points.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransienceCase {
    /// p_1 = 1: a half-line.
    Ray,
    /// alpha_c > 1/(m-1).
    Large,
    /// alpha_c <= 1/(m-1), where the critical alpha_p is phi_0.
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transience {
    pub transient: bool,
    pub phi0: Option<f64>,
    pub case: TransienceCase,
}

/// ln E[A^t] = ln Gamma(ap - t) Gamma(ac + t) / (Gamma(ac) Gamma(ap)).
fn ln_moment_a(p: &Params, t: f64) -> f64 {
    ln_gamma_pos(p.alpha_p - t) + ln_gamma_pos(p.alpha_c + t) - ln_gamma_pos(p.alpha_c) - ln_gamma_pos(p.alpha_p)
}

/// ln E[A^{-k}] = ln Gamma(ap+k) Gamma(ac-k) / (Gamma(ap) Gamma(ac)), k < ac.
pub fn ln_inverse_moment_a(p: &Params, k: f64) -> Result<f64> {
    if !(k < p.alpha_c) || !(p.alpha_p + k > 0.0) {
        return Err(Error::DivergentMoment(p.alpha_c - k));
    }
    Ok(ln_gamma_pos(p.alpha_p + k) + ln_gamma_pos(p.alpha_c - k) - ln_gamma_pos(p.alpha_p) - ln_gamma_pos(p.alpha_c))
}

fn require_supercritical(dist: &OffspringDistribution) -> Result<()> {
    if dist.is_ray() {
        return Ok(());
    }
    dist.require_supported()
}

/// Transience test through the minimum over t in [0, 1] of E[A^t], which is
/// attained at t = clamp((ap - ac)/2, 0, 1): transient iff it exceeds 1/m.
pub fn transient_by_minimization(p: &Params, dist: &OffspringDistribution) -> Result<bool> {
    require_supercritical(dist)?;
    if dist.is_ray() {
        return Ok(p.alpha_c > p.alpha_p);
    }
    let t = ((p.alpha_p - p.alpha_c) / 2.0).clamp(0.0, 1.0);
    Ok(ln_moment_a(p, t) > -dist.mean().ln())
}

/// The root phi_0 in (ac, ac + 2] of
/// Gamma((phi + ac)/2)^2 / (Gamma(phi) Gamma(ac)) = 1/m, for ac <= 1/(m-1).
pub fn phi0(alpha_c: f64, m: f64) -> Result<f64> {
    if !(m > 1.0) {
        return Err(Error::Unsupported(format!("offspring mean {m} is not supercritical")));
    }
    if alpha_c > 1.0 / (m - 1.0) {
        return Err(Error::Domain(format!("alpha_c = {alpha_c} exceeds 1/(m-1); phi_0 is not defined")));
    }
    let ln_m = m.ln();
    let h = |phi: f64| {
        2.0 * ln_gamma_pos((phi + alpha_c) / 2.0) - ln_gamma_pos(phi) - ln_gamma_pos(alpha_c) + ln_m
    };
    // h(ac) = ln m > 0 and h(ac + 2) = ln(m ac / (ac + 1)) <= 0.
    let mut lo = alpha_c;
    let mut hi = alpha_c + 2.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    let residual = (2.0 * ln_gamma_pos((root + alpha_c) / 2.0) - ln_gamma_pos(root) - ln_gamma_pos(alpha_c)).exp()
        - 1.0 / m;
    if residual.abs() > ROOT_RESIDUAL {
        return Err(Error::Inconsistent(format!("phi_0 residual {residual}")));
    }
    Ok(root)
}

pub fn classify_transience(p: &Params, dist: &OffspringDistribution) -> Result<Transience> {
    require_supercritical(dist)?;
    if dist.is_ray() {
        return Ok(Transience { transient: p.alpha_c > p.alpha_p, phi0: None, case: TransienceCase::Ray });
    }
    let m = dist.mean();
    if p.alpha_c > 1.0 / (m - 1.0) {
        return Ok(Transience { transient: p.alpha_p < m * p.alpha_c + 1.0, phi0: None, case: TransienceCase::Large });
    }
    let root = phi0(p.alpha_c, m)?;
    Ok(Transience { transient: p.alpha_p < root, phi0: Some(root), case: TransienceCase::Small })
}

/// r = sup{k : E[A^{-k}] f'(q) < 1}, without checking transience.
pub fn r_exponent(p: &Params, dist: &OffspringDistribution) -> Result<f64> {
    require_supercritical(dist)?;
    if dist.is_ray() {
        // f'(q) = 1: E[A^{-k}] = 1 at k = ac - ap and the moment grows past it.
        return Ok((p.alpha_c - p.alpha_p).max(0.0));
    }
    let fq = dist.fprime_at_q()?;
    if fq >= 1.0 {
        return Err(Error::Inconsistent(format!("f'(q) = {fq} >= 1 for a supercritical law")));
    }
    if fq == 0.0 {
        return Ok(p.alpha_c);
    }
    let ln_fq = fq.ln();
    let g = |k: f64| ln_inverse_moment_a(p, k).map(|v| v + ln_fq);
    // g < 0 at the lower end, where E[A^{-k}] <= 1, and increases to the pole.
    let mut lo = (p.alpha_c - p.alpha_p).max(0.0);
    let mut gap = 1e-9_f64.min(p.alpha_c * 0.5);
    let mut hi = p.alpha_c - gap;
    while g(hi)? <= 0.0 {
        lo = hi;
        gap *= 1e-3;
        hi = p.alpha_c - gap;
        if gap < p.alpha_c * f64::EPSILON * 4.0 {
            // indistinguishable from the pole
            return Ok(hi);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    let residual = g(r)?.exp() - 1.0;
    if residual.abs() > ROOT_RESIDUAL {
        return Err(Error::Inconsistent(format!("r residual {residual}")));
    }
    Ok(r)
}

/// Monte Carlo estimate (mean, standard error) of E[A^{-k}], 0 <= k < ac.
///
/// Plain sampling of (eta_0/eta_1)^k has infinite variance once 2k >= ac,
/// so the pair is drawn from Dirichlet(ap, ac - k) and reweighted by the
/// density ratio, which leaves the bounded integrand c * eta_0^k.
pub fn inverse_moment_monte_carlo<R: rand::Rng + ?Sized>(
    p: &Params,
    k: f64,
    n: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(0.0..p.alpha_c).contains(&k) {
        return Err(Error::DivergentMoment(p.alpha_c - k));
    }
    let a = p.alpha_c - k;
    let ln_c = ln_gamma_pos(p.alpha_p + p.alpha_c) - ln_gamma_pos(p.alpha_c) - ln_gamma_pos(p.alpha_p + a)
        + ln_gamma_pos(a);
    let c = ln_c.exp();
    let mut s = 0.0;
    let mut s2 = 0.0;
    for _ in 0..n {
        let d = crate::dirichlet::sample_dirichlet(&[p.alpha_p, a], rng)?;
        let x = c * d[0].powf(k);
        s += x;
        s2 += x * x;
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

/// r for a transient parameter point.
pub fn compute_r(p: &Params, dist: &OffspringDistribution) -> Result<f64> {
    if !classify_transience(p, dist)?.transient {
        return Err(Error::Unsupported("r is only reported in the transient regime".into()));
    }
    r_exponent(p, dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    P0ZeroP1Pos,
    P0ZeroP1Zero,
    P0Pos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub alpha_p: f64,
    pub alpha_c: f64,
    pub transient: bool,
    pub phi0: Option<f64>,
    pub r: Option<f64>,
    pub d: usize,
    pub m: f64,
    pub q: f64,
    pub fprime_q: f64,
    pub case_tag: CaseTag,
    pub positive_speed: bool,
    /// Left side of the positive-speed inequality for this case.
    pub criterion_value: Option<f64>,
    pub at_boundary: bool,
    /// Finite support makes the moment condition automatic.
    pub moment_ok: bool,
}

pub fn case_tag(dist: &OffspringDistribution) -> CaseTag {
    if dist.p(0) > 0.0 {
        CaseTag::P0Pos
    } else if dist.p(1) > 0.0 {
        CaseTag::P0ZeroP1Pos
    } else {
        CaseTag::P0ZeroP1Zero
    }
}

/// Positive-speed criterion value, evaluated whether or not the point is
/// transient.
pub fn criterion_value(p: &Params, dist: &OffspringDistribution) -> Result<f64> {
    let (ap, ac) = (p.alpha_p, p.alpha_c);
    Ok(match case_tag(dist) {
        CaseTag::P0ZeroP1Pos => 2.0 * r_exponent(p, dist)? - ac + ap - 1.0,
        CaseTag::P0ZeroP1Zero => {
            let d = dist.min_support().expect("supercritical law has d") as f64;
            (2.0 * d - 1.0) * ac + ap - 1.0
        }
        CaseTag::P0Pos => r_exponent(p, dist)? - ac + ap - 1.0,
    })
}

/// The p_0 > 0 criterion in the form (alpha_p - 1)/alpha_c > f'(q).
pub fn leaf_criterion_alternative(p: &Params, dist: &OffspringDistribution) -> Result<bool> {
    Ok((p.alpha_p - 1.0) / p.alpha_c > dist.fprime_at_q()?)
}

pub fn classify_speed(p: &Params, dist: &OffspringDistribution) -> Result<RegimeReport> {
    let tr = classify_transience(p, dist)?;
    let d = dist.min_support().unwrap_or(0);
    let q = dist.extinction_prob()?;
    let fprime_q = if dist.is_ray() { 1.0 } else { dist.fprime_at_q()? };
    let (r, value) = if tr.transient {
        (Some(r_exponent(p, dist)?), Some(criterion_value(p, dist)?))
    } else {
        (None, None)
    };
    let at_boundary = value.is_some_and(|v| v.abs() <= BOUNDARY_TOL);
    let positive_speed = tr.transient && !at_boundary && value.is_some_and(|v| v > 0.0);
    Ok(RegimeReport {
        alpha_p: p.alpha_p,
        alpha_c: p.alpha_c,
        transient: tr.transient,
        phi0: tr.phi0,
        r,
        d,
        m: dist.mean(),
        q,
        fprime_q,
        case_tag: case_tag(dist),
        positive_speed,
        criterion_value: value,
        at_boundary,
        moment_ok: true,
    })
}
