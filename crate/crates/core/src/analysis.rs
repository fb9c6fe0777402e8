//! `L^p` norms, the projection `T_σ`, exponent selection and the Schur-test
//! constants that bound the Leibenson operators `T_k` on `A^p_λ(Ω_a)`.
//!
//! `T_k f(ξ) = ∫ Q(ξ, ξ') f(ξ') dv(ξ')` with
//! `Q(ξ, ξ') = C_σ h^σ(ξ') ∫₀¹ ∂K_σ/∂ξ_k (tξ, ξ') dt`. Every "sup over `Ω_a`"
//! is a max over sampled outer points with `h ≥ h_floor`; inner integrals use
//! importance sampling focused at the outer point.

use num::complex::Complex64;
use serde::Serialize;

use crate::egg_domain::{pairings, CPoint, EggDomain};
use crate::error::{Error, Result};
use crate::kernel::{g_sigma_abs_sqr, gradient_factors, kernel_unchecked, lemma2_ratio, t_integral, t_scale, KernelParams};
use crate::quadrature::{
    graded_rule, integrate_focused, integrate_weighted, scan_points, Estimate, SamplerSpec, WeightedMeasure,
};
use crate::taylor::FloatPoly;

/// Which half of the admissible `(p, λ)` range a space belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `p > 1`, `λ ≥ 0`.
    Reflexive,
    /// `p = 1`, `λ > −1`.
    L1,
}

/// `A^p_λ`: exponent `p ≥ 1` and weight `λ > −1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceParams {
    p: f64,
    lambda: f64,
}

impl SpaceParams {
    pub fn new(p: f64, lambda: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
        }
        if !(lambda > -1.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must exceed -1")));
        }
        Ok(SpaceParams { p, lambda })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Conjugate exponent `p/(p−1)`; `None` for `p = 1`.
    pub fn q(&self) -> Option<f64> {
        (self.p > 1.0).then(|| self.p / (self.p - 1.0))
    }

    /// The regime covered by the boundedness theorem, if any.
    pub fn regime(&self) -> Option<Regime> {
        if self.p > 1.0 && self.lambda >= 0.0 {
            Some(Regime::Reflexive)
        } else if self.p == 1.0 {
            Some(Regime::L1)
        } else {
            None
        }
    }
}

/// Weight exponent `σ` of the reproducing formula and Schur exponent `d`
/// (absent for `p = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentChoice {
    pub sigma: f64,
    pub d: Option<f64>,
}

impl ExponentChoice {
    /// `0 < λ + 1 < p(σ + 1)`.
    pub fn reproduces(&self, sp: &SpaceParams) -> bool {
        let lhs = sp.lambda + 1.0;
        lhs > 0.0 && lhs < sp.p * (self.sigma + 1.0)
    }

    /// For `p > 1`: `d ∈ (0, σ+1) ∩ (−σ/(p−1), 1/(p−1))`.
    pub fn d_admissible(&self, sp: &SpaceParams) -> bool {
        match (self.d, sp.regime()) {
            (Some(d), Some(Regime::Reflexive)) => {
                let (lo, hi) = d_interval(self.sigma, sp.p);
                d > lo && d < hi
            }
            (None, Some(Regime::L1)) => true,
            _ => false,
        }
    }
}

fn d_interval(sigma: f64, p: f64) -> (f64, f64) {
    let lo = 0.0f64.max(-sigma / (p - 1.0));
    let hi = (sigma + 1.0).min(1.0 / (p - 1.0));
    (lo, hi)
}

/// Interval-midpoint choices: `σ = max((λ+1)/p − 1, 0) + 1` and `d` the
/// midpoint of its interval when `p > 1`; `σ = λ + 1` when `p = 1`.
pub fn choose_exponents(sp: &SpaceParams) -> Result<ExponentChoice> {
    let choice = match sp.regime() {
        Some(Regime::Reflexive) => {
            let sigma = ((sp.lambda + 1.0) / sp.p - 1.0).max(0.0) + 1.0;
            let (lo, hi) = d_interval(sigma, sp.p);
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!("empty interval for d: ({lo}, {hi})")));
            }
            ExponentChoice {
                sigma,
                d: Some(0.5 * (lo + hi)),
            }
        }
        Some(Regime::L1) => ExponentChoice {
            sigma: sp.lambda + 1.0,
            d: None,
        },
        None => {
            return Err(Error::InvalidParameter(format!(
                "(p, lambda) = ({}, {}) is outside the covered range",
                sp.p, sp.lambda
            )))
        }
    };
    debug_assert!(choice.reproduces(sp) && choice.d_admissible(sp));
    Ok(choice)
}

/// `(∫ h^λ |f|^p dv)^{1/p}` with a delta-method standard error.
pub fn lp_norm<F>(d: &EggDomain, sp: &SpaceParams, f: F, spec: &SamplerSpec) -> Result<Estimate<f64>>
where
    F: Fn(&CPoint) -> Complex64 + Sync,
{
    let mu = WeightedMeasure::new(sp.lambda)?;
    let p = sp.p;
    let est = integrate_weighted(d, &mu, |x| Complex64::new(f(x).norm().powf(p), 0.0), spec)?;
    let integral = est.value.re;
    let value = integral.powf(1.0 / p);
    let std_error = if integral > 0.0 {
        est.std_error * value / (p * integral)
    } else {
        0.0
    };
    Ok(Estimate {
        value,
        std_error,
        samples: est.samples,
    })
}

/// `T_σ f(ξ) = C_σ ∫ h^σ(ξ') K_σ(ξ, ξ') f(ξ') dv(ξ')` by Monte-Carlo.
pub fn projection_apply<F>(kp: &KernelParams, f: F, at: &CPoint, spec: &SamplerSpec) -> Result<Estimate<Complex64>>
where
    F: Fn(&CPoint) -> Complex64 + Sync,
{
    let d = kp.domain();
    d.check_point(at)?;
    if !d.contains(at) {
        return Err(Error::Domain(format!("{at} is not an interior point")));
    }
    let mu = WeightedMeasure::new(kp.sigma())?;
    let c = kp.c_sigma();
    integrate_weighted(d, &mu, |q| c * kernel_unchecked(kp, at, q) * f(q), spec)
}

/// `Q_k(p, q)` for every flat coordinate `k` in one pass.
fn q_all_unchecked(kp: &KernelParams, p: &CPoint, q: &CPoint) -> Vec<Complex64> {
    let (x, y) = pairings(p, q);
    let (mut ia, mut ib) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (t, w) in graded_rule(t_scale(kp.domain().a(), x, y)) {
        let (fa, fb) = gradient_factors(kp, x * t, y * t);
        ia += fa * w;
        ib += fb * w;
    }
    let front = kp.c_sigma() * kp.domain().h_unchecked(q).powf(kp.sigma());
    q.z.iter()
        .map(|c| c.conj() * ia * front)
        .chain(q.w.iter().map(|c| c.conj() * ib * front))
        .collect()
}

fn q_one_unchecked(kp: &KernelParams, k: usize, p: &CPoint, q: &CPoint) -> Complex64 {
    let n = kp.domain().n();
    let (x, y) = pairings(p, q);
    let mut acc = Complex64::new(0.0, 0.0);
    for (t, w) in graded_rule(t_scale(kp.domain().a(), x, y)) {
        let (fa, fb) = gradient_factors(kp, x * t, y * t);
        acc += if k < n { fa } else { fb } * w;
    }
    let front = kp.c_sigma() * kp.domain().h_unchecked(q).powf(kp.sigma());
    q.coord(k).conj() * acc * front
}

fn check_pair(kp: &KernelParams, k: usize, p: &CPoint, q: &CPoint) -> Result<()> {
    let d = kp.domain();
    if k >= d.dim() {
        return Err(Error::InvalidParameter(format!("coordinate index {k} out of range")));
    }
    for x in [p, q] {
        d.check_point(x)?;
        if !d.contains(x) {
            return Err(Error::Domain(format!("{x} is not an interior point")));
        }
    }
    Ok(())
}

/// `Q_k(p, q) = C_σ h^σ(q) ∫₀¹ ∂K_σ/∂ξ_k (tp, q) dt`, graded Gauss-Legendre in `t`.
pub fn q_kernel(kp: &KernelParams, k: usize, p: &CPoint, q: &CPoint) -> Result<Complex64> {
    check_pair(kp, k, p, q)?;
    Ok(q_one_unchecked(kp, k, p, q))
}

/// `Q_k(p, q)` for all `k`.
pub fn q_kernel_all(kp: &KernelParams, p: &CPoint, q: &CPoint) -> Result<Vec<Complex64>> {
    check_pair(kp, 0, p, q)?;
    Ok(q_all_unchecked(kp, p, q))
}

/// `|Q_k(p, q)| / ∫₀¹ h^σ(q) |G_σ(tp, q)|² dt`, the constant hidden in the
/// pointwise bound of `Q` by `G_σ`.
pub fn q_bound_ratio(kp: &KernelParams, k: usize, p: &CPoint, q: &CPoint) -> Result<f64> {
    check_pair(kp, k, p, q)?;
    let (x, y) = pairings(p, q);
    let g = t_integral(kp.domain().a(), x, y, |t| g_sigma_abs_sqr(kp, x * t, y * t));
    let hs = kp.domain().h_unchecked(q).powf(kp.sigma());
    Ok(q_one_unchecked(kp, k, p, q).norm() / (hs * g))
}

/// Outer-point scan: the largest inner estimate and where it occurred.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub sup: f64,
    pub std_error: f64,
    pub argmax: CPoint,
    pub outer: usize,
    pub inner_samples: usize,
}

/// Outer-point budget and placement for a sup-scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSpec {
    pub outer: usize,
    pub h_floor: f64,
    pub seed: u64,
}

impl ScanSpec {
    pub fn new(outer: usize, h_floor: f64, seed: u64) -> Result<Self> {
        if outer == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(h_floor > 0.0 && h_floor < 1.0) {
            return Err(Error::InvalidParameter(format!("h-floor {h_floor} must lie in (0, 1)")));
        }
        Ok(ScanSpec { outer, h_floor, seed })
    }
}

/// Max of `inner(ξ)` over the outer points of `scan`; ties keep the first.
pub fn sup_scan<F>(d: &EggDomain, scan: &ScanSpec, inner: F) -> Result<SupEstimate>
where
    F: Fn(&CPoint) -> Result<Estimate<f64>>,
{
    let pts = scan_points(d, scan.outer, scan.h_floor, scan.seed)?;
    let mut best: Option<(Estimate<f64>, CPoint)> = None;
    for p in pts {
        let est = inner(&p)?;
        if !est.value.is_finite() {
            return Err(Error::NonFinite {
                index: 0,
                point: p.to_string(),
                value: est.value.to_string(),
            });
        }
        if best.as_ref().is_none_or(|(b, _)| est.value > b.value) {
            best = Some((est, p));
        }
    }
    let (est, argmax) = best.ok_or(Error::EmptyGrid)?;
    Ok(SupEstimate {
        sup: est.value,
        std_error: est.std_error,
        argmax,
        outer: scan.outer,
        inner_samples: est.samples,
    })
}

fn real_estimate(est: Estimate<Complex64>, scale: f64) -> Estimate<f64> {
    Estimate {
        value: est.value.re * scale,
        std_error: est.std_error * scale,
        samples: est.samples,
    }
}

/// Empirical Schur constants for `T_k`, test function `g = h^{−d/q}` and
/// measure `dv_λ`:
///
/// `C8 = sup_ξ h^d(ξ) ∫ |Q(ξ,ξ')| h^{λ−d}(ξ') dv(ξ')`,
/// `C9 = sup_ξ' h^{d(p−1)}(ξ') ∫ |Q(ξ,ξ')| h^{λ−d(p−1)}(ξ) dv(ξ)`.
pub fn schur_test(
    kp: &KernelParams,
    sp: &SpaceParams,
    ec: &ExponentChoice,
    k: usize,
    scan: &ScanSpec,
    spec: &SamplerSpec,
) -> Result<(SupEstimate, SupEstimate)> {
    if sp.regime() != Some(Regime::Reflexive) {
        return Err(Error::InvalidParameter(format!(
            "the Schur test needs p > 1 and lambda >= 0, got p = {}, lambda = {}",
            sp.p, sp.lambda
        )));
    }
    let d = ec
        .d
        .ok_or_else(|| Error::InvalidParameter("the Schur test needs an exponent d".into()))?;
    if (ec.sigma - kp.sigma()).abs() > 0.0 {
        return Err(Error::InvalidParameter(format!(
            "kernel solved for sigma = {} but the exponent choice has {}",
            kp.sigma(),
            ec.sigma
        )));
    }
    let dom = kp.domain();
    if k >= dom.dim() {
        return Err(Error::InvalidParameter(format!("coordinate index {k} out of range")));
    }
    let dp = d * (sp.p - 1.0);
    let mu8 = WeightedMeasure::new(sp.lambda - d)?;
    let mu9 = WeightedMeasure::new(sp.lambda - dp)?;
    let c8 = sup_scan(dom, scan, |xi| {
        let est = integrate_focused(dom, &mu8, xi, |xp| Complex64::new(q_one_unchecked(kp, k, xi, xp).norm(), 0.0), spec)?;
        Ok(real_estimate(est, dom.h_unchecked(xi).powf(d)))
    })?;
    let c9 = sup_scan(dom, &ScanSpec { seed: scan.seed ^ 0x9e37_79b9, ..*scan }, |xp| {
        let est = integrate_focused(dom, &mu9, xp, |xi| Complex64::new(q_one_unchecked(kp, k, xi, xp).norm(), 0.0), spec)?;
        Ok(real_estimate(est, dom.h_unchecked(xp).powf(dp)))
    })?;
    Ok((c8, c9))
}

/// `sup_ξ' h^{−λ}(ξ') ∫ |Q(ξ,ξ')| dv_λ(ξ)` for `p = 1`.
pub fn l1_check(kp: &KernelParams, lambda: f64, k: usize, scan: &ScanSpec, spec: &SamplerSpec) -> Result<SupEstimate> {
    let mu = WeightedMeasure::new(lambda)?;
    if !(kp.sigma() > lambda) {
        return Err(Error::InvalidParameter(format!(
            "sigma = {} must exceed lambda = {lambda}",
            kp.sigma()
        )));
    }
    let dom = kp.domain();
    if k >= dom.dim() {
        return Err(Error::InvalidParameter(format!("coordinate index {k} out of range")));
    }
    sup_scan(dom, scan, |xp| {
        let est = integrate_focused(dom, &mu, xp, |xi| Complex64::new(q_one_unchecked(kp, k, xi, xp).norm(), 0.0), spec)?;
        Ok(real_estimate(est, dom.h_unchecked(xp).powf(-lambda)))
    })
}

/// Both evaluations of `h^{d(p−1)+σ}(ξ') ∫₀¹∫ h^{−d(p−1)}(ξ) |G_σ(tξ, ξ')|² dv(ξ) dt`:
/// directly, and through `|G_σ(tξ, ξ')| = |G_σ(tξ', ξ)|` through `lemma2_ratio`
/// with exponent `σ + d(p−1)` at `ξ'`. The two use independent sample streams.
pub fn bound16_pair(
    kp: &KernelParams,
    sp: &SpaceParams,
    d: f64,
    at: &CPoint,
    spec: &SamplerSpec,
) -> Result<(Estimate<f64>, Estimate<f64>)> {
    let dom = kp.domain();
    let dp = d * (sp.p - 1.0);
    let mu = WeightedMeasure::new(-dp)?;
    let direct = integrate_focused(
        dom,
        &mu,
        at,
        |xi| {
            let (x, y) = pairings(xi, at);
            Complex64::new(t_integral(dom.a(), x, y, |t| g_sigma_abs_sqr(kp, x * t, y * t)), 0.0)
        },
        spec,
    )?;
    let direct = real_estimate(direct, dom.h_unchecked(at).powf(dp + kp.sigma()));
    let via_symmetry = lemma2_ratio(kp, kp.sigma() + dp, at, &spec.with_seed(spec.seed() ^ 0x5851_f42d))?;
    Ok((direct, via_symmetry))
}

/// `max_{f, k} ‖ξ_k T_k f‖ / ‖f‖` in `A^p_λ`, and the maximizing `(family index, k)`.
pub fn operator_norm_estimate(
    d: &EggDomain,
    sp: &SpaceParams,
    family: &[FloatPoly],
    spec: &SamplerSpec,
) -> Result<(f64, (usize, usize))> {
    if family.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for (i, f) in family.iter().enumerate() {
        if f.nvars() != d.dim() {
            return Err(Error::DimensionMismatch {
                expected: d.dim(),
                found: f.nvars(),
            });
        }
        let base = lp_norm(d, sp, |x| f.evaluate_flat(&x.flat()).unwrap_or_default(), spec)?.value;
        if base == 0.0 {
            continue;
        }
        for k in 0..d.dim() {
            let g = f.leibenson_component(k)?.mul_coordinate(k)?;
            let num = lp_norm(d, sp, |x| g.evaluate_flat(&x.flat()).unwrap_or_default(), spec)?.value;
            if num / base > best.0 {
                best = (num / base, (i, k));
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::EmptyGrid);
    }
    Ok(best)
}
