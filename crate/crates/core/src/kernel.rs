//! The weighted Bergman kernel of `Ω_a`
//!
//! `K_σ(ξ, ξ') = Σ_{k=0}^{n+1} c_k (1 − ⟨z,z'⟩)^{ak−n−1} / ((1 − ⟨z,z'⟩)^a − ⟨w,w'⟩)^{σ+m+k}`
//!
//! with coefficients recovered from the reproducing property on monomials,
//! the comparison function `G_σ`, first-argument derivatives of `K_σ`, and
//! the ratios whose boundedness drives the integral estimates.
//!
//! Expanding each term in powers of `⟨w,w'⟩` and then `⟨z,z'⟩` gives the
//! coefficient of `(z z̄')^β (w w̄')^γ` in the `k`-th term as
//!
//! `(σ+m+k)_l / l! · (E_l)_j / β! · l! / γ!`,  `j = |β|`, `l = |γ|`, `E_l = a(σ+m+l)+n+1`,
//!
//! and reproducing `ξ^α` forces `Σ_k c_k · coefficient · ‖ξ^α‖²_σ = 1`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num::complex::Complex64;
use num::Zero;

use crate::egg_domain::{pairings, CPoint, EggDomain};
use crate::error::{Error, Result};
use crate::gamma_tools::{log_gamma, log_gamma_diff};
use crate::quadrature::{
    graded_rule, integrate_focused, log_monomial_moment, psi_norm_integral, scan_points, weighted_volume, Estimate,
    SamplerSpec, WeightedMeasure,
};
use crate::taylor::MultiIndex;

/// Largest `|β|` among the coefficient-system rows.
const ROW_Z_DEGREE: u32 = 2;
/// Extra `|γ|` levels beyond the `n + 2` unknowns.
const ROW_W_SURPLUS: u32 = 4;
/// Largest admissible coefficient-system residual.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// `K_σ` on a fixed domain: `c_0 … c_{n+1}` and the normalization `C_σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    domain: EggDomain,
    sigma: f64,
    coeffs: Vec<f64>,
    c_sigma: f64,
    residual: f64,
}

impl KernelParams {
    /// Validated assembly from stored parts; the residual is recomputed.
    pub fn from_parts(domain: EggDomain, sigma: f64, coeffs: Vec<f64>, c_sigma: f64) -> Result<Self> {
        WeightedMeasure::new(sigma)?;
        if coeffs.len() != domain.n() + 2 {
            return Err(Error::DimensionMismatch {
                expected: domain.n() + 2,
                found: coeffs.len(),
            });
        }
        if !(c_sigma > 0.0) || !c_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("normalization {c_sigma} must be positive")));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite kernel coefficient".into()));
        }
        let (matrix, rhs) = coefficient_system(&domain, sigma)?;
        let residual = system_residual(&matrix, &rhs, &coeffs);
        Ok(KernelParams {
            domain,
            sigma,
            coeffs,
            c_sigma,
            residual,
        })
    }

    pub fn domain(&self) -> &EggDomain {
        &self.domain
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn c_sigma(&self) -> f64 {
        self.c_sigma
    }

    /// Largest absolute row defect `|Σ_k M_k(α) c_k − 1|` of the monomial system.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Text record: one `key = value` line per field.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let coeffs: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "n = {}", self.domain.n());
        let _ = writeln!(out, "m = {}", self.domain.m());
        let _ = writeln!(out, "a = {}", self.domain.a());
        let _ = writeln!(out, "sigma = {}", self.sigma);
        let _ = writeln!(out, "coeffs = {}", coeffs.join(" "));
        let _ = writeln!(out, "c_sigma = {}", self.c_sigma);
        let _ = writeln!(out, "residual = {:e}", self.residual);
        out
    }

    /// Parse a record written by [`to_record`](Self::to_record). The stored
    /// residual is ignored and recomputed.
    pub fn from_record(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("kernel record line {line:?} lacks '='")))?;
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .ok_or_else(|| Error::Parse(format!("kernel record lacks {key}")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("kernel record {key}: {e}")))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("kernel record {key}: {e}")))
        };
        let coeffs = get("coeffs")?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("kernel record coeffs: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        let domain = EggDomain::new(int("n")?, int("m")?, num("a")?)?;
        Self::from_parts(domain, num("sigma")?, coeffs, num("c_sigma")?)
    }
}

/// Rows `M_k(α)` (one per monomial `α = (β, γ)` with `|β| ≤ 2`, `|γ| ≤ n + 5`)
/// and the unit right-hand side.
fn coefficient_system(d: &EggDomain, sigma: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (n, m, a) = (d.n(), d.m(), d.a());
    let (nf, mf) = (n as f64, m as f64);
    let unknowns = n + 2;
    let lnfact = |k: u32| libm::lgamma(k as f64 + 1.0);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for j in 0..=ROW_Z_DEGREE {
        for beta in MultiIndex::all_of_degree(n, j) {
            for l in 0..=(unknowns as u32 + ROW_W_SURPLUS) {
                for gamma in MultiIndex::all_of_degree(m, l) {
                    let alpha: Vec<u32> = beta.as_slice().iter().chain(gamma.as_slice()).copied().collect();
                    let e_l = a * (sigma + mf + l as f64) + nf + 1.0;
                    let shared = log_gamma_diff(e_l, j as f64)
                        - beta.as_slice().iter().map(|&b| lnfact(b)).sum::<f64>()
                        - gamma.as_slice().iter().map(|&g| lnfact(g)).sum::<f64>()
                        + log_monomial_moment(d, sigma, &alpha);
                    let row = (0..unknowns)
                        .map(|k| {
                            // g_k(l)·l! = (σ+m+k)_l
                            (log_gamma_diff(sigma + mf + k as f64, l as f64) + shared).exp()
                        })
                        .collect();
                    rows.push(row);
                }
            }
        }
    }
    let matrix = DMatrix::from_fn(rows.len(), unknowns, |i, k| rows[i][k]);
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InconsistentSystem { residual: f64::INFINITY });
    }
    let rhs = DVector::from_element(rows.len(), 1.0);
    Ok((matrix, rhs))
}

fn system_residual(matrix: &DMatrix<f64>, rhs: &DVector<f64>, coeffs: &[f64]) -> f64 {
    let c = DVector::from_column_slice(coeffs);
    (matrix * c - rhs).amax()
}

/// Recover `c_0 … c_{n+1}` by least squares on the monomial system and fix
/// `C_σ` so that `T_σ 1 = 1`.
pub fn solve_kernel_coefficients(d: &EggDomain, sigma: f64) -> Result<KernelParams> {
    let mu = WeightedMeasure::new(sigma)?;
    let (matrix, rhs) = coefficient_system(d, sigma)?;
    // equilibrate columns; magnitudes differ by the growth of (σ+m+k)_l
    let scales: Vec<f64> = matrix.column_iter().map(|c| c.norm()).collect();
    let mut scaled = matrix.clone();
    for (k, s) in scales.iter().enumerate() {
        scaled.column_mut(k).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-13) {
        return Err(Error::InconsistentSystem {
            residual: f64::INFINITY,
        });
    }
    let y = svd
        .solve(&rhs, 0.0)
        .map_err(|_| Error::InconsistentSystem { residual: f64::INFINITY })?;
    let coeffs: Vec<f64> = y.iter().zip(&scales).map(|(v, s)| v / s).collect();
    let residual = system_residual(&matrix, &rhs, &coeffs);
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::InconsistentSystem { residual });
    }
    // T_σ 1(ξ) = C_σ K(ξ, 0) ∫ h^σ dv and K(ξ, 0) = Σ c_k
    let c_sigma = 1.0 / (coeffs.iter().sum::<f64>() * weighted_volume(d, &mu));
    log::debug!("kernel coefficients for {d:?}, sigma {sigma}: {coeffs:?}, residual {residual:e}");
    Ok(KernelParams {
        domain: *d,
        sigma,
        coeffs,
        c_sigma,
        residual,
    })
}

/// Weighted ball kernel `Γ(N+σ+1) / (π^N Γ(σ+1)) · (1 − ⟨ξ,ξ'⟩)^{−(N+1+σ)}`, `N = n + m`.
pub fn ball_kernel(n_total: usize, sigma: f64, p: &CPoint, q: &CPoint) -> Result<Complex64> {
    let nf = n_total as f64;
    let pf = p.flat();
    let qf = q.flat();
    if pf.len() != qf.len() {
        return Err(Error::DimensionMismatch {
            expected: pf.len(),
            found: qf.len(),
        });
    }
    let inner = crate::egg_domain::pairing(&pf, &qf)?;
    let front = (log_gamma(nf + sigma + 1.0)? - nf * PI.ln() - log_gamma(sigma + 1.0)?).exp();
    Ok(front * ((-(nf + 1.0 + sigma)) * (Complex64::new(1.0, 0.0) - inner).ln()).exp())
}

fn check_interior(d: &EggDomain, pts: [&CPoint; 2]) -> Result<()> {
    for p in pts {
        d.check_point(p)?;
        if !d.contains(p) {
            return Err(Error::Domain(format!("{p} is not an interior point")));
        }
    }
    Ok(())
}

/// `K_σ(p, q)`; powers of `(1 − ⟨z,z'⟩)` use the principal branch and powers
/// of the denominator its continuous branch from `q = 0`.
pub fn bergman_kernel(kp: &KernelParams, p: &CPoint, q: &CPoint) -> Result<Complex64> {
    check_interior(&kp.domain, [p, q])?;
    Ok(kernel_unchecked(kp, p, q))
}

pub(crate) fn kernel_unchecked(kp: &KernelParams, p: &CPoint, q: &CPoint) -> Complex64 {
    let (x, y) = pairings(p, q);
    let d = &kp.domain;
    let (l1, ld) = d.log_factors(x, y);
    let (n, m, a) = (d.n() as f64, d.m() as f64, d.a());
    kp.coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| {
            let kf = k as f64;
            *c * ((a * kf - n - 1.0) * l1 - (kp.sigma + m + kf) * ld).exp()
        })
        .sum()
}

/// `(A, B)` with `∂K/∂z_k = conj(z'_k)·A` and `∂K/∂w_k = conj(w'_k)·B`.
pub(crate) fn gradient_factors(kp: &KernelParams, x: Complex64, y: Complex64) -> (Complex64, Complex64) {
    let d = &kp.domain;
    let (l1, ld) = d.log_factors(x, y);
    let (n, m, a) = (d.n() as f64, d.m() as f64, d.a());
    // (1 − x)^a / D
    let inv_one_minus_ratio = (a * l1 - ld).exp();
    let mut fa = Complex64::zero();
    let mut fb = Complex64::zero();
    for (k, c) in kp.coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let kf = k as f64;
        let e1 = a * kf - n - 1.0;
        let e2 = kp.sigma + m + kf;
        let base = (e1 * l1 - e2 * ld).exp();
        fa += *c * base * (-l1).exp() * (-e1 + e2 * a * inv_one_minus_ratio);
        fb += *c * e2 * base * (-ld).exp();
    }
    (fa, fb)
}

/// All first-argument derivatives `∂K_σ/∂ξ_k (p, q)` in flat order.
pub fn kernel_gradient_all(kp: &KernelParams, p: &CPoint, q: &CPoint) -> Result<Vec<Complex64>> {
    check_interior(&kp.domain, [p, q])?;
    let (x, y) = pairings(p, q);
    let (fa, fb) = gradient_factors(kp, x, y);
    Ok(q.z.iter().map(|c| c.conj() * fa).chain(q.w.iter().map(|c| c.conj() * fb)).collect())
}

/// `∂K_σ/∂ξ_k (p, q)`.
pub fn kernel_gradient(kp: &KernelParams, k: usize, p: &CPoint, q: &CPoint) -> Result<Complex64> {
    if k >= kp.domain.dim() {
        return Err(Error::InvalidParameter(format!("coordinate index {k} out of range")));
    }
    Ok(kernel_gradient_all(kp, p, q)?[k])
}

/// Exponent of `(1 − ⟨z,z'⟩)` in `G_σ`.
fn g_exponent(d: &EggDomain) -> f64 {
    let (n, a) = (d.n() as f64, d.a());
    if a <= 1.0 {
        (a - 1.0) * (n + 2.0) / 2.0
    } else {
        (a - 1.0) * (n + 1.0) / 2.0
    }
}

/// Exponent of the kernel denominator in `G_σ`, `(σ+m+n+2)/2`.
fn g_denominator_exponent(kp: &KernelParams) -> f64 {
    (kp.sigma + (kp.domain.m() + kp.domain.n()) as f64 + 2.0) / 2.0
}

/// `G_σ(p, q) = (1 − ⟨z,z'⟩)^{g} / ((1 − ⟨z,z'⟩)^a − ⟨w,w'⟩)^{(σ+m+n+2)/2}` with
/// `g = (a−1)(n+2)/2` for `a ≤ 1` and `(a−1)(n+1)/2` for `a > 1`.
pub fn g_sigma(kp: &KernelParams, p: &CPoint, q: &CPoint) -> Result<Complex64> {
    check_interior(&kp.domain, [p, q])?;
    let (x, y) = pairings(p, q);
    let (l1, ld) = kp.domain.log_factors(x, y);
    Ok((g_exponent(&kp.domain) * l1 - g_denominator_exponent(kp) * ld).exp())
}

/// `|G_σ|²` from the pairings; branch independent.
#[inline]
pub(crate) fn g_sigma_abs_sqr(kp: &KernelParams, x: Complex64, y: Complex64) -> f64 {
    let (l1, ld) = kp.domain.log_factors(x, y);
    (2.0 * (g_exponent(&kp.domain) * l1.re - g_denominator_exponent(kp) * ld.re)).exp()
}

/// `|∂K_σ/∂ξ_k (p, q)| / |G_σ(p, q)|²`.
pub fn lemma1_ratio(kp: &KernelParams, k: usize, p: &CPoint, q: &CPoint) -> Result<f64> {
    let grad = kernel_gradient(kp, k, p, q)?;
    let (x, y) = pairings(p, q);
    Ok(grad.norm() / g_sigma_abs_sqr(kp, x, y))
}

/// Largest [`lemma1_ratio`] found by [`lemma1_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Scan {
    pub sup: f64,
    pub argmax: (CPoint, CPoint),
    pub coordinate: usize,
    pub pairs: usize,
}

/// Max of [`lemma1_ratio`] over every coordinate and `pairs` point pairs with
/// `h ≥ h_floor`. Pairs cycle through three shapes: diagonal `(ξ, ξ)`, the
/// same ray at an independent depth, and independent points.
pub fn lemma1_scan(kp: &KernelParams, pairs: usize, h_floor: f64, seed: u64) -> Result<Lemma1Scan> {
    use rayon::prelude::*;
    let d = &kp.domain;
    let first = scan_points(d, pairs, h_floor, seed)?;
    let second = scan_points(d, pairs, h_floor, seed ^ 0xa076_1d64_78bd_642f)?;
    let best = first
        .par_iter()
        .zip(second.par_iter())
        .enumerate()
        .map(|(i, (p, q))| -> Result<(f64, usize, CPoint, CPoint)> {
            let q = match i % 3 {
                0 => p.clone(),
                1 => d.point_at_level(p, d.h_unchecked(q).min(0.999))?,
                _ => q.clone(),
            };
            let grad = kernel_gradient_all(kp, p, &q)?;
            let (x, y) = pairings(p, &q);
            let g = g_sigma_abs_sqr(kp, x, y);
            let (k, v) = grad
                .iter()
                .enumerate()
                .map(|(k, v)| (k, v.norm() / g))
                .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            Ok((v, k, p.clone(), q))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Option<(f64, usize, CPoint, CPoint)> = None;
    for cand in best {
        if !cand.0.is_finite() {
            return Err(Error::NonFinite {
                index: 0,
                point: cand.2.to_string(),
                value: cand.0.to_string(),
            });
        }
        if out.as_ref().is_none_or(|o| cand.0 > o.0) {
            out = Some(cand);
        }
    }
    let (sup, coordinate, p, q) = out.ok_or(Error::EmptyGrid)?;
    Ok(Lemma1Scan {
        sup,
        argmax: (p, q),
        coordinate,
        pairs,
    })
}

/// Distance scale beyond `t = 1` of the nearest singularity of
/// `t ↦ F(tx, ty)` for the kernel-type integrands, `x = ⟨z,z'⟩`, `y = ⟨w,w'⟩`.
///
/// `|(1 − x)^a − y| ≥ |1 − x|^a − |y| > 0` for interior pairs; dividing by the
/// size of the `t`-derivative bounds the distance to a zero of the
/// denominator, and `1 − |x|` bounds the distance to the branch point of
/// `(1 − tx)`.
pub(crate) fn t_scale(a: f64, x: Complex64, y: Complex64) -> f64 {
    let one_x = (Complex64::new(1.0, 0.0) - x).norm();
    let gap = one_x.powf(a) - y.norm();
    let slope = a * one_x.powf(a - 1.0) + y.norm();
    (gap / slope).min(1.0 - x.norm()).max(0.0)
}

/// `∫₀¹ f(t) dt` on the graded rule for the pair `(x, y)`.
pub(crate) fn t_integral<F: Fn(f64) -> f64>(a: f64, x: Complex64, y: Complex64, f: F) -> f64 {
    graded_rule(t_scale(a, x, y)).iter().map(|(t, w)| w * f(*t)).sum()
}

fn check_lemma2_exponent(kp: &KernelParams, d: f64) -> Result<()> {
    if !(d > 0.0 && d < kp.sigma + 1.0) {
        return Err(Error::InvalidParameter(format!(
            "d = {d} must lie in (0, sigma + 1) = (0, {})",
            kp.sigma + 1.0
        )));
    }
    Ok(())
}

/// `h^d(ξ) · ∫₀¹ ∫ h^{σ−d}(ξ') |G_σ(tξ, ξ')|² dv(ξ') dt`, by Monte-Carlo in
/// `ξ'` (importance sampling focused at `ξ`) and the graded rule in `t`.
pub fn lemma2_ratio(kp: &KernelParams, d: f64, p: &CPoint, spec: &SamplerSpec) -> Result<Estimate<f64>> {
    check_lemma2_exponent(kp, d)?;
    check_interior(&kp.domain, [p, p])?;
    let mu = WeightedMeasure::new(kp.sigma - d)?;
    let est = integrate_focused(
        &kp.domain,
        &mu,
        p,
        |q| {
            let (x, y) = pairings(p, q);
            Complex64::new(t_integral(kp.domain.a(), x, y, |t| g_sigma_abs_sqr(kp, x * t, y * t)), 0.0)
        },
        spec,
    )?;
    let scale = kp.domain.h_unchecked(p).powf(d);
    Ok(Estimate {
        value: est.value.re * scale,
        std_error: est.std_error * scale,
        samples: est.samples,
    })
}

/// Series evaluation of the quantity in [`lemma2_ratio`].
///
/// `G_σ(tξ, ·) = Σ_l [(c)_l / l!] ψ_{l, al+b}(tξ, ·)` with `c = (σ+m+n+2)/2`
/// and `b = ac − g`. The `ψ_{l,·}` are mutually orthogonal, so the inner
/// integral is `Σ_l [(c)_l / l!]² ‖ψ_{l, al+b}(tξ, ·)‖²` in closed form; `t`
/// is integrated by Gauss-Legendre. Practical for `h(ξ)` above roughly `1e−3`.
pub fn lemma2_series(kp: &KernelParams, d: f64, p: &CPoint, max_terms: usize) -> Result<f64> {
    check_lemma2_exponent(kp, d)?;
    check_interior(&kp.domain, [p, p])?;
    let dom = &kp.domain;
    let a = dom.a();
    let c = g_denominator_exponent(kp);
    let b = a * c - g_exponent(dom);
    let s = kp.sigma - d;
    let rule = graded_rule(t_scale(a, Complex64::new(p.z_norm_sqr(), 0.0), Complex64::new(p.w_norm_sqr(), 0.0)));
    let mut total = 0.0;
    for (t, wt) in rule {
        let at = p.scaled(*t);
        let mut sum = 0.0;
        let mut converged = false;
        for l in 0..max_terms {
            let lf = l as f64;
            let front = (2.0 * (log_gamma_diff(c, lf) - libm::lgamma(lf + 1.0))).exp();
            let term = front * psi_norm_integral(dom, s, l as u32, a * lf + b, &at, max_terms)?;
            sum += term;
            if term <= 1e-15 * sum && l > 2 {
                converged = true;
                break;
            }
            if at.w_norm_sqr() == 0.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SeriesTruncated {
                terms: max_terms,
                tail: f64::NAN,
            });
        }
        total += wt * sum;
    }
    Ok(total * dom.h_unchecked(p).powf(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_weighted, monomial_moment};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Random interior point with `h ≥ floor`.
    fn interior(d: &EggDomain, rng: &mut ChaCha8Rng, floor: f64) -> CPoint {
        loop {
            let z: Vec<_> = (0..d.n()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let w: Vec<_> = (0..d.m()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let p = CPoint::new(z, w);
            if d.contains(&p) && d.h_unchecked(&p) >= floor {
                return p;
            }
        }
    }

    /// Coefficients from expanding `Π_{q=1}^n (a(u−1)+q)` in rising factorials
    /// `(u)_i`, `u = σ+m+1+l`: `c_0 = 0`, `c_{i+1} = e_i Γ(σ+m+1+i) / (π^{n+m} Γ(σ+1))`.
    fn closed_form_coeffs(d: &EggDomain, sigma: f64) -> Vec<f64> {
        let (n, m, a) = (d.n(), d.m() as f64, d.a());
        let poly = |u: f64| (1..=n).map(|q| a * (u - 1.0) + q as f64).product::<f64>();
        let rising = |u: f64, i: usize| (0..i).map(|r| u + r as f64).product::<f64>();
        let mut e = vec![0.0; n + 1];
        for r in 0..=n {
            // (−r)_i vanishes for i > r
            let u = -(r as f64);
            let known: f64 = (0..r).map(|i| e[i] * rising(u, i)).sum();
            e[r] = (poly(u) - known) / rising(u, r);
        }
        let mut out = vec![0.0];
        for (i, ei) in e.iter().enumerate() {
            let lg = libm::lgamma(sigma + m + 1.0 + i as f64) - (d.dim() as f64) * PI.ln() - libm::lgamma(sigma + 1.0);
            out.push(ei * lg.exp());
        }
        out
    }

    #[test]
    fn coefficients_match_closed_form() {
        for (n, m) in [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1)] {
            for a in [0.5, 0.75, 1.0, 1.5, 2.0] {
                for sigma in [-0.5, 0.0, 1.0, 2.5] {
                    let d = EggDomain::new(n, m, a).unwrap();
                    let kp = solve_kernel_coefficients(&d, sigma).unwrap();
                    assert!(kp.residual() <= RESIDUAL_TOL);
                    let exact = closed_form_coeffs(&d, sigma);
                    let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
                    for (got, want) in kp.coeffs().iter().zip(&exact) {
                        assert!(
                            (got - want).abs() <= 1e-8 * scale,
                            "n={n} m={m} a={a} sigma={sigma}: {:?} vs {exact:?}",
                            kp.coeffs()
                        );
                    }
                    assert!((kp.c_sigma() - 1.0).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn ball_case_keeps_only_the_top_term() {
        for (n, m) in [(1, 1), (2, 1), (1, 3)] {
            for sigma in [0.0, 1.0] {
                let d = EggDomain::new(n, m, 1.0).unwrap();
                let kp = solve_kernel_coefficients(&d, sigma).unwrap();
                let top = kp.coeffs()[n + 1];
                for ck in &kp.coeffs()[..=n] {
                    assert!(ck.abs() <= 1e-8 * top.abs());
                }
                let mut rng = ChaCha8Rng::seed_from_u64(5);
                for _ in 0..100 {
                    let p = interior(&d, &mut rng, 0.0);
                    let q = interior(&d, &mut rng, 0.0);
                    let k = bergman_kernel(&kp, &p, &q).unwrap();
                    let b = ball_kernel(n + m, sigma, &p, &q).unwrap();
                    assert!((k / b - 1.0).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn origin_and_symmetry() {
        let d = EggDomain::new(1, 1, 0.5).unwrap();
        let kp = solve_kernel_coefficients(&d, 0.0).unwrap();
        let sum: f64 = kp.coeffs().iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let p = interior(&d, &mut rng, 0.0);
            let q = interior(&d, &mut rng, 0.0);
            assert!((bergman_kernel(&kp, &p, &d.origin()).unwrap() - sum).norm() < 1e-12 * sum);
            let kpq = bergman_kernel(&kp, &p, &q).unwrap();
            let kqp = bergman_kernel(&kp, &q, &p).unwrap();
            assert!((kpq - kqp.conj()).norm() <= 1e-12 * kpq.norm().max(1.0));
        }
        let outside = CPoint::new(vec![c(1.2, 0.0)], vec![c(0.0, 0.0)]);
        assert!(bergman_kernel(&kp, &outside, &d.origin()).is_err());
        let boundary = CPoint::new(vec![c(1.0, 0.0)], vec![c(0.0, 0.0)]);
        assert!(bergman_kernel(&kp, &boundary, &d.origin()).is_err());
    }

    #[test]
    fn a_two_interior_is_continuous_across_principal_cut() {
        // the continuous branch differs from a principal power of D only where
        // D crosses the negative axis; both must give the same |K|
        let d = EggDomain::new(1, 1, 2.0).unwrap();
        let kp = solve_kernel_coefficients(&d, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = interior(&d, &mut rng, 0.0);
            let q = interior(&d, &mut rng, 0.0);
            let (x, y) = pairings(&p, &q);
            let (l1, ld) = d.log_factors(x, y);
            let direct = d.kernel_denominator(&p, &q).unwrap();
            assert!((ld.exp() - direct).norm() <= 1e-12 * direct.norm().max(1.0));
            assert!(bergman_kernel(&kp, &p, &q).unwrap().is_finite());
            let _ = l1;
        }
    }

    #[test]
    fn reproduces_monomials_by_quadrature() {
        let d = EggDomain::new(1, 1, 0.5).unwrap();
        let kp = solve_kernel_coefficients(&d, 0.0).unwrap();
        let mu = WeightedMeasure::new(0.0).unwrap();
        let spec = SamplerSpec::new(200_000, 11).unwrap();
        let at = CPoint::new(vec![c(0.2, 0.1)], vec![c(-0.1, 0.15)]);
        let f = |q: &CPoint| q.z[0] * q.w[0];
        let est = integrate_weighted(&d, &mu, |q| kp.c_sigma() * kernel_unchecked(&kp, &at, q) * f(q), &spec).unwrap();
        let norm = monomial_moment(&d, &mu, &[1, 1]).unwrap().sqrt();
        assert!((est.value - f(&at)).norm() / norm < 0.03, "{est:?} vs {}", f(&at));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for a in [0.5, 1.0, 2.0] {
            let d = EggDomain::new(1, 2, a).unwrap();
            let kp = solve_kernel_coefficients(&d, 0.5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let h = 1e-6;
            for _ in 0..30 {
                let p = interior(&d, &mut rng, 0.05);
                let q = interior(&d, &mut rng, 0.05);
                let grad = kernel_gradient_all(&kp, &p, &q).unwrap();
                for k in 0..d.dim() {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    *plus.coord_mut(k) += h;
                    *minus.coord_mut(k) -= h;
                    let fd = (kernel_unchecked(&kp, &plus, &q) - kernel_unchecked(&kp, &minus, &q)) / (2.0 * h);
                    assert!(
                        (fd - grad[k]).norm() <= 1e-5 * grad[k].norm().max(1e-3 * kernel_unchecked(&kp, &p, &q).norm()),
                        "a={a} k={k}: {fd} vs {}",
                        grad[k]
                    );
                    // holomorphic in p: the i-direction derivative is i·∂K
                    let mut iplus = p.clone();
                    let mut iminus = p.clone();
                    *iplus.coord_mut(k) += c(0.0, h);
                    *iminus.coord_mut(k) -= c(0.0, h);
                    let fdi = (kernel_unchecked(&kp, &iplus, &q) - kernel_unchecked(&kp, &iminus, &q)) / (2.0 * h);
                    assert!((fdi - c(0.0, 1.0) * grad[k]).norm() <= 1e-5 * grad[k].norm().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn gradient_at_origin() {
        // ∂K/∂z_1(0, q) = conj(z'_1) Σ_k c_k [(n+1−ak) + a(σ+m+k)]
        let d = EggDomain::new(1, 1, 0.5).unwrap();
        let kp = solve_kernel_coefficients(&d, 1.0).unwrap();
        let q = CPoint::new(vec![c(0.3, -0.2)], vec![c(0.1, 0.1)]);
        let grad = kernel_gradient_all(&kp, &d.origin(), &q).unwrap();
        let (n, m, a, s) = (1.0, 1.0, 0.5, 1.0);
        let za: f64 = kp
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, ck)| ck * ((n + 1.0 - a * k as f64) + a * (s + m + k as f64)))
            .sum();
        let wb: f64 = kp.coeffs().iter().enumerate().map(|(k, ck)| ck * (s + m + k as f64)).sum();
        assert!((grad[0] - q.z[0].conj() * za).norm() < 1e-12 * za.abs());
        assert!((grad[1] - q.w[0].conj() * wb).norm() < 1e-12 * wb.abs());
        assert!(kernel_gradient(&kp, 2, &d.origin(), &q).is_err());
    }

    #[test]
    fn g_sigma_examples_and_swap_symmetry() {
        for a in [0.5, 1.0, 2.0] {
            let d = EggDomain::new(2, 1, a).unwrap();
            let kp = solve_kernel_coefficients(&d, 0.0).unwrap();
            let o = d.origin();
            assert!((g_sigma(&kp, &o, &o).unwrap() - 1.0).norm() < 1e-15);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..50 {
                let p = interior(&d, &mut rng, 0.0);
                let q = interior(&d, &mut rng, 0.0);
                let t: f64 = rng.gen_range(0.0..1.0);
                let g1 = g_sigma(&kp, &p.scaled(t), &q).unwrap().norm();
                let g2 = g_sigma(&kp, &q.scaled(t), &p).unwrap().norm();
                assert!((g1 - g2).abs() <= 1e-12 * g1);
                if a == 1.0 {
                    let inner = crate::egg_domain::pairing(&p.flat(), &q.flat()).unwrap();
                    let direct = ((-2.5) * (Complex64::new(1.0, 0.0) - inner).ln()).exp();
                    assert!((g_sigma(&kp, &p, &q).unwrap() - direct).norm() < 1e-12 * direct.norm());
                }
            }
        }
    }

    #[test]
    fn lemma1_ratio_stays_bounded_toward_the_boundary() {
        for a in [0.5, 1.0, 2.0] {
            let d = EggDomain::new(1, 1, a).unwrap();
            let kp = solve_kernel_coefficients(&d, 0.0).unwrap();
            let pts = scan_points(&d, 400, 1e-6, 3).unwrap();
            let mut sup: f64 = 0.0;
            for p in &pts {
                for k in 0..2 {
                    sup = sup.max(lemma1_ratio(&kp, k, p, p).unwrap());
                }
            }
            assert!(sup.is_finite() && sup < 1e3, "a={a}: {sup}");
            let scan = lemma1_scan(&kp, 3000, 1e-6, 3).unwrap();
            assert!(scan.sup >= sup * 0.1 && scan.sup < 1e3);
            let (p, q) = &scan.argmax;
            assert_eq!(lemma1_ratio(&kp, scan.coordinate, p, q).unwrap(), scan.sup);
        }
    }

    #[test]
    fn lemma2_origin_and_series() {
        let d = EggDomain::new(1, 1, 0.5).unwrap();
        let kp = solve_kernel_coefficients(&d, 1.0).unwrap();
        let spec = SamplerSpec::new(40_000, 13).unwrap();
        let at_origin = lemma2_ratio(&kp, 0.5, &d.origin(), &spec).unwrap();
        let vol = weighted_volume(&d, &WeightedMeasure::new(0.5).unwrap());
        assert!(at_origin.within(vol, 4.0, 0.0), "{at_origin:?} vs {vol}");
        assert!((lemma2_series(&kp, 0.5, &d.origin(), 1000).unwrap() - vol).abs() < 1e-12 * vol);
        for a in [0.5, 1.0, 2.0] {
            let d = EggDomain::new(1, 1, a).unwrap();
            let kp = solve_kernel_coefficients(&d, 1.0).unwrap();
            let p = CPoint::new(vec![c(0.4, 0.2)], vec![c(0.1, -0.2)]);
            let p = if d.contains(&p) { p } else { p.scaled(0.5) };
            let mc = lemma2_ratio(&kp, 0.5, &p, &spec).unwrap();
            let series = lemma2_series(&kp, 0.5, &p, 5000).unwrap();
            assert!(mc.within(series, 4.0, 0.0), "a={a}: {mc:?} vs {series}");
        }
        assert!(lemma2_ratio(&kp, 2.5, &d.origin(), &spec).is_err());
        assert!(lemma2_ratio(&kp, 0.0, &d.origin(), &spec).is_err());
    }

    #[test]
    fn record_round_trip() {
        let d = EggDomain::new(2, 1, 0.5).unwrap();
        let kp = solve_kernel_coefficients(&d, 0.5).unwrap();
        let back = KernelParams::from_record(&kp.to_record()).unwrap();
        assert_eq!(back, kp);
        assert!(KernelParams::from_record("n = 1\n").is_err());
        let broken = kp.to_record().replace("coeffs = ", "coeffs = 1 ");
        assert!(KernelParams::from_record(&broken).is_err());
    }

    /// Along `w = 0` the series grows like `h^{−(a−1)/a}` once `a > 1`,
    /// because the numerator exponent of `G_σ` drops from `(a−1)(n+2)/2` to
    /// `(a−1)(n+1)/2`; at `a = 1` it levels off.
    #[test]
    fn g_integral_along_the_thin_end() {
        let at_level = |a: f64, h: f64| {
            let d = EggDomain::new(1, 1, a).unwrap();
            let kp = solve_kernel_coefficients(&d, 1.0).unwrap();
            let p = d.point_at_level(&CPoint::new(vec![c(0.6, 0.3)], vec![c(0.0, 0.0)]), h).unwrap();
            lemma2_series(&kp, 0.5, &p, 50_000_000).unwrap()
        };
        let grow = at_level(2.0, 1e-8) / at_level(2.0, 1e-6);
        assert!((grow - 10.0).abs() < 0.5, "a = 2 growth over two decades: {grow}");
        let flat = at_level(1.0, 1e-6) / at_level(1.0, 1e-4);
        assert!((flat - 1.0).abs() < 0.1, "a = 1 ratio change: {flat}");
    }
}
