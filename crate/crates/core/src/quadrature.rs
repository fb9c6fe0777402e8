//! Reproducible Monte-Carlo and closed-form integration over `Ω_a` against
//! the weights `h^σ dv`.
//!
//! Uniform sampling uses the exact decomposition of the volume measure: the
//! `z`-marginal is `∝ (1 − |z|²)^{am}` on the unit ball of `ℂⁿ`, so
//! `s = |z|² ~ Beta(n, am + 1)` with a uniform direction, and `w` is then
//! uniform in the ball of radius `(1 − |z|²)^{a/2}` in `ℂᵐ`.
//!
//! Randomness is counter based: sample `i` lives in block `i / BLOCK`, and
//! each block draws from its own ChaCha stream keyed by `(seed, block)`.
//! Blocks are reduced in index order, so estimates are bit-identical for any
//! number of worker threads.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num::complex::Complex64;
use num::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::egg_domain::{cpow_real, pairings, pow_real, CPoint, EggDomain};
use crate::error::{Error, Result};
use crate::gamma_tools::log_gamma;

/// Samples per counter block.
pub const BLOCK: usize = 4096;

/// Strata for [`Stratification::Radial`].
pub const RADIAL_STRATA: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stratification {
    #[default]
    None,
    /// Stratify the radial fraction of the `w` block over consecutive indices.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerSpec {
    sample_count: usize,
    seed: u64,
    stratification: Stratification,
}

impl SamplerSpec {
    pub fn new(sample_count: usize, seed: u64) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::InvalidParameter("sample_count must be at least 1".into()));
        }
        Ok(SamplerSpec {
            sample_count,
            seed,
            stratification: Stratification::None,
        })
    }

    pub fn with_stratification(mut self, s: Stratification) -> Self {
        self.stratification = s;
        self
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stratification(&self) -> Stratification {
        self.stratification
    }

    /// Same stream layout with a different sample budget.
    pub fn with_count(mut self, sample_count: usize) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::InvalidParameter("sample_count must be at least 1".into()));
        }
        self.sample_count = sample_count;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// The measure `h^σ dv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedMeasure {
    sigma: f64,
}

impl WeightedMeasure {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > -1.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("weight exponent {sigma} must exceed -1")));
        }
        Ok(WeightedMeasure { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub(crate) fn weight(&self, h: f64) -> f64 {
        if self.sigma == 0.0 {
            1.0
        } else {
            h.powf(self.sigma)
        }
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate<Complex64> {
    /// Whether `target` lies within `k` standard errors (plus an absolute slack).
    pub fn within(&self, target: Complex64, k: f64, slack: f64) -> bool {
        (self.value - target).norm() <= k * self.std_error + slack
    }
}

impl Estimate<f64> {
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error + slack
    }
}

/// Deterministic uniform sampler over `Ω_a`.
#[derive(Debug, Clone)]
pub struct Sampler {
    domain: EggDomain,
    spec: SamplerSpec,
    radial: Beta<f64>,
}

impl Sampler {
    pub fn new(domain: EggDomain, spec: SamplerSpec) -> Self {
        let alpha = domain.n() as f64;
        let beta = domain.a() * domain.m() as f64 + 1.0;
        let radial = Beta::new(alpha, beta).expect("Beta shape parameters are positive");
        Sampler { domain, spec, radial }
    }

    pub fn domain(&self) -> &EggDomain {
        &self.domain
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn block_count(&self) -> usize {
        self.spec.sample_count.div_ceil(BLOCK)
    }

    /// The points of block `b` (the last block may be short).
    pub fn block(&self, b: usize) -> Vec<CPoint> {
        let start = b * BLOCK;
        let end = ((b + 1) * BLOCK).min(self.spec.sample_count);
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(b as u64);
        (start..end).map(|i| self.draw(&mut rng, i)).collect()
    }

    /// Every point of the stream, in index order.
    pub fn points(&self) -> Vec<CPoint> {
        (0..self.block_count()).flat_map(|b| self.block(b)).collect()
    }

    /// Apply `f` to each block in parallel; results are returned in block order.
    pub fn map_blocks<R, F>(&self, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize, &[CPoint]) -> R + Sync,
    {
        (0..self.block_count())
            .into_par_iter()
            .map(|b| f(b * BLOCK, &self.block(b)))
            .collect()
    }

    fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Complex64> {
        loop {
            let v: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-300 {
                return v.into_iter().map(|c| c / norm).collect();
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, index: usize) -> CPoint {
        let (n, m, a) = (self.domain.n(), self.domain.m(), self.domain.a());
        let zdir = Self::unit_direction(rng, n);
        let s: f64 = self.radial.sample(rng);
        let zr = s.sqrt();
        let u: f64 = rng.gen();
        let frac = match self.spec.stratification {
            Stratification::None => u,
            Stratification::Radial => ((index % RADIAL_STRATA) as f64 + u) / RADIAL_STRATA as f64,
        };
        let radius = pow_real(1.0 - s, a).sqrt() * frac.powf(1.0 / (2 * m) as f64);
        let wdir = Self::unit_direction(rng, m);
        CPoint {
            z: zdir.into_iter().map(|c| c * zr).collect(),
            w: wdir.into_iter().map(|c| c * radius).collect(),
        }
    }
}

/// `sample_uniform`: the full deterministic point stream.
pub fn sample_uniform(d: &EggDomain, spec: &SamplerSpec) -> Vec<CPoint> {
    Sampler::new(*d, *spec).points()
}

/// `∫ h^σ |z^β w^γ|² dv` in closed form, where `alpha = (β, γ)` in flat order.
///
/// `π^{n+m} β! γ! Γ(σ+1) Γ(A+1) / (Γ(σ+|γ|+m+1) Γ(A+|β|+n+1))`, `A = a(σ+|γ|+m)`.
pub fn monomial_moment(d: &EggDomain, mu: &WeightedMeasure, alpha: &[u32]) -> Result<f64> {
    if alpha.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            found: alpha.len(),
        });
    }
    Ok(log_monomial_moment(d, mu.sigma, alpha).exp())
}

pub(crate) fn log_monomial_moment(d: &EggDomain, sigma: f64, alpha: &[u32]) -> f64 {
    let (n, m, a) = (d.n() as f64, d.m() as f64, d.a());
    let lf = |k: u32| libm::lgamma(k as f64 + 1.0);
    let (beta, gamma) = alpha.split_at(d.n());
    let bsum: u32 = beta.iter().sum();
    let gsum: u32 = gamma.iter().sum();
    let big_a = a * (sigma + gsum as f64 + m);
    (n + m) * PI.ln() + beta.iter().map(|&k| lf(k)).sum::<f64>() + gamma.iter().map(|&k| lf(k)).sum::<f64>()
        + libm::lgamma(sigma + 1.0)
        + libm::lgamma(big_a + 1.0)
        - libm::lgamma(sigma + gsum as f64 + m + 1.0)
        - libm::lgamma(big_a + bsum as f64 + n + 1.0)
}

/// `∫_{Ω_a} h^σ dv = π^{n+m} Γ(σ+1) Γ(a(σ+m)+1) / (Γ(σ+m+1) Γ(a(σ+m)+n+1))`.
pub fn weighted_volume(d: &EggDomain, mu: &WeightedMeasure) -> f64 {
    log_monomial_moment(d, mu.sigma, &vec![0; d.dim()]).exp()
}

#[derive(Debug, Clone, Copy)]
struct Accumulator {
    count: usize,
    mean: Complex64,
    m2: f64,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator {
            count: 0,
            mean: Complex64::zero(),
            m2: 0.0,
        }
    }

    fn push(&mut self, v: Complex64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += (delta.conj() * (v - self.mean)).re;
    }

    fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * (other.count as f64 / total as f64);
        self.m2 += other.m2 + delta.norm_sqr() * (self.count as f64 * other.count as f64 / total as f64);
        self.count = total;
    }

    fn estimate(&self, scale: f64) -> Estimate<Complex64> {
        let var = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        Estimate {
            value: self.mean * scale,
            std_error: scale * (var / self.count as f64).sqrt(),
            samples: self.count,
        }
    }
}

/// Monte-Carlo estimate of `∫ h^σ f dv`; each sample carries the importance
/// weight `vol(Ω_a)·h^σ`.
pub fn integrate_weighted<F>(d: &EggDomain, mu: &WeightedMeasure, f: F, spec: &SamplerSpec) -> Result<Estimate<Complex64>>
where
    F: Fn(&CPoint) -> Complex64 + Sync,
{
    let mut out = integrate_weighted_many(d, mu, 1, |p, buf| buf[0] = f(p), spec)?;
    Ok(out.remove(0))
}

/// Several integrands over one sample stream. `f` fills `count` values per point.
pub fn integrate_weighted_many<F>(
    d: &EggDomain,
    mu: &WeightedMeasure,
    count: usize,
    f: F,
    spec: &SamplerSpec,
) -> Result<Vec<Estimate<Complex64>>>
where
    F: Fn(&CPoint, &mut [Complex64]) + Sync,
{
    let sampler = Sampler::new(*d, *spec);
    let volume = weighted_volume(d, &WeightedMeasure { sigma: 0.0 });
    let blocks = sampler.map_blocks(|start, pts| -> Result<Vec<Accumulator>> {
        let mut acc = vec![Accumulator::new(); count];
        let mut buf = vec![Complex64::zero(); count];
        for (i, p) in pts.iter().enumerate() {
            let wgt = mu.weight(d.h_unchecked(p));
            f(p, &mut buf);
            for (slot, v) in acc.iter_mut().zip(&buf) {
                let val = v * wgt;
                if !val.re.is_finite() || !val.im.is_finite() {
                    return Err(Error::NonFinite {
                        index: start + i,
                        point: p.to_string(),
                        value: format!("{v}"),
                    });
                }
                slot.push(val);
            }
        }
        Ok(acc)
    });
    let mut total = vec![Accumulator::new(); count];
    for block in blocks {
        for (t, b) in total.iter_mut().zip(block?) {
            t.merge(&b);
        }
    }
    Ok(total.iter().map(|a| a.estimate(volume)).collect())
}

/// Share of focused samples drawn uniformly from `Ω_a`.
pub const DEFENSIVE_SHARE: f64 = 0.2;

/// `Φ(z, w) = (z, w (1 − |z|²)^{(1−a)/2})`, a bijection of `Ω_a` onto the unit ball.
fn to_ball(d: &EggDomain, p: &CPoint) -> Vec<Complex64> {
    let g = (1.0 - p.z_norm_sqr()).max(0.0).powf((1.0 - d.a()) / 2.0);
    p.z.iter().copied().chain(p.w.iter().map(|c| c * g)).collect()
}

fn from_ball(d: &EggDomain, eta: &[Complex64]) -> CPoint {
    let n = d.n();
    let z: Vec<Complex64> = eta[..n].to_vec();
    let zz: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let g = (1.0 - zz).max(0.0).powf((d.a() - 1.0) / 2.0);
    CPoint {
        z,
        w: eta[n..].iter().map(|c| c * g).collect(),
    }
}

/// The involutive ball automorphism exchanging `0` and `c`.
fn mobius(c: &[Complex64], cc: f64, u: &[Complex64]) -> Vec<Complex64> {
    if cc == 0.0 {
        return u.iter().map(|x| -x).collect();
    }
    let uc: Complex64 = u.iter().zip(c).map(|(x, y)| x * y.conj()).sum();
    let sc = (1.0 - cc).sqrt();
    let denom = Complex64::new(1.0, 0.0) - uc;
    u.iter()
        .zip(c)
        .map(|(x, y)| {
            let proj = y * (uc / cc);
            (y - proj - (x - proj) * sc) / denom
        })
        .collect()
}

/// The automorphism `(z, w) ↦ (φ_c(z), w (√(1 − |c|²)/(1 − ⟨z, c⟩))^a)` of `Ω_a`,
/// an involution, with the log of its real Jacobian
/// `(n + 1 + am) ln((1 − |c|²)/|1 − ⟨z, c⟩|²)` at `p`.
fn recentre(d: &EggDomain, c: &[Complex64], cc: f64, p: &CPoint) -> (CPoint, f64) {
    if cc == 0.0 {
        return (p.clone(), 0.0);
    }
    let zc: Complex64 = p.z.iter().zip(c).map(|(x, y)| x * y.conj()).sum();
    let denom = Complex64::new(1.0, 0.0) - zc;
    let g = cpow_real(Complex64::new((1.0 - cc).sqrt(), 0.0) / denom, d.a());
    let exponent = (d.n() as f64 + 1.0) + d.a() * d.m() as f64;
    let log_jac = exponent * ((1.0 - cc).ln() - denom.norm_sqr().ln());
    (CPoint { z: mobius(c, cc, &p.z), w: p.w.iter().map(|x| x * g).collect() }, log_jac)
}

/// Importance-sampled `∫ h^σ f dv` for integrands concentrated near `center`.
///
/// With probability [`DEFENSIVE_SHARE`] a sample is uniform on `Ω_a`;
/// otherwise it is `Ψ(Φ⁻¹(φ_c(u)))`, where `Ψ` is the automorphism of `Ω_a`
/// moving the `z` part of `center` to the origin. Near `Ψ(center)` the map `Φ`
/// carries complex tangent directions of `∂Ω_a` to those of the sphere, which
/// fails at general base points. The focus `c` is picked uniformly from a
/// ladder along the ray of `Φ(Ψ(center))`, `φ_c` the ball involution exchanging
/// `0` and `c`, and `u` distributed on the ball with density `∝ (1 − |u|²)^{s'}`,
/// `s' = min(σ, 0)`. The ladder has `1 − |c|²` running by factors of ten from
/// `min(1 − |Φ(center)|², h(center))` up to order one, since the two scales
/// differ by `(1 − |z|²)^{1−a}`. Each focused density is
///
/// `c_{s'} (1 − |u|²)^{s'} ((1 − |c|²)/|1 − ⟨η, c⟩|²)^{N+1} · (1 − |z|²)^{m(1−a)}`,  `η = Φ(ξ)`,
///
/// pulled back through `Ψ` with its Jacobian, so every sample carries the
/// exact weight `h^σ / q` of the mixture `q`. Samples follow the block layout of [`Sampler`].
pub fn integrate_focused<F>(
    d: &EggDomain,
    mu: &WeightedMeasure,
    center: &CPoint,
    f: F,
    spec: &SamplerSpec,
) -> Result<Estimate<Complex64>>
where
    F: Fn(&CPoint) -> Complex64 + Sync,
{
    let mut out = integrate_focused_many(d, mu, center, 1, |p, buf| buf[0] = f(p), spec)?;
    Ok(out.remove(0))
}

/// [`integrate_focused`] for several integrands over one sample stream.
pub fn integrate_focused_many<F>(
    d: &EggDomain,
    mu: &WeightedMeasure,
    center: &CPoint,
    count: usize,
    f: F,
    spec: &SamplerSpec,
) -> Result<Vec<Estimate<Complex64>>>
where
    F: Fn(&CPoint, &mut [Complex64]) + Sync,
{
    d.check_point(center)?;
    if !d.contains(center) {
        return Err(Error::Domain(format!("{center} is not an interior point")));
    }
    let sampler = Sampler::new(*d, *spec);
    let nn = d.dim();
    let nf = nn as f64;
    let zc0 = center.z_norm_sqr();
    let (moved, _) = recentre(d, &center.z, zc0, center);
    let c0 = to_ball(d, &moved);
    let cc0: f64 = c0.iter().map(|x| x.norm_sqr()).sum();
    let mut foci: Vec<(Vec<Complex64>, f64)> = Vec::new();
    let mut gap = (1.0 - cc0).min(d.h_unchecked(&moved)).max(1e-300);
    while gap < 0.5 {
        let cc = 1.0 - gap;
        let scale = if cc0 > 0.0 { (cc / cc0).sqrt() } else { 0.0 };
        if cc0 > 0.0 {
            let c: Vec<Complex64> = c0.iter().map(|x| x * scale).collect();
            let norm = c.iter().map(|x| x.norm_sqr()).sum();
            foci.push((c, norm));
        }
        gap *= 10.0;
    }
    foci.push((c0.iter().map(|x| x * 0.0).collect(), 0.0));
    let sp = mu.sigma.min(0.0);
    let radial = Beta::new(nf, sp + 1.0).expect("Beta shape parameters are positive");
    let log_norm = log_gamma(nf + sp + 1.0)? - nf * PI.ln() - log_gamma(sp + 1.0)?;
    let mexp = d.m() as f64 * (1.0 - d.a());
    let uniform_density = 1.0 / weighted_volume(d, &WeightedMeasure { sigma: 0.0 });
    let focus_share = (1.0 - DEFENSIVE_SHARE) / foci.len() as f64;
    let density = |p: &CPoint| -> f64 {
        let (p, log_jac) = recentre(d, &center.z, zc0, p);
        let eta = to_ball(d, &p);
        let ee: f64 = eta.iter().map(|x| x.norm_sqr()).sum();
        let common = log_jac + log_norm + sp * (1.0 - ee).max(0.0).ln() + mexp * (1.0 - p.z_norm_sqr()).max(0.0).ln();
        let focused: f64 = foci
            .iter()
            .map(|(c, cc)| {
                let ec: Complex64 = eta.iter().zip(c).map(|(x, y)| x * y.conj()).sum();
                let gap = (Complex64::new(1.0, 0.0) - ec).norm_sqr().ln();
                (common + (sp + nf + 1.0) * (1.0 - cc).ln() - (nf + 1.0 + sp) * gap).exp()
            })
            .sum();
        DEFENSIVE_SHARE * uniform_density + focus_share * focused
    };
    let blocks = (0..sampler.block_count())
        .into_par_iter()
        .map(|b| -> Result<Vec<Accumulator>> {
            let start = b * BLOCK;
            let end = ((b + 1) * BLOCK).min(spec.sample_count);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(b as u64);
            let mut acc = vec![Accumulator::new(); count];
            let mut buf = vec![Complex64::zero(); count];
            for i in start..end {
                let pick: f64 = rng.gen();
                let p = if pick < DEFENSIVE_SHARE {
                    sampler.draw(&mut rng, i)
                } else {
                    let j = (((pick - DEFENSIVE_SHARE) / (1.0 - DEFENSIVE_SHARE)) * foci.len() as f64) as usize;
                    let (c, cc) = &foci[j.min(foci.len() - 1)];
                    let r = radial.sample(&mut rng).sqrt();
                    let u: Vec<Complex64> = Sampler::unit_direction(&mut rng, nn).into_iter().map(|x| x * r).collect();
                    recentre(d, &center.z, zc0, &from_ball(d, &mobius(c, *cc, &u))).0
                };
                let h = d.h_unchecked(&p);
                if h > 0.0 {
                    f(&p, &mut buf);
                    let wgt = mu.weight(h) / density(&p);
                    for (slot, v) in acc.iter_mut().zip(&buf) {
                        let val = v * wgt;
                        if !val.re.is_finite() || !val.im.is_finite() {
                            return Err(Error::NonFinite {
                                index: i,
                                point: p.to_string(),
                                value: format!("{v}"),
                            });
                        }
                        slot.push(val);
                    }
                } else {
                    acc.iter_mut().for_each(|slot| slot.push(Complex64::zero()));
                }
            }
            Ok(acc)
        })
        .collect::<Vec<_>>();
    let mut total = vec![Accumulator::new(); count];
    for block in blocks {
        for (t, b) in total.iter_mut().zip(block?) {
            t.merge(&b);
        }
    }
    Ok(total.iter().map(|a| a.estimate(1.0)).collect())
}

/// `ψ_{k,r}(ξ, ξ') = ⟨w, w'⟩^k / (1 − ⟨z, z'⟩)^r` (principal branch).
pub fn psi(k: u32, r: f64, p: &CPoint, q: &CPoint) -> Complex64 {
    let (x, y) = pairings(p, q);
    y.powi(k as i32) / cpow_real(Complex64::new(1.0, 0.0) - x, r)
}

// Relative tail threshold for the psi-norm series.
const SERIES_TOL: f64 = 1e-14;

/// Closed form of `∫ h^s(ξ') |ψ_{k,r}(ξ, ξ')|² dv(ξ')` at `ξ = at`:
///
/// `π^{n+m} k! Γ(s+1) Γ(A+1) / (Γ²(r) Γ(s+k+m+1)) · |w|^{2k} · Σ_j Γ²(j+r)|z|^{2j} / (Γ(A+j+n+1) j!)`
/// with `A = a(s+k+m)`. The series stops once a ratio-test bound on the
/// remaining tail falls below `1e-14` of the partial sum.
pub fn psi_norm_integral(d: &EggDomain, s: f64, k: u32, r: f64, at: &CPoint, series_terms: usize) -> Result<f64> {
    d.check_point(at)?;
    if !(s > -1.0) {
        return Err(Error::InvalidParameter(format!("s = {s} must exceed -1")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("r = {r} must be positive")));
    }
    let x = at.z_norm_sqr();
    if x >= 1.0 {
        return Err(Error::Domain(format!("|z|² = {x} must be below 1")));
    }
    let w2 = at.w_norm_sqr();
    if k > 0 && w2 == 0.0 {
        return Ok(0.0);
    }
    let (n, m, a) = (d.n() as f64, d.m() as f64, d.a());
    let kf = k as f64;
    let big_a = a * (s + kf + m);
    let big_b = big_a + n + 1.0;
    let log_front = (n + m) * PI.ln() + log_gamma(kf + 1.0)? + log_gamma(s + 1.0)? + log_gamma(big_a + 1.0)?
        - log_gamma(s + kf + m + 1.0)?
        - log_gamma(big_b)?;
    let sum = psi_series(x, r, big_b, series_terms)?;
    Ok(log_front.exp() * w2.powi(k as i32) * sum)
}

/// `Σ_j [Γ²(j+r)/Γ²(r)] [Γ(B)/Γ(B+j)] x^j / j!`, with a rigorous tail stop.
pub(crate) fn psi_series(x: f64, r: f64, big_b: f64, max_terms: usize) -> Result<f64> {
    let mut sum = 1.0;
    let mut term = 1.0;
    if x == 0.0 {
        return Ok(sum);
    }
    let mut tail = f64::INFINITY;
    for j in 0..max_terms {
        let jf = j as f64;
        term *= x * (jf + r) * (jf + r) / ((jf + 1.0) * (jf + big_b));
        sum += term;
        // later ratios x·((i+r)/(i+1))·((i+r)/(i+B)) move monotonically toward x
        let i = jf + 1.0;
        let rho = x * ((i + r) / (i + 1.0)).max(1.0) * ((i + r) / (i + big_b)).max(1.0);
        if rho < 1.0 {
            tail = term * rho / (1.0 - rho);
            if tail <= SERIES_TOL * sum {
                return Ok(sum);
            }
        }
    }
    Err(Error::SeriesTruncated {
        terms: max_terms,
        tail,
    })
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // P_n (p1) and P_{n-1} (p2) by the three-term recurrence
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=order {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * x * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (x * p1 - p2) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
        nodes[order - 1 - i] = 0.5 * (1.0 + x);
        weights[order - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Gauss-Legendre nodes per panel of [`graded_rule`].
pub const PANEL_NODES: usize = 8;
/// Deepest panel level of [`graded_rule`]; `2^{-52}` is below `f64` resolution near 1.
pub const MAX_PANEL_LEVEL: usize = 52;

/// `(t, weight)` pairs on `[0, 1]` for integrands whose nearest singularity
/// lies at distance about `scale` beyond `t = 1`.
///
/// Panels are `[1 − 2^{−k}, 1 − 2^{−k−1}]` for `k < L` and `[1 − 2^{−L}, 1]`,
/// with `L ≥ 1` the first level where `2^{−L} ≤ scale`. Every panel is at
/// least its own width away from the singularity, so each [`PANEL_NODES`]-point
/// rule converges geometrically.
pub fn graded_rule(scale: f64) -> &'static [(f64, f64)] {
    static RULES: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(PANEL_NODES);
        let panel = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
            nodes.iter().zip(&weights).map(|(t, w)| (lo + (hi - lo) * t, (hi - lo) * w)).collect()
        };
        (0..=MAX_PANEL_LEVEL)
            .map(|level| {
                let mut rule = Vec::new();
                for k in 0..level {
                    rule.extend(panel(1.0 - 0.5f64.powi(k as i32), 1.0 - 0.5f64.powi(k as i32 + 1)));
                }
                rule.extend(panel(1.0 - 0.5f64.powi(level as i32), 1.0));
                rule
            })
            .collect()
    });
    let level = if scale > 0.0 { (-scale.log2()).ceil().max(1.0) as usize } else { MAX_PANEL_LEVEL };
    &rules[level.min(MAX_PANEL_LEVEL)]
}

/// Outer points for sup-scans: half uniform with `h ≥ h_floor`, half pushed
/// along their rays to levels `h` log-uniform in `[h_floor, 1)`.
pub fn scan_points(d: &EggDomain, count: usize, h_floor: f64, seed: u64) -> Result<Vec<CPoint>> {
    if !(h_floor > 0.0 && h_floor < 1.0) {
        return Err(Error::InvalidParameter(format!("h-floor {h_floor} must lie in (0, 1)")));
    }
    let spec = SamplerSpec::new(4 * count.max(1) + 64, seed)?;
    let pool = sample_uniform(d, &spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ca1_ab1e);
    let mut out = Vec::with_capacity(count);
    let mut iter = pool.into_iter().filter(|p| d.h_unchecked(p) >= h_floor && p.z_norm_sqr() + p.w_norm_sqr() > 0.0);
    for i in 0..count {
        let p = iter.next().ok_or_else(|| Error::InvalidParameter("h-floor too tight for scan pool".into()))?;
        if i % 2 == 0 {
            out.push(p);
        } else {
            let level = (h_floor.ln() * rng.gen::<f64>()).exp().min(0.999);
            out.push(d.point_at_level(&p, level)?);
        }
    }
    Ok(out)
}
