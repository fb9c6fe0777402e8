//! Log-Gamma utilities and the Gamma-ratio estimates behind the integral bounds.
//!
//! Every quantity here is assembled from differences `lnΓ(y + x) − lnΓ(y)`
//! evaluated by [`log_gamma_diff`], which avoids the catastrophic cancellation
//! of subtracting two large log-Gamma values. Arguments reach `~10⁴·a` in the
//! scans, where plain `lnΓ` carries absolute errors near `1e-11`.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma argument {x} must be positive")));
    }
    Ok(libm::lgamma(x))
}

// Stirling correction coefficients B_{2k} / (2k(2k-1)), k = 1..8.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
];

// Arguments at or above this use the asymptotic series directly.
const STIRLING_MIN: f64 = 15.0;

/// `lnΓ(y) − (y − ½)ln y + y − ½ln(2π)`.
fn stirling_tail(y: f64) -> f64 {
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in STIRLING.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// `lnΓ(y + x) − lnΓ(y)` for `y > 0`, `y + x > 0`, accurate in absolute terms
/// even when both log-Gamma values are large.
pub fn log_gamma_diff(y: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let lo = y.min(y + x);
    let mut shift = 0.0;
    let mut correction = 0.0;
    if lo < STIRLING_MIN {
        let steps = (STIRLING_MIN - lo).ceil();
        let mut i = 0.0;
        while i < steps {
            // lnΓ(u + 1) = lnΓ(u) + ln u
            correction += (x / (y + i)).ln_1p();
            i += 1.0;
        }
        shift = steps;
    }
    let ys = y + shift;
    let main = (ys + x - 0.5) * (x / ys).ln_1p() + x * ys.ln() - x
        + (stirling_tail(ys + x) - stirling_tail(ys));
    main - correction
}

/// `ln[Γ²(x + t) / (Γ(t)·Γ(2x + t))]`.
pub fn log_gamma_ratio(x: f64, t: f64) -> Result<f64> {
    if !(x >= 0.0) || !(t > 0.0) {
        return Err(Error::Domain(format!(
            "gamma_ratio needs x ≥ 0 and t > 0 (x = {x}, t = {t})"
        )));
    }
    Ok(2.0 * log_gamma_diff(t, x) - log_gamma_diff(t, 2.0 * x))
}

/// `Γ²(x + t) / (Γ(t)·Γ(2x + t))`, which lies in `(0, 1]` and tends to 1 as
/// `t → ∞` for fixed `x`.
pub fn gamma_ratio(x: f64, t: f64) -> Result<f64> {
    Ok(log_gamma_ratio(x, t)?.exp())
}

/// Parameters of the two Gamma-ratio inequalities.
///
/// `b = (a(σ+m)+n+2)/2`, `c = (σ+m+n+2)/2` and `μ = σ − d` are always derived
/// from the stored fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ineq56Params {
    n: usize,
    m: usize,
    a: f64,
    sigma: f64,
    d: f64,
}

impl Ineq56Params {
    pub fn new(n: usize, m: usize, a: f64, sigma: f64, d: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter("n and m must be positive".into()));
        }
        if !(a > 0.0 && a <= 2.0) {
            return Err(Error::InvalidParameter(format!("a = {a} is outside (0, 2]")));
        }
        if !(sigma > -1.0) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} must exceed -1")));
        }
        if !(d > 0.0 && d < sigma + 1.0) {
            return Err(Error::InvalidParameter(format!(
                "d = {d} must lie in (0, sigma + 1) = (0, {})",
                sigma + 1.0
            )));
        }
        Ok(Ineq56Params { n, m, a, sigma, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn b(&self) -> f64 {
        (self.a * (self.sigma + self.m as f64) + self.n as f64 + 2.0) / 2.0
    }

    pub fn c(&self) -> f64 {
        (self.sigma + (self.m + self.n) as f64 + 2.0) / 2.0
    }

    pub fn mu(&self) -> f64 {
        self.sigma - self.d
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn mf(&self) -> f64 {
        self.m as f64
    }
}

fn positive_args(args: &[f64]) -> Result<()> {
    match args.iter().find(|v| !(**v > 0.0)) {
        Some(v) => Err(Error::Domain(format!("Gamma argument {v} is not positive"))),
        None => Ok(()),
    }
}

/// `ln` of `Γ²(j+la+b) / ((2(l+j)+1)·Γ(a(μ+l+m)+j+n+1)·Γ(j+a(l+d)))`.
pub fn ineq5_log_ratio(p: &Ineq56Params, j: usize, l: usize) -> Result<f64> {
    let (a, b, mu) = (p.a, p.b(), p.mu());
    let (jf, lf) = (j as f64, l as f64);
    let y = jf + lf * a + b;
    let den1 = a * (mu + lf + p.mf()) + jf + p.nf() + 1.0;
    let den2 = jf + a * (lf + p.d);
    positive_args(&[y, den1, den2])?;
    Ok(-log_gamma_diff(y, den1 - y) - log_gamma_diff(y, den2 - y) - (2.0 * (lf + jf) + 1.0).ln())
}

pub fn ineq5_ratio(p: &Ineq56Params, j: usize, l: usize) -> Result<f64> {
    Ok(ineq5_log_ratio(p, j, l)?.exp())
}

/// `ln` of `Γ²(l+c)·Γ(a(μ+l+m)+1)·Γ(a(l+d)) / (Γ(l+d)·Γ(μ+l+m+1)·Γ²(la+b))`.
pub fn ineq6_log_ratio(p: &Ineq56Params, l: usize) -> Result<f64> {
    let (a, b, c, mu, d) = (p.a, p.b(), p.c(), p.mu(), p.d);
    let lf = l as f64;
    let m = p.mf();
    positive_args(&[lf + c, a * (mu + lf + m) + 1.0, a * (lf + d), lf + d, mu + lf + m + 1.0, lf * a + b])?;
    // pair arguments with equal growth rates in l
    Ok(log_gamma_diff(lf + d, c - d)
        + log_gamma_diff(lf + mu + m + 1.0, c - mu - m - 1.0)
        + log_gamma_diff(lf * a + b, a * (mu + m) + 1.0 - b)
        + log_gamma_diff(lf * a + b, a * d - b))
}

pub fn ineq6_ratio(p: &Ineq56Params, l: usize) -> Result<f64> {
    Ok(ineq6_log_ratio(p, l)?.exp())
}

/// Maximum of `f` over the Cartesian product of `grid`, with the first index
/// vector where it occurs (lexicographically smallest on ties). A `NaN`
/// anywhere makes the result `NaN`.
pub fn sup_constant<F>(f: F, grid: &[Range<usize>]) -> Result<(f64, Vec<usize>)>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if grid.is_empty() || grid.iter().any(|r| r.is_empty()) {
        return Err(Error::EmptyGrid);
    }
    let first = grid[0].clone();
    let rest = &grid[1..];
    let best = first
        .into_par_iter()
        .map(|i0| {
            let mut idx: Vec<usize> = std::iter::once(i0).chain(rest.iter().map(|r| r.start)).collect();
            let mut best = (f64::NEG_INFINITY, idx.clone());
            loop {
                let v = f(&idx);
                if v.is_nan() {
                    return (f64::NAN, idx);
                }
                if v > best.0 {
                    best = (v, idx.clone());
                }
                // odometer over the remaining dimensions
                let mut dim = grid.len();
                loop {
                    if dim == 1 {
                        return best;
                    }
                    dim -= 1;
                    idx[dim] += 1;
                    if idx[dim] < grid[dim].end {
                        break;
                    }
                    idx[dim] = grid[dim].start;
                }
            }
        })
        .collect::<Vec<_>>();
    let mut out = (f64::NEG_INFINITY, Vec::new());
    for (v, idx) in best {
        if v.is_nan() {
            return Ok((f64::NAN, idx));
        }
        if v > out.0 || out.1.is_empty() {
            out = (v, idx);
        }
    }
    Ok(out)
}

/// Decade shell of an index: 0 for `{0, 1}`, otherwise `k` with `i ∈ (10^{k-1}, 10^k]`.
pub fn decade_shell(i: usize) -> usize {
    let mut k = 0;
    let mut top = 1usize;
    while i > top {
        top = top.saturating_mul(10);
        k += 1;
    }
    k
}

/// Result of scanning a ratio over an index grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioScan {
    /// Largest ratio observed.
    pub sup: f64,
    /// Index (`[j, l]` or `[l]`) where the sup occurs.
    pub argmax: Vec<usize>,
    /// Sup of the ratio over each decade shell of `max(indices)`.
    pub shell_sups: Vec<f64>,
}

/// Tail behaviour of a scan over its last three decade shells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailVerdict {
    /// Sup over the last shell does not exceed the previous one.
    pub non_increasing: bool,
    /// Shell-to-shell increments shrink, so the shell sups settle on a finite limit.
    pub contracting: bool,
    pub last_increment: f64,
    pub previous_increment: f64,
}

impl TailVerdict {
    pub fn bounded_tail(&self) -> bool {
        self.non_increasing || self.contracting
    }
}

// Relative floating-point allowance when comparing shell sups.
const SHELL_NOISE: f64 = 1e-12;

impl RatioScan {
    pub fn tail(&self) -> Option<TailVerdict> {
        let k = self.shell_sups.len();
        if k < 3 {
            return None;
        }
        let (s0, s1, s2) = (self.shell_sups[k - 3], self.shell_sups[k - 2], self.shell_sups[k - 1]);
        let noise = SHELL_NOISE * s2.abs().max(s1.abs());
        let last = (s2 - s1).abs();
        let prev = (s1 - s0).abs();
        Some(TailVerdict {
            non_increasing: s2 <= s1 + noise,
            contracting: last <= prev + noise,
            last_increment: last,
            previous_increment: prev,
        })
    }

    /// Finite sup attained on the grid and a bounded tail.
    pub fn passes(&self) -> bool {
        self.sup.is_finite() && self.tail().map_or(false, |t| t.bounded_tail())
    }
}

// Re-seed the row recurrence from the log-space value this often.
const RESEED: usize = 256;

/// Scan `ineq5_ratio` over `0 ≤ j ≤ j_max`, `0 ≤ l ≤ l_max`.
///
/// Rows in `j` follow the exact term ratio
/// `r(j+1)/r(j) = (j+B₁)²/((j+B₂)(j+B₃)) · (2(l+j)+1)/(2(l+j)+3)`
/// and are re-anchored in log space every few hundred steps.
pub fn ineq5_scan(p: &Ineq56Params, j_max: usize, l_max: usize) -> Result<RatioScan> {
    let shells = decade_shell(j_max.max(l_max)) + 1;
    let (a, b, mu, d) = (p.a, p.b(), p.mu(), p.d);
    let rows: Vec<Result<(f64, [usize; 2], Vec<f64>)>> = (0..=l_max)
        .into_par_iter()
        .map(|l| {
            let lf = l as f64;
            let b1 = lf * a + b;
            let b2 = a * (mu + lf + p.mf()) + p.nf() + 1.0;
            let b3 = a * (lf + d);
            let mut shell_sup = vec![f64::NEG_INFINITY; shells];
            let mut best = (f64::NEG_INFINITY, [0, l]);
            let mut r = 0.0;
            for j in 0..=j_max {
                if j % RESEED == 0 {
                    r = ineq5_ratio(p, j, l)?;
                } else {
                    let jf = (j - 1) as f64;
                    let s = 2.0 * (lf + jf);
                    r *= (jf + b1) * (jf + b1) / ((jf + b2) * (jf + b3)) * (s + 1.0) / (s + 3.0);
                }
                if r.is_nan() {
                    return Ok((f64::NAN, [j, l], shell_sup));
                }
                if r > best.0 {
                    best = (r, [j, l]);
                }
                let sh = decade_shell(j.max(l));
                if r > shell_sup[sh] {
                    shell_sup[sh] = r;
                }
            }
            Ok((best.0, best.1, shell_sup))
        })
        .collect();
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = vec![0, 0];
    let mut shell_sups = vec![f64::NEG_INFINITY; shells];
    for row in rows {
        let (v, idx, sh) = row?;
        if v.is_nan() {
            return Ok(RatioScan {
                sup: f64::NAN,
                argmax: idx.to_vec(),
                shell_sups,
            });
        }
        if v > sup {
            sup = v;
            argmax = idx.to_vec();
        }
        for (acc, s) in shell_sups.iter_mut().zip(sh) {
            *acc = acc.max(s);
        }
    }
    Ok(RatioScan {
        sup,
        argmax,
        shell_sups,
    })
}

/// Scan `ineq6_ratio` over `0 ≤ l ≤ l_max`.
pub fn ineq6_scan(p: &Ineq56Params, l_max: usize) -> Result<RatioScan> {
    let values: Vec<f64> = (0..=l_max)
        .into_par_iter()
        .map(|l| ineq6_ratio(p, l))
        .collect::<Result<_>>()?;
    let shells = decade_shell(l_max) + 1;
    let mut shell_sups = vec![f64::NEG_INFINITY; shells];
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = 0;
    for (l, v) in values.into_iter().enumerate() {
        if v.is_nan() {
            return Ok(RatioScan {
                sup: f64::NAN,
                argmax: vec![l],
                shell_sups,
            });
        }
        if v > sup {
            sup = v;
            argmax = l;
        }
        let sh = decade_shell(l);
        shell_sups[sh] = shell_sups[sh].max(v);
    }
    Ok(RatioScan {
        sup,
        argmax: vec![argmax],
        shell_sups,
    })
}

/// Geometric grid of `count` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
