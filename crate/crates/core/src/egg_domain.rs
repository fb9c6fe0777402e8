//! Geometry of the egg domain
//!
//! `Ω_a = {(z, w) ∈ ℂⁿ × ℂᵐ : |z|² + |w|^{2/a} < 1}` for `0 < a ≤ 2`, its
//! defining function `h(z, w) = (1 − |z|²)^a − |w|²`, the Hermitian pairing
//! and the kernel denominator `(1 − ⟨z, z'⟩)^a − ⟨w, w'⟩`.
//!
//! Points are stored as a `z` block followed by a `w` block; the flat
//! coordinate index `k` runs over `z_0 … z_{n-1}, w_0 … w_{m-1}`.

use std::fmt;

use num::complex::Complex64;
use num::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters `(n, m, a)` of an egg domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EggDomain {
    n: usize,
    m: usize,
    a: f64,
}

impl EggDomain {
    pub fn new(n: usize, m: usize, a: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!(
                "block dimensions must be positive (n = {n}, m = {m})"
            )));
        }
        if !(a > 0.0 && a <= 2.0) {
            return Err(Error::InvalidParameter(format!("a = {a} is outside (0, 2]")));
        }
        Ok(EggDomain { n, m, a })
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

    /// Total complex dimension `n + m`.
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn origin(&self) -> CPoint {
        CPoint {
            z: vec![Complex64::zero(); self.n],
            w: vec![Complex64::zero(); self.m],
        }
    }

    pub(crate) fn check_point(&self, p: &CPoint) -> Result<()> {
        if p.z.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: p.z.len(),
            });
        }
        if p.w.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: p.w.len(),
            });
        }
        Ok(())
    }

    /// `h(p) = (1 − |z|²)^a − |w|²`.
    pub fn defining_function(&self, p: &CPoint) -> Result<f64> {
        self.check_point(p)?;
        let z2 = p.z_norm_sqr();
        if z2 > 1.0 {
            return Err(Error::Domain(format!(
                "|z|² = {z2} exceeds 1, (1 - |z|²)^a is undefined"
            )));
        }
        Ok(self.h_unchecked(p))
    }

    /// `h` without dimension or range checks; callers guarantee `|z| ≤ 1`.
    #[inline]
    pub(crate) fn h_unchecked(&self, p: &CPoint) -> f64 {
        let s = 1.0 - p.z_norm_sqr();
        pow_real(s, self.a) - p.w_norm_sqr()
    }

    /// Strict membership `|z|² + |w|^{2/a} < 1`.
    pub fn contains(&self, p: &CPoint) -> bool {
        if self.check_point(p).is_err() {
            return false;
        }
        p.z_norm_sqr() + p.w_norm_sqr().powf(1.0 / self.a) < 1.0
    }

    /// Membership in the closure `|z|² + |w|^{2/a} ≤ 1`.
    pub fn contains_closed(&self, p: &CPoint) -> bool {
        if self.check_point(p).is_err() {
            return false;
        }
        p.z_norm_sqr() + p.w_norm_sqr().powf(1.0 / self.a) <= 1.0
    }

    /// `(1 − ⟨z, z'⟩)^a − ⟨w, w'⟩` with the principal branch of the power.
    pub fn kernel_denominator(&self, p: &CPoint, q: &CPoint) -> Result<Complex64> {
        for pt in [p, q] {
            if !self.contains_closed(pt) {
                return Err(Error::Domain(format!("{pt} lies outside the closed domain")));
            }
        }
        let (x, y) = pairings(p, q);
        Ok(cpow_real(Complex64::new(1.0, 0.0) - x, self.a) - y)
    }

    /// Logarithms of `1 − ⟨z, z'⟩` and of the kernel denominator.
    ///
    /// The denominator logarithm is `a·Log(1 − x) + Log(1 − y/(1 − x)^a)`: the
    /// continuous branch along the segment from the origin. It agrees with the
    /// principal logarithm whenever `a ≤ 1`.
    #[inline]
    pub(crate) fn log_factors(&self, x: Complex64, y: Complex64) -> (Complex64, Complex64) {
        let one = Complex64::new(1.0, 0.0);
        let l1 = (one - x).ln();
        let ratio = y * (-self.a * l1).exp();
        let ld = self.a * l1 + (one - ratio).ln();
        (l1, ld)
    }

    /// Rescale `p` along its ray so that `h(t·p) = level`.
    ///
    /// Requires `0 < level < 1` and `p` different from the origin.
    pub fn point_at_level(&self, p: &CPoint, level: f64) -> Result<CPoint> {
        self.check_point(p)?;
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!("level {level} is outside (0, 1)")));
        }
        let z2 = p.z_norm_sqr();
        let w2 = p.w_norm_sqr();
        if z2 == 0.0 && w2 == 0.0 {
            return Err(Error::InvalidParameter("cannot rescale the origin".into()));
        }
        let h_at = |t: f64| pow_real((1.0 - t * t * z2).max(0.0), self.a) - t * t * w2;
        // h(t·p) is strictly decreasing in t; bracket the boundary first.
        let mut hi = 1.0;
        while h_at(hi) > 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h_at(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(p.scaled(lo))
    }
}

/// A point `ξ = (z, w)` of `ℂⁿ × ℂᵐ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CPoint {
    pub z: Vec<Complex64>,
    pub w: Vec<Complex64>,
}

impl CPoint {
    pub fn new(z: Vec<Complex64>, w: Vec<Complex64>) -> Self {
        CPoint { z, w }
    }

    /// Build a point from flat coordinates, the first `n` being the `z` block.
    pub fn from_flat(n: usize, coords: &[Complex64]) -> Self {
        CPoint {
            z: coords[..n].to_vec(),
            w: coords[n..].to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len() + self.w.len()
    }

    /// Flat coordinate `ξ_k`.
    #[inline]
    pub fn coord(&self, k: usize) -> Complex64 {
        if k < self.z.len() {
            self.z[k]
        } else {
            self.w[k - self.z.len()]
        }
    }

    pub fn coord_mut(&mut self, k: usize) -> &mut Complex64 {
        let n = self.z.len();
        if k < n {
            &mut self.z[k]
        } else {
            &mut self.w[k - n]
        }
    }

    pub fn flat(&self) -> Vec<Complex64> {
        self.z.iter().chain(self.w.iter()).copied().collect()
    }

    #[inline]
    pub fn z_norm_sqr(&self) -> f64 {
        self.z.iter().map(|c| c.norm_sqr()).sum()
    }

    #[inline]
    pub fn w_norm_sqr(&self) -> f64 {
        self.w.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn scaled(&self, t: f64) -> CPoint {
        CPoint {
            z: self.z.iter().map(|c| c * t).collect(),
            w: self.w.iter().map(|c| c * t).collect(),
        }
    }

    /// Coordinates as `[re, im]` pairs, for reports.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.z
            .iter()
            .chain(self.w.iter())
            .map(|c| [c.re, c.im])
            .collect()
    }
}

impl fmt::Display for CPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_block = |v: &[Complex64]| {
            v.iter()
                .map(|c| format!("{}{:+}i", c.re, c.im))
                .collect::<Vec<_>>()
                .join(", ")
        };
        write!(f, "(z = [{}], w = [{}])", fmt_block(&self.z), fmt_block(&self.w))
    }
}

/// Hermitian pairing `⟨u, v⟩ = Σ u_j·conj(v_j)`.
pub fn pairing(u: &[Complex64], v: &[Complex64]) -> Result<Complex64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(pairing_unchecked(u, v))
}

#[inline]
pub(crate) fn pairing_unchecked(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter()
        .zip(v)
        .fold(Complex64::zero(), |acc, (a, b)| acc + a * b.conj())
}

/// `(⟨z, z'⟩, ⟨w, w'⟩)` for a pair of points.
#[inline]
pub(crate) fn pairings(p: &CPoint, q: &CPoint) -> (Complex64, Complex64) {
    (pairing_unchecked(&p.z, &q.z), pairing_unchecked(&p.w, &q.w))
}

/// Real power of a nonnegative real; exact multiplication for integer exponents.
#[inline]
pub(crate) fn pow_real(s: f64, a: f64) -> f64 {
    if a == 1.0 {
        s
    } else if a == 2.0 {
        s * s
    } else {
        s.powf(a)
    }
}

/// Principal branch `base^a`; integer exponents use repeated multiplication.
pub fn cpow_real(base: Complex64, a: f64) -> Complex64 {
    if a.fract() == 0.0 && a.abs() <= 16.0 {
        base.powi(a as i32)
    } else {
        (a * base.ln()).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pt(z: &[Complex64], w: &[Complex64]) -> CPoint {
        CPoint::new(z.to_vec(), w.to_vec())
    }

    /// Rejection sample from the polydisc; returns interior points only.
    fn random_interior(d: &EggDomain, rng: &mut ChaCha8Rng) -> CPoint {
        loop {
            let mut coord = || {
                let r: f64 = rng.gen::<f64>().sqrt();
                let th: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
                Complex64::from_polar(r, th)
            };
            let z: Vec<_> = (0..d.n()).map(|_| coord()).collect();
            let w: Vec<_> = (0..d.m()).map(|_| coord()).collect();
            let p = CPoint::new(z, w);
            if d.contains(&p) {
                return p;
            }
        }
    }

    #[test]
    fn defining_function_examples() {
        for a in [0.3, 1.0, 1.7] {
            let d = EggDomain::new(2, 1, a).unwrap();
            assert_eq!(d.defining_function(&d.origin()).unwrap(), 1.0);
        }
        let d = EggDomain::new(1, 1, 1.0).unwrap();
        let p = pt(&[c(0.5, 0.0)], &[c(0.0, 0.5)]);
        assert!((d.defining_function(&p).unwrap() - 0.5).abs() < 1e-15);

        let d = EggDomain::new(1, 1, 0.5).unwrap();
        let p = pt(&[c(0.0, 0.0)], &[c(0.6, 0.0)]);
        assert!((d.defining_function(&p).unwrap() - 0.64).abs() < 1e-15);
    }

    #[test]
    fn defining_function_rejects_large_z() {
        let d = EggDomain::new(1, 1, 0.5).unwrap();
        let p = pt(&[c(1.1, 0.0)], &[c(0.0, 0.0)]);
        assert!(matches!(d.defining_function(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_domains() {
        assert!(EggDomain::new(0, 1, 1.0).is_err());
        assert!(EggDomain::new(1, 0, 1.0).is_err());
        assert!(EggDomain::new(1, 1, 0.0).is_err());
        assert!(EggDomain::new(1, 1, 2.5).is_err());
        assert!(EggDomain::new(1, 1, 2.0).is_ok());
    }

    #[test]
    fn membership_examples() {
        let d = EggDomain::new(1, 1, 1.0).unwrap();
        assert!(d.contains(&d.origin()));
        assert!(!d.contains(&pt(&[c(1.0, 0.0)], &[c(0.0, 0.0)])));
        let d2 = EggDomain::new(1, 1, 2.0).unwrap();
        assert!(d2.contains(&pt(&[c(0.0, 0.0)], &[c(0.99, 0.0)])));
    }

    #[test]
    fn membership_agrees_with_defining_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for a in [0.25, 0.5, 1.0, 1.5, 2.0] {
            let d = EggDomain::new(1, 2, a).unwrap();
            for _ in 0..2000 {
                let z = vec![c(rng.gen_range(-0.8..0.8), rng.gen_range(-0.6..0.6))];
                let w = vec![
                    c(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)),
                    c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
                ];
                let p = CPoint::new(z, w);
                let h = d.defining_function(&p).unwrap();
                if h.abs() > 1e-12 {
                    assert_eq!(d.contains(&p), h > 0.0, "a = {a}, p = {p}, h = {h}");
                }
            }
        }
    }

    #[test]
    fn boundary_points_have_zero_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for a in [0.5, 1.0, 2.0] {
            let d = EggDomain::new(2, 2, a).unwrap();
            for _ in 0..200 {
                let p = random_interior(&d, &mut rng);
                // push onto the boundary along the ray
                let q = d.point_at_level(&p, 1e-300_f64.max(f64::MIN_POSITIVE)).unwrap();
                assert!(d.defining_function(&q).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_ball_degeneration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = EggDomain::new(2, 3, 1.0).unwrap();
        for _ in 0..500 {
            let p = random_interior(&d, &mut rng);
            let direct = 1.0 - p.z_norm_sqr() - p.w_norm_sqr();
            assert!((d.defining_function(&p).unwrap() - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pairing(&[c(1.0, 0.0)], &[c(1.0, 0.0)]).unwrap(), c(1.0, 0.0));
        let v = pairing(&[c(1.0, 0.0), c(0.0, 1.0)], &[c(0.0, 1.0), c(1.0, 0.0)]).unwrap();
        assert!(v.norm() < 1e-15);
        assert!(matches!(
            pairing(&[c(1.0, 0.0)], &[]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pairing_is_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let u: Vec<_> = (0..4).map(|_| c(rng.gen(), rng.gen())).collect();
            let v: Vec<_> = (0..4).map(|_| c(rng.gen(), rng.gen())).collect();
            let uv = pairing(&u, &v).unwrap();
            let vu = pairing(&v, &u).unwrap();
            assert!((uv - vu.conj()).norm() < 1e-14);
            let uu = pairing(&u, &u).unwrap();
            let n2: f64 = u.iter().map(|x| x.norm_sqr()).sum();
            assert!((uu.re - n2).abs() < 1e-14 && uu.im == 0.0);
        }
    }

    #[test]
    fn denominator_examples() {
        let d = EggDomain::new(1, 1, 0.5).unwrap();
        let o = d.origin();
        assert_eq!(d.kernel_denominator(&o, &o).unwrap(), c(1.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ball = EggDomain::new(2, 1, 1.0).unwrap();
        for _ in 0..200 {
            let p = random_interior(&ball, &mut rng);
            let q = random_interior(&ball, &mut rng);
            let flat = c(1.0, 0.0) - pairing(&p.flat(), &q.flat()).unwrap();
            assert!((ball.kernel_denominator(&p, &q).unwrap() - flat).norm() < 1e-14);
        }
    }

    #[test]
    fn denominator_rejects_exterior_points() {
        let d = EggDomain::new(1, 1, 1.0).unwrap();
        let out = pt(&[c(0.9, 0.0)], &[c(0.9, 0.0)]);
        assert!(d.kernel_denominator(&out, &d.origin()).is_err());
    }

    #[test]
    fn pairing_inequality_on_interior_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for a in [0.2, 0.5, 1.0, 1.5, 2.0] {
            let d = EggDomain::new(2, 2, a).unwrap();
            for _ in 0..2000 {
                let p = random_interior(&d, &mut rng);
                let q = random_interior(&d, &mut rng);
                let (x, y) = pairings(&p, &q);
                // the chain |1 - x|^{2a} ≥ (1 - |z||z'|)^{2a} ≥ (1-|z|²)^a (1-|z'|²)^a > |w|²|w'|²
                let zz = (p.z_norm_sqr() * q.z_norm_sqr()).sqrt();
                let lhs = (c(1.0, 0.0) - x).norm().powf(2.0 * a);
                let mid = (1.0 - zz).powf(2.0 * a);
                let rhs = (1.0 - p.z_norm_sqr()).powf(a) * (1.0 - q.z_norm_sqr()).powf(a);
                assert!(lhs >= mid * (1.0 - 1e-14));
                assert!(mid >= rhs * (1.0 - 1e-14));
                assert!(rhs > p.w_norm_sqr() * q.w_norm_sqr());
                assert!(y.norm() < (c(1.0, 0.0) - x).norm().powf(a));
                assert!(d.kernel_denominator(&p, &q).unwrap().norm() > 0.0);
            }
        }
    }

    #[test]
    fn integer_powers_are_algebraic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let b = c(rng.gen_range(0.1..2.0), rng.gen_range(-1.0..1.0));
            assert_eq!(cpow_real(b, 1.0), b);
            assert_eq!(cpow_real(b, 2.0), b * b);
        }
    }

    #[test]
    fn log_factors_match_principal_branch_for_small_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for a in [0.3, 0.7, 1.0] {
            let d = EggDomain::new(1, 1, a).unwrap();
            for _ in 0..500 {
                let p = random_interior(&d, &mut rng);
                let q = random_interior(&d, &mut rng);
                let (x, y) = pairings(&p, &q);
                let (_, ld) = d.log_factors(x, y);
                let den = d.kernel_denominator(&p, &q).unwrap();
                assert!((ld - den.ln()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn point_at_level_hits_target() {
        let d = EggDomain::new(1, 1, 0.5).unwrap();
        let p = pt(&[c(0.3, 0.1)], &[c(0.2, -0.2)]);
        for level in [1e-2, 1e-4, 1e-6] {
            let q = d.point_at_level(&p, level).unwrap();
            let h = d.defining_function(&q).unwrap();
            assert!((h - level).abs() < 1e-12 * level.max(1e-3), "{h} vs {level}");
        }
    }
}
