//! Truncated Taylor polynomials on `ℂ^{n+m}` and the coefficient-space
//! realization of the Leibenson decomposition, the order-`m̂` Gleason
//! decomposition and the `α_k/|α|` multiplier.
//!
//! On a monomial the ray integral `∫₀¹ ∂f/∂ξ_k(tξ) dt` acts as
//! `c_α ξ^α ↦ (α_k/|α|) c_α ξ^{α−e_k}`, so every operator here is an exact
//! rescaling of coefficients. Coefficients are either exact complex
//! rationals ([`ExactComplex`]) or `Complex64`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Sub};

use num::bigint::BigInt;
use num::complex::{Complex, Complex64};
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::egg_domain::CPoint;
use crate::error::{Error, Result};

/// Highest total degree accepted at input boundaries.
pub const MAX_DEGREE: u32 = 32;

/// Complex number with arbitrary-precision rational parts.
pub type ExactComplex = Complex<BigRational>;

/// Exponent vector `α` over the flat coordinates `ξ_1 … ξ_{n+m}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zeros(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    pub fn unit(nvars: usize, k: usize) -> Self {
        let mut v = vec![0; nvars];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|α| = Σ α_k`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn get(&self, k: usize) -> u32 {
        self.0[k]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn incremented(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v[k] += 1;
        MultiIndex(v)
    }

    pub fn decremented(&self, k: usize) -> Option<Self> {
        if self.0[k] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[k] -= 1;
        Some(MultiIndex(v))
    }

    pub fn plus(&self, other: &MultiIndex) -> Self {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// All indices of length `nvars` and total degree `degree`, in ascending order.
    pub fn all_of_degree(nvars: usize, degree: u32) -> Vec<MultiIndex> {
        fn rec(prefix: &mut Vec<u32>, left: usize, rem: u32, out: &mut Vec<MultiIndex>) {
            if left == 1 {
                prefix.push(rem);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for e in 0..=rem {
                prefix.push(e);
                rec(prefix, left - 1, rem - e, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if nvars == 0 {
            return out;
        }
        rec(&mut Vec::new(), nvars, degree, &mut out);
        out.sort();
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Coefficient field for [`TaylorPoly`].
pub trait Coefficient: Clone + PartialEq + fmt::Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn plus(&self, rhs: &Self) -> Self;
    fn minus(&self, rhs: &Self) -> Self;
    fn times(&self, rhs: &Self) -> Self;
    /// Multiply by the rational `num / den`.
    fn scaled(&self, num: u64, den: u64) -> Self;
    fn to_complex(&self) -> Complex64;
}

impl Coefficient for Complex64 {
    fn zero() -> Self {
        <Complex64 as Zero>::zero()
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn plus(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn minus(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn times(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn scaled(&self, num: u64, den: u64) -> Self {
        self * (num as f64 / den as f64)
    }
    fn to_complex(&self) -> Complex64 {
        *self
    }
}

impl Coefficient for ExactComplex {
    fn zero() -> Self {
        Complex::new(BigRational::zero(), BigRational::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
    fn plus(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn minus(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn times(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn scaled(&self, num: u64, den: u64) -> Self {
        let r = BigRational::new(BigInt::from(num), BigInt::from(den));
        Complex::new(&self.re * &r, &self.im * &r)
    }
    fn to_complex(&self) -> Complex64 {
        Complex64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }
}

/// Exact complex rational from integer numerators over a common denominator.
pub fn exact(re: i64, im: i64, den: i64) -> ExactComplex {
    Complex::new(
        BigRational::new(BigInt::from(re), BigInt::from(den)),
        BigRational::new(BigInt::from(im), BigInt::from(den)),
    )
}

/// A finite sum `Σ c_α ξ^α`; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorPoly<C: Coefficient> {
    nvars: usize,
    terms: BTreeMap<MultiIndex, C>,
}

pub type ExactPoly = TaylorPoly<ExactComplex>;
pub type FloatPoly = TaylorPoly<Complex64>;

impl<C: Coefficient> TaylorPoly<C> {
    pub fn zero(nvars: usize) -> Self {
        TaylorPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(MultiIndex::zeros(nvars), c);
        p
    }

    pub fn monomial(alpha: MultiIndex, c: C) -> Self {
        let mut p = Self::zero(alpha.len());
        p.add_term(alpha, c);
        p
    }

    /// Sum of `(α, c)` pairs; repeated indices are merged.
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (MultiIndex, C)>) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (alpha, c) in terms {
            if alpha.len() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    found: alpha.len(),
                });
            }
            if alpha.degree() > MAX_DEGREE {
                return Err(Error::InvalidParameter(format!(
                    "term {alpha} exceeds the degree cap {MAX_DEGREE}"
                )));
            }
            p.add_term(alpha, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, alpha: MultiIndex, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(alpha) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().plus(&c);
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Largest `|α|` with a nonzero coefficient (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|a| a.degree()).max().unwrap_or(0)
    }

    /// Smallest `|α|` with a nonzero coefficient, `None` for the zero polynomial.
    pub fn vanishing_order(&self) -> Option<u32> {
        self.terms.keys().map(|a| a.degree()).min()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Option<&C> {
        self.terms.get(alpha)
    }

    /// `f(0)`.
    pub fn constant_term(&self) -> C {
        self.terms.get(&MultiIndex::zeros(self.nvars)).cloned().unwrap_or_else(C::zero)
    }

    fn check_coordinate(&self, k: usize) -> Result<()> {
        if k >= self.nvars {
            return Err(Error::InvalidParameter(format!(
                "coordinate index {k} out of range for {} variables",
                self.nvars
            )));
        }
        Ok(())
    }

    fn map_terms(&self, mut f: impl FnMut(&MultiIndex, &C) -> Option<(MultiIndex, C)>) -> Self {
        let mut out = Self::zero(self.nvars);
        for (alpha, c) in &self.terms {
            if let Some((beta, v)) = f(alpha, c) {
                out.add_term(beta, v);
            }
        }
        out
    }

    /// `ξ_k · f`.
    pub fn mul_coordinate(&self, k: usize) -> Result<Self> {
        self.check_coordinate(k)?;
        Ok(self.map_terms(|alpha, c| Some((alpha.incremented(k), c.clone()))))
    }

    /// `ξ^β · f`.
    pub fn mul_monomial(&self, beta: &MultiIndex) -> Result<Self> {
        if beta.len() != self.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                found: beta.len(),
            });
        }
        Ok(self.map_terms(|alpha, c| Some((alpha.plus(beta), c.clone()))))
    }

    /// Multiply every coefficient by `s`.
    pub fn scale(&self, s: &C) -> Self {
        self.map_terms(|alpha, c| Some((alpha.clone(), c.times(s))))
    }

    /// Formal derivative `∂f/∂ξ_k`.
    pub fn partial_derivative(&self, k: usize) -> Result<Self> {
        self.check_coordinate(k)?;
        Ok(self.map_terms(|alpha, c| {
            let e = alpha.get(k);
            alpha.decremented(k).map(|beta| (beta, c.scaled(e as u64, 1)))
        }))
    }

    /// `T_k f = ∫₀¹ ∂f/∂ξ_k(tξ) dt`, acting as `c_α ξ^α ↦ (α_k/|α|) c_α ξ^{α−e_k}`.
    pub fn leibenson_component(&self, k: usize) -> Result<Self> {
        self.check_coordinate(k)?;
        Ok(self.map_terms(|alpha, c| {
            let e = alpha.get(k);
            let deg = alpha.degree();
            alpha.decremented(k).map(|beta| (beta, c.scaled(e as u64, deg as u64)))
        }))
    }

    /// `Σ_{|α|≠0} (α_k/|α|) c_α ξ^α`.
    pub fn multiplier_transform(&self, k: usize) -> Result<Self> {
        self.check_coordinate(k)?;
        Ok(self.map_terms(|alpha, c| {
            let e = alpha.get(k);
            if e == 0 {
                return None;
            }
            Some((alpha.clone(), c.scaled(e as u64, alpha.degree() as u64)))
        }))
    }

    /// Operators `A_α` (`|α| = order`) with `f = Σ_{|α|=order} ξ^α A_α f`.
    ///
    /// Obtained by iterating [`leibenson_component`](Self::leibenson_component)
    /// `order` times. Every ordered path `k_1, …, k_order` contributes
    /// `T_{k_order} ⋯ T_{k_1} f`, and paths with the same multiset of
    /// coordinates are summed into the `A_α` of that multiset. Zero operators
    /// are omitted from the map.
    pub fn gleason_decompose(&self, order: u32) -> Result<BTreeMap<MultiIndex, Self>> {
        if order == 0 {
            return Err(Error::InvalidParameter("decomposition order must be positive".into()));
        }
        if let Some((alpha, _)) = self.terms.iter().find(|(a, _)| a.degree() < order) {
            return Err(Error::LowOrderTerm {
                index: alpha.to_string(),
                order: order as usize,
            });
        }
        let mut level = BTreeMap::new();
        level.insert(MultiIndex::zeros(self.nvars), self.clone());
        for _ in 0..order {
            let mut next: BTreeMap<MultiIndex, Self> = BTreeMap::new();
            for (alpha, g) in &level {
                for k in 0..self.nvars {
                    let t = g.leibenson_component(k)?;
                    if t.is_zero() {
                        continue;
                    }
                    let slot = next.entry(alpha.incremented(k)).or_insert_with(|| Self::zero(self.nvars));
                    *slot = &*slot + &t;
                }
            }
            level = next;
        }
        level.retain(|_, p| !p.is_zero());
        Ok(level)
    }

    /// `Σ_α ξ^α A_α` for a decomposition map.
    pub fn reassemble(nvars: usize, parts: &BTreeMap<MultiIndex, Self>) -> Result<Self> {
        let mut out = Self::zero(nvars);
        for (alpha, p) in parts {
            out = &out + &p.mul_monomial(alpha)?;
        }
        Ok(out)
    }

    /// `Σ_α c_α ξ^α` at a point given by flat coordinates.
    pub fn evaluate_flat(&self, xi: &[Complex64]) -> Result<Complex64> {
        if xi.len() != self.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                found: xi.len(),
            });
        }
        let deg = self.terms.keys().flat_map(|a| a.as_slice().iter().copied()).max().unwrap_or(0) as usize;
        let powers: Vec<Vec<Complex64>> = xi
            .iter()
            .map(|&x| {
                let mut row = Vec::with_capacity(deg + 1);
                let mut acc = Complex64::new(1.0, 0.0);
                for _ in 0..=deg {
                    row.push(acc);
                    acc *= x;
                }
                row
            })
            .collect();
        Ok(self.terms.iter().fold(<Complex64 as Zero>::zero(), |sum, (alpha, c)| {
            let mono = alpha
                .as_slice()
                .iter()
                .enumerate()
                .fold(Complex64::new(1.0, 0.0), |acc, (k, &e)| acc * powers[k][e as usize]);
            sum + c.to_complex() * mono
        }))
    }

    pub fn evaluate(&self, p: &CPoint) -> Result<Complex64> {
        if p.dim() != self.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                found: p.dim(),
            });
        }
        self.evaluate_flat(&p.flat())
    }

    pub fn to_float(&self) -> FloatPoly {
        let mut out = FloatPoly::zero(self.nvars);
        for (alpha, c) in &self.terms {
            out.add_term(alpha.clone(), c.to_complex());
        }
        out
    }

    /// Largest coefficient discrepancy against another polynomial.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for alpha in self.terms.keys().chain(other.terms.keys()) {
            let a = self.coeff(alpha).map(|c| c.to_complex()).unwrap_or_default();
            let b = other.coeff(alpha).map(|c| c.to_complex()).unwrap_or_default();
            worst = worst.max((a - b).norm());
        }
        worst
    }
}

impl<C: Coefficient> Add for &TaylorPoly<C> {
    type Output = TaylorPoly<C>;

    fn add(self, rhs: &TaylorPoly<C>) -> TaylorPoly<C> {
        assert_eq!(self.nvars, rhs.nvars, "adding polynomials in different dimensions");
        let mut out = self.clone();
        for (alpha, c) in &rhs.terms {
            out.add_term(alpha.clone(), c.clone());
        }
        out
    }
}

impl<C: Coefficient> Sub for &TaylorPoly<C> {
    type Output = TaylorPoly<C>;

    fn sub(self, rhs: &TaylorPoly<C>) -> TaylorPoly<C> {
        assert_eq!(self.nvars, rhs.nvars, "subtracting polynomials in different dimensions");
        let mut out = self.clone();
        for (alpha, c) in &rhs.terms {
            out.add_term(alpha.clone(), C::zero().minus(c));
        }
        out
    }
}

/// Polynomial parsed from the text literal format, exact when every
/// coefficient is a decimal or fraction.
#[derive(Debug, Clone, PartialEq)]
pub enum PolyLiteral {
    Exact(ExactPoly),
    Float(FloatPoly),
}

impl PolyLiteral {
    /// Parse rows `alpha_1 … alpha_N re im`; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let rows = literal_rows(text)?;
        let nvars = rows.first().map(|r| r.0.len()).unwrap_or(0);
        if nvars == 0 {
            return Err(Error::Parse("polynomial literal has no terms".into()));
        }
        let exact_terms: Option<Vec<(MultiIndex, ExactComplex)>> = rows
            .iter()
            .map(|(alpha, re, im)| Some((MultiIndex::new(alpha.clone()), Complex::new(parse_rational(re)?, parse_rational(im)?))))
            .collect();
        if let Some(terms) = exact_terms {
            return Ok(PolyLiteral::Exact(ExactPoly::from_terms(nvars, terms)?));
        }
        let mut terms = Vec::with_capacity(rows.len());
        for (alpha, re, im) in rows {
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("coefficient {s:?}: {e}")));
            terms.push((MultiIndex::new(alpha), Complex64::new(parse(&re)?, parse(&im)?)));
        }
        Ok(PolyLiteral::Float(FloatPoly::from_terms(nvars, terms)?))
    }

    pub fn nvars(&self) -> usize {
        match self {
            PolyLiteral::Exact(p) => p.nvars(),
            PolyLiteral::Float(p) => p.nvars(),
        }
    }
}

type Row = (Vec<u32>, String, String);

fn literal_rows(text: &str) -> Result<Vec<Row>> {
    let mut rows: Vec<Row> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::Parse(format!("line {}: expected exponents followed by re im", lineno + 1)));
        }
        let (exps, coeff) = fields.split_at(fields.len() - 2);
        let alpha = exps
            .iter()
            .map(|e| e.parse::<u32>().map_err(|err| Error::Parse(format!("line {}: exponent {e:?}: {err}", lineno + 1))))
            .collect::<Result<Vec<u32>>>()?;
        if let Some(first) = rows.first() {
            if first.0.len() != alpha.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} exponents, expected {}",
                    lineno + 1,
                    alpha.len(),
                    first.0.len()
                )));
            }
        }
        rows.push((alpha, coeff[0].to_string(), coeff[1].to_string()));
    }
    Ok(rows)
}

/// Parse `p/q`, an integer or a plain decimal as an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let den = num::pow(BigInt::from(10), frac_part.len());
    let r = BigRational::new(num, den);
    Some(if neg { -r } else { r })
}

fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl ExactPoly {
    /// Render in the literal row format; fractions are kept exact.
    pub fn to_literal(&self) -> String {
        let mut out = String::new();
        for (alpha, c) in &self.terms {
            let exps: Vec<String> = alpha.as_slice().iter().map(|e| e.to_string()).collect();
            out.push_str(&format!("{} {} {}\n", exps.join(" "), format_rational(&c.re), format_rational(&c.im)));
        }
        out
    }

    /// Random polynomial with integer-over-small-denominator coefficients and
    /// every term of total degree in `min_order..=degree`.
    pub fn random<R: Rng>(rng: &mut R, nvars: usize, degree: u32, terms: usize, min_order: u32) -> Self {
        let mut p = Self::zero(nvars);
        if min_order > degree {
            return p;
        }
        for _ in 0..terms {
            let deg = rng.gen_range(min_order..=degree);
            let alpha = random_index(rng, nvars, deg);
            let den = rng.gen_range(1..=6);
            let c = exact(rng.gen_range(-9..=9), rng.gen_range(-9..=9), den);
            p.add_term(alpha, c);
        }
        p
    }

    /// Whether any coefficient is non-integral.
    pub fn has_fractions(&self) -> bool {
        self.terms.values().any(|c| !c.re.is_integer() || !c.im.is_integer())
    }

    /// Largest absolute numerator or denominator among the coefficients.
    pub fn max_height(&self) -> BigInt {
        self.terms
            .values()
            .flat_map(|c| [c.re.numer().abs(), c.re.denom().clone(), c.im.numer().abs(), c.im.denom().clone()])
            .max()
            .unwrap_or_else(BigInt::zero)
    }
}

impl FloatPoly {
    /// Random polynomial with coefficients uniform in the unit square.
    pub fn random<R: Rng>(rng: &mut R, nvars: usize, degree: u32, terms: usize, min_order: u32) -> Self {
        let mut p = Self::zero(nvars);
        if min_order > degree {
            return p;
        }
        for _ in 0..terms {
            let deg = rng.gen_range(min_order..=degree);
            let alpha = random_index(rng, nvars, deg);
            p.add_term(alpha, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
        p
    }
}

fn random_index<R: Rng>(rng: &mut R, nvars: usize, degree: u32) -> MultiIndex {
    let mut v = vec![0u32; nvars];
    for _ in 0..degree {
        v[rng.gen_range(0..nvars)] += 1;
    }
    MultiIndex(v)
}
