//! Run configuration, the kernel-coefficient cache and the verification suites
//! behind `egg-bergman verify`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num::complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    bound16_pair, choose_exponents, l1_check, operator_norm_estimate, projection_apply, q_bound_ratio, schur_test,
    sup_scan, ExponentChoice, Regime, ScanSpec, SpaceParams, SupEstimate,
};
use crate::egg_domain::{CPoint, EggDomain};
use crate::error::{Error, Result};
use crate::gamma_tools::{
    gamma_ratio, ineq5_scan, ineq6_scan, log_gamma, log_gamma_diff, log_grid, Ineq56Params, RatioScan,
};
use crate::kernel::{
    ball_kernel, bergman_kernel, lemma1_scan, lemma2_ratio, lemma2_series, solve_kernel_coefficients, KernelParams,
    RESIDUAL_TOL,
};
use crate::quadrature::{
    gauss_legendre, integrate_focused, integrate_focused_many, integrate_weighted, monomial_moment, psi, psi_norm_integral,
    sample_uniform, scan_points, weighted_volume, SamplerSpec, WeightedMeasure,
};
use crate::report::ReportRow;
use crate::taylor::{ExactPoly, FloatPoly, MultiIndex, PolyLiteral, TaylorPoly};

/// Largest tolerated change of a sup-estimate under refinement.
pub const STABILITY_FACTOR: f64 = 2.0;
/// Coarse h-floor compared against the configured one.
pub const COARSE_FLOOR: f64 = 1e-2;
/// Points with `h` below this value are excluded from fixed-point checks.
const CHECK_POINT_FLOOR: f64 = 0.7;

/// A named group of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    Decomposition,
    Multiplier,
    Kernel,
    Parseval,
    Gamma,
    Schur,
    Lemma1,
    Lemma2,
    Opnorm,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Decomposition,
        Suite::Multiplier,
        Suite::Kernel,
        Suite::Parseval,
        Suite::Gamma,
        Suite::Schur,
        Suite::Lemma1,
        Suite::Lemma2,
        Suite::Opnorm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Decomposition => "decomposition",
            Suite::Multiplier => "multiplier",
            Suite::Kernel => "kernel",
            Suite::Parseval => "parseval",
            Suite::Gamma => "gamma",
            Suite::Schur => "schur",
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::Opnorm => "opnorm",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .find(|x| x.as_str() == s.trim())
            .copied()
            .ok_or_else(|| Error::Parse(format!("unknown suite {s:?}")))
    }
}

/// Everything a `verify` run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub m: usize,
    pub a: f64,
    pub p: f64,
    pub lambda: f64,
    pub sigma: Option<f64>,
    pub d: Option<f64>,
    /// Monte-Carlo budget for single integrals and pair counts.
    pub samples: usize,
    /// Inner Monte-Carlo budget per outer point of a sup-scan.
    pub scan_samples: usize,
    /// Outer points per sup-scan.
    pub outer: usize,
    pub seed: u64,
    pub degree: u32,
    pub grid: usize,
    pub h_floor: f64,
    /// Random polynomials per family.
    pub family: usize,
    pub suites: Vec<Suite>,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub poly: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 1,
            m: 1,
            a: 1.0,
            p: 2.0,
            lambda: 0.0,
            sigma: None,
            d: None,
            samples: 100_000,
            scan_samples: 4096,
            outer: 200,
            seed: 1,
            degree: 8,
            grid: 1000,
            h_floor: 1e-6,
            family: 20,
            suites: Vec::new(),
            out: PathBuf::from("egg-bergman-out"),
            cache_dir: None,
            poly: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| Error::Parse(format!("{key} = {value:?}: {e}")))
}

impl RunConfig {
    /// Set one field from its flag name (`h-floor` and `h_floor` are equivalent).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        match key.as_str() {
            "n" => self.n = parse_value(&key, value)?,
            "m" => self.m = parse_value(&key, value)?,
            "a" => self.a = parse_value(&key, value)?,
            "p" => self.p = parse_value(&key, value)?,
            "lambda" => self.lambda = parse_value(&key, value)?,
            "sigma" => self.sigma = Some(parse_value(&key, value)?),
            "d" => self.d = Some(parse_value(&key, value)?),
            "samples" => self.samples = parse_value(&key, value)?,
            "scan-samples" => self.scan_samples = parse_value(&key, value)?,
            "outer" => self.outer = parse_value(&key, value)?,
            "seed" => self.seed = parse_value(&key, value)?,
            "degree" => self.degree = parse_value(&key, value)?,
            "grid" => self.grid = parse_value(&key, value)?,
            "h-floor" => self.h_floor = parse_value(&key, value)?,
            "family" => self.family = parse_value(&key, value)?,
            "suites" => {
                self.suites = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(Suite::from_str)
                    .collect::<Result<_>>()?
            }
            "out" => self.out = PathBuf::from(value.trim()),
            "cache-dir" => self.cache_dir = Some(PathBuf::from(value.trim())),
            "poly" => self.poly = Some(PathBuf::from(value.trim())),
            _ => return Err(Error::Parse(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Check every parameter range and derive the domain, space and exponents.
    pub fn validate(&self) -> Result<Plan> {
        let domain = EggDomain::new(self.n, self.m, self.a)?;
        let space = SpaceParams::new(self.p, self.lambda)?;
        if self.suites.is_empty() {
            return Err(Error::InvalidParameter("no suites selected".into()));
        }
        if self.samples == 0 || self.scan_samples == 0 || self.outer == 0 || self.family == 0 {
            return Err(Error::InvalidParameter("sample budgets must be positive".into()));
        }
        if self.grid < 100 {
            return Err(Error::InvalidParameter(format!(
                "grid = {} is too small to resolve decade shells (need at least 100)",
                self.grid
            )));
        }
        if self.degree == 0 || self.degree > crate::taylor::MAX_DEGREE {
            return Err(Error::InvalidParameter(format!(
                "degree {} must lie in 1..={}",
                self.degree,
                crate::taylor::MAX_DEGREE
            )));
        }
        if !(self.h_floor > 0.0 && self.h_floor < COARSE_FLOOR) {
            return Err(Error::InvalidParameter(format!(
                "h-floor {} must lie in (0, {COARSE_FLOOR})",
                self.h_floor
            )));
        }
        let chosen = choose_exponents(&space).ok();
        let sigma = self
            .sigma
            .or(chosen.map(|c| c.sigma))
            .unwrap_or(self.lambda + 1.0);
        WeightedMeasure::new(sigma)?;
        let d = self
            .d
            .or(if self.sigma.is_none() { chosen.and_then(|c| c.d) } else { None })
            .unwrap_or_else(|| match space.regime() {
                Some(Regime::Reflexive) => {
                    let hi = (sigma + 1.0).min(1.0 / (space.p() - 1.0));
                    0.5 * hi
                }
                _ => 0.5 * (sigma + 1.0),
            });
        if !(d > 0.0 && d < sigma + 1.0) {
            return Err(Error::InvalidParameter(format!("d = {d} must lie in (0, sigma + 1)")));
        }
        let choice = ExponentChoice {
            sigma,
            d: (space.regime() == Some(Regime::Reflexive)).then_some(d),
        };
        if self.suites.contains(&Suite::Schur) {
            match space.regime() {
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "schur needs p > 1 with lambda >= 0, or p = 1 (got p = {}, lambda = {})",
                        self.p, self.lambda
                    )))
                }
                Some(_) if !choice.reproduces(&space) || !choice.d_admissible(&space) => {
                    return Err(Error::InvalidParameter(format!(
                        "sigma = {sigma}, d = {d} violate the exponent constraints for p = {}, lambda = {}",
                        self.p, self.lambda
                    )))
                }
                Some(Regime::L1) if !(sigma > self.lambda) => {
                    return Err(Error::InvalidParameter("the L1 check needs sigma > lambda".into()))
                }
                _ => {}
            }
        }
        let poly = match &self.poly {
            Some(path) => {
                let lit = PolyLiteral::parse(&fs::read_to_string(path)?)?;
                if lit.nvars() != domain.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: domain.dim(),
                        found: lit.nvars(),
                    });
                }
                Some(lit)
            }
            None => None,
        };
        Ok(Plan {
            domain,
            space,
            sigma,
            d,
            poly,
        })
    }
}

/// Validated, derived run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub domain: EggDomain,
    pub space: SpaceParams,
    pub sigma: f64,
    /// Schur exponent for `p > 1`; otherwise the exponent `d` of the weighted G-integral bound.
    pub d: f64,
    pub poly: Option<PolyLiteral>,
}

fn cache_file(dir: &Path, d: &EggDomain, sigma: f64) -> PathBuf {
    dir.join(format!("kernel-n{}-m{}-a{}-sigma{}.txt", d.n(), d.m(), d.a(), sigma))
}

/// Solved coefficients for `(d, σ)`, read from `dir` when a valid record exists.
///
/// A record that fails to parse, describes other parameters or has a
/// residual above tolerance is replaced by a fresh solve.
pub fn solve_and_cache(dir: Option<&Path>, d: &EggDomain, sigma: f64) -> Result<KernelParams> {
    let Some(dir) = dir else {
        return solve_kernel_coefficients(d, sigma);
    };
    let path = cache_file(dir, d, sigma);
    if let Ok(text) = fs::read_to_string(&path) {
        match KernelParams::from_record(&text) {
            Ok(kp) if kp.domain() == d && kp.sigma() == sigma && kp.residual() <= RESIDUAL_TOL => {
                log::debug!("loaded kernel coefficients from {}", path.display());
                return Ok(kp);
            }
            Ok(kp) => log::warn!(
                "cached kernel record {} does not match (n, m, a, sigma) or has residual {:e}; recomputing",
                path.display(),
                kp.residual()
            ),
            Err(e) => log::warn!("unreadable kernel record {}: {e}; recomputing", path.display()),
        }
    }
    let kp = solve_kernel_coefficients(d, sigma)?;
    fs::create_dir_all(dir)?;
    fs::write(&path, kp.to_record())?;
    Ok(kp)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    plan: &'a Plan,
}

impl Ctx<'_> {
    fn kernel(&self, sigma: f64) -> Result<KernelParams> {
        let dir = self.cfg.cache_dir.clone().unwrap_or_else(|| self.cfg.out.join("cache"));
        solve_and_cache(Some(&dir), &self.plan.domain, sigma)
    }

    fn spec(&self, count: usize, salt: u64) -> Result<SamplerSpec> {
        SamplerSpec::new(count, self.cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt)
    }

    fn row(&self, suite: Suite, check: &str, anchor: &str, estimate: f64, tolerance: f64, pass: bool) -> ReportRow {
        let d = &self.plan.domain;
        ReportRow::new(suite.as_str(), check, anchor, estimate, tolerance, pass)
            .param("n", d.n())
            .param("m", d.m())
            .param("a", d.a())
            .param("seed", self.cfg.seed)
    }

    /// Interior points with `h ≥ 0.7` for fixed-point checks.
    fn check_points(&self, count: usize, salt: u64) -> Result<Vec<CPoint>> {
        let d = &self.plan.domain;
        let pool = sample_uniform(d, &self.spec(64 * count + 64, salt)?);
        let pts: Vec<CPoint> = pool
            .into_iter()
            .filter(|p| d.h_unchecked(p) >= CHECK_POINT_FLOOR)
            .take(count)
            .collect();
        if pts.len() < count {
            return Err(Error::InvalidParameter("could not draw enough interior check points".into()));
        }
        Ok(pts)
    }
}

/// Run every configured suite in order. A suite that errors contributes a
/// failing `error` row.
pub fn run_suites(cfg: &RunConfig, plan: &Plan) -> Vec<ReportRow> {
    let ctx = Ctx { cfg, plan };
    let mut rows = Vec::new();
    for suite in &cfg.suites {
        log::info!("running suite {suite}");
        let result = match suite {
            Suite::Decomposition => decomposition_suite(&ctx),
            Suite::Multiplier => multiplier_suite(&ctx),
            Suite::Kernel => kernel_suite(&ctx),
            Suite::Parseval => parseval_suite(&ctx),
            Suite::Gamma => gamma_suite(&ctx),
            Suite::Schur => schur_suite(&ctx),
            Suite::Lemma1 => lemma1_suite(&ctx),
            Suite::Lemma2 => lemma2_suite(&ctx),
            Suite::Opnorm => opnorm_suite(&ctx),
        };
        match result {
            Ok(r) => rows.extend(r),
            Err(e) => rows.push(ctx.row(*suite, "error", &e.to_string(), f64::NAN, 0.0, false)),
        }
    }
    rows
}

fn exact_family(ctx: &Ctx, salt: u64, min_order: u32) -> Vec<ExactPoly> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed ^ salt);
    let nvars = ctx.plan.domain.dim();
    (0..ctx.cfg.family.max(1) * 5)
        .map(|_| ExactPoly::random(&mut rng, nvars, ctx.cfg.degree.max(min_order), 12, min_order))
        .collect()
}

fn float_family(ctx: &Ctx, salt: u64, count: usize) -> Vec<FloatPoly> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed ^ salt);
    let nvars = ctx.plan.domain.dim();
    (0..count)
        .map(|_| FloatPoly::random(&mut rng, nvars, ctx.cfg.degree, 12, 0))
        .collect()
}

/// `Σ_k ξ_k T_k f` for any coefficient field.
pub fn leibenson_sum<C: crate::taylor::Coefficient>(f: &TaylorPoly<C>) -> Result<TaylorPoly<C>> {
    let mut out = TaylorPoly::zero(f.nvars());
    for k in 0..f.nvars() {
        out = &out + &f.leibenson_component(k)?.mul_coordinate(k)?;
    }
    Ok(out)
}

/// `f − f(0)`.
pub fn without_constant<C: crate::taylor::Coefficient>(f: &TaylorPoly<C>) -> TaylorPoly<C> {
    f - &TaylorPoly::constant(f.nvars(), f.constant_term())
}

fn decomposition_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Decomposition;
    let mut rows = Vec::new();
    let family = exact_family(ctx, 0x11, 0);
    let mut failures = 0usize;
    let mut worst: f64 = 0.0;
    for f in &family {
        let lhs = leibenson_sum(f)?;
        let rhs = without_constant(f);
        if lhs != rhs {
            failures += 1;
            worst = worst.max(lhs.to_float().max_abs_diff(&rhs.to_float()));
        }
    }
    rows.push(
        ctx.row(suite, "leibenson_identity_exact", "Leibenson decomposition", worst, 0.0, failures == 0)
            .param("polynomials", family.len())
            .param("failures", failures)
            .param("degree", ctx.cfg.degree),
    );
    let floats = float_family(ctx, 0x12, family.len());
    let mut worst: f64 = 0.0;
    for f in &floats {
        worst = worst.max(leibenson_sum(f)?.max_abs_diff(&without_constant(f)));
    }
    rows.push(
        ctx.row(suite, "leibenson_identity_float", "Leibenson decomposition", worst, 1e-12, worst <= 1e-12)
            .param("polynomials", floats.len()),
    );
    for order in 2..=4u32 {
        if order > ctx.cfg.degree {
            break;
        }
        let family = exact_family(ctx, 0x20 + order as u64, order);
        let mut failures = 0usize;
        let mut worst: f64 = 0.0;
        for f in &family {
            let parts = f.gleason_decompose(order)?;
            let back = ExactPoly::reassemble(f.nvars(), &parts)?;
            if &back != f {
                failures += 1;
                worst = worst.max(back.to_float().max_abs_diff(&f.to_float()));
            }
        }
        rows.push(
            ctx.row(
                suite,
                &format!("gleason_identity_order_{order}"),
                "Gleason decomposition of higher order",
                worst,
                0.0,
                failures == 0,
            )
            .param("order", order)
            .param("polynomials", family.len())
            .param("failures", failures),
        );
    }
    rows.push(ray_integral_row(ctx, &float_family(ctx, 0x13, 20))?);
    if let Some(lit) = &ctx.plan.poly {
        let (worst, pass) = match lit {
            PolyLiteral::Exact(f) => {
                let ok = leibenson_sum(f)? == without_constant(f);
                (if ok { 0.0 } else { f64::INFINITY }, ok)
            }
            PolyLiteral::Float(f) => {
                let e = leibenson_sum(f)?.max_abs_diff(&without_constant(f));
                (e, e <= 1e-12)
            }
        };
        rows.push(ctx.row(suite, "leibenson_identity_input", "Leibenson decomposition", worst, 1e-12, pass));
    }
    Ok(rows)
}

/// `T_k f(p)` from coefficients against Gauss-Legendre quadrature of
/// `∫₀¹ ∂f/∂ξ_k(tp) dt`.
fn ray_integral_row(ctx: &Ctx, family: &[FloatPoly]) -> Result<ReportRow> {
    let d = &ctx.plan.domain;
    let pts = sample_uniform(d, &ctx.spec(20, 0x14)?);
    let (nodes, weights) = gauss_legendre(24);
    let mut worst: f64 = 0.0;
    for f in family {
        for k in 0..d.dim() {
            let tk = f.leibenson_component(k)?;
            let df = f.partial_derivative(k)?;
            for p in &pts {
                let flat = p.flat();
                let quad: Complex64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| {
                        let scaled: Vec<Complex64> = flat.iter().map(|c| c * t).collect();
                        df.evaluate_flat(&scaled).map(|v| v * w)
                    })
                    .sum::<Result<Complex64>>()?;
                let direct = tk.evaluate_flat(&flat)?;
                worst = worst.max((quad - direct).norm());
            }
        }
    }
    Ok(ctx
        .row(Suite::Decomposition, "ray_integral", "ray-integral representation of T_k", worst, 1e-10, worst <= 1e-10)
        .param("polynomials", family.len())
        .param("points", pts.len()))
}

fn multiplier_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Multiplier;
    let family = exact_family(ctx, 0x31, 0);
    let mut failures = 0usize;
    for f in &family {
        for k in 0..f.nvars() {
            let lhs = f.multiplier_transform(k)?;
            let rhs = f.leibenson_component(k)?.mul_coordinate(k)?;
            if lhs != rhs {
                failures += 1;
            }
        }
    }
    let mut rows = vec![ctx
        .row(suite, "multiplier_equals_xi_k_t_k", "coefficient multiplier", failures as f64, 0.0, failures == 0)
        .param("polynomials", family.len())];
    // c_α ↦ (α_k/|α|) c_α on single monomials
    let nvars = ctx.plan.domain.dim();
    let mut bad = 0usize;
    let mut checked = 0usize;
    for deg in 1..=ctx.cfg.degree.min(6) {
        for alpha in MultiIndex::all_of_degree(nvars, deg) {
            let c = crate::taylor::exact(3, -2, 5);
            let f = ExactPoly::monomial(alpha.clone(), c.clone());
            for k in 0..nvars {
                use crate::taylor::Coefficient;
                let want = ExactPoly::monomial(alpha.clone(), c.scaled(alpha.get(k) as u64, deg as u64));
                checked += 1;
                if f.multiplier_transform(k)? != want {
                    bad += 1;
                }
            }
        }
    }
    rows.push(
        ctx.row(suite, "coefficient_rule", "coefficient multiplier", bad as f64, 0.0, bad == 0)
            .param("monomials_checked", checked),
    );
    Ok(rows)
}

fn kernel_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Kernel;
    let d = ctx.plan.domain;
    let sigma = ctx.plan.sigma;
    let kp = ctx.kernel(sigma)?;
    let coeff_param = serde_json::Value::from(kp.coeffs().to_vec());
    let mut rows = vec![ctx
        .row(suite, "coefficient_residual", "kernel coefficient system", kp.residual(), RESIDUAL_TOL, kp.residual() <= RESIDUAL_TOL)
        .param("sigma", sigma)
        .param("coeffs", coeff_param)
        .param("c_sigma", kp.c_sigma())];
    let norm_defect = (kp.c_sigma() * kp.coeffs().iter().sum::<f64>() * weighted_volume(&d, &WeightedMeasure::new(sigma)?) - 1.0).abs();
    rows.push(ctx.row(suite, "constant_normalization", "normalization of the reproducing formula", norm_defect, 1e-12, norm_defect <= 1e-12).param("sigma", sigma));

    let pts = sample_uniform(&d, &ctx.spec(200, 0x41)?);
    let mut herm: f64 = 0.0;
    for pair in pts.chunks(2) {
        let kpq = bergman_kernel(&kp, &pair[0], &pair[1])?;
        let kqp = bergman_kernel(&kp, &pair[1], &pair[0])?;
        herm = herm.max((kpq - kqp.conj()).norm() / kpq.norm().max(1e-300));
    }
    rows.push(ctx.row(suite, "hermitian_symmetry", "weighted Bergman kernel", herm, 1e-12, herm <= 1e-12).param("pairs", pts.len() / 2));

    if d.a() == 1.0 {
        let mut ratios = Vec::new();
        for pair in pts.chunks(2) {
            let k = bergman_kernel(&kp, &pair[0], &pair[1])?;
            let b = ball_kernel(d.dim(), sigma, &pair[0], &pair[1])?;
            ratios.push(k / b);
        }
        let r0 = ratios[0];
        let dev = ratios.iter().map(|r| (r / r0 - 1.0).norm()).fold(0.0, f64::max);
        rows.push(
            ctx.row(suite, "ball_kernel_match", "weighted ball kernel", dev, 1e-6, dev <= 1e-6)
                .param("pairs", ratios.len())
                .param("global_constant", r0.re),
        );
    }

    // T_σ ξ^α = ξ^α for every monomial of degree ≤ 4, one sample stream per point
    let monomials: Vec<MultiIndex> = (0..=4).flat_map(|deg| MultiIndex::all_of_degree(d.dim(), deg)).collect();
    let mu = WeightedMeasure::new(sigma)?;
    let norms: Vec<f64> = monomials
        .iter()
        .map(|al| monomial_moment(&d, &mu, al.as_slice()).map(f64::sqrt))
        .collect::<Result<_>>()?;
    let spec = ctx.spec(ctx.cfg.samples, 0x42)?;
    let mut worst = (0.0f64, 0.0f64, String::new());
    for at in ctx.check_points(10, 0x43)? {
        let c = kp.c_sigma();
        // f(ξ) + ∫ K(ξ,·)(f − f(ξ)) dv_σ uses ∫ K(ξ,·) dv_σ = 1 as a control
        // variate; the constant monomial keeps the plain estimator so that
        // identity is itself checked
        let centres: Vec<Complex64> = monomials
            .iter()
            .map(|al| if al.degree() == 0 { Complex64::new(0.0, 0.0) } else { monomial_value(&at.flat(), al) })
            .collect();
        let mut ests = integrate_focused_many(
            &d,
            &mu,
            &at,
            monomials.len(),
            |q, buf| {
                let kv = c * crate::kernel::bergman_kernel(&kp, &at, q).unwrap_or_default();
                let flat = q.flat();
                for ((slot, al), centre) in buf.iter_mut().zip(&monomials).zip(&centres) {
                    *slot = kv * (monomial_value(&flat, al) - centre);
                }
            },
            &spec,
        )?;
        for (e, centre) in ests.iter_mut().zip(&centres) {
            e.value += centre;
        }
        let flat = at.flat();
        for ((est, al), norm) in ests.iter().zip(&monomials).zip(&norms) {
            let err = (est.value - monomial_value(&flat, al)).norm() / norm;
            if err > worst.0 {
                worst = (err, est.std_error / norm, format!("{at} alpha={al}"));
            }
        }
    }
    rows.push(
        ctx.row(suite, "reproducing_monomials", "reproducing formula", worst.0, 0.01, worst.0 <= 0.01)
            .std_error(worst.1)
            .sup_point(worst.2)
            .param("samples", ctx.cfg.samples)
            .param("max_degree", 4)
            .param("sigma", sigma),
    );
    let at = ctx.check_points(1, 0x44)?.remove(0);
    let conj = projection_apply(&kp, |q| q.coord(0).conj(), &d.origin(), &spec)?;
    let pass = conj.within(Complex64::new(0.0, 0.0), 3.0, 0.0);
    rows.push(
        ctx.row(suite, "antiholomorphic_orthogonality", "projection onto holomorphic functions", conj.value.norm(), 3.0 * conj.std_error, pass)
            .std_error(conj.std_error),
    );
    let f = |q: &CPoint| q.coord(0) * q.coord(d.dim() - 1);
    let est = projection_apply(&kp, f, &at, &spec)?;
    let norm = norms[monomials
        .iter()
        .position(|al| {
            let mut v = vec![0u32; d.dim()];
            v[0] += 1;
            v[d.dim() - 1] += 1;
            al.as_slice() == v.as_slice()
        })
        .unwrap_or(0)];
    let err = (est.value - f(&at)).norm() / norm;
    rows.push(
        ctx.row(suite, "projection_product", "reproducing formula", err, 0.01, err <= 0.01)
            .std_error(est.std_error / norm)
            .sup_point(&at),
    );
    Ok(rows)
}

fn monomial_value(flat: &[Complex64], alpha: &MultiIndex) -> Complex64 {
    alpha
        .as_slice()
        .iter()
        .zip(flat)
        .fold(Complex64::new(1.0, 0.0), |acc, (&e, x)| acc * x.powu(e))
}

fn parseval_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Parseval;
    let d = ctx.plan.domain;
    let sigma = ctx.plan.sigma;
    let mu = WeightedMeasure::new(sigma)?;
    let spec = ctx.spec(ctx.cfg.samples, 0x51)?;
    let mut rows = Vec::new();
    let vol = weighted_volume(&d, &mu);
    let est = integrate_weighted(&d, &mu, |_| Complex64::new(1.0, 0.0), &spec)?;
    let rel = (est.value.re - vol).abs() / vol;
    rows.push(
        ctx.row(suite, "weighted_volume", "weighted volume closed form", rel, 0.02, rel <= 0.02)
            .std_error(est.std_error / vol)
            .param("sigma", sigma)
            .param("closed_form", vol),
    );
    if d.a() == 1.0 {
        let nn = d.dim() as f64;
        let ball = (nn * std::f64::consts::PI.ln() + log_gamma(sigma + 1.0)? - log_gamma(nn + sigma + 1.0)?).exp();
        let rel = (vol - ball).abs() / ball;
        rows.push(ctx.row(suite, "ball_volume", "weighted volume of the ball", rel, 1e-12, rel <= 1e-12).param("sigma", sigma));
    }
    let at = ctx.check_points(1, 0x52)?.remove(0);
    let b = (d.a() * (sigma + d.m() as f64) + d.n() as f64 + 2.0) / 2.0;
    for (k, r) in [(0u32, b), (1, b + d.a()), (2, 1.5)] {
        let closed = psi_norm_integral(&d, sigma, k, r, &at, 100_000)?;
        let est = integrate_focused(&d, &mu, &at, |q| Complex64::new(psi(k, r, &at, q).norm_sqr(), 0.0), &spec)?;
        let rel = (est.value.re - closed).abs() / closed;
        rows.push(
            ctx.row(suite, &format!("psi_norm_k{k}"), "closed form of the psi-norm", rel, 0.02, rel <= 0.02)
                .std_error(est.std_error / closed)
                .sup_point(&at)
                .param("k", k)
                .param("r", r)
                .param("closed_form", closed),
        );
    }
    Ok(rows)
}

fn gamma_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Gamma;
    let d = ctx.plan.domain;
    let (sigma, dexp) = (ctx.plan.sigma, ctx.plan.d);
    let mut rows = Vec::new();
    let grid = log_grid(1e-3, 1e4, 200);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_rec: f64 = 0.0;
    for &x in &grid {
        for &t in &grid {
            worst_ratio = worst_ratio.max(gamma_ratio(x, t)?);
        }
        // Γ(x+1) = xΓ(x) through both log-Gamma routes
        let via_diff = (log_gamma_diff(x, 1.0) - x.ln()).abs();
        worst_rec = worst_rec.max(via_diff);
        if x <= 100.0 {
            let direct = (log_gamma(x + 1.0)? - log_gamma(x)? - x.ln()).abs();
            worst_rec = worst_rec.max(direct);
        }
    }
    rows.push(ctx.row(suite, "gamma_ratio_at_most_one", "Gamma ratio property", worst_ratio, 1.0, worst_ratio <= 1.0 + 1e-12).param("grid", grid.len()));
    rows.push(ctx.row(suite, "gamma_recurrence", "Gamma recurrence", worst_rec, 1e-12, worst_rec <= 1e-12).param("grid", grid.len()));
    let params = Ineq56Params::new(d.n(), d.m(), d.a(), sigma, dexp)?;
    let s5 = ineq5_scan(&params, ctx.cfg.grid, ctx.cfg.grid)?;
    rows.push(scan_row(ctx, "ineq5_sup", "first Gamma-ratio inequality", &s5, sigma, dexp));
    let s6 = ineq6_scan(&params, ctx.cfg.grid)?;
    rows.push(scan_row(ctx, "ineq6_sup", "second Gamma-ratio inequality", &s6, sigma, dexp));
    Ok(rows)
}

fn scan_row(ctx: &Ctx, check: &str, anchor: &str, scan: &RatioScan, sigma: f64, d: f64) -> ReportRow {
    let tail = scan.tail();
    let mut row = ctx
        .row(Suite::Gamma, check, anchor, scan.sup, scan.sup, scan.passes())
        .param("sigma", sigma)
        .param("d", d)
        .param("grid", ctx.cfg.grid)
        .param("argmax", scan.argmax.clone())
        .param("shell_sups", scan.shell_sups.clone());
    if let Some(t) = tail {
        row = row
            .param("tail_non_increasing", t.non_increasing)
            .param("tail_contracting", t.contracting);
    }
    row
}

/// Sup-estimates at the coarse floor, the configured floor, and the
/// configured floor with four times the inner budget.
fn refinement<T, F>(ctx: &Ctx, base_inner: usize, run: F) -> Result<[T; 3]>
where
    F: Fn(&ScanSpec, &SamplerSpec) -> Result<T>,
{
    let seed = ctx.cfg.seed;
    let coarse = ScanSpec::new(ctx.cfg.outer, COARSE_FLOOR, seed)?;
    let fine = ScanSpec::new(ctx.cfg.outer, ctx.cfg.h_floor, seed)?;
    let inner = ctx.spec(base_inner, 0x61)?;
    let big = inner.with_count(4 * base_inner)?;
    Ok([run(&coarse, &inner)?, run(&fine, &inner)?, run(&fine, &big)?])
}

/// `max / min` over a set of positive estimates.
pub fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn stability_row(ctx: &Ctx, suite: Suite, check: &str, anchor: &str, runs: &[SupEstimate; 3]) -> ReportRow {
    let values: Vec<f64> = runs.iter().map(|r| r.sup).collect();
    let s = spread(&values);
    let pass = values.iter().all(|v| v.is_finite() && *v > 0.0) && s < STABILITY_FACTOR;
    ctx.row(suite, check, anchor, runs[2].sup, STABILITY_FACTOR, pass)
        .std_error(runs[2].std_error)
        .sup_point(&runs[2].argmax)
        .param("sup_coarse_floor", values[0])
        .param("sup_fine_floor", values[1])
        .param("sup_fine_floor_4x", values[2])
        .param("spread", s)
        .param("h_floor", ctx.cfg.h_floor)
        .param("outer", ctx.cfg.outer)
        .param("inner_samples", runs[1].inner_samples)
}

fn schur_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Schur;
    let d = ctx.plan.domain;
    let space = ctx.plan.space;
    let sigma = ctx.plan.sigma;
    let kp = ctx.kernel(sigma)?;
    let coords = [0, d.n()];
    let mut rows = Vec::new();
    match space.regime() {
        Some(Regime::Reflexive) => {
            let ec = ExponentChoice {
                sigma,
                d: Some(ctx.plan.d),
            };
            for k in coords {
                let [r0, r1, r2] =
                    refinement(ctx, ctx.cfg.scan_samples, |scan, spec| schur_test(&kp, &space, &ec, k, scan, spec))?;
                let c8 = [r0.0, r1.0, r2.0];
                let c9 = [r0.1, r1.1, r2.1];
                rows.push(
                    stability_row(ctx, suite, &format!("c8_k{k}"), "Schur test, first condition", &c8)
                        .param("k", k)
                        .param("p", space.p())
                        .param("lambda", space.lambda())
                        .param("sigma", sigma)
                        .param("d", ctx.plan.d),
                );
                rows.push(
                    stability_row(ctx, suite, &format!("c9_k{k}"), "Schur test, second condition", &c9)
                        .param("k", k)
                        .param("p", space.p())
                        .param("lambda", space.lambda())
                        .param("sigma", sigma)
                        .param("d", ctx.plan.d),
                );
            }
            if space.lambda() == 0.0 {
                // the λ = 0 constants dominate every λ ≥ 0; spot-check λ = 1 directly
                let sp1 = SpaceParams::new(space.p(), 1.0)?;
                let scan = ScanSpec::new(ctx.cfg.outer.div_ceil(2), ctx.cfg.h_floor, ctx.cfg.seed)?;
                let (c8, c9) = schur_test(&kp, &sp1, &ec, 0, &scan, &ctx.spec(ctx.cfg.scan_samples, 0x62)?)?;
                let value = c8.sup.max(c9.sup);
                rows.push(
                    ctx.row(suite, "lambda_positive_spot_check", "Schur test for a positive weight", value, f64::INFINITY, value.is_finite())
                        .param("lambda", 1.0)
                        .param("c8", c8.sup)
                        .param("c9", c9.sup),
                );
            }
            let pts = scan_points(&d, 4, 0.05, ctx.cfg.seed ^ 0x63)?;
            let spec = ctx.spec(ctx.cfg.scan_samples * 4, 0x64)?;
            let mut worst = (0.0f64, 0.0f64, String::new(), true);
            for at in &pts {
                let (direct, sym) = bound16_pair(&kp, &space, ctx.plan.d, at, &spec)?;
                let se = (direct.std_error.powi(2) + sym.std_error.powi(2)).sqrt();
                let z = (direct.value - sym.value).abs() / se.max(1e-300);
                if z >= worst.0 {
                    worst = (z, direct.value, at.to_string(), z <= 3.0);
                }
            }
            rows.push(
                ctx.row(suite, "second_integral_symmetry", "symmetric reduction of the second Schur integral", worst.0, 3.0, worst.3)
                    .sup_point(worst.2)
                    .param("direct_value", worst.1)
                    .param("points", pts.len()),
            );
            let pairs = scan_points(&d, 200, ctx.cfg.h_floor, ctx.cfg.seed ^ 0x65)?;
            let mut qb: f64 = 0.0;
            for (i, p) in pairs.iter().enumerate() {
                let q = &pairs[(i * 7 + 1) % pairs.len()];
                for k in coords {
                    qb = qb.max(q_bound_ratio(&kp, k, p, q)?).max(q_bound_ratio(&kp, k, p, p)?);
                }
            }
            rows.push(ctx.row(suite, "q_bounded_by_g", "pointwise bound of Q by G", qb, f64::INFINITY, qb.is_finite()).param("pairs", 2 * pairs.len()));
        }
        Some(Regime::L1) => {
            for k in coords {
                let runs = refinement(ctx, ctx.cfg.scan_samples, |scan, spec| l1_check(&kp, space.lambda(), k, scan, spec))?;
                rows.push(
                    stability_row(ctx, suite, &format!("l1_k{k}"), "L1 estimate for Q", &runs)
                        .param("k", k)
                        .param("lambda", space.lambda())
                        .param("sigma", sigma),
                );
            }
        }
        None => return Err(Error::InvalidParameter("schur needs a covered (p, lambda)".into())),
    }
    Ok(rows)
}

fn lemma1_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Lemma1;
    let kp = ctx.kernel(ctx.plan.sigma)?;
    let pairs = ctx.cfg.samples;
    let seed = ctx.cfg.seed;
    let runs = [
        lemma1_scan(&kp, pairs, COARSE_FLOOR, seed)?,
        lemma1_scan(&kp, pairs, ctx.cfg.h_floor, seed)?,
        lemma1_scan(&kp, 4 * pairs, ctx.cfg.h_floor, seed)?,
    ];
    let values: Vec<f64> = runs.iter().map(|r| r.sup).collect();
    let s = spread(&values);
    let pass = values.iter().all(|v| v.is_finite() && *v > 0.0) && s < STABILITY_FACTOR;
    let (p, q) = &runs[2].argmax;
    Ok(vec![ctx
        .row(suite, "gradient_ratio_sup", "gradient of the kernel bounded by G squared", values[2], STABILITY_FACTOR, pass)
        .sup_point(format!("{p} ; {q}"))
        .param("coordinate", runs[2].coordinate)
        .param("sup_coarse_floor", values[0])
        .param("sup_fine_floor", values[1])
        .param("sup_fine_floor_4x", values[2])
        .param("spread", s)
        .param("pairs", pairs)
        .param("sigma", ctx.plan.sigma)])
}

fn lemma2_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Lemma2;
    let d = ctx.plan.domain;
    let sigma = ctx.plan.sigma;
    let dexp = ctx.plan.d;
    let kp = ctx.kernel(sigma)?;
    let mut rows = Vec::new();
    let runs = refinement(ctx, ctx.cfg.scan_samples, |scan, spec| sup_scan(&d, scan, |p| lemma2_ratio(&kp, dexp, p, spec)))?;
    rows.push(
        stability_row(ctx, suite, "weighted_g_integral_sup", "weighted integral of G squared", &runs)
            .param("sigma", sigma)
            .param("d", dexp),
    );
    // profile along rays toward the boundary
    let spec = ctx.spec(ctx.cfg.scan_samples, 0x71)?;
    let starts = scan_points(&d, 4, 0.5, ctx.cfg.seed ^ 0x72)?;
    let levels = [1e-2, 1e-4, 1e-6];
    let mut worst_spread: f64 = 0.0;
    let mut profiles = Vec::new();
    for p in &starts {
        let profile: Vec<f64> = levels
            .iter()
            .map(|&h| lemma2_ratio(&kp, dexp, &d.point_at_level(p, h)?, &spec).map(|e| e.value))
            .collect::<Result<_>>()?;
        let non_increasing = profile.windows(2).all(|w| w[1] <= w[0]);
        let s = if non_increasing { 1.0 } else { spread(&profile) };
        worst_spread = worst_spread.max(s);
        profiles.push(profile);
    }
    rows.push(
        ctx.row(suite, "boundary_ray_profile", "weighted integral of G squared", worst_spread, STABILITY_FACTOR, worst_spread < STABILITY_FACTOR)
            .param("levels", levels.to_vec())
            .param("profiles", profiles),
    );
    // MC against the orthogonal-series evaluation at moderate depth
    let mut worst = (0.0f64, String::new());
    for at in scan_points(&d, 3, 0.05, ctx.cfg.seed ^ 0x73)?.iter().map(|p| if d.h_unchecked(p) < 0.05 { d.point_at_level(p, 0.05) } else { Ok(p.clone()) }) {
        let at = at?;
        let mc = lemma2_ratio(&kp, dexp, &at, &ctx.spec(4 * ctx.cfg.scan_samples, 0x74)?)?;
        let series = lemma2_series(&kp, dexp, &at, 200_000)?;
        let z = (mc.value - series).abs() / mc.std_error.max(1e-300);
        if z >= worst.0 {
            worst = (z, at.to_string());
        }
    }
    rows.push(ctx.row(suite, "series_agreement", "weighted integral of G squared", worst.0, 4.0, worst.0 <= 4.0).sup_point(worst.1));
    Ok(rows)
}

fn opnorm_suite(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let suite = Suite::Opnorm;
    let d = ctx.plan.domain;
    let space = ctx.plan.space;
    let spec = ctx.spec(ctx.cfg.samples, 0x81)?;
    let family = float_family(ctx, 0x82, ctx.cfg.family);
    let (ratio, (idx, k)) = operator_norm_estimate(&d, &space, &family, &spec)?;
    let mut rows = vec![ctx
        .row(suite, "random_family", "bounded Gleason operators", ratio, f64::INFINITY, ratio.is_finite())
        .param("family", family.len())
        .param("argmax_index", idx)
        .param("argmax_coordinate", k)
        .param("p", space.p())
        .param("lambda", space.lambda())];
    let scaled: Vec<FloatPoly> = vec![family[idx].scale(&Complex64::new(-2.5, 1.0))];
    let (r2, _) = operator_norm_estimate(&d, &space, &scaled, &spec)?;
    let single = operator_norm_estimate(&d, &space, &family[idx..=idx], &spec)?.0;
    let dev = (r2 - single).abs() / single;
    rows.push(ctx.row(suite, "scaling_invariance", "bounded Gleason operators", dev, 1e-12, dev <= 1e-12));
    let mut worst: f64 = 0.0;
    for k in 0..d.dim() {
        let mut alpha = vec![0u32; d.dim()];
        alpha[k] = ctx.cfg.degree;
        let f = FloatPoly::monomial(MultiIndex::new(alpha), Complex64::new(1.0, 0.0));
        let g = f.leibenson_component(k)?.mul_coordinate(k)?;
        let ratio = crate::analysis::lp_norm(&d, &space, |x| g.evaluate_flat(&x.flat()).unwrap_or_default(), &spec)?.value
            / crate::analysis::lp_norm(&d, &space, |x| f.evaluate_flat(&x.flat()).unwrap_or_default(), &spec)?.value;
        worst = worst.max((ratio - 1.0).abs());
    }
    rows.push(ctx.row(suite, "pure_powers", "bounded Gleason operators", worst, 1e-12, worst <= 1e-12).param("degree", ctx.cfg.degree));
    Ok(rows)
}

/// Exit status of a finished run: 0 when every row passes, 1 otherwise.
pub fn exit_code(rows: &[ReportRow]) -> i32 {
    if rows.iter().all(|r| r.pass) {
        0
    } else {
        1
    }
}
