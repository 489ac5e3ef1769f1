//! Numeric sectorial analysis: flat sections on arcs, the splitting operator
//! `Λ`, growth classification of sampled data, and residual checks.
//!
//! Flat sections are stored through the normalized matrix
//! `z(s) = T^{−1}·W(s)·Y(s)^{−1}`, which tends to `Φ(τ)` (the formal gauge)
//! inside the sector, so `W = T·z·Y`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;


use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;
use num_traits::Zero;

use crate::diffmod::{DiffError, DiffSystem, FormalDatum, FormalSolution};
use crate::exponents::{Arc, GrowthClass, TAU};
use crate::linalg::{self, CMat, CVec};
use crate::quadrature::Rule;
use crate::special::log_near;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SectorialError {
    #[error("no stable propagation direction: {0}")]
    SeedDivergence(String),
    #[error("arc contains several Stokes directions of one exponent pair: {0}")]
    StokesLineInArc(String),
    #[error("recurrence path from {0} comes within {1} of the origin")]
    PathLeavesDomain(Complex64, f64),
    #[error("exponent violates the normalization inequality; apply shift({suggested_shift})")]
    NormalizationViolated { suggested_shift: i64 },
    #[error("quadrature did not converge: {0}")]
    QuadratureNoConvergence(String),
    #[error("samples at s + 1 are missing")]
    MissingCompanions,
    #[error("need at least 8 samples spanning a factor 4 in |s|")]
    InsufficientSamples,
    #[error(transparent)]
    Diff(#[from] DiffError),
}

pub type Result<T> = core::result::Result<T, SectorialError>;

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `log(1 + w)` without cancellation for small `w`.
pub fn ln_1p(w: Complex64) -> Complex64 {
    if w.norm() > 0.25 {
        return (w + 1.0).ln();
    }
    // atanh-type series: log(1+w) = 2 atanh(w / (2 + w))
    let q = w / (w + 2.0);
    let q2 = q * q;
    let mut term = q;
    let mut acc = q;
    for k in 1..60 {
        term *= q2;
        let add = term / (2 * k + 1) as f64;
        acc += add;
        if add.norm() < 1e-18 * acc.norm() {
            break;
        }
    }
    acc * 2.0
}

/// `exp(z) − 1` without cancellation for small `z`.
pub fn exp_m1(z: Complex64) -> Complex64 {
    let em1 = libm::expm1(z.re);
    let half = libm::sin(0.5 * z.im);
    cx(em1 * libm::cos(z.im) - 2.0 * half * half, libm::exp(z.re) * libm::sin(z.im))
}

/// `a(s+1) − a(s)` for the exponent on the branch of `log_s`.
pub fn exponent_step(a: &crate::exponents::Exponent, s: Complex64, log_s: Complex64) -> Complex64 {
    let m = a.ramification() as f64;
    let l1 = ln_1p(s.inv());
    let mut acc = Complex64::zero();
    for l in 1..=a.ramification() {
        let c = a.c(l);
        if c.is_zero() {
            continue;
        }
        let q = l as f64 / m;
        acc += c * (log_s * q).exp() * exp_m1(l1 * q);
    }
    acc
}

/// Elementary system matrix `⊕ exp(a_i(s+1) − a_i(s))·(1+1/s)^{−G_i}` (`inverse` flips it).
pub fn elementary_matrix(fd: &FormalDatum, s: Complex64, log_s: Complex64, inverse: bool) -> CMat {
    let n = fd.rank();
    let mut out = CMat::zeros(n, n);
    let l1 = ln_1p(s.inv());
    let sign = if inverse { -1.0 } else { 1.0 };
    let mut off = 0;
    for p in &fd.pieces {
        let k = p.rank();
        let e = (exponent_step(&p.exponent, s, log_s) * sign).exp();
        let b = linalg::matrix_power(&(&p.g * Complex64::from(-sign)), l1) * e;
        out.view_mut((off, off), (k, k)).copy_from(&b);
        off += k;
    }
    out
}

/// `Y(s)·Y(ζ)^{−1}` computed piecewise without overflow.
pub fn frame_transfer(fd: &FormalDatum, log_s: Complex64, log_z: Complex64) -> CMat {
    let n = fd.rank();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for p in &fd.pieces {
        let k = p.rank();
        let e = (p.exponent.eval_log(log_z) - p.exponent.eval_log(log_s)).exp();
        let b = linalg::matrix_power(&p.g, log_s - log_z) * e;
        out.view_mut((off, off), (k, k)).copy_from(&b);
        off += k;
    }
    out
}

/// Samples along a ray (or any point set), optionally with values at `s + 1`.
#[derive(Debug, Clone)]
pub struct RaySamples {
    pub sigma: f64,
    pub points: Vec<Complex64>,
    pub values: Vec<CMat>,
    pub shifted: Option<Vec<CMat>>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Samples of a function on given points, with companions at `s + 1`.
    pub fn from_fn(sigma: f64, points: &[Complex64], f: impl Fn(Complex64) -> CMat) -> Self {
        RaySamples {
            sigma,
            points: points.to_vec(),
            values: points.iter().map(|&s| f(s)).collect(),
            shifted: Some(points.iter().map(|&s| f(s + 1.0)).collect()),
        }
    }

    pub fn magnitudes(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(s, v)| (s.norm(), v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()))
            .collect()
    }
}

/// `n` points `R e^{iσ}` with `R` evenly spaced in `[r_min, r_max]`.
pub fn ray_points(sigma: f64, r_min: f64, r_max: f64, n: usize) -> Vec<Complex64> {
    assert!(n >= 2);
    (0..n)
        .map(|k| Complex64::from_polar(r_min + (r_max - r_min) * k as f64 / (n - 1) as f64, sigma))
        .collect()
}

/// `max_i |A(s_i) y(s_i+1) − y(s_i) − rhs_i| / scale_i`, with `scale_i = |rhs_i|`
/// when a right-hand side is given and `|y(s_i)|` otherwise.
pub fn residual_with(
    a: impl Fn(Complex64) -> CMat,
    y: &RaySamples,
    rhs: Option<&[CMat]>,
) -> Result<f64> {
    let shifted = y.shifted.as_ref().ok_or(SectorialError::MissingCompanions)?;
    let mut worst: f64 = 0.0;
    for i in 0..y.len() {
        let s = y.points[i];
        let mut r = a(s) * &shifted[i] - &y.values[i];
        let scale = match rhs {
            Some(f) => {
                r -= &f[i];
                f[i].norm()
            }
            None => y.values[i].norm(),
        };
        worst = worst.max(r.norm() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Relative residual of `y(s) = A(s)·y(s+1)` using the system's series.
pub fn residual(sys: &DiffSystem, y: &RaySamples) -> Result<f64> {
    residual_with(|s| sys.eval_log(log_near(s, y.sigma)), y, None)
}

/// Least-squares fit `log|y| ≈ μ̂ R + ν̂ log R + c` and the resulting class.
#[derive(Debug, Clone, Copy)]
pub struct GrowthFit {
    pub class: GrowthClass,
    pub mu: f64,
    pub nu: f64,
    pub c: f64,
    /// Samples used after removing values below the noise floor.
    pub used: usize,
    /// Everything was below the noise floor.
    pub numerically_zero: bool,
}

pub const GROWTH_TOL: f64 = 1e-3;

/// Growth classification of `(R, |y|)` pairs; values `≤ floor` are treated as zero.
pub fn classify_magnitudes(samples: &[(f64, f64)], floor: f64) -> Result<GrowthFit> {
    let logs: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(r, v)| (r, if v.is_finite() && v > floor && v > 0.0 { v.ln() } else { f64::NEG_INFINITY }))
        .collect();
    classify_log_magnitudes(&logs)
}

/// As [`classify_magnitudes`] on `(R, log|y|)`; `−∞` marks a zero sample.
pub fn classify_log_magnitudes(samples: &[(f64, f64)]) -> Result<GrowthFit> {
    let rmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let rmax = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if samples.len() < 8 || rmax < 4.0 * rmin {
        return Err(SectorialError::InsufficientSamples);
    }
    let kept: Vec<(f64, f64)> = samples.iter().cloned().filter(|(_, l)| l.is_finite()).collect();
    let kr_min = kept.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let kr_max = kept.iter().map(|s| s.0).fold(0.0, f64::max);
    if kept.len() < 4 || kr_max < 1.5 * kr_min {
        return Ok(GrowthFit {
            class: GrowthClass::RapidDecay,
            mu: f64::NEG_INFINITY,
            nu: 0.0,
            c: 0.0,
            used: kept.len(),
            numerically_zero: true,
        });
    }
    let m = DMatrix::from_fn(kept.len(), 3, |i, j| match j {
        0 => kept[i].0,
        1 => kept[i].0.ln(),
        _ => 1.0,
    });
    let b = DVector::from_iterator(kept.len(), kept.iter().map(|s| s.1));
    let x = linalg::least_squares(&m, &b).ok_or(SectorialError::InsufficientSamples)?;
    let (mu, nu, c) = (x[0], x[1], x[2]);
    let class = if mu < -GROWTH_TOL {
        GrowthClass::RapidDecay
    } else if mu > GROWTH_TOL {
        GrowthClass::Growth
    } else {
        GrowthClass::Moderate
    };
    Ok(GrowthFit { class, mu, nu, c, used: kept.len(), numerically_zero: false })
}

/// Growth classification of sampled values (Frobenius norm per sample).
pub fn classify_growth(y: &RaySamples) -> Result<GrowthFit> {
    classify_magnitudes(&y.magnitudes(), 0.0)
}

/// Propagation side of a block of columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Seeded at `s + N`, recurrence run backward (`y(s) = A y(s+1)`).
    Right,
    /// Seeded at `s − N`, recurrence run forward with `A^{−1}`.
    Left,
}

#[derive(Debug, Clone)]
pub struct SectorialParams {
    /// `|S|` at which the formal solution seeds the recurrence.
    pub seed_radius: f64,
    /// Minimum `|s|` along recurrence paths; defaults from the system's exactness.
    pub valid_radius: Option<f64>,
    /// Forces a side for every block.
    pub direction: Option<Direction>,
}

impl Default for SectorialParams {
    fn default() -> Self {
        SectorialParams { seed_radius: 200.0, valid_radius: None, direction: None }
    }
}

/// Flat sections sampled on an arc.
#[derive(Debug, Clone)]
pub struct SectorialSolution {
    pub arc: Arc,
    pub points: Vec<Complex64>,
    /// `log s` on the arc's branch.
    pub log_s: Vec<Complex64>,
    /// Normalized `z = T^{−1} W Y^{−1}`.
    pub z: Vec<CMat>,
    pub directions: Vec<Direction>,
    pub datum: FormalDatum,
    pub t: CMat,
}

impl SectorialSolution {
    /// Fundamental matrix `W = T z Y` at sample `i`.
    pub fn w(&self, i: usize) -> CMat {
        &self.t * &self.z[i] * crate::diffmod::frame(&self.datum, self.log_s[i])
    }
}

fn propagation_directions(
    sys: &DiffSystem,
    fs: &FormalSolution,
    arc: &Arc,
    forced: Option<Direction>,
) -> Result<Vec<Direction>> {
    let side = if arc.contains_pi() { Direction::Left } else { Direction::Right };
    let k = fs.datum.pieces.len();
    if let Some(d) = forced {
        return Ok(alloc::vec![d; k]);
    }
    let conj = sys.matrix().conjugate_const(&fs.t, &fs.t_inv);
    let decoupled = conj.off_block_max(&fs.sizes()) <= 1e-13 * conj.max_abs().max(1.0);
    if decoupled {
        return Ok(alloc::vec![side; k]);
    }
    let re: Vec<f64> = fs
        .datum
        .pieces
        .iter()
        .map(|p| p.exponent.with_ramification(p.exponent.ramification()).map(|e| e.leading().re))
        .collect::<core::result::Result<_, _>>()
        .map_err(DiffError::from)?;
    let hi = re.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = re.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + hi.abs().max(lo.abs()));
    re.iter()
        .enumerate()
        .map(|(i, &r)| {
            let right = r >= hi - tol;
            let left = r <= lo + tol;
            match (right, left) {
                (true, true) => Ok(side),
                (true, false) => Ok(Direction::Right),
                (false, true) => Ok(Direction::Left),
                _ => Err(SectorialError::SeedDivergence(format!(
                    "block {i} is neither dominant nor recessive along the real direction"
                ))),
            }
        })
        .collect()
}

fn check_stokes(fd: &FormalDatum, arc: &Arc) -> Result<()> {
    let (lo, hi) = arc.sigma_range();
    for (i, p) in fd.pieces.iter().enumerate() {
        for q in fd.pieces.iter().skip(i + 1) {
            let d = p.exponent.checked_sub(&q.exponent).map_err(DiffError::from)?;
            let n = d.stokes_in_range(lo, hi).len();
            if n >= 2 {
                return Err(SectorialError::StokesLineInArc(format!(
                    "{} and {} have {n} Stokes directions in {arc}",
                    p.exponent, q.exponent
                )));
            }
        }
    }
    Ok(())
}

/// Flat sections on `arc` sampled at `points`, seeded from the formal solution.
pub fn flat_sections(
    sys: &DiffSystem,
    fs: &FormalSolution,
    arc: &Arc,
    points: &[Complex64],
    params: &SectorialParams,
) -> Result<SectorialSolution> {
    check_stokes(&fs.datum, arc)?;
    let dirs = propagation_directions(sys, fs, arc, params.direction)?;
    let valid = params
        .valid_radius
        .unwrap_or(if sys.is_exact() { 0.3 } else { 8.0 });
    let n = fs.datum.rank();
    let mid = arc.sigma_mid();
    let mut zs = Vec::with_capacity(points.len());
    let mut logs = Vec::with_capacity(points.len());
    for &s in points {
        let ls = log_near(s, mid);
        let mut z = CMat::zeros(n, n);
        let mut off = 0;
        for (pi, piece) in fs.datum.pieces.iter().enumerate() {
            let k = piece.rank();
            let blk = propagate_block(sys, fs, pi, off, k, s, ls, dirs[pi], params.seed_radius, valid)?;
            z.view_mut((0, off), (n, k)).copy_from(&blk);
            off += k;
        }
        zs.push(z);
        logs.push(ls);
    }
    Ok(SectorialSolution {
        arc: *arc,
        points: points.to_vec(),
        log_s: logs,
        z: zs,
        directions: dirs,
        datum: fs.datum.clone(),
        t: fs.t.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn propagate_block(
    sys: &DiffSystem,
    fs: &FormalSolution,
    piece: usize,
    off: usize,
    k: usize,
    s: Complex64,
    ls: Complex64,
    dir: Direction,
    seed_radius: f64,
    valid: f64,
) -> Result<CMat> {
    let n = fs.datum.rank();
    let single = FormalDatum::new(alloc::vec![fs.datum.pieces[piece].clone()]);
    let step = match dir {
        Direction::Right => 1.0,
        Direction::Left => -1.0,
    };
    // path s, s ± 1, …, s ± N with |s ± N| ≥ seed_radius
    let mut path = alloc::vec![(s, ls)];
    let mut cur = s;
    let mut lcur = ls;
    let mut guard = 0;
    while cur.norm() < seed_radius || (cur.re * step) < 0.5 * seed_radius {
        cur += step;
        lcur = log_near(cur, lcur.im);
        path.push((cur, lcur));
        guard += 1;
        if guard > 100_000 {
            return Err(SectorialError::SeedDivergence(String::from("seed point unreachable")));
        }
    }
    if let Some(&(bad, _)) = path.iter().find(|(x, _)| x.norm() < valid) {
        let _ = bad;
        return Err(SectorialError::PathLeavesDomain(s, valid));
    }
    let (seed_s, seed_l) = *path.last().unwrap();
    let phi = fs.phi.eval_log(seed_l);
    let tail = seed_tail(sys, fs, seed_l);
    if tail > 1e-9 {
        return Err(SectorialError::SeedDivergence(format!(
            "formal series not converged at |S| = {:.1} (last term {tail:.2e}); raise the seed radius",
            seed_s.norm()
        )));
    }
    let mut z = phi.view((0, off), (n, k)).into_owned();
    match dir {
        Direction::Right => {
            for j in (0..path.len() - 1).rev() {
                let (x, lx) = path[j];
                let a = fs.conjugated(sys, lx);
                let d = elementary_matrix(&single, x, lx, true);
                z = a * z * d;
            }
        }
        Direction::Left => {
            for j in (1..path.len()).rev() {
                let (x, lx) = path[j];
                let a = fs.conjugated(sys, lx);
                let ainv = linalg::inverse(&a).ok_or_else(|| {
                    SectorialError::SeedDivergence(format!("A is singular at {x}"))
                })?;
                let d = elementary_matrix(&single, x, lx, false);
                z = ainv * z * d;
            }
        }
    }
    Ok(z)
}

/// Size of the last retained term of `Φ` at the seed point.
fn seed_tail(sys: &DiffSystem, fs: &FormalSolution, log_s: Complex64) -> f64 {
    let m = fs.phi.ramification() as f64;
    let k = fs.phi.trunc().min(sys.matrix().trunc() * (m as i64) / sys.ramification() as i64);
    let tau = (-log_s / m).exp().norm();
    let last = match fs.phi.coeff(k) {
        Some(c) if k > 0 => linalg::max_abs(&c) * tau.powi(k as i32),
        _ => 0.0,
    };
    last + tau.powi(k as i32 + 1)
}

/// Lower end of the integration contours of `Λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    /// Far ahead of the samples and below the pole lines, pushed out until
    /// its contribution is negligible.
    Auto,
    /// A fixed point, which must lie below every pole line `Im ζ = Im s`.
    Point(Complex64),
}

#[derive(Debug, Clone)]
pub struct LambdaParams {
    pub anchor: Anchor,
    /// Half-width `ε` of the sector used in the normalization inequality.
    pub epsilon: f64,
    /// Longest panel on the finite segment.
    pub panel: f64,
    /// Relative size at which the infinite tail is cut.
    pub tail_rel: f64,
    pub max_tail_panels: usize,
    pub check_normalization: bool,
}

impl Default for LambdaParams {
    fn default() -> Self {
        LambdaParams {
            anchor: Anchor::Auto,
            epsilon: 0.1,
            panel: 0.5,
            tail_rel: 1e-16,
            max_tail_panels: 4000,
            check_normalization: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LambdaOutput {
    /// `Λf` at the points (columns of height `rank`), with companions at `s + 1`.
    pub samples: RaySamples,
    pub error: Vec<f64>,
    pub shifted_error: Vec<f64>,
    pub anchor: Complex64,
}

/// Checks `−2π + R + Im c < 0` for the coefficient `c` of `s` in every exponent,
/// where `R = max(0, −Re c)·max(atan(σ − ε), atan(σ + ε))`.
pub fn check_normalization(fd: &FormalDatum, sigma: f64, eps: f64) -> Result<()> {
    for p in &fd.pieces {
        let a = &p.exponent;
        let c = a.c(a.ramification());
        let r = (-c.re).max(0.0) * libm::atan(sigma - eps).max(libm::atan(sigma + eps));
        let lhs = -TAU + r + c.im;
        if lhs >= 0.0 {
            let k = libm::floor(lhs / TAU) as i64 + 1;
            return Err(SectorialError::NormalizationViolated { suggested_shift: -k });
        }
    }
    Ok(())
}

fn kernel(s: Complex64, z: Complex64) -> Complex64 {
    let w = Complex64::i() * TAU * (s - z);
    if w.re > 0.0 {
        let e = (-w).exp();
        -e / (1.0 - e)
    } else {
        1.0 / (1.0 - w.exp())
    }
}

struct PointIntegral {
    value: CVec,
    abs_sum: f64,
}

fn integrate_point(
    fd: &FormalDatum,
    f: &dyn Fn(Complex64) -> CVec,
    s: Complex64,
    ls: Complex64,
    p: Complex64,
    h: f64,
    rule: &Rule,
    params: &LambdaParams,
) -> Result<PointIntegral> {
    let n = fd.rank();
    let l = s + 0.5 - p;
    let len = l.norm();
    let mut acc = CVec::zeros(n);
    let mut abs_sum = 0.0;
    let mut peak: f64 = 0.0;
    let integrand = |tt: f64| -> CVec {
        let z = p + l * tt;
        let lz = log_near(z, ls.im);
        frame_transfer(fd, ls, lz) * f(z) * (kernel(s, z) * l)
    };
    let panel = |a: f64, b: f64, acc: &mut CVec, abs_sum: &mut f64, peak: &mut f64| -> f64 {
        let mut last = 0.0;
        for (tt, w) in rule.on(a, b) {
            let g = integrand(tt);
            let gn = g.norm();
            *acc += g * Complex64::from(w);
            *abs_sum += w.abs() * gn;
            *peak = peak.max(gn);
            last = gn;
        }
        last
    };
    let n0 = libm::ceil(len / h).max(1.0) as usize;
    for j in 0..n0 {
        panel(j as f64 / n0 as f64, (j + 1) as f64 / n0 as f64, &mut acc, &mut abs_sum, &mut peak);
    }
    // vertical tail from s + 1/2, where the kernel decays like e^{-2π Im}
    let top = s + 0.5;
    let tail = |u: f64| -> CVec {
        let z = top + Complex64::new(0.0, u);
        let lz = log_near(z, ls.im);
        frame_transfer(fd, ls, lz) * f(z) * (kernel(s, z) * Complex64::i())
    };
    let mut u0 = 0.0;
    let mut width = h;
    let mut small = 0;
    for _ in 0..params.max_tail_panels {
        let du = width.min(2.0);
        let mut last = 0.0;
        for (uu, w) in rule.on(u0, u0 + du) {
            let g = tail(uu);
            let gn = g.norm();
            acc += g * Complex64::from(w);
            abs_sum += w.abs() * gn;
            peak = peak.max(gn);
            last = gn;
        }
        u0 += du;
        width *= 1.5;
        if last <= params.tail_rel * peak {
            small += 1;
            if small >= 2 {
                return Ok(PointIntegral { value: acc, abs_sum });
            }
        } else {
            small = 0;
        }
    }
    Err(SectorialError::QuadratureNoConvergence(format!(
        "tail of the contour through {} does not decay",
        s + 0.5
    )))
}

fn auto_anchor(
    fd: &FormalDatum,
    f: &dyn Fn(Complex64) -> CVec,
    all: &[Complex64],
    sigma: f64,
) -> Complex64 {
    let far = all.iter().cloned().fold(Complex64::zero(), |m, x| if x.norm() > m.norm() { x } else { m });
    let min_im = all.iter().map(|x| x.im).fold(f64::INFINITY, f64::min);
    let fs: Vec<f64> = all.iter().map(|&x| f(x).norm()).collect();
    let anchor = |d: f64| {
        let ahead = far + Complex64::from_polar(d, sigma);
        cx(ahead.re, min_im.min(ahead.im) - d - 1.0)
    };
    let mut d = 10.0;
    loop {
        let p = anchor(d);
        let fp = f(p);
        let ok = all.iter().zip(&fs).all(|(&x, &fx)| {
            let lx = log_near(x, sigma);
            let lp = log_near(p, lx.im);
            let v = (frame_transfer(fd, lx, lp) * &fp).norm();
            v <= 1e-14 * fx || (fx == 0.0 && v == 0.0)
        });
        if ok || d >= 200.0 {
            return p;
        }
        d = (d * 1.5).min(200.0);
    }
}

/// The splitting operator `Λf(s) = −f(s) + Y(s)∫ Y(ζ)^{−1} f(ζ) dζ / (1 − e^{2πi(s−ζ)})`
/// for the elementary module of `fd`, contours running from the anchor through
/// `s + 1/2` to infinity. Values are also produced at `s + 1`.
pub fn lambda_op(
    fd: &FormalDatum,
    f: &dyn Fn(Complex64) -> CVec,
    points: &[Complex64],
    sigma: f64,
    params: &LambdaParams,
) -> Result<LambdaOutput> {
    if params.check_normalization {
        check_normalization(fd, sigma, params.epsilon)?;
    }
    let mut all: Vec<Complex64> = points.to_vec();
    all.extend(points.iter().map(|&s| s + 1.0));
    let p = match params.anchor {
        Anchor::Point(p) => p,
        Anchor::Auto => auto_anchor(fd, f, &all, sigma),
    };
    let rule = Rule::gauss_legendre(16);
    let mut vals = Vec::with_capacity(all.len());
    let mut errs = Vec::with_capacity(all.len());
    for &s in &all {
        let ls = log_near(s, sigma);
        let coarse = integrate_point(fd, f, s, ls, p, params.panel, &rule, params)?;
        let fine = integrate_point(fd, f, s, ls, p, 0.5 * params.panel, &rule, params)?;
        let err = (&coarse.value - &fine.value).norm() + 1e-15 * fine.abs_sum;
        let v = fine.value - f(s);
        vals.push(DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        errs.push(err);
    }
    let shifted = vals.split_off(points.len());
    let shifted_error = errs.split_off(points.len());
    Ok(LambdaOutput {
        samples: RaySamples { sigma, points: points.to_vec(), values: vals, shifted: Some(shifted) },
        error: errs,
        shifted_error,
        anchor: p,
    })
}

/// Relative residual `|A y(s+1) − y(s) − f(s)| / |f(s)|` of `Λf` for the
/// elementary module of `fd`.
pub fn lambda_residual(fd: &FormalDatum, f: &dyn Fn(Complex64) -> CVec, out: &LambdaOutput) -> Result<f64> {
    let rhs: Vec<CMat> = out
        .samples
        .points
        .iter()
        .map(|&s| {
            let v = f(s);
            DMatrix::from_column_slice(v.len(), 1, v.as_slice())
        })
        .collect();
    let sigma = out.samples.sigma;
    residual_with(|s| elementary_matrix(fd, s, log_near(s, sigma), false), &out.samples, Some(&rhs))
}

/// Samples of the sectorial solution as columns, with companions at `s + 1`.
pub fn solution_samples(
    sys: &DiffSystem,
    fs: &FormalSolution,
    arc: &Arc,
    points: &[Complex64],
    params: &SectorialParams,
) -> Result<RaySamples> {
    let mut all = points.to_vec();
    all.extend(points.iter().map(|&s| s + 1.0));
    let sol = flat_sections(sys, fs, arc, &all, params)?;
    let mut w: Vec<CMat> = (0..all.len()).map(|i| sol.w(i)).collect();
    let shifted = w.split_off(points.len());
    Ok(RaySamples { sigma: arc.sigma_mid(), points: points.to_vec(), values: w, shifted: Some(shifted) })
}

/// `(1 + 1/s)` raised elementwise, exposed for the verification suite.
pub fn one_plus_inv_pow(s: Complex64, g: Complex64) -> Complex64 {
    (ln_1p(s.inv()) * g).exp()
}
