//! Verification suites against the closed-form flat sections
//! `Γ(s)/Γ(s+α)` and `s^{−s}Γ(s)`, and the telescoping sum for `Λ`.

use std::f64::consts::PI;

use mildstokes_core::diffmod::{formal_solution, DiffSystem, FormalDatum, FormalPiece};
use mildstokes_core::exponents::{Arc, Exponent, GrowthClass};
use mildstokes_core::linalg::{CMat, CVec};
use mildstokes_core::sectorial::{
    classify_growth, lambda_op, lambda_residual, ln_1p, ray_points, residual, solution_samples, LambdaParams,
    RaySamples, SectorialParams,
};
use mildstokes_core::series::{MatrixSeries, Series};
use mildstokes_core::special::{ln_gamma, log_gamma_ray, log_near, reflection_residual, BranchLog};
use mildstokes_core::stokes::{default_covering, Covering, StokesError};
use mildstokes_core::Complex64;

/// One named comparison against a pinned tolerance.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, tol: f64) -> Check {
        Check { name: name.into(), value, tol, passed: value.is_finite() && value < tol }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Check {
        Check { name: name.into(), value: if ok { 0.0 } else { 1.0 }, tol: 0.5, passed: ok }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.3e} (tol {:.1e})", self.name, self.value, self.tol)
    }
}

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `y(s) = (1 + α t) y(s+1)`, whose flat section is `Γ(s)/Γ(s+α)`.
pub fn b_alpha_system(alpha: Complex64, trunc: i64) -> DiffSystem {
    let mut v = vec![cx(0.0, 0.0); trunc as usize + 1];
    v[0] = cx(1.0, 0.0);
    v[1] = alpha;
    DiffSystem::new(MatrixSeries::scalar(&Series::new(1, 0, v), 1)).with_exact(true)
}

/// `y(s) = (1 + t)^{1 + 1/t} y(s+1)`, whose flat section is `s^{−s}Γ(s)`.
pub fn egamma_system(trunc: i64) -> DiffSystem {
    let e = Series::constant(cx(1.0, 0.0), 1, trunc + 1)
        .checked_add(&Series::monomial(cx(1.0, 0.0), -1, 1, trunc + 1))
        .expect("same ramification");
    let l = e.checked_mul(&Series::log1p(1, trunc + 1)).expect("same ramification").truncate(trunc);
    DiffSystem::new(MatrixSeries::scalar(&l.exp().expect("no pole"), 1))
}

pub fn trivial_datum() -> FormalDatum {
    FormalDatum::new(vec![FormalPiece::new(Exponent::zero(), CMat::zeros(1, 1))])
}

/// `log(Γ(s)/Γ(s+α))`.
pub fn log_gamma_ratio(s: Complex64, alpha: Complex64) -> Complex64 {
    ln_gamma(s).expect("off the poles") - ln_gamma(s + alpha).expect("off the poles")
}

/// `max |g(s) − (1 + α/s) g(s+1)| / |g(s)|` for `g = Γ(s)/Γ(s+α)` on `points`.
pub fn gamma_ratio_residual(alpha: Complex64, points: &[Complex64]) -> f64 {
    points
        .iter()
        .map(|&s| {
            let q = log_gamma_ratio(s + 1.0, alpha) - log_gamma_ratio(s, alpha);
            (ln_1p(alpha / s) + q).exp() - 1.0
        })
        .map(|d| d.norm())
        .fold(0.0, f64::max)
}

/// Recurrence residual of `h(s) = s^{−s}Γ(s)` along a ray, with `log s` and
/// `log Γ` both continued along the ray.
pub fn egamma_residual(sigma: f64, r_min: f64, r_max: f64, n: usize) -> f64 {
    let dir = Complex64::from_polar(1.0, sigma);
    let step = (r_max - r_min) / (n - 1) as f64;
    let lg0 = log_gamma_ray(dir * r_min, sigma, step, n).expect("ray avoids the poles");
    let lg1 = log_gamma_ray(dir * r_min + 1.0, sigma, step, n).expect("ray avoids the poles");
    let mut l0 = BranchLog::new(dir * r_min, sigma);
    let mut l1 = BranchLog::new(dir * r_min + 1.0, sigma);
    let mut worst: f64 = 0.0;
    for (g0, g1) in lg0.iter().zip(&lg1) {
        let s = g0.s;
        let log_h0 = -s * l0.advance(s) + g0.log_value;
        let log_h1 = -(s + 1.0) * l1.advance(s + 1.0) + g1.log_value;
        let log_a = (s + 1.0) * ln_1p(s.inv());
        worst = worst.max(((log_a + log_h1 - log_h0).exp() - 1.0).norm());
    }
    worst
}

/// Arc of the covering in which `theta` sits farthest from the ends.
pub fn arc_for(covering: &Covering, theta: f64) -> Option<Arc> {
    covering
        .arcs
        .iter()
        .filter_map(|a| a.sigma_representative(-theta).map(|_| *a))
        .filter(|a| a.contains_theta(theta))
        .max_by(|a, b| {
            let depth = |x: &Arc| {
                let t = (-x.sigma_representative(-theta).unwrap()).clamp(x.start, x.end);
                (t - x.start).min(x.end - t)
            };
            depth(a).partial_cmp(&depth(b)).unwrap()
        })
}

/// Largest `|w_i/(c·g_i) − 1|` with `c` the mean of `w_i/g_i`.
pub fn normalized_deviation(values: &[Complex64], exact: &[Complex64]) -> f64 {
    let ratios: Vec<Complex64> = values.iter().zip(exact).map(|(w, g)| w / g).collect();
    let c = ratios.iter().sum::<Complex64>() / ratios.len() as f64;
    ratios.iter().map(|r| (r / c - 1.0).norm()).fold(0.0, f64::max)
}

/// Sectorial flat section of a rank-one system on a ray in direction `θ`.
pub fn rank_one_section(sys: &DiffSystem, theta: f64, points: &[Complex64]) -> Result<RaySamples, StokesError> {
    let fs = formal_solution(sys, sys.matrix().trunc())?;
    let cov = default_covering(&fs.datum)?;
    let arc = arc_for(&cov, theta).ok_or_else(|| StokesError::InconsistentData(String::from("no arc")))?;
    Ok(solution_samples(sys, &fs, &arc, points, &SectorialParams::default())?)
}

fn failed(name: &str, err: impl std::fmt::Display) -> Check {
    Check { name: format!("{name} ({err})"), value: f64::INFINITY, tol: 0.0, passed: false }
}

fn section_checks(sys: &DiffSystem, theta: f64, points: &[Complex64], exact: &[Complex64], label: &str) -> Vec<Check> {
    match rank_one_section(sys, theta, points) {
        Ok(w) => {
            let vals: Vec<Complex64> = w.values.iter().map(|v| v[(0, 0)]).collect();
            let res = residual(sys, &w).unwrap_or(f64::INFINITY);
            vec![
                Check::below(format!("{label} numerical section residual"), res, 1e-10),
                Check::below(format!("{label} numerical section vs closed form"), normalized_deviation(&vals, exact), 1e-8),
            ]
        }
        Err(e) => vec![failed(&format!("{label} numerical section"), e)],
    }
}

/// `Γ(s)/Γ(s+α)` solves `B_α`, the reflection formula holds, and the
/// numerical section reproduces the ratio.
pub fn gamma_suite(alpha: Complex64) -> Vec<Check> {
    let mut out = Vec::new();
    for sigma in [0.0, 0.5, -0.5] {
        let pts = ray_points(sigma, 5.0, 40.0, 50);
        out.push(Check::below(
            format!("closed form recurrence, sigma = {sigma}"),
            gamma_ratio_residual(alpha, &pts),
            1e-10,
        ));
    }
    let grid: Vec<Complex64> = (0..100)
        .map(|k| {
            let x = -7.3 + 14.6 * ((k as f64 * 0.618_033_988_749_895) % 1.0);
            let y = -5.0 + 10.0 * ((k as f64 * 0.754_877_666_246_693) % 1.0);
            cx(x, y + 0.013)
        })
        .collect();
    let refl = grid.iter().map(|&s| reflection_residual(s).unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    out.push(Check::below("reflection formula", refl, 1e-10));
    let sys = b_alpha_system(alpha, 16);
    for theta in [0.0, -0.7] {
        let pts = ray_points(-theta, 10.0, 40.0, 24);
        let exact: Vec<Complex64> = pts.iter().map(|&s| log_gamma_ratio(s, alpha).exp()).collect();
        out.extend(section_checks(&sys, theta, &pts, &exact, &format!("theta = {theta}")));
    }
    out
}

/// `s^{−s}Γ(s)` solves its recurrence and is reproduced numerically.
pub fn egamma_suite() -> Vec<Check> {
    let mut out = vec![Check::below("closed form recurrence, sigma = 0.2", egamma_residual(0.2, 5.0, 30.0, 50), 1e-10)];
    let sys = egamma_system(16);
    let sigma = 0.2;
    let pts = ray_points(sigma, 10.0, 40.0, 24);
    let exact: Vec<Complex64> =
        pts.iter().map(|&s| (-s * log_near(s, sigma) + ln_gamma(s).expect("off the poles")).exp()).collect();
    out.extend(section_checks(&sys, -sigma, &pts, &exact, "sigma = 0.2"));
    out
}

/// `Λ` on the trivial module with `f = e^{−s}` along the ray `σ = −θ`.
pub fn lambda_suite(theta: f64) -> Vec<Check> {
    let sigma = -theta;
    if (sigma.cos()) <= 0.05 {
        return vec![failed("lambda", "e^{-s} does not decay on this ray")];
    }
    let fd = trivial_datum();
    let f = |s: Complex64| CVec::from_element(1, (-s).exp());
    let pts = ray_points(sigma, 2.0, 12.0, 20);
    let params = LambdaParams::default();
    let out = match lambda_op(&fd, &f, &pts, sigma, &params) {
        Ok(o) => o,
        Err(e) => return vec![failed("lambda", e)],
    };
    let mut checks = Vec::new();
    let res = lambda_residual(&fd, &f, &out).unwrap_or(f64::INFINITY);
    checks.push(Check::below("difference identity", res, 1e-8));
    let tele = pts
        .iter()
        .zip(&out.samples.values)
        .map(|(&s, v)| {
            let oracle = -(-s).exp() / (1.0 - (-1.0f64).exp());
            (v[(0, 0)] - oracle).norm() / oracle.norm()
        })
        .fold(0.0, f64::max);
    checks.push(Check::below("telescoping sum", tele, 1e-6));
    let fine = lambda_op(&fd, &f, &pts, sigma, &LambdaParams { panel: 0.5 * params.panel, ..params });
    match fine {
        Ok(fine) => {
            let worst = out
                .samples
                .values
                .iter()
                .zip(&fine.samples.values)
                .zip(&out.error)
                .map(|((a, b), e)| (a - b).norm() / (10.0 * e))
                .fold(0.0, f64::max);
            checks.push(Check::below("panel halving within 10x error estimate", worst, 1.0));
        }
        Err(e) => checks.push(failed("panel halving", e)),
    }
    let decay = ray_points(sigma, 4.0, 30.0, 16);
    let cls = lambda_op(&fd, &f, &decay, sigma, &params)
        .ok()
        .and_then(|o| classify_growth(&o.samples).ok())
        .map(|g| g.class);
    checks.push(Check::holds("rapid decay preserved", cls == Some(GrowthClass::RapidDecay)));
    checks
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t + 2.0 * PI
    } else {
        t
    }
}
