//! Exponents `a(s) = Σ_{ℓ=1}^m c_ℓ s^{ℓ/m}`, directional growth, order relations
//! on arcs, Stokes directions, the `2πi s ℤ` shift and the `μ_m` action.
//!
//! Arcs live on the `t`-circle; an s-plane direction is `σ = −θ`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use num_complex::Complex64;
#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;
use num_traits::Zero;

use crate::series::{lcm, SeriesError, MAX_RAMIFICATION};

pub const TAU: f64 = 2.0 * PI;

/// Relative tolerance for exponent equality.
pub const EQ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExponentError {
    #[error("exponents are equal; no Stokes directions")]
    EqualExponents,
    #[error("{0} is not an m-th root of unity for m = {1}")]
    NotRootOfUnity(Complex64, u32),
    #[error("arc ({0}, {1}) is empty or covers the whole circle")]
    BadArc(f64, f64),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Zero test for `Re(c_ℓ e^{iℓσ/m})`.
pub fn vanishes(v: f64, c: Complex64) -> bool {
    v.abs() < 1e-12 * (1.0 + c.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GrowthClass {
    RapidDecay,
    Moderate,
    Growth,
}

impl fmt::Display for GrowthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthClass::RapidDecay => "rapid-decay",
            GrowthClass::Moderate => "moderate",
            GrowthClass::Growth => "growth",
        })
    }
}

/// An element of `ℐ_m`: coefficients `c_1..c_m` of `s^{1/m}, …, s`.
#[derive(Debug, Clone)]
pub struct Exponent {
    ram: u32,
    coeffs: Vec<Complex64>,
}

impl Exponent {
    /// `coeffs[ℓ-1]` multiplies `s^{ℓ/m}`; `m = coeffs.len()`.
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "an exponent needs m ≥ 1 coefficients");
        assert!(coeffs.len() as u32 <= MAX_RAMIFICATION, "ramification above cap");
        Exponent { ram: coeffs.len() as u32, coeffs }
    }

    pub fn zero() -> Self {
        Exponent::new(alloc::vec![Complex64::zero()])
    }

    /// `c·s`.
    pub fn linear(c: Complex64) -> Self {
        Exponent::new(alloc::vec![c])
    }

    pub fn ramification(&self) -> u32 {
        self.ram
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `c_ℓ` (zero when `ℓ` is out of range).
    pub fn c(&self, l: u32) -> Complex64 {
        if l == 0 || l > self.ram {
            Complex64::zero()
        } else {
            self.coeffs[(l - 1) as usize]
        }
    }

    /// Top coefficient `c_m` (the coefficient of `s`).
    pub fn leading(&self) -> Complex64 {
        self.coeffs[self.ram as usize - 1]
    }

    pub fn with_ramification(&self, m: u32) -> Result<Exponent, ExponentError> {
        if m > MAX_RAMIFICATION {
            return Err(SeriesError::RamificationCap(m).into());
        }
        assert!(m.is_multiple_of(self.ram));
        let q = (m / self.ram) as usize;
        let mut coeffs = alloc::vec![Complex64::zero(); m as usize];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[(i + 1) * q - 1] = *c;
        }
        Ok(Exponent { ram: m, coeffs })
    }

    /// Smallest ramification representing the same function.
    pub fn minimal(&self) -> Exponent {
        let m = self.ram;
        let mut best = m;
        for d in 1..=m {
            if !m.is_multiple_of(d) {
                continue;
            }
            let q = m / d;
            let ok = self
                .coeffs
                .iter()
                .enumerate()
                .all(|(i, c)| (i as u32 + 1).is_multiple_of(q) || c.norm() <= EQ_TOL * self.scale());
            if ok {
                best = d;
                break;
            }
        }
        if best == m {
            return self.clone();
        }
        let q = (m / best) as usize;
        Exponent::new((1..=best as usize).map(|l| self.coeffs[l * q - 1]).collect())
    }

    fn scale(&self) -> f64 {
        self.coeffs.iter().fold(1.0, |a, c| a.max(c.norm()))
    }

    pub fn checked_add(&self, other: &Exponent) -> Result<Exponent, ExponentError> {
        let m = lcm(self.ram, other.ram)?;
        let a = self.with_ramification(m)?;
        let b = other.with_ramification(m)?;
        Ok(Exponent::new(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect()))
    }

    pub fn checked_sub(&self, other: &Exponent) -> Result<Exponent, ExponentError> {
        self.checked_add(&other.neg())
    }

    pub fn neg(&self) -> Exponent {
        Exponent { ram: self.ram, coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }

    pub fn scale_by(&self, k: Complex64) -> Exponent {
        Exponent { ram: self.ram, coeffs: self.coeffs.iter().map(|c| c * k).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= EQ_TOL)
    }

    /// Equality after ramification unification, relative tolerance 1e-12.
    pub fn approx_eq(&self, other: &Exponent) -> bool {
        let Ok(m) = lcm(self.ram, other.ram) else {
            return false;
        };
        let (Ok(a), Ok(b)) = (self.with_ramification(m), other.with_ramification(m)) else {
            return false;
        };
        let scale = a.scale().max(b.scale());
        a.coeffs.iter().zip(&b.coeffs).all(|(x, y)| (x - y).norm() <= EQ_TOL * scale)
    }

    /// Same `2πi s ℤ` orbit.
    pub fn same_orbit(&self, other: &Exponent) -> bool {
        match self.checked_sub(other) {
            Ok(d) => {
                let (cd, _) = d.canonicalize();
                cd.is_zero()
            }
            Err(_) => false,
        }
    }

    /// `a + 2πi n s`.
    pub fn shift(&self, n: i64) -> Exponent {
        let mut out = self.clone();
        let k = out.ram as usize - 1;
        out.coeffs[k] += Complex64::new(0.0, TAU * n as f64);
        out
    }

    pub fn is_canonical(&self) -> bool {
        let im = self.leading().im;
        im > -PI && im <= PI
    }

    /// Canonical orbit representative (`Im c_m ∈ (−π, π]`) and the offset `n`
    /// with `self = canonical.shift(n)`.
    pub fn canonicalize(&self) -> (Exponent, i64) {
        let im = self.leading().im;
        let n = ((im - PI) / TAU).ceil() as i64;
        let out = self.shift(-n);
        (out, n)
    }

    /// `c_ℓ ↦ c_ℓ ζ^{−ℓ}` for an `m`-th root of unity `ζ`.
    pub fn mu_action(&self, zeta: Complex64) -> Result<Exponent, ExponentError> {
        let m = self.ram as i32;
        if (zeta.powi(m) - 1.0).norm() > 1e-10 {
            return Err(ExponentError::NotRootOfUnity(zeta, self.ram));
        }
        let zi = zeta.inv();
        Ok(Exponent::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * zi.powi(i as i32 + 1))
                .collect(),
        ))
    }

    /// Value at the point with the given `log s` (the branch picks `s^{ℓ/m}`).
    pub fn eval_log(&self, log_s: Complex64) -> Complex64 {
        let m = self.ram as f64;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * (log_s * ((i as f64 + 1.0) / m)).exp())
            .sum()
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.eval_log(s.ln())
    }

    /// Growth of `exp(a)` along `arg s = σ` (σ not reduced mod 2π).
    pub fn growth_class(&self, sigma: f64) -> GrowthClass {
        let m = self.ram as f64;
        for l in (1..=self.ram).rev() {
            let c = self.c(l);
            let v = (c * Complex64::from_polar(1.0, l as f64 * sigma / m)).re;
            if vanishes(v, c) {
                continue;
            }
            return if v > 0.0 { GrowthClass::Growth } else { GrowthClass::RapidDecay };
        }
        GrowthClass::Moderate
    }

    /// Largest `ℓ` with `c_ℓ ≠ 0`.
    pub fn dominant_index(&self) -> Option<u32> {
        (1..=self.ram).rev().find(|&l| self.c(l).norm() > EQ_TOL * self.scale())
    }

    /// Zeros of the dominant term's real part with `σ` in the open interval `(lo, hi)`.
    pub fn stokes_in_range(&self, lo: f64, hi: f64) -> Vec<f64> {
        let Some(l) = self.dominant_index() else {
            return Vec::new();
        };
        let m = self.ram as f64;
        let lf = l as f64;
        let arg = self.c(l).arg();
        // σ_k = (m/ℓ)(π/2 + kπ − arg c)
        let step = m / lf * PI;
        let base = m / lf * (PI / 2.0 - arg);
        let k0 = ((lo - base) / step).floor() as i64 - 1;
        let k1 = ((hi - base) / step).ceil() as i64 + 1;
        let mut out = Vec::new();
        for k in k0..=k1 {
            let s = base + k as f64 * step;
            if s > lo && s < hi {
                out.push(s);
            }
        }
        out
    }
}

impl fmt::Display for Exponent {
    /// `c_m*s + c_{m-1}*s^((m-1)/m) + …`, zero terms omitted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.ram;
        let mut first = true;
        for l in (1..=m).rev() {
            let c = self.c(l);
            if c.is_zero() {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "{}", ComplexLit(c))?;
            let g = crate::series::gcd(l, m);
            let (p, q) = (l / g, m / g);
            if q == 1 && p == 1 {
                f.write_str("*s")?;
            } else {
                write!(f, "*s^({}/{})", p, q)?;
            }
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

/// Complex number in the textual literal form `(a+bi)`, or `a` when real.
pub struct ComplexLit(pub Complex64);

impl fmt::Display for ComplexLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z = self.0;
        if z.im == 0.0 {
            if z.re < 0.0 || (z.re == 0.0 && z.re.is_sign_negative()) {
                write!(f, "({:?})", z.re)
            } else {
                write!(f, "{:?}", z.re)
            }
        } else if z.im < 0.0 {
            write!(f, "({:?}-{:?}i)", z.re, -z.im)
        } else {
            write!(f, "({:?}+{:?}i)", z.re, z.im)
        }
    }
}

/// Stokes directions of `a − b` in `(−π, π]`, sorted.
pub fn stokes_directions(a: &Exponent, b: &Exponent) -> Result<Vec<f64>, ExponentError> {
    let d = a.checked_sub(b)?;
    if d.dominant_index().is_none() {
        return Err(ExponentError::EqualExponents);
    }
    let mut out = d.stokes_in_range(-PI, PI + 1e-15);
    for s in out.iter_mut() {
        if *s > PI {
            *s = PI;
        }
    }
    out.sort_by(|x, y| x.partial_cmp(y).unwrap());
    out.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    Ok(out)
}

/// Open arc `{e^{iθ} : start < θ < end}` on the `t`-circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub end: f64,
}

impl Arc {
    /// Width must lie in `(0, 2π]`; width `2π` is the circle minus one point.
    pub fn new(start: f64, end: f64) -> Result<Arc, ExponentError> {
        if !(end > start) || end - start > TAU + 1e-12 {
            return Err(ExponentError::BadArc(start, end));
        }
        Ok(Arc { start, end })
    }

    /// Arc from an s-direction range `(σ_lo, σ_hi)`.
    pub fn from_sigma(lo: f64, hi: f64) -> Result<Arc, ExponentError> {
        Arc::new(-hi, -lo)
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    /// `(σ_lo, σ_hi) = (−end, −start)`.
    pub fn sigma_range(&self) -> (f64, f64) {
        (-self.end, -self.start)
    }

    pub fn sigma_mid(&self) -> f64 {
        let (a, b) = self.sigma_range();
        0.5 * (a + b)
    }

    /// Whether `e^{iθ}` lies in the open arc.
    pub fn contains_theta(&self, theta: f64) -> bool {
        let k = ((self.start - theta) / TAU).floor() + 1.0;
        let th = theta + k * TAU;
        th > self.start && th < self.end
            || (th - TAU > self.start && th - TAU < self.end)
    }

    pub fn contains_zero(&self) -> bool {
        self.contains_theta(0.0)
    }

    pub fn contains_pi(&self) -> bool {
        self.contains_theta(PI)
    }

    /// Representative of the direction `σ` inside the σ-range, if the arc contains it.
    pub fn sigma_representative(&self, sigma: f64) -> Option<f64> {
        let (lo, hi) = self.sigma_range();
        let k = ((lo - sigma) / TAU).ceil();
        let mut s = sigma + k * TAU;
        if s <= lo {
            s += TAU;
        }
        if s < hi {
            Some(s)
        } else {
            None
        }
    }

    /// Intersection of two arcs as a single arc (adjacent arcs of a covering).
    pub fn intersect(&self, other: &Arc) -> Option<Arc> {
        for k in -2..=2 {
            let shift = k as f64 * TAU;
            let lo = self.start.max(other.start + shift);
            let hi = self.end.min(other.end + shift);
            if hi > lo + 1e-12 {
                return Some(Arc { start: lo, end: hi });
            }
        }
        None
    }

    pub fn is_subarc_of(&self, other: &Arc) -> bool {
        (-2..=2).any(|k| {
            let shift = k as f64 * TAU;
            self.start >= other.start + shift - 1e-12 && self.end <= other.end + shift + 1e-12
        })
    }
}

impl fmt::Display for Arc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.start, self.end)
    }
}

/// `a ≤_U b`: `exp(a − b)` of moderate growth on every closed subsector of `U`.
pub fn leq(a: &Exponent, b: &Exponent, arc: &Arc) -> Result<bool, ExponentError> {
    let d = a.checked_sub(b)?;
    if d.dominant_index().is_none() {
        return Ok(true);
    }
    Ok(decays_on(&d, arc))
}

/// `a <_U b`: `exp(a − b)` of rapid decay on `U`.
pub fn lt(a: &Exponent, b: &Exponent, arc: &Arc) -> Result<bool, ExponentError> {
    let d = a.checked_sub(b)?;
    if d.dominant_index().is_none() {
        return Ok(false);
    }
    Ok(decays_on(&d, arc))
}

fn decays_on(d: &Exponent, arc: &Arc) -> bool {
    let (lo, hi) = arc.sigma_range();
    d.stokes_in_range(lo, hi).is_empty() && d.growth_class(arc.sigma_mid()) == GrowthClass::RapidDecay
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn growth_class_examples() {
        assert_eq!(Exponent::linear(cx(-1.0, 0.0)).growth_class(0.0), GrowthClass::RapidDecay);
        assert_eq!(Exponent::linear(cx(0.0, TAU)).growth_class(PI / 2.0), GrowthClass::RapidDecay);
        let sqrt = Exponent::new(alloc::vec![cx(1.0, 0.0), cx(0.0, 0.0)]);
        assert_eq!(sqrt.growth_class(PI), GrowthClass::Moderate);
    }

    #[test]
    fn leq_lt_examples() {
        let z = Exponent::zero();
        let u = Arc::from_sigma(-1.0, 1.0).unwrap();
        assert!(leq(&Exponent::linear(cx(-1.0, 0.0)), &z, &u).unwrap());
        assert!(lt(&Exponent::linear(cx(-1.0, 0.0)), &z, &u).unwrap());
        let u = Arc::from_sigma(-0.1, 0.1).unwrap();
        assert!(!leq(&Exponent::linear(cx(0.0, TAU)), &z, &u).unwrap());
        // Re s^{1/2} > 0 just below σ = π
        let sqrt = Exponent::new(alloc::vec![cx(1.0, 0.0), cx(0.0, 0.0)]);
        let u = Arc::from_sigma(PI - 0.1, PI).unwrap();
        assert!(!leq(&sqrt, &z, &u).unwrap());
        assert!(!lt(&sqrt, &z, &u).unwrap());
        assert!(leq(&z, &sqrt, &u).unwrap());
        assert!(lt(&z, &sqrt, &u).unwrap());
        assert!(leq(&z, &z, &u).unwrap());
        assert!(!lt(&z, &z, &u).unwrap());
    }

    #[test]
    fn stokes_direction_examples() {
        let z = Exponent::zero();
        let d = stokes_directions(&Exponent::linear(cx(1.0, 0.0)), &z).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[0] + PI / 2.0).abs() < 1e-14 && (d[1] - PI / 2.0).abs() < 1e-14);
        let d = stokes_directions(&Exponent::linear(cx(1.0, 1.0)), &z).unwrap();
        assert!((d[0] + 3.0 * PI / 4.0).abs() < 1e-14 && (d[1] - PI / 4.0).abs() < 1e-14);
        for s in d {
            assert!(((s.cos() - s.sin())).abs() < 1e-14);
        }
        let sqrt = Exponent::new(alloc::vec![cx(1.0, 0.0), cx(0.0, 0.0)]);
        let d = stokes_directions(&sqrt, &z).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0] - PI).abs() < 1e-14);
        assert_eq!(stokes_directions(&z, &z).unwrap_err(), ExponentError::EqualExponents);
    }

    #[test]
    fn shift_examples() {
        let z = Exponent::zero();
        assert!(z.shift(1).approx_eq(&Exponent::linear(cx(0.0, TAU))));
        assert!(Exponent::linear(cx(0.0, TAU)).shift(-1).approx_eq(&z));
        let a = Exponent::linear(cx(0.3, 2.0));
        let (ca, n) = a.shift(5).canonicalize();
        assert!(ca.is_canonical());
        assert_eq!(n, 5);
        let (_, n0) = a.canonicalize();
        assert_eq!(n0, 0);
        let b = Exponent::linear(cx(0.0, 4.0));
        let (cb, nb) = b.shift(5).canonicalize();
        assert!(cb.is_canonical());
        assert_eq!(nb, 6);
        let (cpi, npi) = Exponent::linear(cx(0.0, PI)).canonicalize();
        assert_eq!(npi, 0);
        assert!((cpi.leading().im - PI).abs() < 1e-15);
        let (cmpi, nmpi) = Exponent::linear(cx(0.0, -PI)).canonicalize();
        assert_eq!(nmpi, -1);
        assert!((cmpi.leading().im - PI).abs() < 1e-15);
    }

    #[test]
    fn mu_action_examples() {
        let a = Exponent::new(alloc::vec![cx(1.0, 0.0), cx(0.0, 0.0)]);
        assert!(a.mu_action(cx(-1.0, 0.0)).unwrap().approx_eq(&a.neg()));
        assert!(a.mu_action(cx(1.0, 0.0)).unwrap().approx_eq(&a));
        let s3 = Exponent::new(alloc::vec![cx(0.0, 0.0), cx(0.0, 0.0), cx(1.0, 0.0)]);
        let zeta = Complex64::from_polar(1.0, TAU / 3.0);
        assert!(s3.mu_action(zeta).unwrap().approx_eq(&s3));
        assert!(matches!(a.mu_action(cx(0.0, 1.0)), Err(ExponentError::NotRootOfUnity(..))));
    }

    #[test]
    fn arc_sigma_conversion() {
        let a = Arc::new(0.3, 1.0).unwrap();
        assert_eq!(a.sigma_range(), (-1.0, -0.3));
        assert!(!a.contains_zero());
        assert!(Arc::new(-0.2, 0.2).unwrap().contains_zero());
        assert!(Arc::new(0.1, TAU - 0.1).unwrap().contains_pi());
        assert!(Arc::new(1.0, 1.0).is_err());
        assert_eq!(Arc::new(0.0, 2.0).unwrap().sigma_representative(-1.0 + TAU), Some(-1.0));
    }

    #[test]
    fn display_forms() {
        let a = Exponent::new(alloc::vec![cx(2.0, 0.0), cx(1.0, 0.0)]);
        assert_eq!(alloc::format!("{a}"), "1.0*s + 2.0*s^(1/2)");
        assert_eq!(alloc::format!("{}", Exponent::zero()), "0");
        assert_eq!(alloc::format!("{}", Exponent::linear(cx(-1.0, 0.5))), "(-1.0+0.5i)*s");
    }
}
