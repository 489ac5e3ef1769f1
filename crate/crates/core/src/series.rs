//! Truncated Laurent/Puiseux series in `t` and square matrices of them.
//!
//! A [`Series`] with ramification `m` stores the coefficients of `τ^k`
//! (`τ^m = t`) for `low ≤ k ≤ trunc`; everything of order above `trunc` is
//! unknown. Arithmetic propagates the known window the usual way: sums keep
//! the smaller `trunc`, products keep `min(a.low + b.trunc, b.low + a.trunc)`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use num_traits::Zero;

use crate::linalg::{self, CMat};

/// Default truncation order (in units of `1/m`).
pub const DEFAULT_TRUNCATION: i64 = 16;
/// Largest ramification index arithmetic will produce.
pub const MAX_RAMIFICATION: u32 = 12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SeriesError {
    #[error("ramification {0} exceeds the cap of {MAX_RAMIFICATION}")]
    RamificationCap(u32),
    #[error("series has no nonzero leading term")]
    ZeroLeadingTerm,
    #[error("truncation window [{low}, {trunc}] too narrow for the result")]
    InsufficientTruncation { low: i64, trunc: i64 },
    #[error("exponential of a series with a pole has an essential singularity at t = 0")]
    EssentialSingularity,
    #[error("logarithm of a series whose valuation is not zero")]
    LogOfNonUnit,
    #[error("matrix series shapes differ: {0}x{0} vs {1}x{1}")]
    ShapeMismatch(usize, usize),
    #[error("leading coefficient matrix is singular")]
    SingularLeading,
}

pub type Result<T> = core::result::Result<T, SeriesError>;

pub(crate) fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: u32, b: u32) -> Result<u32> {
    let l = a / gcd(a, b) * b;
    if l > MAX_RAMIFICATION {
        Err(SeriesError::RamificationCap(l))
    } else {
        Ok(l)
    }
}

/// Generalized binomial coefficients `C(alpha, j)` for `j = 0..n`.
pub fn binomials(alpha: Complex64, n: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut b = Complex64::new(1.0, 0.0);
    out.push(b);
    for j in 1..=n {
        b = b * (alpha - (j as f64 - 1.0)) / j as f64;
        out.push(b);
    }
    out
}

/// `τ = s^{-1/m}` from a (branch-chosen) value of `log s`.
pub fn tau_from_log(log_s: Complex64, ram: u32) -> Complex64 {
    (-log_s / ram as f64).exp()
}

/// A truncated Puiseux series `Σ_{k=low}^{trunc} c_k τ^k` with `τ^m = t`.
#[derive(Debug, Clone)]
pub struct Series {
    ram: u32,
    low: i64,
    coeffs: Vec<Complex64>,
}

impl Series {
    /// Builds a series from its coefficients starting at `τ^low`.
    ///
    /// Panics when `coeffs` is empty or `ram` is zero.
    pub fn new(ram: u32, low: i64, coeffs: Vec<Complex64>) -> Self {
        assert!(ram >= 1, "ramification must be positive");
        assert!(!coeffs.is_empty(), "a series needs at least one coefficient");
        Series { ram, low, coeffs }
    }

    pub fn zero(ram: u32, low: i64, trunc: i64) -> Self {
        assert!(low <= trunc);
        Series::new(ram, low, vec![Complex64::zero(); (trunc - low + 1) as usize])
    }

    pub fn constant(c: Complex64, ram: u32, trunc: i64) -> Self {
        Series::monomial(c, 0, ram, trunc)
    }

    /// `c τ^k`, known up to `τ^trunc`.
    pub fn monomial(c: Complex64, k: i64, ram: u32, trunc: i64) -> Self {
        assert!(k <= trunc, "monomial order {k} above truncation {trunc}");
        let mut s = Series::zero(ram, k, trunc);
        s.coeffs[0] = c;
        s
    }

    /// The variable `t = τ^m`.
    pub fn t(ram: u32, trunc: i64) -> Self {
        Series::monomial(Complex64::new(1.0, 0.0), ram as i64, ram, trunc)
    }

    /// `log(1+t) = -Σ_{n≥1} (-t)^n / n`, truncated at `τ^trunc`.
    pub fn log1p(ram: u32, trunc: i64) -> Self {
        assert!(trunc >= 0);
        let mut s = Series::zero(ram, 0, trunc);
        let m = ram as i64;
        let mut n = 1;
        while n * m <= trunc {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            s.coeffs[(n * m) as usize] = Complex64::new(sign / n as f64, 0.0);
            n += 1;
        }
        s
    }

    /// `(1+t)^alpha` by the binomial series.
    pub fn binomial(alpha: Complex64, ram: u32, trunc: i64) -> Self {
        assert!(trunc >= 0);
        let m = ram as i64;
        let mut s = Series::zero(ram, 0, trunc);
        let b = binomials(alpha, (trunc / m) as usize);
        for (j, bj) in b.into_iter().enumerate() {
            s.coeffs[j * m as usize] = bj;
        }
        s
    }

    pub fn ramification(&self) -> u32 {
        self.ram
    }

    pub fn low(&self) -> i64 {
        self.low
    }

    pub fn trunc(&self) -> i64 {
        self.low + self.coeffs.len() as i64 - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of `τ^k`; zero below the window, `None` above it.
    pub fn coeff(&self, k: i64) -> Option<Complex64> {
        if k > self.trunc() {
            None
        } else if k < self.low {
            Some(Complex64::zero())
        } else {
            Some(self.coeffs[(k - self.low) as usize])
        }
    }

    fn coeff_or_zero(&self, k: i64) -> Complex64 {
        self.coeff(k).unwrap_or_default()
    }

    /// Index of the first exactly-nonzero coefficient.
    pub fn valuation(&self) -> Option<i64> {
        self.coeffs
            .iter()
            .position(|c| !c.is_zero())
            .map(|i| self.low + i as i64)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= tol)
    }

    /// Drops exactly-zero leading coefficients (keeps at least one).
    pub fn normalized(&self) -> Series {
        match self.valuation() {
            Some(v) if v > self.low => Series {
                ram: self.ram,
                low: v,
                coeffs: self.coeffs[(v - self.low) as usize..].to_vec(),
            },
            _ => self.clone(),
        }
    }

    /// Re-expresses the series with ramification `m` (a multiple of the current one).
    pub fn with_ramification(&self, m: u32) -> Result<Series> {
        if m > MAX_RAMIFICATION {
            return Err(SeriesError::RamificationCap(m));
        }
        assert!(m.is_multiple_of(self.ram), "target ramification must be a multiple");
        let q = (m / self.ram) as i64;
        if q == 1 {
            return Ok(self.clone());
        }
        let low = self.low * q;
        let trunc = self.trunc() * q;
        let mut out = Series::zero(m, low, trunc);
        for (i, c) in self.coeffs.iter().enumerate() {
            out.coeffs[i * q as usize] = *c;
        }
        Ok(out)
    }

    /// Brings two series to a common ramification.
    pub fn unify(a: &Series, b: &Series) -> Result<(Series, Series)> {
        let m = lcm(a.ram, b.ram)?;
        Ok((a.with_ramification(m)?, b.with_ramification(m)?))
    }

    /// Lowers the truncation order to `trunc` (no-op when already lower).
    pub fn truncate(&self, trunc: i64) -> Series {
        if trunc >= self.trunc() {
            return self.clone();
        }
        assert!(trunc >= self.low, "cannot truncate below the window");
        Series {
            ram: self.ram,
            low: self.low,
            coeffs: self.coeffs[..=(trunc - self.low) as usize].to_vec(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Series {
        Series {
            ram: self.ram,
            low: self.low,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    pub fn checked_add(&self, other: &Series) -> Result<Series> {
        let (a, b) = Series::unify(self, other)?;
        let low = a.low.min(b.low);
        let trunc = a.trunc().min(b.trunc());
        if trunc < low {
            return Err(SeriesError::InsufficientTruncation { low, trunc });
        }
        let coeffs = (low..=trunc)
            .map(|k| a.coeff_or_zero(k) + b.coeff_or_zero(k))
            .collect();
        Ok(Series::new(a.ram, low, coeffs))
    }

    pub fn checked_sub(&self, other: &Series) -> Result<Series> {
        self.checked_add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn checked_mul(&self, other: &Series) -> Result<Series> {
        let (a, b) = Series::unify(&self.normalized(), &other.normalized())?;
        let low = a.low + b.low;
        let trunc = (a.low + b.trunc()).min(b.low + a.trunc());
        if trunc < low {
            return Err(SeriesError::InsufficientTruncation { low, trunc });
        }
        let mut out = Series::zero(a.ram, low, trunc);
        for (i, x) in a.coeffs.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.coeffs.iter().enumerate() {
                let k = i + j;
                if k >= out.coeffs.len() {
                    break;
                }
                out.coeffs[k] += x * y;
            }
        }
        Ok(out)
    }

    /// Multiplicative inverse `1/f`, using the first nonzero coefficient as the lead.
    pub fn invert(&self) -> Result<Series> {
        let f = self.normalized();
        let v = f.valuation().ok_or(SeriesError::ZeroLeadingTerm)?;
        let lead = f.coeffs[0];
        let n = f.coeffs.len();
        let mut inv = vec![Complex64::zero(); n];
        inv[0] = lead.inv();
        for k in 1..n {
            let mut acc = Complex64::zero();
            for j in 1..=k {
                acc += f.coeffs[j] * inv[k - j];
            }
            inv[k] = -acc / lead;
        }
        Ok(Series::new(f.ram, -v, inv))
    }

    pub fn checked_div(&self, other: &Series) -> Result<Series> {
        self.checked_mul(&other.invert()?)
    }

    /// `f(t/(1+t))`; in ramified form `τ ↦ τ(1+t)^{-1/m}`.
    pub fn phi_substitute(&self) -> Result<Series> {
        self.mobius(-1.0)
    }

    /// `f(t/(1-t))`, the inverse of [`Series::phi_substitute`].
    pub fn phi_inverse_substitute(&self) -> Result<Series> {
        self.mobius(1.0)
    }

    // τ^k ↦ τ^k (1 + eps·t)^{-k/m} with eps = +1 for φ and -1 for φ^{-1}.
    fn mobius(&self, sign: f64) -> Result<Series> {
        let trunc = self.trunc();
        if trunc < self.low {
            return Err(SeriesError::InsufficientTruncation { low: self.low, trunc });
        }
        let m = self.ram as i64;
        let mut out = Series::zero(self.ram, self.low, trunc);
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let k = self.low + i as i64;
            let steps = ((trunc - k) / m) as usize;
            let alpha = Complex64::new(-(k as f64) / m as f64, 0.0);
            let b = binomials(alpha, steps);
            let mut eps_pow = 1.0;
            for (j, bj) in b.iter().enumerate() {
                out.coeffs[i + j * m as usize] += c * bj * eps_pow;
                eps_pow *= -sign;
            }
        }
        Ok(out)
    }

    /// `exp(f)` for a series without pole.
    pub fn exp(&self) -> Result<Series> {
        let f = self.normalized();
        if let Some(v) = f.valuation() {
            if v < 0 {
                return Err(SeriesError::EssentialSingularity);
            }
        }
        let trunc = f.trunc();
        if trunc < 0 {
            return Err(SeriesError::InsufficientTruncation { low: 0, trunc });
        }
        let h: Vec<Complex64> = (0..=trunc).map(|k| f.coeff_or_zero(k)).collect();
        let n = h.len();
        let mut e = vec![Complex64::zero(); n];
        e[0] = h[0].exp();
        for k in 1..n {
            let mut acc = Complex64::zero();
            for j in 1..=k {
                acc += h[j] * (j as f64) * e[k - j];
            }
            e[k] = acc / k as f64;
        }
        Ok(Series::new(f.ram, 0, e))
    }

    /// Principal `log(f)` for a series of valuation zero.
    pub fn log(&self) -> Result<Series> {
        let f = self.normalized();
        match f.valuation() {
            Some(0) => {}
            Some(_) => return Err(SeriesError::LogOfNonUnit),
            None => return Err(SeriesError::ZeroLeadingTerm),
        }
        let c0 = f.coeffs[0];
        let g: Vec<Complex64> = f.coeffs.iter().map(|c| c / c0).collect();
        let n = g.len();
        let mut l = vec![Complex64::zero(); n];
        l[0] = c0.ln();
        for k in 1..n {
            let mut acc = g[k] * k as f64;
            for j in 1..k {
                acc -= l[j] * (j as f64) * g[k - j];
            }
            l[k] = acc / k as f64;
        }
        Ok(Series::new(f.ram, 0, l))
    }

    /// `f^alpha = exp(alpha log f)` for a unit `f`.
    pub fn powc(&self, alpha: Complex64) -> Result<Series> {
        self.log()?.scale(alpha).exp()
    }

    pub fn powi(&self, n: i64) -> Result<Series> {
        let base = if n < 0 { self.invert()? } else { self.clone() };
        let mut acc = Series::constant(Complex64::new(1.0, 0.0), self.ram, base.trunc().max(0));
        let mut p = base;
        let mut e = n.unsigned_abs();
        let mut first = true;
        while e > 0 {
            if e & 1 == 1 {
                acc = if first { p.clone() } else { acc.checked_mul(&p)? };
                first = false;
            }
            e >>= 1;
            if e > 0 {
                p = p.checked_mul(&p)?;
            }
        }
        Ok(acc)
    }

    /// Evaluates the truncated sum at the point whose `log s` is given.
    pub fn eval_log(&self, log_s: Complex64) -> Complex64 {
        let tau = tau_from_log(log_s, self.ram);
        let mut acc = Complex64::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * tau + c;
        }
        acc * tau.powi(self.low as i32)
    }

    /// Evaluates at `s` on the principal branch.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.eval_log(s.ln())
    }

    /// Tolerance-based equality over the common window (max coefficient deviation).
    pub fn approx_eq(&self, other: &Series, rel_tol: f64) -> bool {
        let Ok((a, b)) = Series::unify(self, other) else {
            return false;
        };
        let trunc = a.trunc().min(b.trunc());
        let low = a.low.min(b.low);
        let scale = a.max_abs().max(b.max_abs()).max(1.0);
        (low..=trunc).all(|k| (a.coeff_or_zero(k) - b.coeff_or_zero(k)).norm() <= rel_tol * scale)
    }
}

impl Add for &Series {
    type Output = Series;
    fn add(self, rhs: &Series) -> Series {
        self.checked_add(rhs).expect("series addition")
    }
}

impl Sub for &Series {
    type Output = Series;
    fn sub(self, rhs: &Series) -> Series {
        self.checked_sub(rhs).expect("series subtraction")
    }
}

impl Mul for &Series {
    type Output = Series;
    fn mul(self, rhs: &Series) -> Series {
        self.checked_mul(rhs).expect("series multiplication")
    }
}

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

/// A square matrix of truncated series sharing one window, stored by
/// coefficient matrices: `A(τ) = Σ_k A_k τ^k`.
#[derive(Debug, Clone)]
pub struct MatrixSeries {
    ram: u32,
    low: i64,
    coeffs: Vec<CMat>,
}

impl MatrixSeries {
    pub fn new(ram: u32, low: i64, coeffs: Vec<CMat>) -> Self {
        assert!(ram >= 1);
        assert!(!coeffs.is_empty());
        let n = coeffs[0].nrows();
        assert!(coeffs.iter().all(|c| c.nrows() == n && c.ncols() == n), "square, equal shapes");
        MatrixSeries { ram, low, coeffs }
    }

    pub fn zero(dim: usize, ram: u32, low: i64, trunc: i64) -> Self {
        MatrixSeries::new(ram, low, vec![CMat::zeros(dim, dim); (trunc - low + 1) as usize])
    }

    pub fn constant(m: CMat, ram: u32, trunc: i64) -> Self {
        let mut s = MatrixSeries::zero(m.nrows(), ram, 0, trunc);
        s.coeffs[0] = m;
        s
    }

    pub fn identity(dim: usize, ram: u32, trunc: i64) -> Self {
        MatrixSeries::constant(CMat::identity(dim, dim), ram, trunc)
    }

    /// Assembles a matrix from entry series, unifying ramification and window.
    pub fn from_entries(entries: &[Vec<Series>]) -> Result<Self> {
        let n = entries.len();
        assert!(n > 0 && entries.iter().all(|r| r.len() == n), "square entry table");
        let mut m = 1;
        for e in entries.iter().flatten() {
            m = lcm(m, e.ramification())?;
        }
        let mut low = i64::MAX;
        let mut trunc = i64::MAX;
        let mut lifted = Vec::with_capacity(n * n);
        for e in entries.iter().flatten() {
            let e = e.with_ramification(m)?.normalized();
            low = low.min(e.low());
            trunc = trunc.min(e.trunc());
            lifted.push(e);
        }
        if trunc < low {
            return Err(SeriesError::InsufficientTruncation { low, trunc });
        }
        let mut out = MatrixSeries::zero(n, m, low, trunc);
        for (idx, e) in lifted.iter().enumerate() {
            let (i, j) = (idx / n, idx % n);
            for k in low..=trunc {
                out.coeffs[(k - low) as usize][(i, j)] = e.coeff_or_zero(k);
            }
        }
        Ok(out)
    }

    /// Scalar series times the identity.
    pub fn scalar(s: &Series, dim: usize) -> Self {
        let coeffs = s
            .coeffs()
            .iter()
            .map(|c| CMat::identity(dim, dim) * *c)
            .collect();
        MatrixSeries::new(s.ramification(), s.low(), coeffs)
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn ramification(&self) -> u32 {
        self.ram
    }

    pub fn low(&self) -> i64 {
        self.low
    }

    pub fn trunc(&self) -> i64 {
        self.low + self.coeffs.len() as i64 - 1
    }

    pub fn coeff_matrices(&self) -> &[CMat] {
        &self.coeffs
    }

    /// Coefficient matrix of `τ^k` (zero below the window, `None` above).
    pub fn coeff(&self, k: i64) -> Option<CMat> {
        if k > self.trunc() {
            None
        } else if k < self.low {
            Some(CMat::zeros(self.dim(), self.dim()))
        } else {
            Some(self.coeffs[(k - self.low) as usize].clone())
        }
    }

    pub(crate) fn coeff_ref(&self, k: i64) -> Option<&CMat> {
        if k < self.low || k > self.trunc() {
            None
        } else {
            Some(&self.coeffs[(k - self.low) as usize])
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Series {
        Series::new(self.ram, self.low, self.coeffs.iter().map(|c| c[(i, j)]).collect())
    }

    /// Lowest index with a nonzero coefficient matrix.
    pub fn valuation(&self) -> Option<i64> {
        self.coeffs
            .iter()
            .position(|c| c.iter().any(|x| !x.is_zero()))
            .map(|i| self.low + i as i64)
    }

    pub fn normalized(&self) -> MatrixSeries {
        match self.valuation() {
            Some(v) if v > self.low => MatrixSeries {
                ram: self.ram,
                low: v,
                coeffs: self.coeffs[(v - self.low) as usize..].to_vec(),
            },
            _ => self.clone(),
        }
    }

    /// Extends the window downward with zero coefficients.
    pub fn with_low(&self, low: i64) -> MatrixSeries {
        if low >= self.low {
            return self.clone();
        }
        let mut coeffs = vec![CMat::zeros(self.dim(), self.dim()); (self.low - low) as usize];
        coeffs.extend(self.coeffs.iter().cloned());
        MatrixSeries { ram: self.ram, low, coeffs }
    }

    pub fn with_ramification(&self, m: u32) -> Result<MatrixSeries> {
        if m > MAX_RAMIFICATION {
            return Err(SeriesError::RamificationCap(m));
        }
        assert!(m.is_multiple_of(self.ram));
        let q = (m / self.ram) as i64;
        if q == 1 {
            return Ok(self.clone());
        }
        let mut out = MatrixSeries::zero(self.dim(), m, self.low * q, self.trunc() * q);
        for (i, c) in self.coeffs.iter().enumerate() {
            out.coeffs[i * q as usize] = c.clone();
        }
        Ok(out)
    }

    pub fn unify(a: &MatrixSeries, b: &MatrixSeries) -> Result<(MatrixSeries, MatrixSeries)> {
        let m = lcm(a.ram, b.ram)?;
        Ok((a.with_ramification(m)?, b.with_ramification(m)?))
    }

    pub fn truncate(&self, trunc: i64) -> MatrixSeries {
        if trunc >= self.trunc() {
            return self.clone();
        }
        assert!(trunc >= self.low);
        MatrixSeries {
            ram: self.ram,
            low: self.low,
            coeffs: self.coeffs[..=(trunc - self.low) as usize].to_vec(),
        }
    }

    pub fn scale(&self, c: Complex64) -> MatrixSeries {
        MatrixSeries {
            ram: self.ram,
            low: self.low,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    pub fn checked_add(&self, other: &MatrixSeries) -> Result<MatrixSeries> {
        if self.dim() != other.dim() {
            return Err(SeriesError::ShapeMismatch(self.dim(), other.dim()));
        }
        let (a, b) = MatrixSeries::unify(self, other)?;
        let low = a.low.min(b.low);
        let trunc = a.trunc().min(b.trunc());
        if trunc < low {
            return Err(SeriesError::InsufficientTruncation { low, trunc });
        }
        let zero = CMat::zeros(a.dim(), a.dim());
        let coeffs = (low..=trunc)
            .map(|k| a.coeff_ref(k).unwrap_or(&zero) + b.coeff_ref(k).unwrap_or(&zero))
            .collect();
        Ok(MatrixSeries::new(a.ram, low, coeffs))
    }

    pub fn checked_sub(&self, other: &MatrixSeries) -> Result<MatrixSeries> {
        self.checked_add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn checked_mul(&self, other: &MatrixSeries) -> Result<MatrixSeries> {
        if self.dim() != other.dim() {
            return Err(SeriesError::ShapeMismatch(self.dim(), other.dim()));
        }
        let (a, b) = MatrixSeries::unify(&self.normalized(), &other.normalized())?;
        let low = a.low + b.low;
        let trunc = (a.low + b.trunc()).min(b.low + a.trunc());
        if trunc < low {
            return Err(SeriesError::InsufficientTruncation { low, trunc });
        }
        let mut out = MatrixSeries::zero(a.dim(), a.ram, low, trunc);
        for (i, x) in a.coeffs.iter().enumerate() {
            for (j, y) in b.coeffs.iter().enumerate() {
                let k = i + j;
                if k >= out.coeffs.len() {
                    break;
                }
                out.coeffs[k] += x * y;
            }
        }
        Ok(out)
    }

    /// Multiplies every coefficient by a scalar series.
    pub fn mul_scalar_series(&self, s: &Series) -> Result<MatrixSeries> {
        self.checked_mul(&MatrixSeries::scalar(s, self.dim()))
    }

    /// Inverse; the leading coefficient matrix must be invertible.
    pub fn inverse(&self) -> Result<MatrixSeries> {
        let a = self.normalized();
        let v = a.valuation().ok_or(SeriesError::ZeroLeadingTerm)?;
        let lead_inv = linalg::inverse(&a.coeffs[0]).ok_or(SeriesError::SingularLeading)?;
        let n = a.coeffs.len();
        let mut inv: Vec<CMat> = Vec::with_capacity(n);
        inv.push(lead_inv.clone());
        for k in 1..n {
            let mut acc = CMat::zeros(a.dim(), a.dim());
            for j in 1..=k {
                acc += &a.coeffs[j] * &inv[k - j];
            }
            inv.push(-(&lead_inv * acc));
        }
        Ok(MatrixSeries::new(a.ram, -v, inv))
    }

    pub fn phi_substitute(&self) -> Result<MatrixSeries> {
        self.map_entries(|s| s.phi_substitute())
    }

    fn map_entries(&self, f: impl Fn(&Series) -> Result<Series>) -> Result<MatrixSeries> {
        let n = self.dim();
        let rows: Vec<Vec<Series>> = (0..n)
            .map(|i| (0..n).map(|j| f(&self.entry(i, j))).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut out = MatrixSeries::from_entries(&rows)?;
        // keep the original window even when entries lose leading zeros
        if out.low > self.low && out.ram == self.ram {
            out = out.with_low(self.low);
        }
        Ok(out)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &MatrixSeries) -> Result<MatrixSeries> {
        let (a, b) = MatrixSeries::unify(self, other)?;
        let low = a.low + b.low;
        let trunc = (a.low + b.trunc()).min(b.low + a.trunc());
        if trunc < low {
            return Err(SeriesError::InsufficientTruncation { low, trunc });
        }
        let d = a.dim() * b.dim();
        let mut out = MatrixSeries::zero(d, a.ram, low, trunc);
        for (i, x) in a.coeffs.iter().enumerate() {
            for (j, y) in b.coeffs.iter().enumerate() {
                let k = i + j;
                if k >= out.coeffs.len() {
                    break;
                }
                out.coeffs[k] += x.kronecker(y);
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> MatrixSeries {
        MatrixSeries {
            ram: self.ram,
            low: self.low,
            coeffs: self.coeffs.iter().map(|c| c.transpose()).collect(),
        }
    }

    /// Sub-block `rows × cols` as a (not necessarily square) coefficient list.
    pub fn block(&self, rows: core::ops::Range<usize>, cols: core::ops::Range<usize>) -> Vec<CMat> {
        self.coeffs
            .iter()
            .map(|c| c.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned())
            .collect()
    }

    /// Square diagonal sub-block as its own matrix series.
    pub fn diagonal_block(&self, range: core::ops::Range<usize>) -> MatrixSeries {
        MatrixSeries::new(self.ram, self.low, self.block(range.clone(), range))
    }

    /// Block-diagonal assembly; all parts must share ramification and window.
    pub fn block_diag(parts: &[MatrixSeries]) -> Result<MatrixSeries> {
        assert!(!parts.is_empty());
        let mut m = 1;
        for p in parts {
            m = lcm(m, p.ram)?;
        }
        let lifted: Vec<MatrixSeries> = parts
            .iter()
            .map(|p| p.with_ramification(m))
            .collect::<Result<_>>()?;
        let low = lifted.iter().map(|p| p.low).min().unwrap();
        let trunc = lifted.iter().map(|p| p.trunc()).min().unwrap();
        let dim: usize = lifted.iter().map(|p| p.dim()).sum();
        let mut out = MatrixSeries::zero(dim, m, low, trunc);
        let mut off = 0;
        for p in &lifted {
            for k in low..=trunc {
                if let Some(c) = p.coeff_ref(k) {
                    out.coeffs[(k - low) as usize]
                        .view_mut((off, off), (p.dim(), p.dim()))
                        .copy_from(c);
                }
            }
            off += p.dim();
        }
        Ok(out)
    }

    /// Conjugation by a constant matrix: `T^{-1} A T`.
    pub fn conjugate_const(&self, t: &CMat, t_inv: &CMat) -> MatrixSeries {
        MatrixSeries {
            ram: self.ram,
            low: self.low,
            coeffs: self.coeffs.iter().map(|c| t_inv * c * t).collect(),
        }
    }

    pub fn mul_const_left(&self, t: &CMat) -> MatrixSeries {
        MatrixSeries {
            ram: self.ram,
            low: self.low,
            coeffs: self.coeffs.iter().map(|c| t * c).collect(),
        }
    }

    /// Evaluates the truncated sum at the point whose `log s` is given.
    pub fn eval_log(&self, log_s: Complex64) -> CMat {
        let tau = tau_from_log(log_s, self.ram);
        let mut acc = CMat::zeros(self.dim(), self.dim());
        for c in self.coeffs.iter().rev() {
            acc = acc * tau + c;
        }
        acc * tau.powi(self.low as i32)
    }

    pub fn eval(&self, s: Complex64) -> CMat {
        self.eval_log(s.ln())
    }

    /// Largest coefficient magnitude over the window.
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .fold(0.0, |m, c| c.iter().fold(m, |m, x| m.max(x.norm())))
    }

    pub fn approx_eq(&self, other: &MatrixSeries, rel_tol: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let Ok(d) = self.checked_sub(other) else {
            return false;
        };
        let scale = self.max_abs().max(other.max_abs()).max(1.0);
        d.max_abs() <= rel_tol * scale
    }

    /// True when every coefficient is zero outside the given diagonal blocks.
    pub fn off_block_max(&self, sizes: &[usize]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut starts = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for s in sizes {
            starts.push(acc);
            acc += s;
        }
        let block_of = |i: usize| starts.iter().rposition(|&s| s <= i).unwrap();
        for c in &self.coeffs {
            for i in 0..c.nrows() {
                for j in 0..c.ncols() {
                    if block_of(i) != block_of(j) {
                        worst = worst.max(c[(i, j)].norm());
                    }
                }
            }
        }
        worst
    }
}

/// `(1+t)^{±G} = exp(±G log(1+t))` as a matrix series with ramification `ram`.
pub fn matrix_power_1pt(g: &CMat, sign: i32, ram: u32, trunc: i64) -> MatrixSeries {
    assert!(sign == 1 || sign == -1);
    assert!(trunc >= 0);
    let n = g.nrows();
    let l = Series::log1p(ram, trunc);
    let gs = g * Complex64::new(sign as f64, 0.0);
    // E' = H'E with commuting coefficients H_j = ±G·L_j.
    let len = (trunc + 1) as usize;
    let mut e: Vec<CMat> = Vec::with_capacity(len);
    e.push(CMat::identity(n, n));
    for k in 1..len {
        let mut acc = CMat::zeros(n, n);
        for j in 1..=k {
            let lj = l.coeffs()[j];
            if lj.is_zero() {
                continue;
            }
            acc += &gs * (lj * j as f64) * &e[k - j];
        }
        e.push(acc / Complex64::new(k as f64, 0.0));
    }
    MatrixSeries::new(ram, 0, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn poly(coeffs: &[f64], trunc: i64) -> Series {
        let mut s = Series::zero(1, 0, trunc);
        for (k, v) in coeffs.iter().enumerate() {
            s.coeffs[k] = c(*v);
        }
        s
    }

    #[test]
    fn sum_and_product_examples() {
        let t = Series::t(1, 16);
        let one = Series::constant(c(1.0), 1, 16);
        assert!((&t + &one).approx_eq(&poly(&[1.0, 1.0], 16), 1e-15));

        let tinv = Series::monomial(c(1.0), -1, 1, 16);
        let p = &t * &tinv;
        assert!(p.approx_eq(&one.truncate(15), 1e-15));

        let a = poly(&[1.0, 1.0], 3);
        let b = poly(&[1.0, -1.0, 1.0, -1.0], 3);
        assert!((&a * &b).approx_eq(&poly(&[1.0], 3), 1e-15));
    }

    #[test]
    fn invert_examples() {
        let inv = poly(&[1.0, 1.0], 3).invert().unwrap();
        assert!(inv.approx_eq(&poly(&[1.0, -1.0, 1.0, -1.0], 3), 1e-15));
        let half = Series::constant(c(2.0), 1, 4).invert().unwrap();
        assert!((half.coeff(0).unwrap() - 0.5).norm() < 1e-15);

        // t(1+t): multiply-back oracle
        let f = poly(&[0.0, 1.0, 1.0], 10);
        let g = f.invert().unwrap();
        assert_eq!(g.low(), -1);
        let back = f.checked_mul(&g).unwrap();
        let one = Series::constant(c(1.0), 1, back.trunc());
        assert!(back.approx_eq(&one, 1e-13));
        assert!((g.coeff(0).unwrap() + 1.0).norm() < 1e-15);
    }

    #[test]
    fn invert_zero_is_an_error() {
        let z = Series::zero(1, 0, 5);
        assert_eq!(z.invert().unwrap_err(), SeriesError::ZeroLeadingTerm);
    }

    #[test]
    fn zero_series_equal_regardless_of_low() {
        assert!(Series::zero(1, -3, 5).approx_eq(&Series::zero(2, 4, 9), 0.0));
    }

    #[test]
    fn phi_examples() {
        let t = Series::t(1, 4);
        assert!(t.phi_substitute().unwrap().approx_eq(&poly(&[0.0, 1.0, -1.0, 1.0, -1.0], 4), 1e-15));

        let tinv = Series::monomial(c(1.0), -1, 1, 6);
        let mut expect = Series::zero(1, -1, 6);
        expect.coeffs[0] = c(1.0);
        expect.coeffs[1] = c(1.0);
        assert!(tinv.phi_substitute().unwrap().approx_eq(&expect, 1e-15));

        let one = Series::constant(c(1.0), 1, 6);
        assert!(one.phi_substitute().unwrap().approx_eq(&one, 0.0));
    }

    #[test]
    fn ramified_phi_matches_binomial() {
        // τ ↦ τ (1+t)^{-1/2} with m = 2
        let tau = Series::monomial(c(1.0), 1, 2, 9);
        let got = tau.phi_substitute().unwrap();
        let b = binomials(c(-0.5), 4);
        for j in 0..=4 {
            assert!((got.coeff(1 + 2 * j).unwrap() - b[j as usize]).norm() < 1e-15);
        }
        assert!(got.coeff(2).unwrap().norm() < 1e-15);
    }

    #[test]
    fn log1p_examples() {
        let l = Series::log1p(1, 3);
        assert!(l.approx_eq(&poly(&[0.0, 1.0, -0.5, 1.0 / 3.0], 3), 1e-15));
        assert!(Series::log1p(1, 1).approx_eq(&poly(&[0.0, 1.0], 1), 0.0));
        // exp(log1p) = 1 + t, checked against a direct exp-series oracle
        let l = Series::log1p(1, 12);
        let mut oracle = poly(&[1.0], 12);
        let mut term = poly(&[1.0], 12);
        for n in 1..=12 {
            term = term.checked_mul(&l).unwrap().scale(c(1.0 / n as f64));
            oracle = oracle.checked_add(&term).unwrap();
        }
        assert!(oracle.approx_eq(&poly(&[1.0, 1.0], 12), 1e-14));
        assert!(l.exp().unwrap().approx_eq(&poly(&[1.0, 1.0], 12), 1e-14));
    }

    fn mat(rows: &[&[f64]]) -> CMat {
        CMat::from_fn(rows.len(), rows[0].len(), |i, j| c(rows[i][j]))
    }

    #[test]
    fn matrix_power_examples() {
        let zero = CMat::zeros(2, 2);
        let id = matrix_power_1pt(&zero, -1, 1, 5);
        assert!(id.approx_eq(&MatrixSeries::identity(2, 1, 5), 0.0));

        // nilpotent G: truncated matrix exponential oracle I - N log(1+t)
        let n = mat(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let p = matrix_power_1pt(&n, -1, 1, 2);
        assert!((p.coeff(1).unwrap() - mat(&[&[0.0, -1.0], &[0.0, 0.0]])).norm() < 1e-15);
        assert!((p.coeff(2).unwrap() - mat(&[&[0.0, 0.5], &[0.0, 0.0]])).norm() < 1e-15);
        assert!((p.coeff(0).unwrap() - CMat::identity(2, 2)).norm() < 1e-15);

        // scalar γ: binomial oracle C(-γ, n)
        let gamma = Complex64::new(0.3, -0.7);
        let g = CMat::identity(1, 1) * gamma;
        let p = matrix_power_1pt(&g, -1, 1, 10);
        let b = binomials(-gamma, 10);
        for k in 0..=10 {
            assert!((p.coeff(k).unwrap()[(0, 0)] - b[k as usize]).norm() < 1e-13);
        }
    }

    #[test]
    fn ramification_cap_is_enforced() {
        let a = Series::constant(c(1.0), 7, 4);
        let b = Series::constant(c(1.0), 5, 4);
        assert_eq!(a.checked_add(&b).unwrap_err(), SeriesError::RamificationCap(35));
        let c3 = Series::constant(c(1.0), 3, 4);
        let c4 = Series::constant(c(1.0), 4, 4);
        assert_eq!(c3.checked_mul(&c4).unwrap().ramification(), 12);
    }

    #[test]
    fn exp_of_pole_is_rejected() {
        let tinv = Series::monomial(c(1.0), -1, 1, 5);
        assert_eq!(tinv.exp().unwrap_err(), SeriesError::EssentialSingularity);
        assert_eq!(Series::t(1, 5).log().unwrap_err(), SeriesError::LogOfNonUnit);
    }

    #[test]
    fn evaluation_matches_closed_form() {
        let s = Complex64::new(12.0, 3.0);
        let f = Series::binomial(c(-0.5), 1, 16);
        let exact = (Complex64::new(1.0, 0.0) + s.inv()).powf(-0.5);
        assert!((f.eval(s) - exact).norm() < 1e-14);
    }
}
