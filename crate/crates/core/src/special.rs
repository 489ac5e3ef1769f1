//! Complex Gamma, principal and branch-tracked log-Gamma, and continuous logarithms.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;

use crate::exponents::TAU;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GammaError {
    #[error("Gamma has a pole at {0}")]
    PoleAt(Complex64),
    #[error("ray passes within 1e-10 of the pole at {0}")]
    RayHitsPole(f64),
    #[error("reflection check needs a non-integer argument, got {0}")]
    IntegerInput(Complex64),
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Lanczos kernel, g = 671/128, 14 terms.
const LANCZOS_G: f64 = 5.242_187_5;
const LANCZOS: [f64; 14] = [
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    3.399_464_998_481_189e-5,
    4.652_362_892_704_858e-5,
    -9.837_447_530_487_956e-5,
    1.580_887_032_249_125e-4,
    -2.102_644_417_241_048_8e-4,
    2.174_396_181_152_126_5e-4,
    -1.643_181_065_367_639e-4,
    8.441_822_398_385_275e-5,
    -2.619_083_840_158_140_8e-5,
    3.689_918_265_953_162_5e-6,
];

// B_{2k} / (2k(2k-1)), k = 1..12
const STIRLING: [f64; 12] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
    43867.0 / 244_188.0,
    -174_611.0 / 125_400.0,
    77683.0 / 5796.0,
    -236_364_091.0 / 1_506_960.0,
];

const STIRLING_RADIUS: f64 = 15.0;

fn near_pole(z: Complex64) -> bool {
    z.re < 0.5 && z.im.abs() < 1e-10 && (z.re - z.re.round()).abs() < 1e-10
}

fn lanczos(z: Complex64) -> Complex64 {
    let tmp = z + LANCZOS_G;
    let mut ser = Complex64::new(0.999_999_999_999_997_1, 0.0);
    for (j, c) in LANCZOS.iter().enumerate() {
        ser += *c / (z + (j + 1) as f64);
    }
    ((z + 0.5) * tmp.ln() - tmp).exp() * (2.506_628_274_631_000_5 * ser / z)
}

fn stirling(z: Complex64) -> Complex64 {
    let zi = z.inv();
    let zi2 = zi * zi;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut p = zi;
    for c in STIRLING {
        acc += p * c;
        p *= zi2;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + acc
}

/// `Γ(z)`.
pub fn gamma(z: Complex64) -> Result<Complex64, GammaError> {
    if near_pole(z) {
        return Err(GammaError::PoleAt(z));
    }
    if z.re < 0.5 {
        let g = gamma(Complex64::new(1.0, 0.0) - z)?;
        return Ok(PI / ((z * PI).sin() * g));
    }
    if z.norm() < 10.0 {
        Ok(lanczos(z))
    } else {
        Ok(ln_gamma(z)?.exp())
    }
}

/// Principal `log Γ(z)`, continuous off `(−∞, 0]`.
pub fn ln_gamma(z: Complex64) -> Result<Complex64, GammaError> {
    if near_pole(z) {
        return Err(GammaError::PoleAt(z));
    }
    let mut w = z;
    let mut corr = Complex64::new(0.0, 0.0);
    while w.re <= 0.0 || w.norm() < STIRLING_RADIUS {
        corr += w.ln();
        w += 1.0;
    }
    Ok(stirling(w) - corr)
}

/// One sample of a branch-tracked log-Gamma along a ray.
#[derive(Debug, Clone, Copy)]
pub struct GammaEval {
    pub s: Complex64,
    pub value: Complex64,
    pub log_value: Complex64,
    /// Accumulated argument `Im log Γ` along the ray.
    pub arg_continuity: f64,
}

/// `log Γ` continued analytically along `s0 + k·step·e^{iσ}`, `k = 0..count`.
pub fn log_gamma_ray(
    s0: Complex64,
    sigma: f64,
    step: f64,
    count: usize,
) -> Result<Vec<GammaEval>, GammaError> {
    let dir = Complex64::from_polar(step, sigma);
    let mut out = Vec::with_capacity(count);
    let mut offset: i64 = 0;
    let mut prev: Option<Complex64> = None;
    for k in 0..count {
        let s = s0 + dir * k as f64;
        if let Some(p) = prev {
            check_segment(p, s)?;
            let above0 = p.im >= 0.0;
            let above1 = s.im >= 0.0;
            if above0 != above1 {
                let t = p.im / (p.im - s.im);
                let x = p.re + t * (s.re - p.re);
                if x < 0.0 {
                    let n = (-x).ceil() as i64;
                    if above0 {
                        offset -= n;
                    } else {
                        offset += n;
                    }
                }
            }
        } else if near_pole(s) {
            return Err(GammaError::RayHitsPole(s.re));
        }
        let principal = ln_gamma(s)?;
        let log_value = principal + Complex64::new(0.0, TAU * offset as f64);
        out.push(GammaEval {
            s,
            value: gamma(s)?,
            log_value,
            arg_continuity: log_value.im,
        });
        prev = Some(s);
    }
    Ok(out)
}

fn check_segment(a: Complex64, b: Complex64) -> Result<(), GammaError> {
    let d = b - a;
    let lo = a.re.min(b.re).floor().min(0.0) as i64;
    let hi = a.re.max(b.re).ceil().min(0.0) as i64;
    for n in lo..=hi {
        let p = Complex64::new(n as f64, 0.0);
        let t = if d.norm_sqr() == 0.0 { 0.0 } else { ((p - a) * d.conj()).re / d.norm_sqr() };
        let t = t.clamp(0.0, 1.0);
        if (a + d * t - p).norm() < 1e-10 {
            return Err(GammaError::RayHitsPole(n as f64));
        }
    }
    Ok(())
}

/// Relative gap between `(1−u)Γ(s)` and `−2πi e^{πis}/Γ(1−s)`, `u = e^{2πis}`.
pub fn reflection_residual(s: Complex64) -> Result<f64, GammaError> {
    if s.im.abs() < 1e-10 && (s.re - s.re.round()).abs() < 1e-10 {
        return Err(GammaError::IntegerInput(s));
    }
    let i = Complex64::new(0.0, 1.0);
    let u = (i * TAU * s).exp();
    let lhs = (1.0 - u) * gamma(s)?;
    let rhs = -i * TAU * (i * PI * s).exp() / gamma(1.0 - s)?;
    Ok((lhs - rhs).norm() / lhs.norm().max(rhs.norm()))
}

/// A logarithm of `s` continued along a path: each step picks the branch
/// nearest the previous argument.
#[derive(Debug, Clone, Copy)]
pub struct BranchLog {
    last: Complex64,
}

impl BranchLog {
    /// Starts at `s` with `arg s` chosen closest to `arg_hint`.
    pub fn new(s: Complex64, arg_hint: f64) -> Self {
        BranchLog { last: log_near(s, arg_hint) }
    }

    pub fn current(&self) -> Complex64 {
        self.last
    }

    /// Moves to `s` (the step should be small compared to `|s|`).
    pub fn advance(&mut self, s: Complex64) -> Complex64 {
        self.last = log_near(s, self.last.im);
        self.last
    }
}

/// `log s` with the argument chosen within `π` of `arg_hint`.
pub fn log_near(s: Complex64, arg_hint: f64) -> Complex64 {
    let l = s.ln();
    let k = ((arg_hint - l.im) / TAU).round();
    Complex64::new(l.re, l.im + k * TAU)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma(cx(5.0, 0.0)).unwrap() - 24.0).norm() < 1e-12 * 24.0);
        let r = gamma(cx(0.5, 0.0)).unwrap();
        assert!((r.re - 1.772_453_850_905_516).abs() < 1e-14);
        let z = cx(2.3, 0.7);
        let q = gamma(z + 1.0).unwrap() / gamma(z).unwrap();
        assert!((q - z).norm() < 1e-12 * z.norm());
        assert!(matches!(gamma(cx(-3.0, 0.0)), Err(GammaError::PoleAt(_))));
    }

    #[test]
    fn gamma_across_regimes() {
        // factorials through the Stirling branch
        let mut f = 1.0f64;
        for n in 1..=30 {
            let g = gamma(cx(n as f64, 0.0)).unwrap();
            assert!((g.re - f).abs() < 1e-13 * f, "n = {n}");
            f *= n as f64;
        }
        for z in [cx(9.9, 0.3), cx(10.1, -0.3), cx(0.6, 9.0), cx(-4.5, 2.0), cx(30.0, 40.0)] {
            let q = gamma(z + 1.0).unwrap() / gamma(z).unwrap();
            assert!((q - z).norm() < 1e-12 * z.norm(), "z = {z}");
        }
    }

    #[test]
    fn ln_gamma_is_principal() {
        for z in [cx(0.5, 3.0), cx(-7.3, 0.2), cx(-7.3, -0.2), cx(12.0, -50.0), cx(3.0, 0.0)] {
            let l = ln_gamma(z).unwrap();
            let g = gamma(z).unwrap();
            assert!((l.exp() - g).norm() < 1e-11 * g.norm(), "z = {z}");
        }
        assert!(ln_gamma(cx(10.0, 0.0)).unwrap().im.abs() < 1e-15);
        // conjugate symmetry of the principal branch
        let a = ln_gamma(cx(-3.4, 1e-3)).unwrap();
        let b = ln_gamma(cx(-3.4, -1e-3)).unwrap();
        assert!((a - b.conj()).norm() < 1e-12);
    }

    #[test]
    fn log_gamma_ray_examples() {
        let r = log_gamma_ray(cx(10.0, 0.0), 0.0, 1.0, 3).unwrap();
        assert!(r.iter().all(|e| e.log_value.im.abs() < 1e-15));
        let r = log_gamma_ray(cx(-6.5, 4.0), -PI / 2.0, 0.05, 200).unwrap();
        for w in r.windows(2) {
            assert!((w[1].arg_continuity - w[0].arg_continuity).abs() < PI);
        }
        for e in &r {
            assert!((e.log_value.exp() - e.value).norm() < 1e-11 * e.value.norm());
        }
        assert!(matches!(
            log_gamma_ray(cx(-2.0, 1.0), -PI / 2.0, 0.5, 5),
            Err(GammaError::RayHitsPole(_))
        ));
    }

    #[test]
    fn reflection_examples() {
        assert!(reflection_residual(cx(0.5, 0.0)).unwrap() < 1e-12);
        assert!(reflection_residual(cx(2.3, 0.7)).unwrap() < 1e-10);
        let s = cx(1.0 / 3.0, 0.0);
        let lhs = gamma(s).unwrap() * gamma(1.0 - s).unwrap();
        assert!((lhs - PI / (PI * s).sin()).norm() < 1e-12 * lhs.norm());
        assert!(reflection_residual(cx(1.0 / 3.0, 0.0)).unwrap() < 1e-12);
        assert!(matches!(reflection_residual(cx(2.0, 0.0)), Err(GammaError::IntegerInput(_))));
    }

    #[test]
    fn branch_log_follows_the_circle() {
        let mut b = BranchLog::new(cx(1.0, 0.0), 0.0);
        for k in 1..=100 {
            let th = k as f64 * 0.07;
            b.advance(Complex64::from_polar(2.0, th));
        }
        assert!((b.current().im - 7.0).abs() < 1e-12);
    }
}
