//! Small dense complex linear algebra on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;
use num_traits::Zero;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Max-abs entry norm.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.norm()))
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    let scale = max_abs(m);
    if scale == 0.0 {
        return None;
    }
    let lu = m.clone().lu();
    let inv = lu.try_inverse()?;
    if inv.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return None;
    }
    Some(inv)
}

pub fn solve(m: &CMat, rhs: &CMat) -> Option<CMat> {
    let out = m.clone().lu().solve(rhs)?;
    if out.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return None;
    }
    Some(out)
}

pub fn determinant(m: &CMat) -> Complex64 {
    m.clone().lu().determinant()
}

/// Eigenvalues from a complex Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 1 {
        return alloc::vec![m[(0, 0)]];
    }
    let schur = Schur::try_new(m.clone(), 1e-15, 10_000)
        .unwrap_or_else(|| Schur::new(m.clone()));
    let (_, t) = schur.unpack();
    (0..n).map(|i| t[(i, i)]).collect()
}

/// Orthonormal basis of the (numerical) null space, as columns.
pub fn null_space(m: &CMat, rel_tol: f64) -> CMat {
    let n = m.ncols();
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = rel_tol * smax.max(1.0);
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    // rows of V^T beyond the rank of a wide matrix are absent; with square input all are present
    let mut out = CMat::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        for j in 0..n {
            out[(j, k)] = v_t[(i, j)].conj();
        }
    }
    out
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    let norm = m
        .row_iter()
        .map(|r| r.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * Complex64::new(scale, 0.0);
    let mut term = CMat::identity(n, n);
    let mut acc = CMat::identity(n, n);
    for k in 1..=20 {
        term = &term * &a / Complex64::new(k as f64, 0.0);
        acc += &term;
        if max_abs(&term) < 1e-18 * max_abs(&acc) {
            break;
        }
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

/// `exp(G·log_s)`, i.e. `s^G` for a chosen branch of `log s`.
pub fn matrix_power(g: &CMat, log_s: Complex64) -> CMat {
    if is_diagonal(g) {
        let n = g.nrows();
        return CMat::from_fn(n, n, |i, j| if i == j { (g[(i, i)] * log_s).exp() } else { Complex64::zero() });
    }
    expm(&(g * log_s))
}

pub fn is_diagonal(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].is_zero()))
}

/// Solves `A X − X B = C` through the Kronecker form `(I⊗A − Bᵀ⊗I) vec X = vec C`.
pub fn sylvester(a: &CMat, b: &CMat, rhs: &CMat) -> Option<CMat> {
    let p = a.nrows();
    let q = b.nrows();
    let ip = CMat::identity(p, p);
    let iq = CMat::identity(q, q);
    let k = iq.kronecker(a) - b.transpose().kronecker(&ip);
    let v = CMat::from_iterator(p * q, 1, rhs.iter().cloned());
    let x = solve(&k, &v)?;
    Some(CMat::from_iterator(p, q, x.iter().cloned()))
}

/// Smallest singular value of the Sylvester operator `X ↦ A X − X B`, relative to its largest.
pub fn sylvester_conditioning(a: &CMat, b: &CMat) -> f64 {
    let p = a.nrows();
    let q = b.nrows();
    let k = CMat::identity(q, q).kronecker(a) - b.transpose().kronecker(&CMat::identity(p, p));
    let sv = k.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Rewrites a column basis so that a set of pivot rows reads as the identity.
///
/// Returns the pivot rows in ascending order. Coordinate subspaces come back as
/// exact unit vectors.
pub fn pivot_normalize(v: &CMat) -> (CMat, Vec<usize>) {
    let n = v.nrows();
    let k = v.ncols();
    let mut work = v.clone();
    let mut pivots = Vec::with_capacity(k);
    let mut used = alloc::vec![false; n];
    // greedy complete pivoting on a scratch copy
    let mut scratch = v.clone();
    let mut col_done = alloc::vec![false; k];
    for _ in 0..k {
        let mut best = (0, 0, -1.0);
        for i in 0..n {
            if used[i] {
                continue;
            }
            for j in 0..k {
                if col_done[j] {
                    continue;
                }
                let a = scratch[(i, j)].norm();
                if a > best.2 {
                    best = (i, j, a);
                }
            }
        }
        let (pi, pj, _) = best;
        used[pi] = true;
        col_done[pj] = true;
        pivots.push(pi);
        let piv = scratch[(pi, pj)];
        for j in 0..k {
            if j != pj {
                let f = scratch[(pi, j)] / piv;
                for i in 0..n {
                    let d = scratch[(i, pj)] * f;
                    scratch[(i, j)] -= d;
                }
            }
        }
    }
    pivots.sort_unstable();
    let sub = CMat::from_fn(k, k, |i, j| v[(pivots[i], j)]);
    if let Some(inv) = inverse(&sub) {
        work = v * inv;
    }
    for x in work.iter_mut() {
        if x.re.abs() < 1e-14 {
            x.re = 0.0;
        }
        if x.im.abs() < 1e-14 {
            x.im = 0.0;
        }
    }
    for (r, &p) in pivots.iter().enumerate() {
        for j in 0..k {
            work[(p, j)] = if r == j { Complex64::new(1.0, 0.0) } else { Complex64::zero() };
        }
    }
    (work, pivots)
}

/// Least squares `min ‖M x − b‖` via SVD.
pub fn least_squares(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, 1e-13 * smax).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_nilpotent_and_diagonal() {
        let n = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let e = expm(&n);
        assert!((e[(0, 1)] - 1.0).norm() < 1e-15);
        let d = CMat::from_diagonal(&CVec::from_vec(alloc::vec![c(2.0, 0.0), c(0.0, core::f64::consts::PI)]));
        let e = expm(&d);
        assert!((e[(0, 0)] - libm::exp(2.0)).norm() < 1e-13);
        assert!((e[(1, 1)] + 1.0).norm() < 1e-13);
    }

    #[test]
    fn sylvester_round_trip() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(0.0, 0.0), c(3.0, 0.0)]);
        let b = CMat::from_row_slice(1, 1, &[c(-1.0, 0.5)]);
        let rhs = CMat::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.0, -2.0)]);
        let x = sylvester(&a, &b, &rhs).unwrap();
        assert!(max_abs(&(&a * &x - &x * &b - rhs)) < 1e-14);
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.ncols(), 1);
        assert!(max_abs(&(&m * &ns)) < 1e-14);
    }

    #[test]
    fn pivot_normalize_gives_unit_vectors() {
        let v = CMat::from_row_slice(3, 1, &[c(0.0, 0.0), c(0.0, -0.7), c(0.0, 0.0)]);
        let (w, p) = pivot_normalize(&v);
        assert_eq!(p, alloc::vec![1]);
        assert_eq!(w[(1, 0)], c(1.0, 0.0));
        assert_eq!(w[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn eigenvalues_of_triangular() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(5.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let mut ev: Vec<f64> = eigenvalues(&m).iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }
}
