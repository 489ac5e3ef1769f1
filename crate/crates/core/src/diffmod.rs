//! Difference systems `y(s) = A(s)·y(s+1)`, mildness, formal reduction to
//! elementary models `⊕ ℰ^{a_i} ⊗ ℛ_{G_i}`, and tensor/Hom constructions.
//!
//! A block `ℰ^a ⊗ ℛ_G` has matrix `exp(a(s+1) − a(s))·(1 + 1/s)^{−G}` and
//! frame `Y(s) = exp(−a(s))·s^G`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;
use num_traits::Zero;

use crate::exponents::{Exponent, ExponentError};
use crate::linalg::{self, CMat};
use crate::series::{binomials, matrix_power_1pt, MatrixSeries, Series, SeriesError, DEFAULT_TRUNCATION};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("system is not mild: {0}")]
    NotMild(String),
    #[error("eigenvalues of A(0) too close to separate: {0}")]
    ClusteredEigenvalues(String),
    #[error("unsupported formal structure: {0}")]
    UnsupportedFormalStructure(String),
    #[error("leading coefficient is zero")]
    ZeroLeadingTerm,
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
}

pub type Result<T> = core::result::Result<T, DiffError>;

/// Rank-`r` system `y(s) = A(s)·y(s+1)`, i.e. `ψ = A·φ_t` with `ψ(y) = y`.
#[derive(Debug, Clone)]
pub struct DiffSystem {
    a: MatrixSeries,
    exact: bool,
}

/// Outcome of the mildness check.
#[derive(Debug, Clone)]
pub struct MildReport {
    pub mild: bool,
    pub det_a0: Complex64,
    pub reason: Option<String>,
}

impl DiffSystem {
    pub fn new(a: MatrixSeries) -> Self {
        DiffSystem { a, exact: false }
    }

    /// Marks the series as the complete (Laurent polynomial) matrix, so that
    /// evaluation is valid down to small `|s|`.
    pub fn with_exact(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn rank(&self) -> usize {
        self.a.dim()
    }

    pub fn matrix(&self) -> &MatrixSeries {
        &self.a
    }

    pub fn ramification(&self) -> u32 {
        self.a.ramification()
    }

    /// `A` at the point with the given `log s`.
    pub fn eval_log(&self, log_s: Complex64) -> CMat {
        self.a.eval_log(log_s)
    }

    pub fn eval(&self, s: Complex64) -> CMat {
        self.a.eval(s)
    }

    /// `A(0)`, the `τ^0` coefficient.
    pub fn leading(&self) -> CMat {
        self.a.coeff(0).unwrap_or_else(|| CMat::zeros(self.rank(), self.rank()))
    }

    pub fn mildness(&self) -> MildReport {
        let r = self.rank();
        if let Some(v) = self.a.valuation() {
            if v < 0 {
                return MildReport {
                    mild: false,
                    det_a0: Complex64::zero(),
                    reason: Some(format!("A has a pole of order {}/{} at t = 0", -v, self.ramification())),
                };
            }
        }
        let a0 = self.leading();
        let det = linalg::determinant(&a0);
        let scale = linalg::max_abs(&a0).max(1.0).powi(r as i32);
        if det.norm() <= 1e-12 * scale {
            return MildReport { mild: false, det_a0: det, reason: Some(String::from("A(0) singular")) };
        }
        MildReport { mild: true, det_a0: det, reason: None }
    }

    /// Holomorphic at `t = 0` with invertible `A(0)`.
    pub fn check_mild(&self) -> bool {
        self.mildness().mild
    }

    fn require_mild(&self) -> Result<()> {
        let rep = self.mildness();
        if rep.mild {
            Ok(())
        } else {
            Err(DiffError::NotMild(rep.reason.unwrap_or_default()))
        }
    }
}

/// `A₁ ⊗ A₂`.
pub fn tensor(s1: &DiffSystem, s2: &DiffSystem) -> Result<DiffSystem> {
    Ok(DiffSystem::new(s1.a.kron(&s2.a)?).with_exact(s1.exact && s2.exact))
}

/// Matrix of `h ↦ A₂·φ(h)·A₁^{−1}` on column-major `r₂×r₁` matrices: `(A₁^{−1})ᵀ ⊗ A₂`.
pub fn hom(s1: &DiffSystem, s2: &DiffSystem) -> Result<DiffSystem> {
    let a1_inv = s1.a.inverse()?;
    Ok(DiffSystem::new(a1_inv.transpose().kron(&s2.a)?))
}

pub fn end(s: &DiffSystem) -> Result<DiffSystem> {
    hom(s, s)
}

/// One summand `ℰ^a ⊗ ℛ_G` of a formal datum.
#[derive(Debug, Clone)]
pub struct FormalPiece {
    pub exponent: Exponent,
    pub g: CMat,
}

impl FormalPiece {
    pub fn new(exponent: Exponent, g: CMat) -> Self {
        assert!(g.is_square());
        FormalPiece { exponent, g }
    }

    pub fn rank(&self) -> usize {
        self.g.nrows()
    }
}

/// The elementary model `⊕_i ℰ^{a_i} ⊗ ℛ_{G_i}`.
#[derive(Debug, Clone)]
pub struct FormalDatum {
    pub pieces: Vec<FormalPiece>,
}

impl FormalDatum {
    pub fn new(pieces: Vec<FormalPiece>) -> Self {
        FormalDatum { pieces }
    }

    pub fn rank(&self) -> usize {
        self.pieces.iter().map(|p| p.rank()).sum()
    }

    pub fn ramification(&self) -> u32 {
        self.pieces
            .iter()
            .fold(1, |m, p| m / crate::series::gcd(m, p.exponent.ramification()) * p.exponent.ramification())
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.pieces.iter().map(|p| p.rank()).collect()
    }

    /// Exponent attached to each frame column.
    pub fn column_exponents(&self) -> Vec<Exponent> {
        self.pieces
            .iter()
            .flat_map(|p| core::iter::repeat_n(p.exponent.clone(), p.rank()))
            .collect()
    }

    /// Same pieces up to orbit representatives and permutation.
    pub fn equivalent(&self, other: &FormalDatum, tol: f64) -> bool {
        if self.pieces.len() != other.pieces.len() {
            return false;
        }
        let mut used = alloc::vec![false; other.pieces.len()];
        for p in &self.pieces {
            let hit = other.pieces.iter().enumerate().position(|(j, q)| {
                !used[j]
                    && q.rank() == p.rank()
                    && p.exponent.same_orbit(&q.exponent)
                    && linalg::max_abs(&(&p.g - &q.g)) <= tol * linalg::max_abs(&p.g).max(1.0)
            });
            match hit {
                Some(j) => used[j] = true,
                None => return false,
            }
        }
        true
    }
}

/// `exp(a(s+1) − a(s))` as a series in `τ = s^{−1/m}`.
pub fn exponent_step_series(a: &Exponent, trunc: i64) -> Result<Series> {
    let m = a.ramification();
    let mi = m as i64;
    let mut d = Series::zero(m, 0, trunc);
    // Σ_ℓ c_ℓ Σ_{j≥1} C(ℓ/m, j) τ^{mj−ℓ}
    let mut coeffs: Vec<Complex64> = alloc::vec![Complex64::zero(); (trunc + 1) as usize];
    for l in 1..=m {
        let c = a.c(l);
        if c.is_zero() {
            continue;
        }
        let b = binomials(Complex64::new(l as f64 / m as f64, 0.0), ((trunc + l as i64) / mi + 1) as usize);
        for (j, bj) in b.iter().enumerate().skip(1) {
            let k = mi * j as i64 - l as i64;
            if k > trunc {
                break;
            }
            coeffs[k as usize] += c * bj;
        }
    }
    d = Series::new(m, 0, coeffs).checked_add(&d)?;
    Ok(d.exp()?)
}

/// Matrix of the elementary block `ℰ^a ⊗ ℛ_G` to order `trunc`.
pub fn elementary_block(piece: &FormalPiece, ram: u32, trunc: i64) -> Result<MatrixSeries> {
    let e = exponent_step_series(&piece.exponent.with_ramification(ram)?, trunc)?;
    let r = matrix_power_1pt(&piece.g, -1, ram, trunc);
    Ok(r.mul_scalar_series(&e)?)
}

/// Block-diagonal system of a formal datum (the graded module).
pub fn graded_module(fd: &FormalDatum, trunc: i64) -> Result<DiffSystem> {
    let m = fd.ramification();
    let blocks: Vec<MatrixSeries> = fd
        .pieces
        .iter()
        .map(|p| elementary_block(p, m, trunc))
        .collect::<Result<_>>()?;
    Ok(DiffSystem::new(MatrixSeries::block_diag(&blocks)?))
}

/// Result of splitting by eigenvalue clusters of `A(0)`.
///
/// With `Â = T^{−1} A T`, the gauge `H = I + O(τ)` satisfies
/// `Â·φ(H) = H·A'` where `A'` is block diagonal (flat sections `y = T H z`).
#[derive(Debug, Clone)]
pub struct Splitting {
    pub t: CMat,
    pub t_inv: CMat,
    pub h: MatrixSeries,
    pub a_prime: MatrixSeries,
    pub sizes: Vec<usize>,
    /// Eigenvalue of `A(0)` per block.
    pub leading: Vec<Complex64>,
}

impl Splitting {
    /// `T·H`, the gauge in the original coordinates.
    pub fn full_gauge(&self) -> MatrixSeries {
        self.h.mul_const_left(&self.t)
    }

    pub fn blocks(&self) -> Vec<DiffSystem> {
        let mut off = 0;
        self.sizes
            .iter()
            .map(|&k| {
                let b = self.a_prime.diagonal_block(off..off + k);
                off += k;
                DiffSystem::new(b)
            })
            .collect()
    }
}

fn cluster_eigenvalues(ev: &[Complex64], scale: f64) -> Result<Vec<Vec<Complex64>>> {
    let thr = 1e-6 * scale;
    let n = ev.len();
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..n {
            if (ev[i] - ev[j]).norm() < thr {
                let (a, b) = (label[i], label[j]);
                if a != b {
                    let lo = a.min(b);
                    let hi = a.max(b);
                    for l in label.iter_mut() {
                        if *l == hi {
                            *l = lo;
                        }
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    let mut keys: Vec<usize> = Vec::new();
    for i in 0..n {
        match keys.iter().position(|&k| k == label[i]) {
            Some(p) => groups[p].push(ev[i]),
            None => {
                keys.push(label[i]);
                groups.push(alloc::vec![ev[i]]);
            }
        }
    }
    for g in &groups {
        for x in g {
            for y in g {
                if (x - y).norm() > 1e-8 * scale {
                    return Err(DiffError::ClusteredEigenvalues(format!(
                        "eigenvalues {x} and {y} differ by {:.3e}",
                        (x - y).norm()
                    )));
                }
            }
        }
    }
    Ok(groups)
}

/// Block-diagonalizes the system to order `trunc` by eigenvalue clusters of `A(0)`.
pub fn split_by_eigenvalues(sys: &DiffSystem, trunc: i64) -> Result<Splitting> {
    sys.require_mild()?;
    let a = sys.a.normalized().with_low(0);
    let trunc = trunc.min(a.trunc());
    let a = a.truncate(trunc);
    let n = a.dim();
    let a0 = a.coeff(0).unwrap();
    let scale = linalg::max_abs(&a0).max(1.0);
    let ev = linalg::eigenvalues(&a0);
    let groups = cluster_eigenvalues(&ev, scale)?;

    // invariant subspaces, pivot-normalized and ordered by pivot rows
    let mut parts: Vec<(usize, CMat, Complex64, usize)> = Vec::new();
    for g in &groups {
        let k = g.len();
        let lam = g.iter().sum::<Complex64>() / k as f64;
        let v = if groups.len() == 1 {
            CMat::identity(n, n)
        } else {
            let shifted = &a0 - CMat::identity(n, n) * lam;
            let mut p = shifted.clone();
            for _ in 1..k {
                p = &p * &shifted;
            }
            let ns = linalg::null_space(&p, 1e-9);
            if ns.ncols() != k {
                return Err(DiffError::ClusteredEigenvalues(format!(
                    "invariant subspace for {lam} has dimension {} instead of {k}",
                    ns.ncols()
                )));
            }
            ns
        };
        let (v, piv) = linalg::pivot_normalize(&v);
        parts.push((piv[0], v, lam, k));
    }
    parts.sort_by_key(|p| p.0);
    let mut t = CMat::zeros(n, n);
    let mut col = 0;
    let mut sizes = Vec::new();
    let mut leading = Vec::new();
    for (_, v, lam, k) in &parts {
        t.view_mut((0, col), (n, *k)).copy_from(v);
        col += k;
        sizes.push(*k);
        leading.push(*lam);
    }
    let t_inv = linalg::inverse(&t)
        .ok_or_else(|| DiffError::ClusteredEigenvalues(String::from("eigenbasis is singular")))?;
    let ah = a.conjugate_const(&t, &t_inv);

    let mut starts = Vec::new();
    let mut acc = 0;
    for s in &sizes {
        starts.push(acc);
        acc += s;
    }
    let block_of = |i: usize| starts.iter().rposition(|&s| s <= i).unwrap();

    let m = a.ramification();
    let mut h = MatrixSeries::identity(n, m, trunc);
    let mut ap = MatrixSeries::zero(n, m, 0, trunc);
    {
        let c0 = ah.coeff(0).unwrap();
        let mut d = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if block_of(i) == block_of(j) {
                    d[(i, j)] = c0[(i, j)];
                }
            }
        }
        ap = set_coeff(&ap, 0, d);
    }
    let diag_blocks: Vec<CMat> = starts
        .iter()
        .zip(&sizes)
        .map(|(&s, &k)| ap.coeff(0).unwrap().view((s, s), (k, k)).into_owned())
        .collect();
    for k in 1..=trunc {
        // Q_k = [Â φ(H) − H A']_k with H_k = 0, A'_k = 0
        let lhs = ah.checked_mul(&h.phi_substitute()?)?;
        let rhs = h.checked_mul(&ap)?;
        let q = lhs.coeff(k).unwrap() - rhs.coeff(k).unwrap();
        let mut hk = CMat::zeros(n, n);
        let mut apk = CMat::zeros(n, n);
        for (bp, (&sp, &kp)) in starts.iter().zip(&sizes).enumerate() {
            for (bq, (&sq, &kq)) in starts.iter().zip(&sizes).enumerate() {
                let qpq = q.view((sp, sq), (kp, kq)).into_owned();
                if bp == bq {
                    apk.view_mut((sp, sq), (kp, kq)).copy_from(&qpq);
                } else {
                    let x = linalg::sylvester(&diag_blocks[bp], &diag_blocks[bq], &(-qpq))
                        .ok_or_else(|| DiffError::ClusteredEigenvalues(String::from("singular Sylvester equation")))?;
                    hk.view_mut((sp, sq), (kp, kq)).copy_from(&x);
                }
            }
        }
        h = set_coeff(&h, k, hk);
        ap = set_coeff(&ap, k, apk);
    }
    Ok(Splitting { t, t_inv, h, a_prime: ap, sizes, leading })
}

fn set_coeff(s: &MatrixSeries, k: i64, m: CMat) -> MatrixSeries {
    let mut coeffs = s.coeff_matrices().to_vec();
    coeffs[(k - s.low()) as usize] = m;
    MatrixSeries::new(s.ramification(), s.low(), coeffs)
}

/// Reduction of one scalar-leading block.
#[derive(Debug, Clone)]
pub struct BlockReduction {
    /// Canonical exponent.
    pub exponent: Exponent,
    /// Offset `n` with `c_m = log λ + 2πi n` relative to the principal log.
    pub orbit_offset: i64,
    pub g: CMat,
    /// Gauge `P = I + O(τ)` with `B·φ(P) = P·exp(a(s+1) − a(s))(1+t)^{−G}`.
    pub p: MatrixSeries,
}

/// Reduces a block `B = λ(I + O(τ))` to `ℰ^a ⊗ ℛ_G`.
pub fn reduce_block(b: &MatrixSeries) -> Result<BlockReduction> {
    let r = b.dim();
    let m = b.ramification();
    let mi = m as i64;
    let b = b.with_low(0);
    let trunc = b.trunc();
    let b0 = b.coeff(0).unwrap();
    let lam = (0..r).map(|i| b0[(i, i)]).sum::<Complex64>() / r as f64;
    if lam.norm() == 0.0 {
        return Err(DiffError::ZeroLeadingTerm);
    }
    let dev = linalg::max_abs(&(&b0 - CMat::identity(r, r) * lam));
    if dev > 1e-8 * lam.norm() {
        return Err(DiffError::UnsupportedFormalStructure(format!(
            "leading block is not scalar (deviation {dev:.3e}); ramified reduction needed"
        )));
    }
    if trunc < mi {
        return Err(SeriesError::InsufficientTruncation { low: 0, trunc }.into());
    }
    let mm = b.scale(lam.inv());
    let x = mm.checked_sub(&MatrixSeries::identity(r, m, trunc))?;
    // log(I + X) = Σ (−1)^{n+1} X^n / n
    let mut logm = MatrixSeries::zero(r, m, 0, trunc);
    let mut p = MatrixSeries::identity(r, m, trunc);
    for nn in 1..=trunc {
        p = p.checked_mul(&x)?.with_low(0).truncate(trunc);
        let sign = if nn % 2 == 1 { 1.0 } else { -1.0 };
        logm = logm.checked_add(&p.scale(Complex64::new(sign / nn as f64, 0.0)))?;
    }
    let l: Vec<Complex64> = (0..=mi)
        .map(|j| {
            let c = logm.coeff(j).unwrap();
            (0..r).map(|i| c[(i, i)]).sum::<Complex64>() / r as f64
        })
        .collect();
    let mut coeffs = alloc::vec![Complex64::zero(); m as usize];
    coeffs[m as usize - 1] = lam.ln();
    for j in 1..mi {
        coeffs[(mi - j - 1) as usize] = l[j as usize] * (mi as f64) / ((mi - j) as f64);
    }
    let raw = Exponent::new(coeffs);
    let (exponent, orbit_offset) = raw.canonicalize();
    let e = exponent_step_series(&exponent, trunc)?;
    let nser = mm.mul_scalar_series(&e.scale(lam.inv()).invert()?)?.with_low(0);
    let scale_n = nser.max_abs().max(1.0);
    for j in 1..mi {
        let nj = nser.coeff(j).unwrap();
        if linalg::max_abs(&nj) > 1e-9 * scale_n {
            return Err(DiffError::UnsupportedFormalStructure(format!(
                "non-scalar term at order τ^{j} (ramified reduction needed)"
            )));
        }
    }
    let g = -nser.coeff(mi).unwrap();
    let rr = matrix_power_1pt(&g, -1, m, trunc);
    let mut pser = MatrixSeries::identity(r, m, trunc);
    let ev = linalg::eigenvalues(&g);
    for k in 1..=(trunc - mi) {
        let shift = k as f64 / mi as f64;
        for x in &ev {
            for y in &ev {
                if (x - y + shift).norm() < 1e-8 {
                    return Err(DiffError::UnsupportedFormalStructure(format!(
                        "resonant residue: eigenvalues of G differ by {shift} (order τ^{k})"
                    )));
                }
            }
        }
        let lhs = nser.checked_mul(&pser.phi_substitute()?)?;
        let rhs = pser.checked_mul(&rr)?;
        let d = lhs.coeff(k + mi).unwrap() - rhs.coeff(k + mi).unwrap();
        let a_op = &g + CMat::identity(r, r) * Complex64::new(shift, 0.0);
        let pk = linalg::sylvester(&a_op, &g, &d)
            .ok_or_else(|| DiffError::UnsupportedFormalStructure(String::from("singular residue equation")))?;
        pser = set_coeff(&pser, k, pk);
    }
    let pser = pser.truncate((trunc - mi).max(0));
    Ok(BlockReduction { exponent, orbit_offset, g, p: pser })
}

/// Rank-one data `(a, γ, v)`: `v(s) = g(s)·exp(a(s) − a(s+1))·(1+1/s)^γ·v(s+1)`.
pub fn rank_one_formal(g: &Series) -> Result<(Exponent, Complex64, Series)> {
    let gn = g.normalized();
    match gn.valuation() {
        Some(0) => {}
        _ => return Err(DiffError::ZeroLeadingTerm),
    }
    let ms = MatrixSeries::from_entries(&[alloc::vec![gn.clone()]])?;
    let red = reduce_block(&ms)?;
    Ok((red.exponent, red.g[(0, 0)], red.p.entry(0, 0)))
}

/// A formal fundamental solution `Ŵ(s) = T·Φ(τ)·Y(s)` with `Φ = I + O(τ)`.
#[derive(Debug, Clone)]
pub struct FormalSolution {
    pub t: CMat,
    pub t_inv: CMat,
    pub phi: MatrixSeries,
    pub datum: FormalDatum,
    pub ramification: u32,
}

impl FormalSolution {
    pub fn sizes(&self) -> Vec<usize> {
        self.datum.sizes()
    }

    /// `T^{−1}A T` evaluated through the series of the system.
    pub fn conjugated(&self, sys: &DiffSystem, log_s: Complex64) -> CMat {
        &self.t_inv * sys.eval_log(log_s) * &self.t
    }

    /// `Y(s) = ⊕ exp(−a_i(s)) s^{G_i}` on the branch of `log_s`.
    pub fn frame(&self, log_s: Complex64) -> CMat {
        frame(&self.datum, log_s)
    }
}

/// Frame `⊕ exp(−a_i(s))·s^{G_i}` for the branch of `log_s`.
pub fn frame(fd: &FormalDatum, log_s: Complex64) -> CMat {
    let n = fd.rank();
    let mut y = CMat::zeros(n, n);
    let mut off = 0;
    for p in &fd.pieces {
        let k = p.rank();
        let e = (-p.exponent.eval_log(log_s)).exp();
        let sg = linalg::matrix_power(&p.g, log_s) * e;
        y.view_mut((off, off), (k, k)).copy_from(&sg);
        off += k;
    }
    y
}

/// Frame inverse `⊕ s^{−G_i} exp(a_i(s))`.
pub fn frame_inverse(fd: &FormalDatum, log_s: Complex64) -> CMat {
    let n = fd.rank();
    let mut y = CMat::zeros(n, n);
    let mut off = 0;
    for p in &fd.pieces {
        let k = p.rank();
        let e = p.exponent.eval_log(log_s).exp();
        let sg = linalg::matrix_power(&(-&p.g), log_s) * e;
        y.view_mut((off, off), (k, k)).copy_from(&sg);
        off += k;
    }
    y
}

/// Formal reduction to a fundamental solution and its datum.
pub fn formal_solution(sys: &DiffSystem, trunc: i64) -> Result<FormalSolution> {
    let split = split_by_eigenvalues(sys, trunc)?;
    let m = sys.ramification();
    let mut pieces = Vec::new();
    let mut ps = Vec::new();
    for (idx, blk) in split.blocks().iter().enumerate() {
        let red = reduce_block(blk.matrix()).map_err(|e| match e {
            DiffError::UnsupportedFormalStructure(msg) => DiffError::UnsupportedFormalStructure(format!(
                "block {idx} (eigenvalue {}): {msg}",
                split.leading[idx]
            )),
            other => other,
        })?;
        pieces.push(FormalPiece::new(red.exponent.minimal(), red.g));
        ps.push(red.p);
    }
    let p = MatrixSeries::block_diag(&ps)?;
    let h = split.h.truncate(p.trunc());
    let phi = h.checked_mul(&p)?;
    Ok(FormalSolution {
        t: split.t,
        t_inv: split.t_inv,
        phi,
        datum: FormalDatum::new(pieces),
        ramification: m,
    })
}

/// Formal datum of a mild system in the supported class.
pub fn formal_datum(sys: &DiffSystem) -> Result<FormalDatum> {
    let k = sys.matrix().trunc().min(DEFAULT_TRUNCATION).max(sys.ramification() as i64);
    Ok(formal_solution(sys, k)?.datum)
}
