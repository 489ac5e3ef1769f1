//! Stokes data: the periodic ring model on arcs, gradings, coverings,
//! cocycles with growth certification, index arithmetic for tensor and Hom,
//! and assembly of the filtered module presentation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;

use crate::diffmod::{DiffError, DiffSystem, FormalDatum, FormalSolution};
use crate::exponents::{stokes_directions, Arc, Exponent, ExponentError, GrowthClass, TAU};
use crate::linalg::{self, CMat};
use crate::sectorial::{
    classify_magnitudes, flat_sections, ray_points, RaySamples, SectorialError, SectorialParams,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StokesError {
    #[error("arc ({0}, {1}) covers the whole circle")]
    FullCircleArc(f64, f64),
    #[error("certification failed on overlap {overlap} {arc}: {detail}")]
    CertificationFailed { overlap: usize, arc: Arc, detail: String },
    #[error("inconsistent data: {0}")]
    InconsistentData(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Sectorial(#[from] SectorialError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

pub type Result<T> = core::result::Result<T, StokesError>;

/// Shape of the ring of periodic functions with moderate growth on an arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingKind {
    /// Convergent series in `v = u^{−1}` with a pole; arcs inside `(0, π)`.
    SmallV,
    /// Convergent series in `u` with a pole; arcs inside `(−π, 0)`.
    SmallU,
    /// Laurent polynomials in `u`; arcs through `0` or `π`.
    LaurentPoly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct APerRingModel {
    pub arc: Arc,
    pub kind: RingKind,
}

pub fn aper_ring(arc: &Arc) -> APerRingModel {
    let kind = if arc.contains_zero() || arc.contains_pi() {
        RingKind::LaurentPoly
    } else {
        let mid = 0.5 * (arc.start + arc.end);
        if libm::sin(mid) > 0.0 {
            RingKind::SmallV
        } else {
            RingKind::SmallU
        }
    };
    APerRingModel { arc: *arc, kind }
}

/// Ring model from raw endpoints; fails when they span more than the circle.
pub fn aper_ring_range(start: f64, end: f64) -> Result<APerRingModel> {
    if end - start > TAU + 1e-12 {
        return Err(StokesError::FullCircleArc(start, end));
    }
    Ok(aper_ring(&Arc::new(start, end)?))
}

#[derive(Debug, Clone)]
pub struct GradedEntry {
    pub exponent: Exponent,
    pub rank: usize,
    pub monodromy: CMat,
}

/// Orbit representatives with ranks and monodromies of the graded local systems.
#[derive(Debug, Clone)]
pub struct GradedDatum {
    pub ramification: u32,
    pub entries: Vec<GradedEntry>,
}

fn orbit_position(reps: &[Exponent], a: &Exponent) -> Option<usize> {
    reps.iter().position(|r| r.same_orbit(a))
}

fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

fn piece_monodromy(a: &Exponent, g: &CMat) -> CMat {
    let m = a.ramification() as f64;
    linalg::expm(&(g * Complex64::new(0.0, TAU * m)))
}

impl GradedDatum {
    /// Graded datum of the elementary model, with extra factors per piece
    /// multiplied onto `exp(2πi m G_i)`.
    fn assemble(fd: &FormalDatum, factors: Option<&[CMat]>) -> GradedDatum {
        let mut reps: Vec<Exponent> = Vec::new();
        let mut blocks: Vec<Vec<CMat>> = Vec::new();
        for (i, p) in fd.pieces.iter().enumerate() {
            let mut mono = piece_monodromy(&p.exponent, &p.g);
            if let Some(f) = factors {
                mono *= &f[i];
            }
            match orbit_position(&reps, &p.exponent) {
                Some(j) => blocks[j].push(mono),
                None => {
                    reps.push(p.exponent.canonicalize().0);
                    blocks.push(alloc::vec![mono]);
                }
            }
        }
        let entries = reps
            .into_iter()
            .zip(blocks)
            .map(|(exponent, bs)| {
                let monodromy = block_diag(&bs);
                GradedEntry { exponent, rank: monodromy.nrows(), monodromy }
            })
            .collect();
        GradedDatum { ramification: fd.ramification(), entries }
    }

    pub fn from_formal(fd: &FormalDatum) -> GradedDatum {
        Self::assemble(fd, None)
    }

    pub fn rank(&self) -> usize {
        self.entries.iter().map(|e| e.rank).sum()
    }

    /// Same representatives, ranks and monodromies (entries in any order).
    pub fn approx_eq(&self, other: &GradedDatum, tol: f64) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().all(|e| {
                other.entries.iter().any(|o| {
                    o.exponent.approx_eq(&e.exponent)
                        && o.rank == e.rank
                        && linalg::max_abs(&(&o.monodromy - &e.monodromy)) <= tol
                })
            })
    }

    /// Orbit representatives.
    pub fn orbits(&self) -> Vec<Exponent> {
        self.entries.iter().map(|e| e.exponent.clone()).collect()
    }
}

/// Cyclically ordered arcs, each overlapping only its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Covering {
    /// Cut directions `d_0 < … < d_{N−1}` in `[−π, π)` (θ on the circle).
    pub cuts: Vec<f64>,
    /// `U_k = (d_{k−1}, d_{k+1})`.
    pub arcs: Vec<Arc>,
}

impl Covering {
    pub fn from_cuts(mut cuts: Vec<f64>) -> Result<Covering> {
        for c in cuts.iter_mut() {
            *c = wrap_theta(*c);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        if cuts.len() >= 2 && (cuts[0] + TAU - cuts[cuts.len() - 1]).abs() < 1e-9 {
            cuts.pop();
        }
        if cuts.len() < 2 {
            return Err(StokesError::InconsistentData(String::from("a covering needs two cut points")));
        }
        let n = cuts.len();
        let at = |k: isize| -> f64 {
            let q = k.div_euclid(n as isize);
            let r = k.rem_euclid(n as isize) as usize;
            cuts[r] + q as f64 * TAU
        };
        let arcs = (0..n as isize)
            .map(|k| Arc::new(at(k - 1), at(k + 1)))
            .collect::<core::result::Result<_, _>>()?;
        Ok(Covering { cuts, arcs })
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    /// Overlap `U_k ∩ U_{k+1} = (d_k, d_{k+1})`.
    pub fn overlap(&self, k: usize) -> Arc {
        let n = self.cuts.len();
        let lo = self.cuts[k];
        let hi = if k + 1 < n { self.cuts[k + 1] } else { self.cuts[0] + TAU };
        Arc { start: lo, end: hi }
    }
}

fn wrap_theta(theta: f64) -> f64 {
    let x = theta + PI;
    let mut t = x - libm::floor(x / TAU) * TAU - PI;
    if t >= PI - 1e-12 {
        t -= TAU;
    }
    t
}

fn is_special(theta: f64) -> bool {
    let w = wrap_theta(theta);
    w.abs() < 1e-9 || (w + PI).abs() < 1e-9
}

/// Cut at `0`, `π` and every Stokes direction of every pair of exponents.
pub fn default_covering(fd: &FormalDatum) -> Result<Covering> {
    let mut cuts = alloc::vec![0.0, -PI];
    for (i, p) in fd.pieces.iter().enumerate() {
        for q in fd.pieces.iter().skip(i + 1) {
            match stokes_directions(&p.exponent, &q.exponent) {
                Ok(ds) => cuts.extend(ds.into_iter().map(|s| -s)),
                Err(ExponentError::EqualExponents) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Covering::from_cuts(cuts)
}

/// Growth certificate of one block of a transition.
#[derive(Debug, Clone)]
pub struct BlockCertificate {
    pub row: usize,
    pub col: usize,
    pub class: GrowthClass,
    pub mu: f64,
    pub numerically_zero: bool,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Certification {
    pub blocks: Vec<BlockCertificate>,
    /// Fitted limits of the diagonal blocks.
    pub limits: Vec<CMat>,
    /// Spread of the diagonal block over the samples used for its limit.
    pub limit_spread: Vec<f64>,
    pub passed: bool,
}

impl Certification {
    fn identity(sizes: &[usize]) -> Certification {
        Certification {
            blocks: Vec::new(),
            limits: sizes.iter().map(|&k| CMat::identity(k, k)).collect(),
            limit_spread: alloc::vec![0.0; sizes.len()],
            passed: true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Transition {
    Identity,
    /// Samples of `z_k^{−1} z_{k+1}` along a ray in the overlap.
    Numeric(RaySamples),
}

/// Transitions on the overlaps of a covering.
#[derive(Debug, Clone)]
pub struct StokesCocycle {
    pub covering: Covering,
    pub datum: FormalDatum,
    pub transitions: Vec<Transition>,
    pub certificates: Vec<Certification>,
}

impl StokesCocycle {
    pub fn identity(datum: &FormalDatum, covering: &Covering) -> StokesCocycle {
        let sizes = datum.sizes();
        StokesCocycle {
            covering: covering.clone(),
            datum: datum.clone(),
            transitions: alloc::vec![Transition::Identity; covering.len()],
            certificates: (0..covering.len()).map(|_| Certification::identity(&sizes)).collect(),
        }
    }

    pub fn passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }

    /// Only adjacent arcs meet, so the cocycle condition has nothing to check.
    pub fn triple_overlaps(&self) -> usize {
        0
    }
}

/// Limit fitted on the 25% largest-|s| samples, and the spread around it there.
pub fn fit_limit(points: &[Complex64], values: &[CMat]) -> (CMat, f64) {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[b].norm().partial_cmp(&points[a].norm()).unwrap());
    let k = (points.len() / 4).max(1);
    let top = &idx[..k];
    let mut mean = CMat::zeros(values[0].nrows(), values[0].ncols());
    for &i in top {
        mean += &values[i];
    }
    mean /= Complex64::from(k as f64);
    let spread = top.iter().map(|&i| linalg::max_abs(&(&values[i] - &mean))).fold(0.0, f64::max);
    (mean, spread)
}

/// Certifies sampled transitions: off-diagonal blocks and diagonal deviations
/// from their fitted limits must decay rapidly.
pub fn certify(samples: &RaySamples, sizes: &[usize]) -> Certification {
    let offs: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &k| {
            let o = *acc;
            *acc += k;
            Some(o)
        })
        .collect();
    let scale = samples.values.iter().map(linalg::max_abs).fold(0.0, f64::max).max(1.0);
    let floor = 1e-12 * scale;
    let mut blocks = Vec::new();
    let mut limits = Vec::new();
    let mut spreads = Vec::new();
    for (i, &ri) in sizes.iter().enumerate() {
        for (j, &cj) in sizes.iter().enumerate() {
            let view: Vec<CMat> = samples
                .values
                .iter()
                .map(|v| v.view((offs[i], offs[j]), (ri, cj)).into_owned())
                .collect();
            let dev: Vec<CMat> = if i == j {
                let (lim, spread) = fit_limit(&samples.points, &view);
                let d = view.iter().map(|v| v - &lim).collect();
                limits.push(lim);
                spreads.push(spread);
                d
            } else {
                view
            };
            let mags: Vec<(f64, f64)> = samples
                .points
                .iter()
                .zip(&dev)
                .map(|(s, d)| (s.norm(), d.norm()))
                .collect();
            let cert = match classify_magnitudes(&mags, floor) {
                Ok(fit) => BlockCertificate {
                    row: i,
                    col: j,
                    class: fit.class,
                    mu: fit.mu,
                    numerically_zero: fit.numerically_zero,
                    passed: fit.class == GrowthClass::RapidDecay,
                },
                Err(_) => BlockCertificate {
                    row: i,
                    col: j,
                    class: GrowthClass::Moderate,
                    mu: f64::NAN,
                    numerically_zero: false,
                    passed: false,
                },
            };
            blocks.push(cert);
        }
    }
    let passed = blocks.iter().all(|b| b.passed);
    Certification { blocks, limits, limit_spread: spreads, passed }
}

/// Builds the cocycle from pairs of solutions `(U_k, U_{k+1})` sampled at the
/// same points of each overlap.
pub fn cocycle_from_solutions(
    covering: &Covering,
    pairs: &[(crate::sectorial::SectorialSolution, crate::sectorial::SectorialSolution)],
) -> Result<StokesCocycle> {
    if pairs.len() != covering.len() {
        return Err(StokesError::InconsistentData(format!(
            "{} overlaps but {} solution pairs",
            covering.len(),
            pairs.len()
        )));
    }
    let datum = pairs[0].0.datum.clone();
    let sizes = datum.sizes();
    let mut transitions = Vec::new();
    let mut certificates = Vec::new();
    for (k, (a, b)) in pairs.iter().enumerate() {
        if a.points != b.points || a.datum.sizes() != sizes || b.datum.sizes() != sizes {
            return Err(StokesError::InconsistentData(format!("solutions on overlap {k} do not match")));
        }
        if a.datum.ramification() != 1 {
            return Err(StokesError::Unsupported(String::from("numeric cocycles need an unramified datum")));
        }
        let mut values = Vec::with_capacity(a.points.len());
        for i in 0..a.points.len() {
            let inv = linalg::inverse(&a.z[i]).ok_or_else(|| {
                StokesError::CertificationFailed {
                    overlap: k,
                    arc: covering.overlap(k),
                    detail: format!("singular frame at {}", a.points[i]),
                }
            })?;
            values.push(inv * &b.z[i]);
        }
        let sigma = a.points.last().map(|s| s.arg()).unwrap_or(0.0);
        let samples = RaySamples { sigma, points: a.points.clone(), values, shifted: None };
        certificates.push(certify(&samples, &sizes));
        transitions.push(Transition::Numeric(samples));
    }
    let sc = StokesCocycle { covering: covering.clone(), datum, transitions, certificates };
    if let Some(k) = sc.certificates.iter().position(|c| !c.passed) {
        let bad: Vec<String> = sc.certificates[k]
            .blocks
            .iter()
            .filter(|b| !b.passed)
            .map(|b| format!("block ({}, {}) is {} (rate {:.3e})", b.row, b.col, b.class, b.mu))
            .collect();
        return Err(StokesError::CertificationFailed {
            overlap: k,
            arc: covering.overlap(k),
            detail: bad.join("; "),
        });
    }
    Ok(sc)
}

#[derive(Debug, Clone)]
pub struct CocycleParams {
    pub samples: usize,
    /// `|s|` range on each overlap ray; defaults from the system's exactness.
    pub radius: Option<(f64, f64)>,
    pub sectorial: SectorialParams,
}

impl Default for CocycleParams {
    fn default() -> Self {
        CocycleParams { samples: 24, radius: None, sectorial: SectorialParams::default() }
    }
}

/// Direction `σ` of the sample ray on overlap `k`: `|sin σ| = 0.1` next to a
/// special point for exact systems, otherwise the middle of the overlap.
pub fn overlap_sigma(covering: &Covering, k: usize, exact: bool) -> f64 {
    let ov = covering.overlap(k);
    let off = libm::asin(0.1);
    let theta = if exact && ov.width() > 2.0 * off {
        if is_special(ov.start) {
            ov.start + off
        } else if is_special(ov.end) {
            ov.end - off
        } else {
            0.5 * (ov.start + ov.end)
        }
    } else {
        0.5 * (ov.start + ov.end)
    };
    -theta
}

/// Sample points on the overlap rays of a covering.
pub fn overlap_points(sys: &DiffSystem, covering: &Covering, k: usize, params: &CocycleParams) -> Vec<Complex64> {
    let sigma = overlap_sigma(covering, k, sys.is_exact());
    let (r0, r1) = params.radius.unwrap_or_else(|| {
        if sys.is_exact() {
            (4.0, 80.0)
        } else {
            // horizontal recurrence paths keep |Im s| away from the origin
            let r0 = (8.5 / libm::sin(sigma).abs().max(1e-3)).clamp(10.0, 60.0);
            (r0, 4.0 * r0)
        }
    });
    ray_points(sigma, r0, r1, params.samples)
}

/// Flat sections on every arc of the covering and the certified cocycle.
pub fn compute_cocycle(
    sys: &DiffSystem,
    fs: &FormalSolution,
    covering: &Covering,
    params: &CocycleParams,
) -> Result<StokesCocycle> {
    if fs.datum.ramification() != 1 {
        return Err(StokesError::Unsupported(String::from("numeric cocycles need an unramified datum")));
    }
    let n = covering.len();
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n {
        let pts = overlap_points(sys, covering, k, params);
        let on_overlap = |e: SectorialError| match e {
            SectorialError::StokesLineInArc(detail) => {
                StokesError::CertificationFailed { overlap: k, arc: covering.overlap(k), detail }
            }
            other => other.into(),
        };
        let a = flat_sections(sys, fs, &covering.arcs[k], &pts, &params.sectorial).map_err(on_overlap)?;
        let b = flat_sections(sys, fs, &covering.arcs[(k + 1) % n], &pts, &params.sectorial).map_err(on_overlap)?;
        pairs.push((a, b));
    }
    cocycle_from_solutions(covering, &pairs)
}

/// Graded datum of a certified cocycle: `exp(2πi m G_i)` times the ordered
/// product of the diagonal limits around the circle.
pub fn grading(sc: &StokesCocycle) -> GradedDatum {
    let k = sc.datum.pieces.len();
    let mut factors: Vec<CMat> = sc.datum.pieces.iter().map(|p| CMat::identity(p.rank(), p.rank())).collect();
    for cert in &sc.certificates {
        for (i, f) in factors.iter_mut().enumerate().take(k) {
            *f = &*f * &cert.limits[i];
        }
    }
    GradedDatum::assemble(&sc.datum, Some(&factors))
}

fn dedup_orbits(v: Vec<Exponent>) -> Vec<Exponent> {
    let mut out: Vec<Exponent> = Vec::new();
    for a in v {
        if orbit_position(&out, &a).is_none() {
            out.push(a.canonicalize().0);
        }
    }
    out
}

/// Orbits `{a + b}` of a tensor product.
pub fn tensor_indices(s1: &[Exponent], s2: &[Exponent]) -> Result<Vec<Exponent>> {
    let mut v = Vec::new();
    for a in s1 {
        for b in s2 {
            v.push(a.checked_add(b)?);
        }
    }
    Ok(dedup_orbits(v))
}

/// Orbits `{b − a}` of `Hom(M1, M2)` for `a ∈ S1`, `b ∈ S2`.
pub fn hom_indices(s1: &[Exponent], s2: &[Exponent]) -> Result<Vec<Exponent>> {
    let mut v = Vec::new();
    for a in s1 {
        for b in s2 {
            v.push(b.checked_sub(a)?);
        }
    }
    Ok(dedup_orbits(v))
}

/// Filtration level of the frame column with exponent `a`: the column grows
/// like `exp(−a)`, so it sits in level `−a`.
pub fn filtration_level(a: &Exponent) -> Exponent {
    a.neg()
}

/// Level of `u^n` times a section of level `b`.
pub fn u_shift_level(b: &Exponent, n: i64) -> Exponent {
    b.shift(n)
}

/// Presentation of the Stokes filtered module: grading, covering, cocycle and
/// per-arc levels of each frame column.
#[derive(Debug, Clone)]
pub struct FilteredModuleDatum {
    pub graded: GradedDatum,
    pub cocycle: StokesCocycle,
    /// `levels[k][j]`: level of column `j` on arc `k`.
    pub levels: Vec<Vec<Exponent>>,
}

impl FilteredModuleDatum {
    pub fn covering(&self) -> &Covering {
        &self.cocycle.covering
    }
}

pub fn rh_assemble(fd: &FormalDatum, sc: &StokesCocycle) -> Result<FilteredModuleDatum> {
    if fd.sizes() != sc.datum.sizes() || !fd.equivalent(&sc.datum, 1e-10) {
        return Err(StokesError::InconsistentData(String::from(
            "cocycle was built for a different formal datum",
        )));
    }
    if sc.certificates.len() != sc.covering.len() {
        return Err(StokesError::InconsistentData(String::from("cocycle and covering sizes differ")));
    }
    let cols = fd.column_exponents();
    let levels = sc
        .covering
        .arcs
        .iter()
        .map(|_| cols.iter().map(filtration_level).collect())
        .collect();
    Ok(FilteredModuleDatum { graded: grading(sc), cocycle: sc.clone(), levels })
}
