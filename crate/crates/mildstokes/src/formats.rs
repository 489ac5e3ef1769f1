//! CSV sample files and the module datum file.
//!
//! Sample CSV columns: `re_s, im_s`, then `re_y<j>, im_y<j>` per column of a
//! vector sample, or `re_y<j>_<i>, im_y<j>_<i>` (column `j`, row `i`) for
//! matrix samples.

use std::io::{Read, Write};
use std::path::Path;

use mildstokes_core::linalg::CMat;
use mildstokes_core::sectorial::RaySamples;
use mildstokes_core::stokes::{aper_ring, FilteredModuleDatum, RingKind, Transition};
use mildstokes_core::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("toml: {0}")]
    TomlWrite(#[from] toml::ser::Error),
    #[error("toml: {0}")]
    TomlRead(#[from] toml::de::Error),
    #[error("malformed sample file: {0}")]
    Malformed(String),
}

fn sample_header(rows: usize, cols: usize) -> Vec<String> {
    let mut h = vec![String::from("re_s"), String::from("im_s")];
    for j in 0..cols {
        for i in 0..rows {
            let tag = if cols == 1 { format!("{i}") } else { format!("{j}_{i}") };
            h.push(format!("re_y{tag}"));
            h.push(format!("im_y{tag}"));
        }
    }
    h
}

pub fn write_samples<W: Write>(out: W, samples: &RaySamples) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    let (rows, cols) = samples.values.first().map(|v| (v.nrows(), v.ncols())).unwrap_or((0, 0));
    w.write_record(sample_header(rows, cols))?;
    for (s, v) in samples.points.iter().zip(&samples.values) {
        let mut rec = vec![format!("{:e}", s.re), format!("{:e}", s.im)];
        for j in 0..cols {
            for i in 0..rows {
                rec.push(format!("{:e}", v[(i, j)].re));
                rec.push(format!("{:e}", v[(i, j)].im));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample file back; matrix shape comes from the header.
pub fn read_samples<R: Read>(input: R) -> Result<RaySamples, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let width = header.len();
    if width < 2 || width % 2 != 0 {
        return Err(FormatError::Malformed(format!("{width} columns")));
    }
    let entries = (width - 2) / 2;
    let matrix_shape = header.iter().nth(2).map(|h| h.contains('_') && h[3..].contains('_'));
    let (rows, cols) = if matrix_shape == Some(true) {
        let last = &header[width - 1];
        let tag = last.trim_start_matches("im_y");
        let (j, i) = tag.split_once('_').ok_or_else(|| FormatError::Malformed(last.to_string()))?;
        let parse = |x: &str| x.parse::<usize>().map_err(|_| FormatError::Malformed(last.to_string()));
        (parse(i)? + 1, parse(j)? + 1)
    } else {
        (entries, 1)
    };
    if rows * cols != entries {
        return Err(FormatError::Malformed(String::from("header does not describe a matrix")));
    }
    let mut points = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let x: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| FormatError::Malformed(f.to_string())))
            .collect::<Result<_, _>>()?;
        points.push(Complex64::new(x[0], x[1]));
        let mut m = CMat::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                let k = 2 + 2 * (j * rows + i);
                m[(i, j)] = Complex64::new(x[k], x[k + 1]);
            }
        }
        values.push(m);
    }
    let sigma = points.last().map(|s| s.arg()).unwrap_or(0.0);
    Ok(RaySamples { sigma, points, values, shifted: None })
}

type MatrixRecord = Vec<Vec<[f64; 2]>>;

fn matrix_record(m: &CMat) -> MatrixRecord {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_record(r: &MatrixRecord) -> CMat {
    let n = r.len();
    let k = r.first().map(|x| x.len()).unwrap_or(0);
    CMat::from_fn(n, k, |i, j| Complex64::new(r[i][j][0], r[i][j][1]))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GradedRecord {
    pub orbit: String,
    pub rank: usize,
    pub monodromy: MatrixRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArcRecord {
    pub index: usize,
    pub theta_start: f64,
    pub theta_end: f64,
    pub ring: String,
    /// Filtration level of each frame column on this arc.
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BlockRecord {
    pub row: usize,
    pub col: usize,
    pub class: String,
    pub rate: f64,
    pub numerically_zero: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OverlapRecord {
    pub index: usize,
    pub theta_start: f64,
    pub theta_end: f64,
    /// `identity` or `numeric`.
    pub kind: String,
    /// Sample file of the transition, relative to the datum file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<String>,
    pub passed: bool,
    pub limits: Vec<MatrixRecord>,
    pub blocks: Vec<BlockRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModuleFile {
    pub source: String,
    pub ramification: u32,
    pub triple_overlaps: usize,
    pub graded: Vec<GradedRecord>,
    pub covering: Vec<ArcRecord>,
    pub cocycle: Vec<OverlapRecord>,
}

fn ring_name(kind: RingKind) -> &'static str {
    match kind {
        RingKind::SmallV => "small-v",
        RingKind::SmallU => "small-u",
        RingKind::LaurentPoly => "laurent",
    }
}

/// Name of the sample file of overlap `k`.
pub fn overlap_file_name(k: usize) -> String {
    format!("overlap_{k}.csv")
}

pub fn module_record(source: &str, fm: &FilteredModuleDatum) -> ModuleFile {
    let sc = &fm.cocycle;
    let graded = fm
        .graded
        .entries
        .iter()
        .map(|e| GradedRecord { orbit: e.exponent.to_string(), rank: e.rank, monodromy: matrix_record(&e.monodromy) })
        .collect();
    let covering = sc
        .covering
        .arcs
        .iter()
        .enumerate()
        .map(|(k, a)| ArcRecord {
            index: k,
            theta_start: a.start,
            theta_end: a.end,
            ring: ring_name(aper_ring(a).kind).into(),
            levels: fm.levels[k].iter().map(|l| l.to_string()).collect(),
        })
        .collect();
    let cocycle = sc
        .transitions
        .iter()
        .zip(&sc.certificates)
        .enumerate()
        .map(|(k, (tr, cert))| {
            let ov = sc.covering.overlap(k);
            OverlapRecord {
                index: k,
                theta_start: ov.start,
                theta_end: ov.end,
                kind: match tr {
                    Transition::Identity => "identity".into(),
                    Transition::Numeric(_) => "numeric".into(),
                },
                samples: matches!(tr, Transition::Numeric(_)).then(|| overlap_file_name(k)),
                passed: cert.passed,
                limits: cert.limits.iter().map(matrix_record).collect(),
                blocks: cert
                    .blocks
                    .iter()
                    .map(|b| BlockRecord {
                        row: b.row,
                        col: b.col,
                        class: b.class.to_string(),
                        rate: b.mu,
                        numerically_zero: b.numerically_zero,
                        passed: b.passed,
                    })
                    .collect(),
            }
        })
        .collect();
    ModuleFile {
        source: source.into(),
        ramification: fm.graded.ramification,
        triple_overlaps: sc.triple_overlaps(),
        graded,
        covering,
        cocycle,
    }
}

/// Writes `module.toml` and one sample file per numeric overlap into `dir`.
pub fn write_module(dir: &Path, source: &str, fm: &FilteredModuleDatum) -> Result<ModuleFile, FormatError> {
    std::fs::create_dir_all(dir)?;
    let rec = module_record(source, fm);
    for (k, tr) in fm.cocycle.transitions.iter().enumerate() {
        if let Transition::Numeric(samples) = tr {
            let f = std::fs::File::create(dir.join(overlap_file_name(k)))?;
            write_samples(std::io::BufWriter::new(f), samples)?;
        }
    }
    std::fs::write(dir.join("module.toml"), toml::to_string_pretty(&rec)?)?;
    Ok(rec)
}

pub fn read_module(path: &Path) -> Result<ModuleFile, FormatError> {
    Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mildstokes_core::diffmod::{FormalDatum, FormalPiece};
    use mildstokes_core::exponents::Exponent;
    use mildstokes_core::stokes::{default_covering, rh_assemble, StokesCocycle};

    #[test]
    fn samples_round_trip() {
        let pts = vec![Complex64::new(1.0, 2.0), Complex64::new(-3.5, 0.25)];
        let vals: Vec<CMat> = pts
            .iter()
            .map(|s| CMat::from_fn(2, 2, |i, j| *s * Complex64::new(i as f64 + 1.0, j as f64 - 0.3)))
            .collect();
        let rs = RaySamples { sigma: 0.0, points: pts.clone(), values: vals.clone(), shifted: None };
        let mut buf = Vec::new();
        write_samples(&mut buf, &rs).unwrap();
        let back = read_samples(buf.as_slice()).unwrap();
        assert_eq!(back.points, pts);
        assert_eq!(back.values, vals);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("re_s,im_s,re_y0_0,im_y0_0,re_y0_1"));
    }

    #[test]
    fn vector_samples_round_trip() {
        let pts = vec![Complex64::new(1.0, 0.0); 3];
        let vals = vec![CMat::from_element(3, 1, Complex64::new(0.5, -1.0)); 3];
        let rs = RaySamples { sigma: 0.0, points: pts, values: vals.clone(), shifted: None };
        let mut buf = Vec::new();
        write_samples(&mut buf, &rs).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("re_s,im_s,re_y0,im_y0,re_y1"));
        assert_eq!(read_samples(buf.as_slice()).unwrap().values, vals);
    }

    #[test]
    fn module_file_round_trips_through_toml() {
        let fd = FormalDatum::new(vec![
            FormalPiece::new(Exponent::zero(), CMat::from_element(1, 1, Complex64::new(0.25, 0.0))),
            FormalPiece::new(Exponent::linear(Complex64::new(-1.0, 0.0)), CMat::zeros(1, 1)),
        ]);
        let cov = default_covering(&fd).unwrap();
        let fm = rh_assemble(&fd, &StokesCocycle::identity(&fd, &cov)).unwrap();
        let dir = std::env::temp_dir().join(format!("mildstokes-fmt-{}", std::process::id()));
        let rec = write_module(&dir, "test", &fm).unwrap();
        let back = read_module(&dir.join("module.toml")).unwrap();
        assert_eq!(rec, back);
        assert_eq!(back.graded.len(), 2);
        assert!(back.cocycle.iter().all(|o| o.kind == "identity"));
        std::fs::remove_dir_all(dir).ok();
    }
}
