#![allow(dead_code)]

use std::path::PathBuf;

use mildstokes::parser::{parse_system, ParseError};
use mildstokes::printer::{print_system, structurally_equal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "dsys"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// Round-trip failures as `name: reason`.
pub fn round_trip_failures(files: &[(String, String)]) -> Vec<String> {
    let mut bad = Vec::new();
    for (name, text) in files {
        let a = match parse_system(text) {
            Ok(a) => a,
            Err(e) => {
                bad.push(format!("{name}: {e}"));
                continue;
            }
        };
        let printed = print_system(&a);
        match parse_system(&printed) {
            Ok(b) if structurally_equal(&a, &b) => {}
            Ok(_) => bad.push(format!("{name}: structure changed")),
            Err(e) => bad.push(format!("{name}: reparse failed: {e}")),
        }
    }
    bad
}

const ILLEGAL: [char; 10] = ['@', '$', '?', '!', '`', '~', '&', '|', '%', ';'];

/// Positions outside comments where a character may be inserted.
fn candidate_offsets(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut in_comment = false;
    for (i, c) in text.char_indices() {
        if c == '#' {
            in_comment = true;
        }
        if !in_comment {
            out.push(i);
        }
        if c == '\n' {
            in_comment = false;
        }
    }
    out
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().unwrap().chars().count() + 1;
    (line, col)
}

/// One corrupted variant per file; returns `(name, site, result)`.
pub fn corruptions(files: &[(String, String)], seed: u64) -> Vec<(String, (usize, usize), Result<(), ParseError>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    files
        .iter()
        .map(|(name, text)| {
            let offs = candidate_offsets(text);
            let at = offs[rng.gen_range(0..offs.len())];
            let c = ILLEGAL[rng.gen_range(0..ILLEGAL.len())];
            let mut bad = text.clone();
            bad.insert(at, c);
            (name.clone(), line_col(&bad, at), parse_system(&bad).map(drop))
        })
        .collect()
}

pub fn within(site: (usize, usize), err: &ParseError, slack: usize) -> bool {
    let (line, col) = err.position();
    line == site.0 && col.abs_diff(site.1) <= slack
}
