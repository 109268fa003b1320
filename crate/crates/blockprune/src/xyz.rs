//! Extended-XYZ-style dataset files.
//!
//! ```text
//! 3
//! energy=-1.2345678901234567e0
//! 1 0.0e0 0.0e0 0.0e0 1.0e-1 0.0e0 0.0e0
//! ...
//! ```
//!
//! Records are concatenated with LF line endings. Reals are written with 17
//! significant digits, so a write/read/write cycle is byte-exact.

use std::fmt::Write as _;
use std::path::Path;

use blockprune_core::data::MolecularSample;

use crate::error::{Error, Result};

pub fn write_samples(samples: &[MolecularSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let _ = writeln!(out, "{}", s.n_atoms());
        let _ = writeln!(out, "energy={:.16e}", s.energy);
        for ((z, p), f) in s.atomic_numbers.iter().zip(&s.positions).zip(&s.forces) {
            let _ = writeln!(
                out,
                "{z} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                p[0], p[1], p[2], f[0], f[1], f[2]
            );
        }
    }
    out
}

fn parse_err(line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        line,
        detail: detail.into(),
    }
}

pub fn parse_samples(text: &str) -> Result<Vec<MolecularSample>> {
    let mut lines = text
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .peekable();
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        if header.trim().is_empty() {
            if lines.peek().is_some_and(|(_, l)| !l.trim().is_empty()) {
                return Err(parse_err(ln, "blank line between records"));
            }
            continue;
        }
        let n: usize = header
            .trim()
            .parse()
            .map_err(|_| parse_err(ln, format!("expected atom count, got {header:?}")))?;
        let (eln, eline) = lines
            .next()
            .ok_or_else(|| parse_err(ln + 1, "missing energy line"))?;
        let energy = eline
            .trim()
            .strip_prefix("energy=")
            .ok_or_else(|| parse_err(eln, "expected `energy=<value>`"))?
            .parse::<f64>()
            .map_err(|e| parse_err(eln, format!("energy: {e}")))?;
        let mut z = Vec::with_capacity(n);
        let mut pos = Vec::with_capacity(n);
        let mut forces = Vec::with_capacity(n);
        for k in 0..n {
            let (aln, aline) = lines
                .next()
                .filter(|(_, l)| !l.trim().is_empty())
                .ok_or_else(|| {
                    parse_err(eln + 1 + k, format!("expected {n} atom lines, found {k}"))
                })?;
            let toks: Vec<&str> = aline.split_whitespace().collect();
            if toks.len() != 7 {
                return Err(parse_err(
                    aln,
                    format!("expected 7 fields, got {}", toks.len()),
                ));
            }
            z.push(
                toks[0]
                    .parse::<u32>()
                    .map_err(|_| parse_err(aln, format!("bad atomic number {:?}", toks[0])))?,
            );
            let mut v = [0.0; 6];
            for (slot, t) in v.iter_mut().zip(&toks[1..]) {
                *slot = t
                    .parse()
                    .map_err(|_| parse_err(aln, format!("bad number {t:?}")))?;
            }
            pos.push([v[0], v[1], v[2]]);
            forces.push([v[3], v[4], v[5]]);
        }
        out.push(
            MolecularSample::new(z, pos, energy, forces)
                .map_err(|e| parse_err(ln, e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn read_samples(path: &Path) -> Result<Vec<MolecularSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_samples(&text)
}

pub fn write_file(path: &Path, samples: &[MolecularSample]) -> Result<()> {
    std::fs::write(path, write_samples(samples)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MolecularSample {
        MolecularSample::new(
            vec![1, 2],
            vec![[0.0, 0.0, 0.0], [1.1, -0.2, 1e-17]],
            -0.123456789,
            vec![[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let s = vec![sample(), sample()];
        let text = write_samples(&s);
        let back = parse_samples(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(write_samples(&back), text);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "2\nenergy=1.0\n1 0 0 0 0 0 0\n1 0 0 x 0 0 0\n";
        match parse_samples(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_samples("2\nenergy=1\n1 0 0 0 0 0 0\n"),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(matches!(
            parse_samples("2\nE=1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
