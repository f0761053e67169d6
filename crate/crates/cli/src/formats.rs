//! Text formats read and written by the command-line tool.
//!
//! Structure file:
//! ```text
//! comment line (the token periodic=false marks a finite cluster)
//! a1x a1y a1z
//! a2x a2y a2z
//! a3x a3y a3z
//! N
//! symbol mass x y z      (N lines, amu and Cartesian Å)
//! ```
//!
//! Force-constant file: `N`, then per stored pair a header `i j` (0-based)
//! followed by three rows of three values in eV/Å². Omitted pairs are zero
//! and a pair's transposed counterpart may be omitted.
//!
//! Snapshot file: records of `snapshot k` followed by N lines
//! `dx dy dz fx fy fz` (Å, eV/Å).
//!
//! Thermal CSV: header `T_K,value` or `T_K,value,sigma`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vibroline::ifcfit::TrainingSnapshot;
use vibroline::model::{Mat3, Vec3};
use vibroline::{AtomSite, CrystalStructure, ForceConstants, ThermalPoint, ThermalSeries};

use crate::error::CliError;

/// Shortest decimal text of `x` rounded to 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let magnitude = rounded.abs();
    if (1e-4..1e15).contains(&magnitude) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// `x` rounded to 12 significant digits, for JSON output.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

/// One input line split into whitespace-separated tokens with 1-based columns.
struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    end_column: usize,
}

fn tokenize(number: usize, line: &str) -> Line<'_> {
    let mut tokens = Vec::new();
    let mut start = None;
    let mut column = 0;
    for (offset, ch) in line.char_indices() {
        column += 1;
        if ch.is_whitespace() {
            if let Some((s, c)) = start.take() {
                tokens.push(Token { text: &line[s..offset], column: c });
            }
        } else if start.is_none() {
            start = Some((offset, column));
        }
    }
    if let Some((s, c)) = start {
        tokens.push(Token { text: &line[s..], column: c });
    }
    Line { number, tokens, end_column: column + 1 }
}

/// Line cursor over a text file that reports positions in errors.
struct Reader<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    next: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Self { path, lines: text.lines().collect(), next: 0 }
    }

    fn err(&self, line: usize, column: usize, message: impl std::fmt::Display) -> CliError {
        CliError::parse(self.path, line, column, message)
    }

    fn raw_line(&mut self, what: &str) -> Result<(usize, &'a str), CliError> {
        if self.next >= self.lines.len() {
            return Err(self.err(self.lines.len() + 1, 1, format!("unexpected end of file, expected {what}")));
        }
        self.next += 1;
        Ok((self.next, self.lines[self.next - 1]))
    }

    fn line(&mut self, what: &str) -> Result<Line<'a>, CliError> {
        let (number, text) = self.raw_line(what)?;
        Ok(tokenize(number, text))
    }

    /// Next line that is neither blank nor a `#` comment.
    fn content_line(&mut self) -> Option<Line<'a>> {
        while self.next < self.lines.len() {
            self.next += 1;
            let text = self.lines[self.next - 1];
            let trimmed = text.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Some(tokenize(self.next, text));
            }
        }
        None
    }

    fn expect_content(&mut self, what: &str) -> Result<Line<'a>, CliError> {
        let eof = self.lines.len() + 1;
        self.content_line().ok_or_else(|| self.err(eof, 1, format!("unexpected end of file, expected {what}")))
    }

    fn floats(&self, line: &Line<'_>, count: usize, what: &str) -> Result<Vec<f64>, CliError> {
        if line.tokens.len() != count {
            let column = line.tokens.get(count).map_or(line.end_column, |t| t.column);
            return Err(self.err(
                line.number,
                column,
                format!("expected {count} values for {what}, found {}", line.tokens.len()),
            ));
        }
        line.tokens.iter().map(|t| self.float(line.number, t)).collect()
    }

    fn float(&self, number: usize, token: &Token<'_>) -> Result<f64, CliError> {
        match token.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(number, token.column, format!("expected a number, found {:?}", token.text))),
        }
    }

    fn count(&self, line: &Line<'_>, what: &str) -> Result<usize, CliError> {
        if line.tokens.len() != 1 {
            return Err(self.err(line.number, line.tokens.get(1).map_or(1, |t| t.column), format!("expected {what}")));
        }
        line.tokens[0]
            .text
            .parse::<usize>()
            .map_err(|_| self.err(line.number, line.tokens[0].column, format!("expected {what}, found {:?}", line.tokens[0].text)))
    }

    fn finish(&mut self) -> Result<(), CliError> {
        match self.content_line() {
            Some(line) => Err(self.err(line.number, line.tokens[0].column, "unexpected trailing content")),
            None => Ok(()),
        }
    }
}

pub fn read_structure(path: &Path) -> Result<CrystalStructure, CliError> {
    let text = read_text(path)?;
    parse_structure(path, &text)
}

pub fn parse_structure(path: &Path, text: &str) -> Result<CrystalStructure, CliError> {
    let mut r = Reader::new(path, text);
    let (_, comment) = r.raw_line("comment line")?;
    let periodic = !comment.split_whitespace().any(|t| t.eq_ignore_ascii_case("periodic=false"));
    let mut lattice = Mat3::zeros();
    for row in 0..3 {
        let line = r.line("lattice row")?;
        let v = r.floats(&line, 3, "a lattice row")?;
        for c in 0..3 {
            lattice[(row, c)] = v[c];
        }
    }
    let line = r.line("atom count")?;
    let n = r.count(&line, "atom count")?;
    if n == 0 {
        return Err(r.err(line.number, 1, "atom count must be positive"));
    }
    let mut sites = Vec::with_capacity(n);
    for _ in 0..n {
        let line = r.line("atom line")?;
        if line.tokens.len() != 5 {
            let column = line.tokens.get(5).map_or(line.end_column, |t| t.column);
            return Err(r.err(
                line.number,
                column,
                format!("expected symbol mass x y z, found {} fields", line.tokens.len()),
            ));
        }
        let mass = r.float(line.number, &line.tokens[1])?;
        if mass <= 0.0 {
            return Err(r.err(line.number, line.tokens[1].column, "mass must be positive"));
        }
        let pos: Vec<f64> = line.tokens[2..].iter().map(|t| r.float(line.number, t)).collect::<Result<_, _>>()?;
        sites.push(AtomSite::new(line.tokens[0].text, mass, Vec3::new(pos[0], pos[1], pos[2])));
    }
    r.finish()?;
    CrystalStructure::new(lattice, sites, periodic).map_err(|e| r.err(2, 1, e))
}

pub fn read_force_constants(path: &Path, n_expected: Option<usize>) -> Result<ForceConstants, CliError> {
    let text = read_text(path)?;
    parse_force_constants(path, &text, n_expected)
}

pub fn parse_force_constants(path: &Path, text: &str, n_expected: Option<usize>) -> Result<ForceConstants, CliError> {
    let mut r = Reader::new(path, text);
    let line = r.expect_content("atom count")?;
    let n = r.count(&line, "atom count")?;
    if let Some(expected) = n_expected {
        if n != expected {
            return Err(r.err(line.number, 1, format!("file covers {n} atoms but the structure has {expected}")));
        }
    }
    let mut blocks: BTreeMap<(usize, usize), (Mat3, usize)> = BTreeMap::new();
    while let Some(header) = r.content_line() {
        if header.tokens.len() != 2 {
            return Err(r.err(header.number, 1, "expected a pair header `i j`"));
        }
        let mut idx = [0usize; 2];
        for (k, t) in header.tokens.iter().enumerate() {
            idx[k] = t
                .text
                .parse::<usize>()
                .ok()
                .filter(|&v| v < n)
                .ok_or_else(|| r.err(header.number, t.column, format!("atom index must be an integer below {n}, found {:?}", t.text)))?;
        }
        let mut block = Mat3::zeros();
        for row in 0..3 {
            let line = r.line("force-constant row")?;
            let v = r.floats(&line, 3, "a force-constant row")?;
            for c in 0..3 {
                block[(row, c)] = v[c];
            }
        }
        let (i, j) = (idx[0], idx[1]);
        let (key, canonical) = if i <= j { ((i, j), block) } else { ((j, i), block.transpose()) };
        if let Some((existing, first)) = blocks.get(&key) {
            let scale = existing.abs().max().max(canonical.abs().max()).max(1e-300);
            if (existing - canonical).abs().max() > 1e-9 * scale {
                return Err(r.err(
                    header.number,
                    1,
                    format!("pair ({i}, {j}) contradicts the block given on line {first}"),
                ));
            }
            continue;
        }
        blocks.insert(key, (canonical, header.number));
    }
    ForceConstants::from_blocks(n, blocks.into_iter().map(|((i, j), (b, _))| (i, j, b))).map_err(|e| r.err(1, 1, e))
}

pub fn format_force_constants(fc: &ForceConstants) -> String {
    let mut out = format!("{}\n", fc.n_atoms());
    for (i, j, block) in fc.pairs() {
        let _ = writeln!(out, "{i} {j}");
        for row in 0..3 {
            let _ = writeln!(out, "{} {} {}", fmt12(block[(row, 0)]), fmt12(block[(row, 1)]), fmt12(block[(row, 2)]));
        }
    }
    out
}

pub fn read_snapshots(path: &Path, n_atoms: usize) -> Result<Vec<TrainingSnapshot>, CliError> {
    let text = read_text(path)?;
    let mut r = Reader::new(path, &text);
    let mut out = Vec::new();
    while let Some(header) = r.content_line() {
        let ok = header.tokens.len() == 2
            && header.tokens[0].text == "snapshot"
            && header.tokens[1].text.parse::<usize>().is_ok();
        if !ok {
            return Err(r.err(header.number, 1, "expected a record header `snapshot k`"));
        }
        let mut displacements = Vec::with_capacity(n_atoms);
        let mut forces = Vec::with_capacity(n_atoms);
        for _ in 0..n_atoms {
            let line = r.line("displacement and force line")?;
            let v = r.floats(&line, 6, "dx dy dz fx fy fz")?;
            displacements.push(Vec3::new(v[0], v[1], v[2]));
            forces.push(Vec3::new(v[3], v[4], v[5]));
        }
        out.push(TrainingSnapshot::new(displacements, forces).map_err(|e| r.err(header.number, 1, e))?);
    }
    Ok(out)
}

/// Reduced wavevectors, one `qx qy qz` per line.
pub fn read_qpoints(path: &Path) -> Result<Vec<Vec3>, CliError> {
    let text = read_text(path)?;
    let mut r = Reader::new(path, &text);
    let mut out = Vec::new();
    while let Some(line) = r.content_line() {
        let v = r.floats(&line, 3, "a wavevector")?;
        out.push(Vec3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

/// Three lattice rows in Å.
pub fn read_lattice(path: &Path) -> Result<Mat3, CliError> {
    let text = read_text(path)?;
    let mut r = Reader::new(path, &text);
    let mut lattice = Mat3::zeros();
    for row in 0..3 {
        let line = r.expect_content("lattice row")?;
        let v = r.floats(&line, 3, "a lattice row")?;
        for c in 0..3 {
            lattice[(row, c)] = v[c];
        }
    }
    r.finish()?;
    Ok(lattice)
}

pub fn read_thermal(path: &Path) -> Result<ThermalSeries, CliError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::parse(path, 1, 1, "empty file, expected header T_K,value[,sigma]"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_sigma = match columns.as_slice() {
        ["T_K", "value"] => false,
        ["T_K", "value", "sigma"] => true,
        _ => return Err(CliError::parse(path, 1, 1, format!("expected header T_K,value[,sigma], found {header:?}"))),
    };
    let width = columns.len();
    let mut points = Vec::new();
    for (idx, line) in lines {
        let number = idx + 1;
        let mut fields = Vec::with_capacity(width);
        let mut column = 1;
        for field in line.split(',') {
            let value = field.trim().parse::<f64>().ok().filter(|v| v.is_finite());
            match value {
                Some(v) => fields.push(v),
                None => return Err(CliError::parse(path, number, column, format!("expected a number, found {:?}", field.trim()))),
            }
            column += field.chars().count() + 1;
        }
        if fields.len() != width {
            return Err(CliError::parse(path, number, column, format!("expected {width} fields, found {}", fields.len())));
        }
        points.push(if with_sigma {
            ThermalPoint::with_sigma(fields[0], fields[1], fields[2])
        } else {
            ThermalPoint::new(fields[0], fields[1])
        });
    }
    let label = path.file_stem().map_or_else(|| "value".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(ThermalSeries::new(points, label)?)
}

#[cfg(test)]
pub fn format_structure(s: &CrystalStructure, comment: &str) -> String {
    let mut out = String::new();
    let periodic = if s.is_periodic() { "" } else { " periodic=false" };
    let _ = writeln!(out, "{comment}{periodic}");
    for row in 0..3 {
        let l = s.lattice();
        let _ = writeln!(out, "{} {} {}", fmt12(l[(row, 0)]), fmt12(l[(row, 1)]), fmt12(l[(row, 2)]));
    }
    let _ = writeln!(out, "{}", s.n_atoms());
    for a in s.sites() {
        let p = a.position;
        let _ = writeln!(out, "{} {} {} {} {}", a.species, fmt12(a.mass), fmt12(p.x), fmt12(p.y), fmt12(p.z));
    }
    out
}
