//! File formats: local basis files, coefficient and data files, and CSV
//! reports with a comment header describing the run.
//!
//! Binary basis layout, all little-endian:
//!
//! ```text
//! b"SPHLAGB1"  u64 N  u32 m  u8 rule  f64 rule parameter
//! per column:  u32 count, count × (u32 row, f64 value), m² × f64
//! ```
//!
//! Rule tags are 0 = count (parameter M), 1 = fixed (parameter n),
//! 2 = radius (parameter K). The CSV variant has one record per line:
//! `basis,N,m,rule,param`, then `a,col,row,value` and `c,col,k,value`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::SpherePoint;
use crate::kernel::{KernelExpansion, KernelSpec};
use crate::locallag::{FootprintRule, LocalBasis};
use crate::solver::CscMatrix;

const MAGIC: &[u8; 8] = b"SPHLAGB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisFormat {
    #[default]
    Binary,
    Csv,
}

fn rule_parts(rule: FootprintRule) -> (u8, &'static str, f64) {
    match rule {
        FootprintRule::Count { multiplier } => (0, "count", multiplier),
        FootprintRule::Fixed { n } => (1, "fixed", n as f64),
        FootprintRule::Radius { k } => (2, "radius", k),
    }
}

fn rule_from(tag: &str, param: f64) -> Option<FootprintRule> {
    match tag {
        "0" | "count" => Some(FootprintRule::Count { multiplier: param }),
        "1" | "fixed" => Some(FootprintRule::Fixed { n: param as usize }),
        "2" | "radius" => Some(FootprintRule::Radius { k: param }),
        _ => None,
    }
}

pub fn save_basis(basis: &LocalBasis, path: impl AsRef<Path>, format: BasisFormat) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let n = basis.len();
    let p = basis.spec.poly_dim();
    let (tag, name, param) = rule_parts(basis.rule);
    match format {
        BasisFormat::Binary => {
            out.write_all(MAGIC)?;
            out.write_all(&(n as u64).to_le_bytes())?;
            out.write_all(&basis.spec.m().to_le_bytes())?;
            out.write_all(&[tag])?;
            out.write_all(&param.to_le_bytes())?;
            for j in 0..n {
                let (rows, vals) = basis.a.column(j);
                out.write_all(&(rows.len() as u32).to_le_bytes())?;
                for (&r, &v) in rows.iter().zip(vals) {
                    out.write_all(&(r as u32).to_le_bytes())?;
                    out.write_all(&v.to_le_bytes())?;
                }
                for k in 0..p {
                    out.write_all(&basis.c[(k, j)].to_le_bytes())?;
                }
            }
        }
        BasisFormat::Csv => {
            writeln!(out, "basis,{n},{},{name},{param}", basis.spec.m())?;
            for j in 0..n {
                let (rows, vals) = basis.a.column(j);
                for (&r, &v) in rows.iter().zip(vals) {
                    writeln!(out, "a,{j},{r},{v}")?;
                }
                for k in 0..p {
                    writeln!(out, "c,{j},{k},{}", basis.c[(k, j)])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a basis file in either format and attaches it to `points`.
pub fn load_basis(path: impl AsRef<Path>, points: Vec<SpherePoint>) -> Result<LocalBasis> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(MAGIC) {
        parse_binary_basis(&bytes, points)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse { line: 0, msg: "not a basis file".into() })?;
        parse_csv_basis(&text, points)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos + K;
        let chunk = self.bytes.get(self.pos..end).ok_or(Error::Parse { line: 0, msg: "truncated basis file".into() })?;
        self.pos = end;
        Ok(chunk.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

fn check_header(n: usize, points: &[SpherePoint]) -> Result<()> {
    if n != points.len() {
        return Err(Error::ShapeMismatch { expected: points.len(), got: n });
    }
    Ok(())
}

fn parse_binary_basis(bytes: &[u8], points: Vec<SpherePoint>) -> Result<LocalBasis> {
    let mut cur = Cursor { bytes, pos: MAGIC.len() };
    let n = cur.u64()? as usize;
    let m = cur.u32()?;
    let [tag] = cur.take::<1>()?;
    let param = cur.f64()?;
    check_header(n, &points)?;
    let spec = KernelSpec::new(m)?;
    let rule = rule_from(&tag.to_string(), param).ok_or(Error::Parse { line: 0, msg: format!("unknown rule tag {tag}") })?;
    let p = spec.poly_dim();
    let mut columns = Vec::with_capacity(n);
    let mut c = DMatrix::zeros(p, n);
    for j in 0..n {
        let count = cur.u32()? as usize;
        let mut col = Vec::with_capacity(count);
        for _ in 0..count {
            let r = cur.u32()? as usize;
            col.push((r, cur.f64()?));
        }
        columns.push(col);
        for k in 0..p {
            c[(k, j)] = cur.f64()?;
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Parse { line: 0, msg: "trailing bytes after basis data".into() });
    }
    LocalBasis::from_parts(points, spec, rule, CscMatrix::from_columns(n, columns)?, c)
}

fn parse_csv_basis(text: &str, points: Vec<SpherePoint>) -> Result<LocalBasis> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty basis file".into() })?;
    let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
    let h: Vec<&str> = header.split(',').map(str::trim).collect();
    if h.len() != 5 || h[0] != "basis" {
        return Err(perr(hl, "expected header `basis,N,m,rule,param`"));
    }
    let n: usize = h[1].parse().map_err(|_| perr(hl, "bad N"))?;
    let m: u32 = h[2].parse().map_err(|_| perr(hl, "bad m"))?;
    let param: f64 = h[4].parse().map_err(|_| perr(hl, "bad rule parameter"))?;
    let rule = rule_from(h[3], param).ok_or_else(|| perr(hl, "unknown rule"))?;
    check_header(n, &points)?;
    let spec = KernelSpec::new(m)?;
    let p = spec.poly_dim();
    let mut columns = vec![Vec::new(); n];
    let mut c = DMatrix::zeros(p, n);
    for (ln, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(perr(ln, "expected 4 fields"));
        }
        let j: usize = f[1].parse().map_err(|_| perr(ln, "bad column index"))?;
        let i: usize = f[2].parse().map_err(|_| perr(ln, "bad row index"))?;
        let v: f64 = f[3].parse().map_err(|_| perr(ln, "bad value"))?;
        if j >= n {
            return Err(perr(ln, "column index out of range"));
        }
        match f[0] {
            "a" if i < n => columns[j].push((i, v)),
            "c" if i < p => c[(i, j)] = v,
            "a" | "c" => return Err(perr(ln, "row index out of range")),
            _ => return Err(perr(ln, "record kind must be `a` or `c`")),
        }
    }
    LocalBasis::from_parts(points, spec, rule, CscMatrix::from_columns(n, columns)?, c)
}

/// Snapshot of a command invocation, written as `#` lines at the top of
/// every CSV output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub version: String,
}

impl RunConfig {
    pub fn header(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# spherelag {}", self.version).unwrap();
        writeln!(s, "# command: {}", self.command).unwrap();
        if !self.args.is_empty() {
            writeln!(s, "# args: {}", self.args.join(" ")).unwrap();
        }
        writeln!(s, "# seed: {}", self.seed).unwrap();
        s
    }
}

/// Renders a CSV table preceded by the run header.
pub fn format_csv(config: &RunConfig, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = config.header();
    s.push_str(&columns.join(","));
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Kernel and polynomial coefficients of an interpolant.
pub fn format_coefficients(config: &RunConfig, exp: &KernelExpansion) -> String {
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(exp.a.len() + exp.c.len() + 1);
    rows.push(vec!["m".into(), exp.spec.m().to_string(), exp.a.len().to_string()]);
    rows.extend(exp.a.iter().enumerate().map(|(i, v)| vec!["a".into(), i.to_string(), v.to_string()]));
    rows.extend(exp.c.iter().enumerate().map(|(i, v)| vec!["c".into(), i.to_string(), v.to_string()]));
    format_csv(config, &["kind", "index", "value"], &rows)
}

/// Parses a coefficient file and attaches it to `centers`.
pub fn parse_coefficients(text: &str, centers: Vec<SpherePoint>) -> Result<KernelExpansion> {
    let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
    let mut spec = None;
    let mut a = vec![0.0; centers.len()];
    let mut c = Vec::new();
    let mut seen_header = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            seen_header = true;
            if line == "kind,index,value" {
                continue;
            }
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(perr(ln, "expected 3 fields"));
        }
        match f[0] {
            "m" => {
                let m: u32 = f[1].parse().map_err(|_| perr(ln, "bad m"))?;
                let n: usize = f[2].parse().map_err(|_| perr(ln, "bad N"))?;
                if n != centers.len() {
                    return Err(Error::ShapeMismatch { expected: centers.len(), got: n });
                }
                let s = KernelSpec::new(m)?;
                c = vec![0.0; s.poly_dim()];
                spec = Some(s);
            }
            kind @ ("a" | "c") => {
                let i: usize = f[1].parse().map_err(|_| perr(ln, "bad index"))?;
                let v: f64 = f[2].parse().map_err(|_| perr(ln, "bad value"))?;
                let target = if kind == "a" { &mut a } else { &mut c };
                *target.get_mut(i).ok_or_else(|| perr(ln, "index out of range"))? = v;
            }
            _ => return Err(perr(ln, "record kind must be `m`, `a` or `c`")),
        }
    }
    let spec = spec.ok_or_else(|| perr(0, "missing `m` record"))?;
    KernelExpansion::new(spec, centers, a, c)
}

pub fn load_coefficients(path: impl AsRef<Path>, centers: Vec<SpherePoint>) -> Result<KernelExpansion> {
    parse_coefficients(&fs::read_to_string(path)?, centers)
}

/// One value per line; `#` lines and blank lines are skipped.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(line.parse().map_err(|_| Error::Parse { line: ln + 1, msg: format!("not a number: {line:?}") })?);
    }
    Ok(out)
}

pub fn load_values(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_values(&fs::read_to_string(path)?)
}

pub fn format_values(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for v in values {
        writeln!(s, "{v}").unwrap();
    }
    s
}
