//! Plain-text persistence for shape-to-universe state.
//!
//! ```text
//! isomush-bundle 1
//! universe <d> shapes <k> basis <b> <b'>
//! matching <i> <m_i>
//! <m_i universe indices, whitespace separated>
//! map <i>
//! <b rows of b' floats>
//! ```
//!
//! Floats use the shortest representation that parses back to the same bits.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::universe::{UniverseMaps, UniverseMatching};
use crate::{Error, Result};

const MAGIC: &str = "isomush-bundle 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub u: UniverseMatching,
    pub q: UniverseMaps,
}

impl Bundle {
    pub fn new(u: UniverseMatching, q: UniverseMaps) -> Result<Self> {
        if u.num_shapes() != q.num_shapes() {
            return Err(Error::Dimension(format!(
                "{} matchings but {} maps",
                u.num_shapes(),
                q.num_shapes()
            )));
        }
        Ok(Bundle { u, q })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(
            s,
            "universe {} shapes {} basis {} {}",
            self.u.universe_size(),
            self.u.num_shapes(),
            self.q.rows(),
            self.q.cols()
        );
        for i in 0..self.u.num_shapes() {
            let block = self.u.block(i);
            let _ = writeln!(s, "matching {i} {}", block.len());
            let line: Vec<String> = block.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        for i in 0..self.q.num_shapes() {
            let _ = writeln!(s, "map {i}");
            s.push_str(&matrix_to_text(self.q.block(i)));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Bundle> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Bundle> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("unexpected end of file, expected {what}")))
        };
        let (n, magic) = next("header")?;
        if magic != MAGIC {
            return Err(Error::parse(path, n, format!("expected {MAGIC:?}")));
        }
        let (n, dims) = next("dimensions")?;
        let nums = keyed_numbers(dims, &["universe", "shapes", "basis"]).ok_or_else(|| Error::parse(path, n, "bad dimension line"))?;
        let [d, k, b, bp] = <[usize; 4]>::try_from(nums).map_err(|_| Error::parse(path, n, "bad dimension line"))?;

        let mut blocks = Vec::with_capacity(k);
        for i in 0..k {
            let (n, head) = next("matching header")?;
            let m = header(head, "matching", i).ok_or_else(|| Error::parse(path, n, format!("expected \"matching {i} <rows>\"")))?;
            let (n, row) = next("matching indices")?;
            let idx = parse_all::<usize>(row).ok_or_else(|| Error::parse(path, n, "bad universe index"))?;
            if idx.len() != m {
                return Err(Error::parse(path, n, format!("expected {m} indices, found {}", idx.len())));
            }
            blocks.push(idx);
        }
        let mut maps = Vec::with_capacity(k);
        for i in 0..k {
            let (n, head) = next("map header")?;
            if head != format!("map {i}") {
                return Err(Error::parse(path, n, format!("expected \"map {i}\"")));
            }
            let mut c = DMatrix::zeros(b, bp);
            for r in 0..b {
                let (n, row) = next("map row")?;
                let vals = parse_all::<f64>(row).ok_or_else(|| Error::parse(path, n, "bad float"))?;
                if vals.len() != bp {
                    return Err(Error::parse(path, n, format!("expected {bp} values, found {}", vals.len())));
                }
                c.row_mut(r).copy_from_slice(&vals);
            }
            maps.push(c);
        }
        Bundle::new(UniverseMatching::new(blocks, d)?, UniverseMaps::new(maps)?)
    }
}

fn parse_all<T: std::str::FromStr>(line: &str) -> Option<Vec<T>> {
    line.split_whitespace().map(|t| t.parse().ok()).collect()
}

fn header(line: &str, key: &str, index: usize) -> Option<usize> {
    let mut t = line.split_whitespace();
    (t.next()? == key && t.next()?.parse::<usize>().ok()? == index).then_some(())?;
    let m = t.next()?.parse().ok()?;
    t.next().is_none().then_some(m)
}

/// Parses `key n key n n ...`, collecting all numbers in order.
fn keyed_numbers(line: &str, keys: &[&str]) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    let mut seen = 0;
    for tok in line.split_whitespace() {
        if let Ok(v) = tok.parse() {
            out.push(v);
        } else if keys.get(seen) == Some(&tok) {
            seen += 1;
        } else {
            return None;
        }
    }
    (seen == keys.len()).then_some(out)
}

/// One matrix row per line.
pub fn matrix_to_text(c: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in 0..c.nrows() {
        let row: Vec<String> = c.row(r).iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn write_matrix(path: &Path, c: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_text(c)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = parse_all::<f64>(line).ok_or_else(|| Error::parse(path, i + 1, "bad float"))?;
        if rows.first().is_some_and(|r| r.len() != vals.len()) {
            return Err(Error::parse(path, i + 1, "ragged matrix row"));
        }
        rows.push(vals);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}
