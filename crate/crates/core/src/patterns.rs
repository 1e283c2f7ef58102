//! Pattern corpora: CSV rows and 8-bit PGM images.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{HamError, Result};
use crate::rng::{self, HamRng};
use crate::topology::Shape;

/// `K ≥ 1` patterns sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    pub shape: Shape,
    pub patterns: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

impl PatternSet {
    pub fn new(shape: Shape, patterns: Vec<Vec<f64>>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(HamError::InvalidArgument("a pattern set needs at least one pattern".into()));
        }
        if let Some((i, p)) = patterns.iter().enumerate().find(|(_, p)| p.len() != shape.len()) {
            return Err(HamError::ShapeMismatch {
                context: format!("pattern {i}"),
                expected: shape.len(),
                found: p.len(),
            });
        }
        Ok(PatternSet {
            shape,
            patterns,
            labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Row-major `[K × N]` matrix of the patterns.
    pub fn as_rows(&self) -> Vec<f64> {
        self.patterns.iter().flatten().copied().collect()
    }

    /// `k` uniform ±1 patterns of length `n` (see [`rng::random_pm1`]).
    pub fn random_pm1(rng: &mut HamRng, k: usize, n: usize) -> Result<Self> {
        PatternSet::new(Shape::Flat(n), (0..k).map(|_| rng::random_pm1(rng, n)).collect())
    }

    /// The first `k` rows of the Sylvester Hadamard matrix of order `n`
    /// (`n` a power of two): mutually orthogonal ±1 patterns.
    pub fn hadamard(k: usize, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || k == 0 || k > n {
            return Err(HamError::InvalidArgument(format!(
                "hadamard patterns need a power-of-two length and 1 ≤ k ≤ n, got k={k}, n={n}"
            )));
        }
        let rows = (0..k)
            .map(|i| {
                (0..n)
                    .map(|j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        PatternSet::new(Shape::Flat(n), rows)
    }

    /// Index pairs of identical patterns.
    pub fn duplicates(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if self.patterns[i] == self.patterns[j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Whether every entry is exactly ±1.
    pub fn is_pm1(&self) -> bool {
        self.patterns.iter().flatten().all(|v| *v == 1.0 || *v == -1.0)
    }
}

/// Reads one pattern per CSV row (no header). Every row must have the same
/// number of fields.
pub fn read_csv(path: &Path) -> Result<PatternSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| HamError::PatternFile(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| HamError::PatternFile(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    HamError::PatternFile(format!("{} row {}: '{f}' is not a number", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.first().map(Vec::len).ok_or_else(|| {
        HamError::PatternFile(format!("{}: no patterns", path.display()))
    })?;
    PatternSet::new(Shape::Flat(n), rows)
}

pub fn write_csv<W: Write>(mut w: W, set: &PatternSet) -> std::io::Result<()> {
    for p in &set.patterns {
        let line: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Parses an 8-bit PGM (binary `P5` or ASCII `P2`) into a `[h, w, 1]` map
/// with grey level `v` mapped to `2v/maxval − 1`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(Shape, Vec<f64>)> {
    let bad = |m: &str| HamError::PatternFile(format!("PGM: {m}"));
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    let magic = header[0];
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(header[1])?, num(header[2])?, num(header[3])?);
    if w == 0 || h == 0 {
        return Err(bad("zero image size"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    let scale = 2.0 / maxval as f64;
    let values: Vec<f64> = match magic {
        "P5" => {
            let data = &bytes[pos + 1..];
            if data.len() < w * h {
                return Err(bad("truncated pixel data"));
            }
            data[..w * h].iter().map(|&b| b as f64 * scale - 1.0).collect()
        }
        "P2" => {
            let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| bad("non-ASCII pixel data"))?;
            let v = text
                .split_ascii_whitespace()
                .take(w * h)
                .map(|t| num(t).map(|x| x as f64 * scale - 1.0))
                .collect::<Result<Vec<f64>>>()?;
            if v.len() < w * h {
                return Err(bad("truncated pixel data"));
            }
            v
        }
        _ => return Err(bad("expected P2 or P5")),
    };
    Ok((Shape::map(h, w, 1), values))
}

pub fn read_pgm(path: &Path) -> Result<(Shape, Vec<f64>)> {
    parse_pgm(&fs::read(path)?).map_err(|e| match e {
        HamError::PatternFile(m) => HamError::PatternFile(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes a single-channel map as binary PGM, mapping `[−1, 1]` onto `0..=255`
/// (values outside are clipped).
pub fn write_pgm<W: Write>(mut w: W, height: usize, width: usize, values: &[f64]) -> std::io::Result<()> {
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8)
        .collect();
    w.write_all(&bytes)
}

/// Loads a cue or corpus from `.pgm` or CSV, chosen by extension.
pub fn read_any(path: &Path) -> Result<PatternSet> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => {
            let (shape, v) = read_pgm(path)?;
            PatternSet::new(shape, vec![v])
        }
        _ => read_csv(path),
    }
}
