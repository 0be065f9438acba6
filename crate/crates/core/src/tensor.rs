//! Replicate distance tensors: validation, normalization and the long CSV format.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{io_err, HmdsError, Result};
use crate::triangle::{n_pairs, pair_index, pairs, UpperTriangle};

/// Default positivity floor applied after normalization.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Observed distances `y[i][j][p]` between `N` entities over `M` replicates.
///
/// Only the `i < j` entries are stored; the lower triangle mirrors them and the
/// diagonal reads as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTensor {
    n: usize,
    m: usize,
    // pair-major: values[pair * m + p]
    values: Vec<f64>,
}

impl DistanceTensor {
    pub fn from_fn(n: usize, m: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_pairs(n) * m);
        for (i, j) in pairs(n) {
            for p in 0..m {
                values.push(f(i, j, p));
            }
        }
        Self { n, m, values }
    }

    /// Build from one upper-triangular matrix per replicate.
    pub fn from_replicates(replicates: &[UpperTriangle]) -> Result<Self> {
        let Some(first) = replicates.first() else {
            return Err(HmdsError::InvalidInput("no replicates".into()));
        };
        let n = first.n();
        if let Some(bad) = replicates.iter().find(|r| r.n() != n) {
            return Err(HmdsError::LengthMismatch { left: n, right: bad.n() });
        }
        Ok(Self::from_fn(n, replicates.len(), |i, j, p| replicates[p].get(i, j)))
    }

    pub fn n_entities(&self) -> usize {
        self.n
    }

    pub fn n_replicates(&self) -> usize {
        self.m
    }

    pub fn n_pairs(&self) -> usize {
        n_pairs(self.n)
    }

    /// Symmetric access, zero on the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize, p: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.values[pair_index(self.n, i, j) * self.m + p],
            std::cmp::Ordering::Greater => self.values[pair_index(self.n, j, i) * self.m + p],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    /// The `M` replicate values of the pair at storage position `pair`.
    #[inline]
    pub fn pair_slice(&self, pair: usize) -> &[f64] {
        &self.values[pair * self.m..(pair + 1) * self.m]
    }

    /// All stored values, pair-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn replicate(&self, p: usize) -> UpperTriangle {
        UpperTriangle::from_values(self.n, (0..self.n_pairs()).map(|k| self.values[k * self.m + p]).collect())
    }

    /// Largest off-diagonal entry over all pairs and replicates.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, m: self.m, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Reorder entities so that new entity `k` is old entity `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        Self::from_fn(self.n, self.m, |i, j, p| self.get(perm[i], perm[j], p))
    }
}

/// A broken tensor invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Asymmetry { i: usize, j: usize, p: usize },
    NonZeroDiagonal { i: usize, p: usize },
    NonPositive { i: usize, j: usize, p: usize },
    NonFinite { i: usize, j: usize, p: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Asymmetry { i, j, p } => write!(f, "asymmetry at ({i},{j},{p})"),
            Violation::NonZeroDiagonal { i, p } => write!(f, "non-zero diagonal at ({i},{i},{p})"),
            Violation::NonPositive { i, j, p } => write!(f, "non-positive off-diagonal at ({i},{j},{p})"),
            Violation::NonFinite { i, j, p } => write!(f, "non-finite entry at ({i},{j},{p})"),
        }
    }
}

/// Check positivity and finiteness of the stored entries. Symmetry and a zero
/// diagonal hold by construction for [`DistanceTensor`].
pub fn validate_tensor(t: &DistanceTensor) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, (i, j)) in pairs(t.n).enumerate() {
        for p in 0..t.m {
            let v = t.values[k * t.m + p];
            if !v.is_finite() {
                out.push(Violation::NonFinite { i, j, p });
            } else if v <= 0.0 {
                out.push(Violation::NonPositive { i, j, p });
            }
        }
    }
    out
}

/// Validate a dense `n x n x m` array laid out as `data[(i * n + j) * m + p]`.
pub fn validate_dense(n: usize, m: usize, data: &[f64]) -> Vec<Violation> {
    assert_eq!(data.len(), n * n * m, "dense tensor length");
    let at = |i: usize, j: usize, p: usize| data[(i * n + j) * m + p];
    let mut out = Vec::new();
    for i in 0..n {
        for p in 0..m {
            if at(i, i, p) != 0.0 {
                out.push(Violation::NonZeroDiagonal { i, p });
            }
        }
    }
    for (i, j) in pairs(n) {
        for p in 0..m {
            let (a, b) = (at(i, j, p), at(j, i, p));
            if !a.is_finite() || !b.is_finite() {
                out.push(Violation::NonFinite { i, j, p });
                continue;
            }
            if a != b {
                out.push(Violation::Asymmetry { i, j, p });
            }
            if a <= 0.0 || b <= 0.0 {
                out.push(Violation::NonPositive { i, j, p });
            }
        }
    }
    out
}

/// Convert a dense array (see [`validate_dense`]) into a tensor, rejecting any violation
/// other than non-positive entries (which normalization may still repair).
pub fn from_dense(n: usize, m: usize, data: &[f64]) -> Result<DistanceTensor> {
    let fatal: Vec<String> = validate_dense(n, m, data)
        .into_iter()
        .filter(|v| !matches!(v, Violation::NonPositive { .. }))
        .map(|v| v.to_string())
        .collect();
    if !fatal.is_empty() {
        return Err(HmdsError::InvalidInput(fatal.join("; ")));
    }
    Ok(DistanceTensor::from_fn(n, m, |i, j, p| data[(i * n + j) * m + p]))
}

/// Scale by the reciprocal of the largest entry over all replicates, then raise
/// anything below `floor` to `floor`.
pub fn normalize_tensor(t: &DistanceTensor, floor: f64) -> Result<DistanceTensor> {
    if floor.is_nan() || floor <= 0.0 {
        return Err(HmdsError::InvalidInput(format!("floor must be positive, got {floor}")));
    }
    if let Some(v) = t.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(HmdsError::InvalidInput(format!("tensor entry {v} is negative or non-finite")));
    }
    let max = t.max_value();
    if max <= 0.0 {
        return Err(HmdsError::DegenerateTensor("all entries are zero".into()));
    }
    Ok(t.map(|v| (v / max).max(floor)))
}

/// Write the long CSV format: header `i,j,p,y`, one `i < j` row per pair and replicate.
pub fn write_tensor(t: &DistanceTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::with_capacity(32 * t.values.len() + 8);
    buf.push_str("i,j,p,y\n");
    for (k, (i, j)) in pairs(t.n).enumerate() {
        for p in 0..t.m {
            buf.push_str(&format!("{i},{j},{p},{:.16e}\n", t.values[k * t.m + p]));
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(buf.as_bytes()).map_err(io_err(path))
}

/// Read a tensor, inferring the shape from the largest indices present.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<DistanceTensor> {
    read_tensor_shaped(path, None)
}

/// Read a tensor; when `shape = Some((n, m))` indices outside it are rejected.
pub fn read_tensor_shaped(path: impl AsRef<Path>, shape: Option<(usize, usize)>) -> Result<DistanceTensor> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_tensor(&text, shape)
}

pub fn parse_tensor(text: &str, shape: Option<(usize, usize)>) -> Result<DistanceTensor> {
    let parse_err = |line: usize, msg: String| HmdsError::Parse { line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "i,j,p,y" => {}
        Some((_, h)) => return Err(parse_err(1, format!("expected header `i,j,p,y`, found `{}`", h.trim()))),
        None => return Err(parse_err(1, "empty file".into())),
    }

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(line, format!("malformed row `{raw}`: expected 4 fields")));
        }
        let index = |s: &str| s.parse::<usize>().map_err(|_| parse_err(line, format!("malformed index `{s}`")));
        let (a, b, p) = (index(fields[0])?, index(fields[1])?, index(fields[2])?);
        let y: f64 = fields[3].parse().map_err(|_| parse_err(line, format!("malformed value `{}`", fields[3])))?;
        if a == b {
            return Err(parse_err(line, format!("diagonal entry ({a},{b},{p})")));
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        if let Some((n, m)) = shape {
            if j >= n || p >= m {
                return Err(parse_err(line, format!("index out of range ({a},{b},{p}) for shape {n}x{n}x{m}")));
            }
        }
        if !seen.insert((i, j, p)) {
            return Err(parse_err(line, format!("duplicate entry ({i},{j},{p})")));
        }
        rows.push((line, i, j, p, y));
    }

    let (n, m) = match shape {
        Some(s) => s,
        None => {
            let n = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
            let m = rows.iter().map(|r| r.3 + 1).max().unwrap_or(0);
            (n, m)
        }
    };
    if n < 2 || m < 1 {
        return Err(parse_err(1, "tensor needs at least 2 entities and 1 replicate".into()));
    }
    let mut values = vec![f64::NAN; n_pairs(n) * m];
    for &(_, i, j, p, y) in &rows {
        values[pair_index(n, i, j) * m + p] = y;
    }
    if let Some(k) = values.iter().position(|v| v.is_nan()) {
        let (i, j) = pairs(n).nth(k / m).expect("pair in range");
        let line = rows.last().map_or(1, |r| r.0);
        return Err(parse_err(line, format!("missing entry ({i},{j},{})", k % m)));
    }
    Ok(DistanceTensor { n, m, values })
}
