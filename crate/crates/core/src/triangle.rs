use serde::{Deserialize, Serialize};

/// Number of unordered pairs among `n` entities.
pub fn n_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row-major position of the pair `(i, j)`, `i < j`, in the strict upper triangle.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Iterate the pairs `(i, j)` with `i < j` in storage order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Values indexed by unordered entity pairs, stored once per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperTriangle {
    n: usize,
    values: Vec<f64>,
}

impl UpperTriangle {
    pub fn filled(n: usize, value: f64) -> Self {
        Self { n, values: vec![value; n_pairs(n)] }
    }

    /// Build from values in [`pairs`] order. Panics on a length mismatch.
    pub fn from_values(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_pairs(n), "upper triangle length");
        Self { n, values }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self { n, values: pairs(n).map(|(i, j)| f(i, j)).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Symmetric access; the diagonal reads as zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.values[pair_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.values[pair_index(self.n, j, i)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = pair_index(self.n, a, b);
        self.values[k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        pairs(self.n).zip(self.values.iter().copied())
    }

    /// Dense symmetric `n x n` matrix, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for ((i, j), v) in self.iter() {
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_index_enumerates_storage_order() {
        for n in 1..8 {
            for (k, (i, j)) in pairs(n).enumerate() {
                assert_eq!(pair_index(n, i, j), k);
            }
            assert_eq!(pairs(n).count(), n_pairs(n));
        }
    }

    #[test]
    fn symmetric_access() {
        let t = UpperTriangle::from_fn(4, |i, j| (10 * i + j) as f64);
        assert_eq!(t.get(1, 3), 13.0);
        assert_eq!(t.get(3, 1), 13.0);
        assert_eq!(t.get(2, 2), 0.0);
    }
}
