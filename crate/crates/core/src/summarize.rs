//! Posterior summaries: mean dissimilarities, agglomerative clustering and
//! Procrustes-aligned embeddings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result};
use crate::state::ChainOutput;
use crate::triangle::{pairs, UpperTriangle};

/// Elementwise mean of `delta` across retained draws.
pub fn posterior_mean_delta(chain: &ChainOutput) -> UpperTriangle {
    assert!(!chain.draws.is_empty(), "empty chain");
    let n = chain.n_entities();
    let mut acc = vec![0.0; crate::triangle::n_pairs(n)];
    for d in &chain.draws {
        for (a, v) in acc.iter_mut().zip(d.delta.values()) {
            *a += v;
        }
    }
    let k = chain.draws.len() as f64;
    UpperTriangle::from_values(n, acc.into_iter().map(|a| a / k).collect())
}

/// Equal-tailed posterior quantiles of each `delta_ij`.
pub fn delta_quantiles(chain: &ChainOutput, q: f64) -> UpperTriangle {
    assert!(!chain.draws.is_empty(), "empty chain");
    let n = chain.n_entities();
    UpperTriangle::from_fn(n, |i, j| {
        let mut v: Vec<f64> = chain.draws.iter().map(|d| d.delta.get(i, j)).collect();
        v.sort_by(f64::total_cmp);
        let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Single,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "average" => Ok(Self::Average),
            "single" => Ok(Self::Single),
            "complete" => Ok(Self::Complete),
            other => Err(format!("unknown linkage {other:?}")),
        }
    }
}

/// One agglomeration step. Leaves are clusters `0..N`; the cluster formed by
/// merge `k` has id `N + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub labels: Vec<String>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    /// Leaves below cluster `id`, ascending.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let n = self.n_leaves();
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if c < n {
                out.push(c);
            } else {
                let m = self.merges[c - n];
                stack.push(m.a);
                stack.push(m.b);
            }
        }
        out.sort_unstable();
        out
    }

    /// Cophenetic height at which leaves `i` and `j` first share a cluster.
    pub fn cophenetic(&self, i: usize, j: usize) -> f64 {
        let n = self.n_leaves();
        self.merges
            .iter()
            .enumerate()
            .find(|(k, _)| {
                let m = self.members(n + k);
                m.binary_search(&i).is_ok() && m.binary_search(&j).is_ok()
            })
            .map_or(0.0, |(_, m)| m.height)
    }

    /// Newick text. A node sits at depth `height / 2` above the leaves, so
    /// root-to-leaf path lengths are equal for monotone merges.
    pub fn to_newick(&self) -> String {
        let n = self.n_leaves();
        if n == 1 {
            return format!("{};", self.labels[0]);
        }
        let depth = |id: usize| if id < n { 0.0 } else { self.merges[id - n].height / 2.0 };
        fn render(d: &Dendrogram, id: usize, depth: &dyn Fn(usize) -> f64, out: &mut String) {
            let n = d.n_leaves();
            if id < n {
                out.push_str(&d.labels[id]);
                return;
            }
            let m = d.merges[id - n];
            out.push('(');
            for (k, child) in [m.a, m.b].into_iter().enumerate() {
                if k == 1 {
                    out.push(',');
                }
                render(d, child, depth, out);
                let _ = write!(out, ":{}", depth(id) - depth(child));
            }
            out.push(')');
        }
        let mut out = String::new();
        render(self, 2 * n - 2, &depth, &mut out);
        out.push(';');
        out
    }
}

/// Agglomerative clustering. Among equally close cluster pairs the one with the
/// smallest `(id_a, id_b)` merges first.
pub fn agglomerate(d: &UpperTriangle, labels: Option<Vec<String>>, linkage: Linkage) -> Dendrogram {
    let n = d.n();
    assert!(n >= 1, "need at least one entity");
    let labels = labels.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
    assert_eq!(labels.len(), n, "label count");

    // active clusters: (id, size); dist indexed by slot
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d.get(i, j)).collect()).collect();
    let mut alive = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for s in 0..n {
            if !alive[s] {
                continue;
            }
            for t in (s + 1)..n {
                if !alive[t] {
                    continue;
                }
                let (lo, hi) = if ids[s] < ids[t] { (ids[s], ids[t]) } else { (ids[t], ids[s]) };
                let cand = (dist[s][t], lo, hi, s, t);
                let better = match best {
                    None => true,
                    Some(b) => cand.0 < b.0 || (cand.0 == b.0 && (cand.1, cand.2) < (b.1, b.2)),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (h, a, b, s, t) = best.expect("two active clusters");
        merges.push(Merge { a, b, height: h });
        let (ns, nt) = (sizes[s] as f64, sizes[t] as f64);
        for u in 0..n {
            if !alive[u] || u == s || u == t {
                continue;
            }
            let (ds, dt) = (dist[s][u], dist[t][u]);
            let new = match linkage {
                Linkage::Average => (ns * ds + nt * dt) / (ns + nt),
                Linkage::Single => ds.min(dt),
                Linkage::Complete => ds.max(dt),
            };
            dist[s][u] = new;
            dist[u][s] = new;
        }
        alive[t] = false;
        sizes[s] += sizes[t];
        ids[s] = n + step;
    }
    Dendrogram { merges, labels }
}

/// Procrustes-aligned latent configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDraws {
    /// `draws[k][i]` is entity `i` in draw `k`.
    pub draws: Vec<Vec<Vec<f64>>>,
    /// Mean of the aligned draws.
    pub mean: Vec<Vec<f64>>,
    /// Number of draws aligned with a reflection.
    pub n_reflected: usize,
}

fn to_matrix(x: &[Vec<f64>]) -> DMatrix<f64> {
    let (n, d) = (x.len(), x.first().map_or(0, Vec::len));
    DMatrix::from_fn(n, d, |i, k| x[i][k])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn centered(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let centroid: Vec<f64> = (0..m.ncols()).map(|k| m.column(k).mean()).collect();
    let mut c = m.clone();
    for (k, mu) in centroid.iter().enumerate() {
        c.column_mut(k).add_scalar_mut(-mu);
    }
    (c, centroid)
}

/// Rigidly move `x` onto `target`. Returns the moved configuration and whether
/// a reflection was used.
pub fn align_to(x: &DMatrix<f64>, target: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (xc, _) = centered(x);
    let (tc, t_centroid) = centered(target);
    let translate = |mut m: DMatrix<f64>| {
        for (k, mu) in t_centroid.iter().enumerate() {
            m.column_mut(k).add_scalar_mut(*mu);
        }
        m
    };
    let scale = xc.norm() * tc.norm();
    if scale <= f64::EPSILON || !scale.is_finite() {
        log::warn!("degenerate configuration in Procrustes alignment; using identity");
        return (translate(xc), false);
    }

    let svd = (xc.transpose() * &tc).svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let best_fit = &u * &v_t;
    let d = xc.ncols();
    let proper = if best_fit.determinant() < 0.0 {
        let mut flip = DMatrix::<f64>::identity(d, d);
        flip[(d - 1, d - 1)] = -1.0;
        &u * flip * &v_t
    } else {
        best_fit.clone()
    };
    let residual = |r: &DMatrix<f64>| (&xc * r - &tc).norm_squared();
    let (res_proper, res_best) = (residual(&proper), residual(&best_fit));
    if res_best < 0.99 * res_proper {
        (translate(&xc * best_fit), true)
    } else {
        (translate(&xc * proper), false)
    }
}

/// Align each sampled configuration to a reference: first the initial draw, then
/// the mean of that alignment, then the mean once more.
pub fn procrustes_align(chain: &ChainOutput) -> AlignedDraws {
    assert!(!chain.draws.is_empty(), "empty chain");
    let originals: Vec<DMatrix<f64>> = chain.draws.iter().map(|d| to_matrix(&d.x)).collect();
    let mut reference = originals[0].clone();
    let mut aligned = Vec::new();
    let mut n_reflected = 0;
    for _ in 0..2 {
        n_reflected = 0;
        aligned = originals
            .iter()
            .map(|x| {
                let (a, reflected) = align_to(x, &reference);
                n_reflected += usize::from(reflected);
                a
            })
            .collect::<Vec<_>>();
        reference = aligned.iter().fold(DMatrix::zeros(reference.nrows(), reference.ncols()), |acc, a| acc + a)
            / aligned.len() as f64;
    }
    AlignedDraws { draws: aligned.iter().map(from_matrix).collect(), mean: from_matrix(&reference), n_reflected }
}

/// `i,j,delta_mean` rows for `i < j`.
pub fn write_delta_mean(d: &UpperTriangle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("i,j,delta_mean\n");
    for (i, j) in pairs(d.n()) {
        let _ = writeln!(out, "{i},{j},{:.16e}", d.get(i, j));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// `draw,entity,x0,x1,...` rows.
pub fn write_aligned(a: &AlignedDraws, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = a.mean.first().map_or(0, Vec::len);
    let mut out = String::from("draw,entity");
    for k in 0..dim {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    for (k, draw) in a.draws.iter().enumerate() {
        for (i, row) in draw.iter().enumerate() {
            let _ = write!(out, "{k},{i}");
            for v in row {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{AcceptanceRates, ModelState};
    use crate::state::euclidean;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn chain_of(draws: Vec<ModelState>) -> ChainOutput {
        ChainOutput { draws, n_burnin: 0, thin: 1, acceptance_rates: AcceptanceRates::default(), rng_seed: 0 }
    }

    fn state_with(x: Vec<Vec<f64>>, delta: UpperTriangle) -> ModelState {
        ModelState { x, delta, tau: vec![1.0], psi: 1.0, gamma: 1.0 }
    }

    #[test]
    fn mean_of_identical_and_two_draws() {
        let d = UpperTriangle::from_values(3, vec![0.5, 1.5, 2.5]);
        let s = state_with(vec![vec![0.0, 0.0]; 3], d.clone());
        assert_eq!(posterior_mean_delta(&chain_of(vec![s.clone(); 4])), d);
        let a = state_with(vec![vec![0.0]; 2], UpperTriangle::filled(2, 1.0));
        let b = state_with(vec![vec![0.0]; 2], UpperTriangle::filled(2, 3.0));
        assert_eq!(posterior_mean_delta(&chain_of(vec![a, b])).get(0, 1), 2.0);
    }

    #[test]
    fn mean_commutes_with_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 5;
        let draws: Vec<ModelState> = (0..10)
            .map(|_| state_with(vec![vec![0.0]; n], UpperTriangle::from_fn(n, |_, _| rng.random::<f64>() + 0.1)))
            .collect();
        let perm = [3, 0, 4, 1, 2];
        let permuted: Vec<ModelState> = draws
            .iter()
            .map(|s| state_with(s.x.clone(), UpperTriangle::from_fn(n, |i, j| s.delta.get(perm[i], perm[j]))))
            .collect();
        let m = posterior_mean_delta(&chain_of(draws));
        let mp = posterior_mean_delta(&chain_of(permuted));
        for (i, j) in pairs(n) {
            assert!((mp.get(i, j) - m.get(perm[i], perm[j])).abs() < 1e-14);
        }
    }

    #[test]
    fn two_leaves_merge_once() {
        let d = UpperTriangle::from_values(2, vec![0.7]);
        let g = agglomerate(&d, None, Linkage::Average);
        assert_eq!(g.merges, vec![Merge { a: 0, b: 1, height: 0.7 }]);
        assert_eq!(g.to_newick(), "(0:0.35,1:0.35);");
    }

    #[test]
    fn blocks_merge_before_crossing() {
        let block = |i: usize| usize::from(i >= 3);
        let d = UpperTriangle::from_fn(6, |i, j| if block(i) == block(j) { 0.1 } else { 1.0 });
        for linkage in [Linkage::Average, Linkage::Single, Linkage::Complete] {
            let g = agglomerate(&d, None, linkage);
            assert_eq!(g.merges.len(), 5);
            assert!(g.merges[..4].iter().all(|m| m.height == 0.1));
            assert_eq!(g.merges[4].height, 1.0);
            let (a, b) = (g.members(g.merges[4].a), g.members(g.merges[4].b));
            assert_eq!(a, vec![0, 1, 2]);
            assert_eq!(b, vec![3, 4, 5]);
        }
        // ties go to the smallest pair of ids
        let g = agglomerate(&d, None, Linkage::Average);
        assert_eq!((g.merges[0].a, g.merges[0].b), (0, 1));
    }

    #[test]
    fn ultrametric_heights_are_reproduced() {
        // ((0,1):0.2,(2,(3,4):0.1):0.5):0.9
        let u = [[0.0, 0.2, 0.9, 0.9, 0.9], [0.2, 0.0, 0.9, 0.9, 0.9], [0.9, 0.9, 0.0, 0.5, 0.5], [0.9, 0.9, 0.5, 0.0, 0.1], [
            0.9, 0.9, 0.5, 0.1, 0.0,
        ]];
        let d = UpperTriangle::from_fn(5, |i, j| u[i][j]);
        let g = agglomerate(&d, None, Linkage::Average);
        let heights: Vec<f64> = g.merges.iter().map(|m| m.height).collect();
        assert_eq!(heights, vec![0.1, 0.2, 0.5, 0.9]);
        for (i, j) in pairs(5) {
            assert_eq!(g.cophenetic(i, j), u[i][j]);
        }
    }

    #[test]
    fn heights_nondecreasing_and_relabel_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 8;
        let d = UpperTriangle::from_fn(n, |_, _| rng.random::<f64>() + 0.01);
        let perm: Vec<usize> = vec![5, 2, 7, 0, 1, 6, 3, 4];
        let dp = UpperTriangle::from_fn(n, |i, j| d.get(perm[i], perm[j]));
        for linkage in [Linkage::Average, Linkage::Single, Linkage::Complete] {
            let g = agglomerate(&d, None, linkage);
            let gp = agglomerate(&dp, None, linkage);
            assert!(g.merges.windows(2).all(|w| w[0].height <= w[1].height));
            for (i, j) in pairs(n) {
                assert_eq!(gp.cophenetic(i, j), g.cophenetic(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn newick_uses_labels() {
        let d = UpperTriangle::from_values(3, vec![0.2, 1.0, 1.0]);
        let g = agglomerate(&d, Some(vec!["a".into(), "b".into(), "c".into()]), Linkage::Average);
        assert_eq!(g.to_newick(), "(c:0.5,(a:0.1,b:0.1):0.4);");
    }

    fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        let qr = a.qr();
        let mut q = qr.q();
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        q
    }

    fn config(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
    }

    fn draws_chain(ms: &[DMatrix<f64>]) -> ChainOutput {
        chain_of(ms.iter().map(|m| state_with(from_matrix(m), UpperTriangle::filled(m.nrows(), 1.0))).collect())
    }

    #[test]
    fn rotated_copies_collapse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = config(6, 3, &mut rng);
        let ms: Vec<DMatrix<f64>> = (0..20)
            .map(|_| {
                let mut m = &base * random_rotation(3, &mut rng);
                let shift: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 5.0).collect();
                for (k, s) in shift.iter().enumerate() {
                    m.column_mut(k).add_scalar_mut(*s);
                }
                m
            })
            .collect();
        let a = procrustes_align(&draws_chain(&ms));
        assert_eq!(a.n_reflected, 0);
        for draw in &a.draws {
            for (row, mean) in draw.iter().zip(&a.mean) {
                for (v, mu) in row.iter().zip(mean) {
                    assert!((v - mu).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn isotropic_noise_leaves_sigma_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, d, sigma) = (40, 2, 0.05);
        let base = config(n, d, &mut rng);
        let ms: Vec<DMatrix<f64>> = (0..200)
            .map(|_| {
                let noisy = &base + DMatrix::from_fn(n, d, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); sigma * z });
                noisy * random_rotation(d, &mut rng)
            })
            .collect();
        let a = procrustes_align(&draws_chain(&ms));
        let mut ss = 0.0;
        for draw in &a.draws {
            for (row, mean) in draw.iter().zip(&a.mean) {
                ss += row.iter().zip(mean).map(|(v, mu)| (v - mu).powi(2)).sum::<f64>();
            }
        }
        let var = ss / (a.draws.len() * n * d) as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn alignment_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ms: Vec<DMatrix<f64>> = (0..15).map(|_| config(5, 4, &mut rng)).collect();
        let a = procrustes_align(&draws_chain(&ms));
        for (orig, al) in ms.iter().zip(&a.draws) {
            let o = from_matrix(orig);
            for (i, j) in pairs(5) {
                assert!((euclidean(&o[i], &o[j]) - euclidean(&al[i], &al[j])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mirror_images_are_reflected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = config(6, 2, &mut rng);
        let mut mirror = base.clone();
        mirror.column_mut(0).neg_mut();
        let (a, reflected) = align_to(&mirror, &base);
        assert!(reflected);
        assert!((a - base).norm() < 1e-10);
    }

    #[test]
    fn degenerate_configuration_uses_identity() {
        let zero = DMatrix::from_element(3, 2, 1.0);
        let target = DMatrix::from_fn(3, 2, |i, k| (i + k) as f64);
        let (a, reflected) = align_to(&zero, &target);
        assert!(!reflected);
        assert!(a.iter().all(|v| v.is_finite()));
    }
}
