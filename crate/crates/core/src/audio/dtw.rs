use super::chroma::Chromagram;

/// Monotone alignment of source frames to reference frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    /// `(source_frame, reference_frame)`, starting at `(0, 0)` and ending at the last frame of each.
    pub pairs: Vec<(usize, usize)>,
    /// Cumulative frame cost along the path.
    pub cost: f64,
}

impl WarpPath {
    pub fn source_len(&self) -> usize {
        self.pairs.last().map_or(0, |p| p.0 + 1)
    }

    pub fn reference_len(&self) -> usize {
        self.pairs.last().map_or(0, |p| p.1 + 1)
    }

    /// Boundary, monotonicity and unit-step constraints.
    pub fn is_valid(&self) -> bool {
        if self.pairs.first() != Some(&(0, 0)) {
            return false;
        }
        self.pairs.windows(2).all(|w| {
            let (ds, dr) = (w[1].0 as i64 - w[0].0 as i64, w[1].1 as i64 - w[0].1 as i64);
            (0..=1).contains(&ds) && (0..=1).contains(&dr) && ds + dr > 0
        })
    }
}

/// `1 - cos` between two chroma frames; zero when both are silent, one when only one is.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    match (na > 0.0, nb > 0.0) {
        (false, false) => 0.0,
        (true, true) => (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0),
        _ => 1.0,
    }
}

/// Sum of frame costs along an arbitrary path.
pub fn path_cost(src: &Chromagram, reference: &Chromagram, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(s, r)| cosine_distance(&src.frame(s), &reference.frame(r))).sum()
}

#[derive(Clone, Copy)]
enum Step {
    Diagonal,
    Reference,
    Source,
}

/// Dynamic time warping with steps `(1,1)`, `(0,1)`, `(1,0)` and cosine frame cost.
///
/// Ties prefer the diagonal, then a reference advance, then a source advance.
/// Both chromagrams must have at least one frame.
pub fn dtw_align(src: &Chromagram, reference: &Chromagram) -> WarpPath {
    let (ns, nr) = (src.n_frames(), reference.n_frames());
    assert!(ns > 0 && nr > 0, "dtw_align needs nonempty chromagrams");
    let src_frames: Vec<[f64; 12]> = (0..ns).map(|t| src.frame(t)).collect();
    let ref_frames: Vec<[f64; 12]> = (0..nr).map(|t| reference.frame(t)).collect();

    // rolling accumulated cost over the reference axis; full step table for backtracking
    let mut steps = vec![Step::Diagonal; ns * nr];
    let mut prev = vec![f64::INFINITY; nr];
    let mut cur = vec![f64::INFINITY; nr];
    for s in 0..ns {
        for r in 0..nr {
            let c = cosine_distance(&src_frames[s], &ref_frames[r]);
            if s == 0 && r == 0 {
                cur[0] = c;
                continue;
            }
            let mut best = (f64::INFINITY, Step::Diagonal);
            if s > 0 && r > 0 {
                best = (prev[r - 1], Step::Diagonal);
            }
            if r > 0 && cur[r - 1] < best.0 {
                best = (cur[r - 1], Step::Reference);
            }
            if s > 0 && prev[r] < best.0 {
                best = (prev[r], Step::Source);
            }
            cur[r] = best.0 + c;
            steps[s * nr + r] = best.1;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let cost = prev[nr - 1];

    let (mut s, mut r) = (ns - 1, nr - 1);
    let mut pairs = vec![(s, r)];
    while (s, r) != (0, 0) {
        match steps[s * nr + r] {
            Step::Diagonal => {
                s -= 1;
                r -= 1;
            }
            Step::Reference => r -= 1,
            Step::Source => s -= 1,
        }
        pairs.push((s, r));
    }
    pairs.reverse();
    WarpPath { pairs, cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_chroma(t: usize, seed: u64) -> Chromagram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<[f64; 12]> = (0..t).map(|_| std::array::from_fn(|_| rng.random::<f64>().powi(4))).collect();
        Chromagram::from_frames(&frames, (0..t).map(|k| k as f64 * 0.1).collect())
    }

    #[test]
    fn self_alignment_is_diagonal_with_zero_cost() {
        let c = random_chroma(40, 1);
        let w = dtw_align(&c, &c);
        assert!(w.is_valid());
        assert_eq!(w.pairs, (0..40).map(|k| (k, k)).collect::<Vec<_>>());
        assert!(w.cost < 1e-12);
    }

    #[test]
    fn duplicated_frames_give_half_slope() {
        let reference = random_chroma(30, 2);
        let frames: Vec<[f64; 12]> = (0..60).map(|k| reference.frame(k / 2)).collect();
        let src = Chromagram::from_frames(&frames, (0..60).map(|k| k as f64 * 0.05).collect());
        let w = dtw_align(&src, &reference);
        assert!(w.is_valid());
        assert_eq!(w.pairs.len(), 60);
        for &(s, r) in &w.pairs {
            assert_eq!(r, s / 2);
        }
        assert!(w.cost < 1e-12);
        let slope = (w.pairs[59].1 - w.pairs[0].1) as f64 / 59.0;
        assert!((slope - 0.5).abs() < 0.01);
    }

    #[test]
    fn reversed_source_costs_more() {
        let c = random_chroma(25, 3);
        let frames: Vec<[f64; 12]> = (0..25).rev().map(|k| c.frame(k)).collect();
        let rev = Chromagram::from_frames(&frames, c.frame_times.clone());
        let w = dtw_align(&rev, &c);
        assert!(w.is_valid());
        assert_eq!(w.source_len(), 25);
        assert_eq!(w.reference_len(), 25);
        assert!(w.cost > dtw_align(&c, &c).cost + 0.1);
    }

    #[test]
    fn optimal_cost_bounds_any_valid_path() {
        let a = random_chroma(12, 4);
        let b = random_chroma(9, 5);
        let w = dtw_align(&a, &b);
        assert!((path_cost(&a, &b, &w.pairs) - w.cost).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let (mut s, mut r) = (0, 0);
            let mut pairs = vec![(0, 0)];
            while (s, r) != (11, 8) {
                let choice = rng.random_range(0..3);
                if (choice == 0 || r == 8) && s < 11 {
                    s += 1;
                } else if (choice == 1 || s == 11) && r < 8 {
                    r += 1;
                } else {
                    s += 1;
                    r += 1;
                }
                pairs.push((s, r));
            }
            assert!(path_cost(&a, &b, &pairs) >= w.cost - 1e-12);
        }
    }

    #[test]
    fn cosine_distance_edge_cases() {
        assert_eq!(cosine_distance(&[0.0; 3], &[0.0; 3]), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!(cosine_distance(&[1.0, 2.0], &[2.0, 4.0]) < 1e-15);
    }
}
