//! Hellinger distances between feature curves and replicate tensor assembly.

use crate::audio::FeatureCurve;
use crate::error::{HmdsError, Result};
use crate::tensor::{normalize_tensor, DistanceTensor};

/// Hellinger distance `(1/sqrt 2) * || sqrt(P) - sqrt(Q) ||_2`, in `[0, 1]`.
pub fn hellinger(p: &FeatureCurve, q: &FeatureCurve) -> Result<f64> {
    hellinger_slices(p.values(), q.values())
}

/// [`hellinger`] on raw probability vectors.
pub fn hellinger_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(HmdsError::LengthMismatch { left: p.len(), right: q.len() });
    }
    // Kahan summation; curves can be long with tiny per-term values
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (&a, &b) in p.iter().zip(q) {
        let d = a.sqrt() - b.sqrt();
        let term = d * d - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    Ok((0.5 * sum).sqrt().min(1.0))
}

/// `curves[i][p]` for entity `i` on replicate `p`, all of one length.
#[derive(Debug, Clone)]
pub struct CurveSet {
    curves: Vec<Vec<FeatureCurve>>,
}

impl CurveSet {
    pub fn new(curves: Vec<Vec<FeatureCurve>>) -> Result<Self> {
        let m = curves.first().map_or(0, Vec::len);
        if curves.len() < 2 || m == 0 {
            return Err(HmdsError::InvalidInput("need at least 2 entities and 1 replicate".into()));
        }
        if let Some(row) = curves.iter().find(|r| r.len() != m) {
            return Err(HmdsError::InvalidInput(format!(
                "ragged curve set: {} replicates where {m} expected",
                row.len()
            )));
        }
        let len = curves[0][0].len();
        if let Some(c) = curves.iter().flatten().find(|c| c.len() != len) {
            return Err(HmdsError::LengthMismatch { left: len, right: c.len() });
        }
        Ok(Self { curves })
    }

    pub fn n_entities(&self) -> usize {
        self.curves.len()
    }

    pub fn n_replicates(&self) -> usize {
        self.curves[0].len()
    }

    pub fn get(&self, i: usize, p: usize) -> &FeatureCurve {
        &self.curves[i][p]
    }
}

/// Unnormalized pairwise Hellinger distances, one matrix per replicate.
pub fn raw_distances(cs: &CurveSet) -> Result<DistanceTensor> {
    let mut err = None;
    let t = DistanceTensor::from_fn(cs.n_entities(), cs.n_replicates(), |i, j, p| {
        hellinger(cs.get(i, p), cs.get(j, p)).unwrap_or_else(|e| {
            err.get_or_insert(e);
            f64::NAN
        })
    });
    match err {
        Some(e) => Err(e),
        None => Ok(t),
    }
}

/// Pairwise Hellinger distances normalized jointly over all replicates and floored.
pub fn build_tensor(cs: &CurveSet, floor: f64) -> Result<DistanceTensor> {
    let raw = raw_distances(cs)?;
    if raw.max_value() == 0.0 {
        // identical curves everywhere: every pair sits at the floor
        return Ok(raw.map(|_| floor));
    }
    normalize_tensor(&raw, floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::validate_tensor;

    fn curve(v: &[f64]) -> FeatureCurve {
        FeatureCurve::from_weights(v.to_vec())
    }

    #[test]
    fn identity_and_disjoint_support() {
        let p = curve(&[0.2, 0.3, 0.5]);
        assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
        assert!((hellinger(&curve(&[1.0, 0.0]), &curve(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_pair() {
        // (1/sqrt2) sqrt((sqrt.5 - sqrt.25)^2 + (sqrt.5 - sqrt.75)^2)
        let direct = ((0.5f64.sqrt() - 0.5).powi(2) + (0.5f64.sqrt() - 0.75f64.sqrt()).powi(2)).sqrt()
            / 2f64.sqrt();
        let h = hellinger(&curve(&[0.5, 0.5]), &curve(&[0.25, 0.75])).unwrap();
        assert!((h - direct).abs() < 1e-15);
        assert!((h - 0.18459).abs() < 1e-5);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(matches!(
            hellinger(&curve(&[1.0, 1.0]), &curve(&[1.0, 1.0, 1.0])),
            Err(HmdsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn identical_curves_floor_everything() {
        let c = curve(&[1.0, 2.0, 3.0]);
        let cs = CurveSet::new(vec![vec![c.clone(), c.clone()]; 3]).unwrap();
        let t = build_tensor(&cs, 1e-6).unwrap();
        assert!(t.values().iter().all(|&v| v == 1e-6));
    }

    #[test]
    fn two_entities_normalize_to_one() {
        let cs = CurveSet::new(vec![vec![curve(&[1.0, 2.0])], vec![curve(&[2.0, 1.0])]]).unwrap();
        let t = build_tensor(&cs, 1e-6).unwrap();
        assert_eq!(t.values(), &[1.0]);
    }

    #[test]
    fn three_entities_match_brute_force() {
        let raw = [[0.1, 0.2, 0.7], [0.3, 0.3, 0.4], [0.6, 0.3, 0.1]];
        let cs = CurveSet::new(raw.iter().map(|r| vec![curve(r)]).collect()).unwrap();
        let t = build_tensor(&cs, 1e-6).unwrap();
        let mut brute = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| (raw[i][k].sqrt() - raw[j][k].sqrt()).powi(2)).sum();
                brute[i][j] = (s / 2.0).sqrt();
            }
        }
        let max = brute.iter().flatten().copied().fold(0.0, f64::max);
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.get(i, j, 0) - brute[i][j] / max).abs() < 1e-14);
            }
        }
        assert!(validate_tensor(&t).is_empty());
    }

    #[test]
    fn permuting_entities_permutes_tensor() {
        let rows: Vec<Vec<FeatureCurve>> = (0..4)
            .map(|i| (0..2).map(|p| curve(&[1.0 + i as f64, 2.0 + p as f64, 0.5 + (i * p) as f64])).collect())
            .collect();
        let perm = [2, 0, 3, 1];
        let t = build_tensor(&CurveSet::new(rows.clone()).unwrap(), 1e-6).unwrap();
        let permuted_rows = perm.iter().map(|&k| rows[k].clone()).collect();
        let tp = build_tensor(&CurveSet::new(permuted_rows).unwrap(), 1e-6).unwrap();
        assert_eq!(tp, t.permute(&perm));
    }

    #[test]
    fn ragged_sets_are_rejected() {
        let c = curve(&[1.0, 1.0]);
        assert!(CurveSet::new(vec![vec![c.clone(), c.clone()], vec![c.clone()]]).is_err());
        assert!(CurveSet::new(vec![vec![c.clone()], vec![curve(&[1.0, 1.0, 1.0])]]).is_err());
    }
}
