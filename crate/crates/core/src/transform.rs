//! Data-driven feature transform applied before every distance computation.
//!
//! Each feature is centred on its Hazen median and divided by
//! `sigma_hat^gamma`, where `sigma_hat = IQR / 1.349` is a robust scale and
//! `gamma` grows from 0 towards 1 as the spread of the per-feature scales
//! becomes more heterogeneous. With `gamma = 0` the map is a pure translation.

use serde::{Deserialize, Serialize};

use crate::stats::{coefficient_of_variation, hazen_iqr_sorted, hazen_quantile_sorted, StatsError};

/// Ratio between the IQR and the standard deviation of a normal distribution.
const IQR_TO_SIGMA: f64 = 1.349;
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformState {
    pub median: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub gamma: f64,
}

impl TransformState {
    /// Identity-like transform (zero median, unit scale, `gamma = 0`).
    pub fn identity(dim: usize) -> Self {
        Self {
            median: vec![0.0; dim],
            sigma_hat: vec![1.0; dim],
            gamma: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.median.len()
    }

    /// Fit medians, robust scales and the scale exponent from `points`.
    pub fn fit<P: AsRef<[f64]>>(points: &[P]) -> Result<Self, StatsError> {
        let first = points.first().ok_or(StatsError::EmptySample)?;
        let dim = first.as_ref().len();
        let mut median = Vec::with_capacity(dim);
        let mut raw_scale = Vec::with_capacity(dim);
        let mut column = Vec::with_capacity(points.len());
        for j in 0..dim {
            column.clear();
            for p in points {
                let p = p.as_ref();
                if p.len() != dim {
                    return Err(StatsError::DimensionMismatch {
                        expected: dim,
                        got: p.len(),
                    });
                }
                column.push(p[j]);
            }
            column.sort_by(f64::total_cmp);
            median.push(hazen_quantile_sorted(&column, 0.5));
            raw_scale.push(hazen_iqr_sorted(&column) / IQR_TO_SIGMA);
        }
        let usable: Vec<f64> = raw_scale
            .iter()
            .copied()
            .filter(|s| s.is_finite() && *s > 0.0)
            .collect();
        let gamma = scale_exponent(&usable);
        let sigma_hat = raw_scale.iter().map(|s| s.max(SCALE_FLOOR)).collect();
        Ok(Self {
            median,
            sigma_hat,
            gamma,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, StatsError> {
        if x.len() != self.dim() {
            return Err(StatsError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    /// Transform `x` into `out` without allocating; lengths must match.
    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        if self.gamma == 0.0 {
            for ((o, v), m) in out.iter_mut().zip(x).zip(&self.median) {
                *o = v - m;
            }
        } else {
            for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.median).zip(&self.sigma_hat) {
                *o = (v - m) / s.powf(self.gamma);
            }
        }
    }
}

/// `max(1 - 1/cv^2, 0)` over positive finite scales, 0 when cv is 0 or undefined.
pub fn scale_exponent(positive_scales: &[f64]) -> f64 {
    match coefficient_of_variation(positive_scales) {
        Some(cv) if cv > 0.0 && cv.is_finite() => (1.0 - 1.0 / (cv * cv)).clamp(0.0, 1.0),
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn gamma_examples() {
        // equal spreads: cv = 0
        assert_eq!(scale_exponent(&[2.0, 2.0, 2.0]), 0.0);
        // {1, 3}: population cv = 0.5 -> 1 - 4 < 0
        assert_eq!(scale_exponent(&[1.0, 3.0]), 0.0);
        // {1, 1, 1, 5}: mean 2, population std sqrt(3) -> cv^2 = 0.75 -> gamma 0
        assert_eq!(scale_exponent(&[1.0, 1.0, 1.0, 5.0]), 0.0);
        assert_eq!(scale_exponent(&[]), 0.0);
    }

    #[test]
    fn gamma_from_exact_cv() {
        // Values {x, x, x, y}: mean m = (3x + y)/4, var = 3/16 (y - x)^2.
        // cv = sqrt(3)/4 * (y - x) / m. With x = 1: cv = 1 -> y solves sqrt3 (y-1) = 3 + y.
        let y1 = (3.0 + 3f64.sqrt()) / (3f64.sqrt() - 1.0);
        let cv1 = coefficient_of_variation(&[1.0, 1.0, 1.0, y1]).unwrap();
        assert!((cv1 - 1.0).abs() < 1e-12);
        assert!(scale_exponent(&[1.0, 1.0, 1.0, y1]).abs() < 1e-12);
        // Eight values {x,...,x,y}: cv = sqrt(7)(y - x) / (7x + y); cv = 2 with x = 1.
        let s7 = 7f64.sqrt();
        let y2 = (14.0 + s7) / (s7 - 2.0);
        let mut v = vec![1.0; 7];
        v.push(y2);
        assert!((coefficient_of_variation(&v).unwrap() - 2.0).abs() < 1e-12);
        assert!((scale_exponent(&v) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn fit_with_equal_spreads_has_zero_gamma() {
        let pts = vec![vec![0.0, 10.0], vec![1.0, 11.0], vec![2.0, 12.0], vec![3.0, 13.0]];
        let t = TransformState::fit(&pts).unwrap();
        assert_eq!(t.gamma, 0.0);
        assert_eq!(t.median, vec![1.5, 11.5]);
        assert!((t.sigma_hat[0] - 2.0 / 1.349).abs() < 1e-12);
    }

    #[test]
    fn fit_floors_zero_scale_and_ignores_it_for_gamma() {
        let pts = vec![vec![0.0, 5.0], vec![1.0, 5.0], vec![2.0, 5.0]];
        let t = TransformState::fit(&pts).unwrap();
        assert_eq!(t.sigma_hat[1], 1e-12);
        assert_eq!(t.gamma, 0.0);
        assert!(TransformState::fit::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn apply_examples() {
        let t = TransformState {
            median: vec![1.0, 1.0],
            sigma_hat: vec![4.0, 4.0],
            gamma: 1.0,
        };
        assert_eq!(t.apply(&[5.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(t.apply(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        let centred = TransformState {
            median: vec![2.0, -1.0],
            sigma_hat: vec![3.0, 9.0],
            gamma: 0.0,
        };
        assert_eq!(centred.apply(&[5.0, 1.0]).unwrap(), vec![3.0, 2.0]);
        assert!(t.apply(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn zero_gamma_preserves_distances(
            pts in prop::collection::vec(prop::collection::vec(-50f64..50.0, 3), 2..20),
        ) {
            let mut t = TransformState::fit(&pts).unwrap();
            t.gamma = 0.0;
            let z: Vec<Vec<f64>> = pts.iter().map(|p| t.apply(p).unwrap()).collect();
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    prop_assert!((dist(&pts[i], &pts[j]) - dist(&z[i], &z[j])).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn gamma_invariant_under_uniform_rescaling(
            pts in prop::collection::vec(prop::collection::vec(-50f64..50.0, 4), 3..25),
            c in 0.01f64..100.0,
        ) {
            let t = TransformState::fit(&pts).unwrap();
            let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| v * c).collect()).collect();
            let ts = TransformState::fit(&scaled).unwrap();
            prop_assert!((t.gamma - ts.gamma).abs() < 1e-9);
            prop_assert!(t.gamma >= 0.0 && t.gamma <= 1.0);
        }

        #[test]
        fn median_maps_to_origin(
            pts in prop::collection::vec(prop::collection::vec(-50f64..50.0, 3), 1..20),
        ) {
            let t = TransformState::fit(&pts).unwrap();
            let z = t.apply(&t.median).unwrap();
            prop_assert!(z.iter().all(|v| *v == 0.0));
        }
    }
}
