//! Outlier-detection metrics: score normalization, ROC curves with AUC,
//! a discrepancy measure between direction sets, and reconstruction error
//! totals.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// An ROC curve swept over descending score thresholds, tied scores grouped
/// into single steps. Points run from (0,0) to (1,1), nondecreasing in both
/// coordinates; `auc` is their trapezoidal integral.
#[derive(Debug, Clone)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Affine rescaling of scores onto [0,1]. A constant sequence maps to all
/// zeros rather than dividing by the zero range.
pub fn normalize_scores(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyData);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.0; scores.len()]);
    }
    Ok(scores.iter().map(|s| (s - min) / (max - min)).collect())
}

/// ROC curve and AUC for binary outlier labels (1 = outlier scores high).
/// Grouping tied scores makes the AUC exactly the Mann–Whitney statistic
/// P(score_out > score_in) + ½·P(tie).
pub fn roc_auc(scores: &[f64], labels: &[i64]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l != 0 && l != 1) {
        return Err(Error::InvalidLabel(bad));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Advance over the whole tie group before emitting a point.
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let prev = *points.last().unwrap();
        let next = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (next.0 - prev.0) * (next.1 + prev.1) / 2.0;
        points.push(next);
        i = j;
    }
    Ok(RocCurve { points, auc })
}

/// Mean squared principal angle between paired columns, ignoring signs:
/// (1/q)·Σ arccos(|u_iᵀv_i|)². Zero iff the direction sets match columnwise
/// up to sign.
pub fn direction_discrepancy(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(Error::DimensionMismatch(format!(
            "direction sets are {:?} and {:?}",
            u.shape(),
            v.shape()
        )));
    }
    let q = u.ncols();
    if q == 0 {
        return Err(Error::EmptyData);
    }
    for (name, m) in [("first", u), ("second", v)] {
        for (i, c) in m.column_iter().enumerate() {
            if (c.norm() - 1.0).abs() > 1e-8 {
                return Err(Error::DimensionMismatch(format!(
                    "column {i} of the {name} set is not unit-norm"
                )));
            }
        }
    }
    let mut total = 0.0;
    for i in 0..q {
        let c = u.column(i).dot(&v.column(i)).abs().clamp(0.0, 1.0);
        total += c.acos().powi(2);
    }
    Ok(total / q as f64)
}

/// Sum of per-sample distances to the span of `u`: Σ_j ‖x_j − UUᵀx_j‖.
pub fn total_reconstruction_error(x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() != u.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, directions have {}",
            x.nrows(),
            u.nrows()
        )));
    }
    let coeff = u.tr_mul(x);
    let recon = u * coeff;
    let mut total = 0.0;
    for j in 0..x.ncols() {
        total += (x.column(j) - recon.column(j)).norm();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_scores(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_scores(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(
            normalize_scores(&[-1.0, 0.0, 3.0]).unwrap(),
            vec![0.0, 0.25, 1.0]
        );
        assert!(matches!(normalize_scores(&[]), Err(Error::EmptyData)));
        assert!(matches!(
            normalize_scores(&[1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn roc_examples() {
        let perfect = roc_auc(&[0.1, 0.2, 0.9, 0.8], &[0, 0, 1, 1]).unwrap();
        assert!((perfect.auc - 1.0).abs() <= 1e-12);

        let flat = roc_auc(&[0.3, 0.3, 0.3, 0.3], &[0, 1, 0, 1]).unwrap();
        assert!((flat.auc - 0.5).abs() <= 1e-12);
        // One tie group: the curve jumps straight from (0,0) to (1,1).
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);

        let half = roc_auc(&[0.9, 0.1, 0.8, 0.2], &[0, 0, 1, 1]).unwrap();
        assert!((half.auc - 0.5).abs() <= 1e-12);

        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[0, 0]),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[0, 2]),
            Err(Error::InvalidLabel(2))
        ));
        assert!(matches!(
            roc_auc(&[0.1], &[0, 1]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn roc_curve_shape() {
        let curve = roc_auc(
            &[0.9, 0.8, 0.8, 0.4, 0.3, 0.1],
            &[1, 1, 0, 1, 0, 0],
        )
        .unwrap();
        assert_eq!(*curve.points.first().unwrap(), (0.0, 0.0));
        assert_eq!(*curve.points.last().unwrap(), (1.0, 1.0));
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    fn mann_whitney(scores: &[f64], labels: &[i64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if si > sj {
                        wins += 1.0;
                    } else if si == sj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    proptest! {
        #[test]
        fn auc_is_the_mann_whitney_statistic(
            raw in proptest::collection::vec((0u8..4, 0u8..2), 4..40)
        ) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64 / 3.0).collect();
            let labels: Vec<i64> = raw.iter().map(|&(_, l)| l as i64).collect();
            prop_assume!(labels.iter().any(|&l| l == 0) && labels.iter().any(|&l| l == 1));
            let curve = roc_auc(&scores, &labels).unwrap();
            prop_assert!((curve.auc - mann_whitney(&scores, &labels)).abs() <= 1e-12);
        }

        #[test]
        fn auc_ignores_monotone_rescaling(
            raw in proptest::collection::vec((0.0f64..1.0, 0u8..2), 4..40)
        ) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| s).collect();
            let labels: Vec<i64> = raw.iter().map(|&(_, l)| l as i64).collect();
            prop_assume!(labels.iter().any(|&l| l == 0) && labels.iter().any(|&l| l == 1));
            let base = roc_auc(&scores, &labels).unwrap().auc;
            let affine: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
            let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
            prop_assert!((roc_auc(&affine, &labels).unwrap().auc - base).abs() <= 1e-12);
            prop_assert!((roc_auc(&cubed, &labels).unwrap().auc - base).abs() <= 1e-12);

            let flipped: Vec<i64> = labels.iter().map(|l| 1 - l).collect();
            let complement = roc_auc(&scores, &flipped).unwrap().auc;
            prop_assert!((base + complement - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn discrepancy_examples() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let v = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(direction_discrepancy(&u, &u).unwrap(), 0.0);
        let d = direction_discrepancy(&u, &v).unwrap();
        assert!((d - (std::f64::consts::FRAC_PI_2).powi(2)).abs() <= 1e-12);

        let a = std::f64::consts::FRAC_PI_6;
        let b = std::f64::consts::FRAC_PI_3;
        let u2 = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let v2 = DMatrix::from_column_slice(2, 2, &[a.cos(), a.sin(), b.cos(), b.sin()]);
        let d = direction_discrepancy(&u2, &v2).unwrap();
        assert!((d - (a * a + b * b) / 2.0).abs() <= 1e-12);

        // Sign flips and argument order do not matter.
        let flipped = -&v2;
        assert!(
            (direction_discrepancy(&u2, &flipped).unwrap() - d).abs() <= 1e-12
        );
        assert!((direction_discrepancy(&v2, &u2).unwrap() - d).abs() <= 1e-12);

        let long = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        assert!(direction_discrepancy(&long, &u).is_err());
        let wide = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(matches!(
            direction_discrepancy(&u, &wide),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn reconstruction_error_examples() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let x = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert!((total_reconstruction_error(&x, &u).unwrap() - 4.0).abs() <= 1e-12);

        let in_span = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, -2.0, 0.0, 0.5, 0.0]);
        assert!(total_reconstruction_error(&in_span, &u).unwrap() <= 1e-12);

        let two = DMatrix::from_column_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        assert!((total_reconstruction_error(&two, &u).unwrap() - 2.0).abs() <= 1e-12);

        let bad = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(matches!(
            total_reconstruction_error(&bad, &u),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
