use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-column standardization with population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ZScoreScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Data("cannot fit a scaler on zero rows".into()));
        }
        if !x.all_finite() {
            return Err(Error::Data("scaler input contains non-finite values".into()));
        }
        let n = x.rows() as f64;
        let mut means = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { means, stds })
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.width()).filter(|&j| self.stds[j] == 0.0).collect()
    }

    pub fn transform_row_into(&self, row: &[f64], out: &mut [f64]) {
        for (j, (o, v)) in out.iter_mut().zip(row).enumerate() {
            let s = self.stds[j];
            *o = if s == 0.0 { 0.0 } else { (v - self.means[j]) / s };
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width() {
            return Err(Error::WidthMismatch {
                context: "z-score",
                expected: self.width(),
                actual: x.cols(),
            });
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.transform_row_into(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }
}

pub fn zscore_fit_apply(x: &Matrix) -> Result<(ZScoreScaler, Matrix)> {
    let scaler = ZScoreScaler::fit(x)?;
    let out = scaler.transform(x)?;
    Ok((scaler, out))
}

pub fn zscore_apply(scaler: &ZScoreScaler, x: &Matrix) -> Result<Matrix> {
    scaler.transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_values() {
        let x = Matrix::column_vector(&[1.0, 2.0, 3.0]);
        let (s, z) = zscore_fit_apply(&x).unwrap();
        let sigma = (2.0f64 / 3.0).sqrt();
        assert_eq!(s.means, vec![2.0]);
        assert!((s.stds[0] - sigma).abs() < 1e-15);
        let c = z.column(0);
        assert!((c[0] + 1.224745).abs() < 1e-6);
        assert_eq!(c[1], 0.0);
        assert!((c[2] - 1.224745).abs() < 1e-6);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Matrix::column_vector(&[5.0, 5.0, 5.0]);
        let (s, z) = zscore_fit_apply(&x).unwrap();
        assert_eq!(z.column(0), vec![0.0; 3]);
        assert_eq!(s.constant_columns(), vec![0]);
    }

    #[test]
    fn mean_maps_to_zero_on_unseen_data() {
        let x = Matrix::from_rows(&[[1.0, 10.0], [3.0, 30.0]]).unwrap();
        let s = ZScoreScaler::fit(&x).unwrap();
        let t = zscore_apply(&s, &Matrix::from_rows(&[[2.0, 20.0]]).unwrap()).unwrap();
        assert_eq!(t.row(0), &[0.0, 0.0]);
        assert!(zscore_apply(&s, &Matrix::column_vector(&[1.0])).is_err());
    }

    proptest! {
        #[test]
        fn standardized_moments(
            rows in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 3), 2..60)
        ) {
            let x = Matrix::from_rows(&rows).unwrap();
            let (s, z) = zscore_fit_apply(&x).unwrap();
            for j in 0..3 {
                if s.stds[j] == 0.0 {
                    continue;
                }
                let c = z.column(j);
                let n = c.len() as f64;
                let mean = c.iter().sum::<f64>() / n;
                let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                // skip numerically degenerate columns (spread far below magnitude)
                if s.stds[j] < 1e-6 * s.means[j].abs() {
                    continue;
                }
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((sd - 1.0).abs() < 1e-9);
            }
        }
    }
}
