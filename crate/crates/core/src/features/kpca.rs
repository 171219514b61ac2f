//! Kernel principal component analysis.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{dot, squared_euclidean, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Rbf { gamma: f64 },
    /// `(gamma·⟨x, y⟩ + coef0)^degree`
    Poly { degree: u32, gamma: f64, coef0: f64 },
    Linear,
}

impl Kernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => (-gamma * squared_euclidean(a, b)).exp(),
            Kernel::Poly {
                degree,
                gamma,
                coef0,
            } => (gamma * dot(a, b) + coef0).powi(degree as i32),
            Kernel::Linear => dot(a, b),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Rbf { .. } => "rbf",
            Kernel::Poly { .. } => "poly",
            Kernel::Linear => "linear",
        }
    }

    /// Kernel by name with the usual `1/f` scale for `f` input features.
    pub fn default_for(name: &str, features: usize) -> Option<Self> {
        let gamma = 1.0 / features.max(1) as f64;
        match name {
            "rbf" => Some(Kernel::Rbf { gamma }),
            "poly" => Some(Kernel::Poly {
                degree: 3,
                gamma,
                coef0: 1.0,
            }),
            "linear" => Some(Kernel::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    pub kernel: Kernel,
    pub training_rows: Matrix,
    /// Unit eigenvectors of the centered kernel matrix, one per column (m×p).
    pub eigenvectors: Matrix,
    /// Matching eigenvalues, positive and descending.
    pub eigenvalues: Vec<f64>,
    /// Column means of the uncentered training kernel matrix.
    pub row_means: Vec<f64>,
    pub grand_mean: f64,
    pub p: usize,
}

impl KpcaModel {
    pub fn input_width(&self) -> usize {
        self.training_rows.cols()
    }

    /// Projects one row onto the `p` components.
    pub fn transform_row_into(&self, row: &[f64], out: &mut [f64]) {
        let m = self.training_rows.rows();
        let k: Vec<f64> = self
            .training_rows
            .iter_rows()
            .map(|t| self.kernel.eval(row, t))
            .collect();
        let k_mean = k.iter().sum::<f64>() / m as f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &ki) in k.iter().enumerate() {
            let centered = ki - k_mean - self.row_means[i] + self.grand_mean;
            let v = self.eigenvectors.row(i);
            for (o, vj) in out.iter_mut().zip(v) {
                *o += centered * vj;
            }
        }
        for (o, l) in out.iter_mut().zip(&self.eigenvalues) {
            *o /= l.sqrt();
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(Error::WidthMismatch {
                context: "KPCA",
                expected: self.input_width(),
                actual: x.cols(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let mut out = vec![0.0; self.p];
                self.transform_row_into(x.row(i), &mut out);
                out
            })
            .collect();
        let mut data = Vec::with_capacity(x.rows() * self.p);
        rows.into_iter().for_each(|r| data.extend(r));
        Matrix::from_vec(x.rows(), self.p, data)
    }
}

/// Fits KPCA on `x` (all rows become reference rows) and keeps the top `p`
/// components with positive eigenvalues.
pub fn kpca_fit(x: &Matrix, kernel: Kernel, p: usize) -> Result<KpcaModel> {
    let m = x.rows();
    if m < 2 {
        return Err(Error::Data("KPCA needs at least two rows".into()));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("KPCA needs p ≥ 1".into()));
    }
    if !x.all_finite() {
        return Err(Error::Data("KPCA input contains non-finite values".into()));
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (0..m).map(|j| kernel.eval(x.row(i), x.row(j))).collect())
        .collect();
    let mut k = DMatrix::<f64>::zeros(m, m);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            k[(i, j)] = *v;
        }
    }
    let row_means: Vec<f64> = (0..m).map(|i| k.row(i).sum() / m as f64).collect();
    let grand_mean = row_means.iter().sum::<f64>() / m as f64;
    for i in 0..m {
        for j in 0..m {
            k[(i, j)] += grand_mean - row_means[i] - row_means[j];
        }
    }
    // enforce exact symmetry before the symmetric solver
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = s;
            k[(j, i)] = s;
        }
    }
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let floor = 1e-10 * top.max(1e-300);
    let usable = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > floor)
        .count();
    if usable == 0 {
        return Err(Error::Data(
            "centered kernel matrix has no positive eigenvalues".into(),
        ));
    }
    let p_eff = if p > usable {
        log::warn!("KPCA: only {usable} positive eigenvalues; reducing p from {p}");
        usable
    } else {
        p
    };
    let mut vectors = Matrix::zeros(m, p_eff);
    let mut values = Vec::with_capacity(p_eff);
    for (c, &idx) in order.iter().take(p_eff).enumerate() {
        let col = eig.eigenvectors.column(idx);
        // sign rule: the largest-magnitude entry is positive
        let pivot = (0..m).fold(0, |best, i| if col[i].abs() > col[best].abs() { i } else { best });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            vectors.set(i, c, sign * col[i]);
        }
        values.push(eig.eigenvalues[idx]);
    }
    Ok(KpcaModel {
        kernel,
        training_rows: x.clone(),
        eigenvectors: vectors,
        eigenvalues: values,
        row_means,
        grand_mean,
        p: p_eff,
    })
}

/// Projections of the fitted rows: `sqrt(λ_j)·v_ij`.
pub fn kpca_fitted_projection(model: &KpcaModel) -> Matrix {
    let m = model.training_rows.rows();
    let mut out = Matrix::zeros(m, model.p);
    for i in 0..m {
        for j in 0..model.p {
            out.set(i, j, model.eigenvalues[j].sqrt() * model.eigenvectors.get(i, j));
        }
    }
    out
}

pub fn kpca_transform(model: &KpcaModel, x: &Matrix) -> Result<Matrix> {
    model.transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, f: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for _ in 0..n {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let row: Vec<f64> = (0..f)
                .map(|j| z * (j as f64 + 1.0) + rng.gen_range(-0.3..0.3) * (f - j) as f64)
                .collect();
            rows.push(row);
        }
        Matrix::from_rows(&rows).unwrap()
    }

    fn centered(x: &Matrix) -> Matrix {
        let means: Vec<f64> = (0..x.cols())
            .map(|j| x.column(j).iter().sum::<f64>() / x.rows() as f64)
            .collect();
        let rows: Vec<Vec<f64>> = x
            .iter_rows()
            .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    /// Cyclic Jacobi eigensolver for a small symmetric matrix.
    fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
            .collect();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let (vp, vq) = (row[p], row[q]);
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        ((0..n).map(|i| a[i][i]).collect(), v)
    }

    #[test]
    fn linear_kernel_matches_pca() {
        let x = centered(&data(40, 4, 2));
        let f = x.cols();
        let cov: Vec<Vec<f64>> = (0..f)
            .map(|a| {
                (0..f)
                    .map(|b| x.iter_rows().map(|r| r[a] * r[b]).sum::<f64>())
                    .collect()
            })
            .collect();
        let (vals, vecs) = jacobi(cov);
        let mut order: Vec<usize> = (0..f).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        let model = kpca_fit(&x, Kernel::Linear, 3).unwrap();
        let proj = model.transform(&x).unwrap();
        for (c, &idx) in order.iter().take(3).enumerate() {
            let mut pc: Vec<f64> = x
                .iter_rows()
                .map(|r| (0..f).map(|j| r[j] * vecs[j][idx]).sum())
                .collect();
            let pivot = (0..pc.len())
                .fold(0, |b, i| if pc[i].abs() > pc[b].abs() { i } else { b });
            if pc[pivot] < 0.0 {
                pc.iter_mut().for_each(|v| *v = -*v);
            }
            assert!((model.eigenvalues[c] - vals[idx]).abs() < 1e-8 * vals[idx]);
            for i in 0..x.rows() {
                assert!((proj.get(i, c) - pc[i]).abs() < 1e-8, "{} vs {}", proj.get(i, c), pc[i]);
            }
        }
    }

    #[test]
    fn training_rows_reproduce_fit() {
        let x = data(30, 3, 5);
        for kernel in [
            Kernel::Rbf { gamma: 0.5 },
            Kernel::Poly {
                degree: 2,
                gamma: 0.3,
                coef0: 1.0,
            },
        ] {
            let model = kpca_fit(&x, kernel, 4).unwrap();
            let fitted = kpca_fitted_projection(&model);
            let again = model.transform(&x).unwrap();
            for (a, b) in fitted.as_slice().iter().zip(again.as_slice()) {
                assert!((a - b).abs() < 1e-9);
            }
            // columns uncorrelated
            for a in 0..model.p {
                for b in a + 1..model.p {
                    let cab: f64 = fitted.iter_rows().map(|r| r[a] * r[b]).sum();
                    let caa: f64 = fitted.iter_rows().map(|r| r[a] * r[a]).sum();
                    assert!(cab.abs() < 1e-6 * caa);
                }
            }
            assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            assert!(model.eigenvalues.iter().all(|&l| l > 0.0));
        }
    }

    #[test]
    fn rbf_self_similarity_is_one() {
        let k = Kernel::Rbf { gamma: 3.7 };
        assert_eq!(k.eval(&[1.0, -2.0, 5.0], &[1.0, -2.0, 5.0]), 1.0);
    }

    #[test]
    fn excess_components_are_dropped() {
        let x = data(20, 2, 1);
        let model = kpca_fit(&x, Kernel::Linear, 10).unwrap();
        assert_eq!(model.p, 2);
        assert!(model.transform(&Matrix::zeros(1, 3)).is_err());
    }
}
