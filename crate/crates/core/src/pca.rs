//! Principal-component projection backed by a cyclic Jacobi eigensolver.

/// Sweeps of the Jacobi solver before giving up on convergence.
const MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm at which the solver stops.
const TOLERANCE: f64 = 1e-10;

/// Eigen-decomposition of a symmetric matrix given row-major, `n x n`.
///
/// Returns eigenvalues in descending order (ties by original index) and the
/// matching unit eigenvectors. Each eigenvector's largest-magnitude component
/// is made positive so results are reproducible.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off < TOLERANCE {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = (0..n).map(|k| v[k * n + i]).collect();
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    (values, vectors)
}

/// Mean-centred projection onto the leading principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl Pca {
    /// Fits on `rows`, keeping `dims` components. Panics if `rows` is empty
    /// or `dims` exceeds the feature dimension.
    pub fn fit(rows: &[&[f64]], dims: usize) -> Self {
        let m = rows[0].len();
        assert!(dims >= 1 && dims <= m);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; m];
        for r in rows {
            for (acc, x) in mean.iter_mut().zip(r.iter()) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|x| *x /= n);
        let mut cov = vec![0.0; m * m];
        for r in rows {
            for i in 0..m {
                let di = r[i] - mean[i];
                for j in i..m {
                    cov[i * m + j] += di * (r[j] - mean[j]);
                }
            }
        }
        for i in 0..m {
            for j in i..m {
                cov[i * m + j] /= n;
                cov[j * m + i] = cov[i * m + j];
            }
        }
        let (values, vectors) = symmetric_eigen(&cov, m);
        Pca {
            mean,
            components: vectors.into_iter().take(dims).collect(),
            explained_variance: values.into_iter().take(dims).collect(),
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((w, v), mu)| w * (v - mu)).sum())
            .collect()
    }
}
