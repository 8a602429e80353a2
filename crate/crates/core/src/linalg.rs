//! Banded matrices, banded Cholesky and generalized symmetric eigensolvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, KimuraError, Result};

/// Square matrix with entries only within `bw` of the diagonal. Both
/// triangles are stored so symmetry can be checked rather than assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || i.abs_diff(j) > self.bw {
            return None;
        }
        Some(i * (2 * self.bw + 1) + (j + self.bw - i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds to entry (i, j). Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside the band");
        self.data[s] += v;
    }

    /// Column range of row i inside the band.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.bw)..(i + self.bw + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j)).sum())
            .collect()
    }

    /// max |A_ij − A_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in self.row_range(i) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + alpha * other`, with the larger bandwidth.
    pub fn add_scaled(&self, alpha: f64, other: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BandMatrix::zeros(self.n, self.bw.max(other.bw));
        for (src, scale) in [(self, 1.0), (other, alpha)] {
            for i in 0..src.n {
                for j in src.row_range(i) {
                    out.add(i, j, scale * src.get(i, j));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Nonzero entries as (row, col, value).
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in self.row_range(i) {
                let v = self.get(i, j);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// Kronecker product A ⊗ B with index i·dim(B) + j.
    pub fn kron(a: &BandMatrix, b: &BandMatrix) -> BandMatrix {
        let nb = b.n;
        let bw = a.bw * nb + b.bw;
        let mut out = BandMatrix::zeros(a.n * nb, bw);
        for i in 0..a.n {
            for k in a.row_range(i) {
                let av = a.get(i, k);
                if av == 0.0 {
                    continue;
                }
                for j in 0..nb {
                    for l in b.row_range(j) {
                        out.add(i * nb + j, k * nb + l, av * b.get(j, l));
                    }
                }
            }
        }
        out
    }
}

/// Lower-triangular banded Cholesky factor of a symmetric positive definite
/// band matrix (only the lower triangle of the input is read).
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // l[i * (bw + 1) + (i - j)] = L_ij for i - bw <= j <= i
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn new(a: &BandMatrix) -> Result<Self> {
        let n = a.n;
        let bw = a.bw;
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = a.get(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(KimuraError::Numerical(format!(
                            "matrix is not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut x = b.to_vec();
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for k in (i + 1)..(i + w).min(self.n) {
                s -= self.l[k * w + (k - i)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        x
    }
}

/// Solution of S v = λ M v with M-orthonormal columns, ascending λ.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

/// Dense solver: Cholesky reduction of M followed by a symmetric QR
/// eigensolver. Returns the lowest `k` pairs.
pub fn dense_generalized_eigen(
    s: &DMatrix<f64>,
    m: &DMatrix<f64>,
    k: usize,
    want_vectors: bool,
) -> Result<GeneralizedEigen> {
    let n = s.nrows();
    if k > n {
        return Err(domain(format!("requested {k} eigenpairs of a {n}-dimensional problem")));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| KimuraError::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ S L⁻ᵀ
    let linv_s = l
        .solve_lower_triangular(s)
        .ok_or_else(|| KimuraError::Numerical("singular Cholesky factor".into()))?;
    let c_t = l
        .solve_lower_triangular(&linv_s.transpose())
        .ok_or_else(|| KimuraError::Numerical("singular Cholesky factor".into()))?;
    let c = (&c_t + c_t.transpose()) * 0.5;
    if !want_vectors {
        let mut values: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values.truncate(k);
        return Ok(GeneralizedEigen { values, vectors: None });
    }
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(k);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
    let vectors = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| KimuraError::Numerical("singular Cholesky factor".into()))?;
    Ok(GeneralizedEigen {
        values,
        vectors: Some(vectors),
    })
}

fn m_dot(m: &BandMatrix, x: &[f64], y: &[f64]) -> f64 {
    m.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Lowest `k` eigenpairs of S v = λ M v for banded S ≥ 0 and M > 0 by
/// shifted subspace iteration with Rayleigh–Ritz projection.
pub fn band_lowest_eigen(s: &BandMatrix, m: &BandMatrix, k: usize, tol: f64) -> Result<GeneralizedEigen> {
    let n = s.dim();
    if k > n || k == 0 {
        return Err(domain(format!("requested {k} eigenpairs of a {n}-dimensional problem")));
    }
    let p = (k + (k / 2).max(8)).min(n);
    let top = (0..n)
        .map(|i| s.get(i, i) / m.get(i, i))
        .fold(0.0f64, f64::max);
    let shift = (1e-6 * top).max(1e-12);
    let a = s.add_scaled(shift, m);
    let chol = BandCholesky::new(&a)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut basis: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            if j == 0 {
                vec![1.0; n]
            } else {
                (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
            }
        })
        .collect();
    let mut previous: Vec<f64> = vec![f64::INFINITY; k];
    let mut values = Vec::new();
    for _ in 0..1000 {
        // Y = A⁻¹ M X, then M-orthonormalise
        let mut y: Vec<Vec<f64>> = basis.iter().map(|x| chol.solve(&m.matvec(x))).collect();
        for j in 0..p {
            for _ in 0..2 {
                for i in 0..j {
                    let c = m_dot(m, &y[i], &y[j]);
                    let (head, tail) = y.split_at_mut(j);
                    for (t, h) in tail[0].iter_mut().zip(&head[i]) {
                        *t -= c * h;
                    }
                }
            }
            let nrm = m_dot(m, &y[j], &y[j]).sqrt();
            if !(nrm > 0.0) {
                return Err(KimuraError::Numerical("subspace iteration lost rank".into()));
            }
            y[j].iter_mut().for_each(|v| *v /= nrm);
        }
        let sy: Vec<Vec<f64>> = y.iter().map(|v| s.matvec(v)).collect();
        let reduced = DMatrix::from_fn(p, p, |i, j| {
            let a: f64 = y[i].iter().zip(&sy[j]).map(|(u, v)| u * v).sum();
            let b: f64 = y[j].iter().zip(&sy[i]).map(|(u, v)| u * v).sum();
            0.5 * (a + b)
        });
        let eig = SymmetricEigen::new(reduced);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        values = order.iter().map(|&i| eig.eigenvalues[i]).collect::<Vec<_>>();
        basis = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (r, yr) in y.iter().enumerate() {
                    let coef = eig.eigenvectors[(r, c)];
                    v.iter_mut().zip(yr).for_each(|(a, b)| *a += coef * b);
                }
                v
            })
            .collect();
        let converged = values
            .iter()
            .zip(&previous)
            .take(k)
            .all(|(v, p)| (v - p).abs() <= tol * (v.abs() + shift));
        previous = values[..k].to_vec();
        if converged {
            let vectors = DMatrix::from_fn(n, k, |r, c| basis[c][r]);
            values.truncate(k);
            return Ok(GeneralizedEigen {
                values,
                vectors: Some(vectors),
            });
        }
    }
    Err(KimuraError::Numerical(format!(
        "subspace iteration did not converge; last values {:?}",
        &values[..k.min(values.len())]
    )))
}

/// Flips each column so that its entry of largest magnitude is positive.
pub fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for x in col.iter() {
            if x.abs() > best.abs() * (1.0 + 1e-9) {
                best = *x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian(n: usize) -> (BandMatrix, BandMatrix) {
        // P1 Neumann Laplacian on [0, 1]
        let h = 1.0 / (n - 1) as f64;
        let mut s = BandMatrix::zeros(n, 1);
        let mut m = BandMatrix::zeros(n, 1);
        for e in 0..n - 1 {
            for (a, b, sv, mv) in [(e, e, 1.0, 2.0), (e + 1, e + 1, 1.0, 2.0), (e, e + 1, -1.0, 1.0), (e + 1, e, -1.0, 1.0)] {
                s.add(a, b, sv / h);
                m.add(a, b, mv * h / 6.0);
            }
        }
        (s, m)
    }

    #[test]
    fn band_cholesky_solves() {
        let (s, m) = laplacian(30);
        let a = s.add_scaled(3.0, &m);
        let chol = BandCholesky::new(&a).unwrap();
        let x: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let y = chol.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(BandCholesky::new(&s).is_err());
    }

    #[test]
    fn dense_and_banded_eigen_agree() {
        let (s, m) = laplacian(200);
        let dense = dense_generalized_eigen(&s.to_dense(), &m.to_dense(), 6, true).unwrap();
        let band = band_lowest_eigen(&s, &m, 6, 1e-13).unwrap();
        for (a, b) in dense.values.iter().zip(&band.values) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        }
        assert!(dense.values[0].abs() < 1e-10);
        assert_relative_eq!(dense.values[1], std::f64::consts::PI.powi(2), max_relative = 1e-3);
        // M-orthonormality
        let v = dense.vectors.unwrap();
        let g = v.transpose() * m.to_dense() * &v;
        assert!((g - DMatrix::identity(6, 6)).amax() < 1e-10);
        let only = dense_generalized_eigen(&s.to_dense(), &m.to_dense(), 3, false).unwrap();
        assert!(only.vectors.is_none());
        assert_relative_eq!(only.values[2], dense.values[2], max_relative = 1e-10);
    }

    #[test]
    fn kronecker_product_entries() {
        let (s, m) = laplacian(4);
        let k = BandMatrix::kron(&s, &m);
        assert_eq!(k.dim(), 16);
        // entry ((1, 2), (0, 3)) of S ⊗ M
        assert_eq!(k.get(6, 3), s.get(1, 0) * m.get(2, 3));
        assert!(k.asymmetry() == 0.0);
        assert!(k.triplets().len() > 16);
    }
}
