//! Real symmetric matrices and their spectra.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::{smallvec, SmallVec};

use crate::scalar::{Real, Vector};

/// Symmetric `n × n` matrix. Only the upper triangle is stored (row-major),
/// so symmetry holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    upper: SmallVec<[T; 6]>,
}

#[inline]
fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: smallvec![T::zero(); n * (n + 1) / 2],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, c: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, c);
        }
        m
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from a full square matrix, reading only the upper triangle.
    pub fn from_rows(rows: &[&[T]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, rows[i][j]);
            }
        }
        m
    }

    /// `Σ_k w_k v_k v_kᵀ`.
    pub fn from_spectral(weights: &[T], vectors: &[Vector<T>]) -> Self {
        let n = vectors.first().map_or(0, |v| v.len());
        let mut m = Self::zeros(n);
        for (w, v) in weights.iter().zip(vectors) {
            for i in 0..n {
                for j in i..n {
                    let cur = m.get(i, j);
                    m.set(i, j, cur + *w * v[i] * v[j]);
                }
            }
        }
        m
    }

    /// Rank-one `v vᵀ`.
    pub fn outer(v: &[T]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, v[i] * v[j]);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.upper[upper_index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = upper_index(self.n, i, j);
        self.upper[k] = v;
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        Self {
            n: self.n,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    /// `Tr(A X)` for symmetric `A`, `X`.
    pub fn trace_product(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            acc = acc + self.get(i, i) * other.get(i, i);
            for j in (i + 1)..self.n {
                acc = acc + T::lit(2.0) * self.get(i, j) * other.get(i, j);
            }
        }
        acc
    }

    /// `⟨X p, p⟩`.
    pub fn quadratic_form(&self, p: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            acc = acc + self.get(i, i) * p[i] * p[i];
            for j in (i + 1)..self.n {
                acc = acc + T::lit(2.0) * self.get(i, j) * p[i] * p[j];
            }
        }
        acc
    }

    pub fn max_abs_entry(&self) -> T {
        self.upper.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Eigenvalues in ascending order. Closed form for `n ≤ 2`, cyclic Jacobi
    /// rotations otherwise.
    pub fn eigenvalues(&self) -> Vector<T> {
        match self.n {
            0 => Vector::new(),
            1 => smallvec![self.get(0, 0)],
            2 => {
                let (lo, hi) = eig2(self.get(0, 0), self.get(0, 1), self.get(1, 1));
                smallvec![lo, hi]
            }
            _ => {
                let mut ev = jacobi_eigenvalues(self);
                ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                ev
            }
        }
    }
}

/// Serialised as the full list of rows.
impl<T: Real + Serialize> Serialize for SymMatrix<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<T>> = (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect();
        rows.serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for SymMatrix<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(deserializer)?;
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(D::Error::custom("matrix must be square"));
            }
            for j in 0..i {
                if row[j] != rows[j][i] {
                    return Err(D::Error::custom("matrix must be symmetric"));
                }
            }
        }
        let refs: Vec<&[T]> = rows.iter().map(Vec::as_slice).collect();
        Ok(Self::from_rows(&refs))
    }
}

/// Eigenvalues of `[[a, b], [b, c]]`, ascending.
///
/// The larger-magnitude root is formed without cancellation and the other
/// recovered from the determinant, which keeps both accurate to a few ulps.
fn eig2<T: Real>(a: T, b: T, c: T) -> (T, T) {
    let half = T::lit(0.5);
    let mean = half * (a + c);
    let radius = (half * (a - c)).hypot(b);
    if radius == T::zero() {
        return (mean, mean);
    }
    let det = a * c - b * b;
    if mean >= T::zero() {
        let hi = mean + radius;
        let lo = if hi != T::zero() { det / hi } else { mean - radius };
        (lo.min(hi), hi.max(lo))
    } else {
        let lo = mean - radius;
        let hi = if lo != T::zero() { det / lo } else { mean + radius };
        (lo.min(hi), hi.max(lo))
    }
}

fn jacobi_eigenvalues<T: Real>(m: &SymMatrix<T>) -> Vector<T> {
    let n = m.dim();
    let mut a: Vec<T> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            a.push(m.get(i, j));
        }
    }
    let scale = m.max_abs_entry();
    if scale == T::zero() {
        return smallvec![T::zero(); n];
    }
    let eps = T::epsilon();
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= eps * scale * T::lit(1e-2) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
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
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn upper_storage_is_symmetric() {
        let mut m = SymMatrix::<f64>::zeros(3);
        m.set(2, 0, 4.0);
        assert_eq!(m.get(0, 2), 4.0);
        assert_eq!(m.get(2, 0), 4.0);
    }

    #[test]
    fn closed_form_2x2() {
        let m = SymMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let ev = m.eigenvalues();
        assert_relative_eq!(ev[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(ev[1], 3.0, max_relative = 1e-15);
    }

    #[test]
    fn closed_form_is_accurate_for_nearly_singular_matrices() {
        // eigenvalues 1e8 and 1e-8 on a rotated frame
        let (c, s) = (0.6f64, 0.8f64);
        let v1: Vector<f64> = smallvec![c, s];
        let v2: Vector<f64> = smallvec![-s, c];
        let m = SymMatrix::from_spectral(&[1e8, 1e-8], &[v1, v2]);
        let ev = m.eigenvalues();
        assert_relative_eq!(ev[1], 1e8, max_relative = 1e-12);
        assert_relative_eq!(ev[0], 1e-8, max_relative = 1e-6);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = SymMatrix::from_rows(&[
            &[4.0, 1.0, 0.0],
            &[1.0, 3.0, 1.0],
            &[0.0, 1.0, 2.0],
        ]);
        let ev = m.eigenvalues();
        // characteristic polynomial roots: 3 and 3 ± √3
        assert_relative_eq!(ev[0], 3.0 - 3f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(ev[1], 3.0, max_relative = 1e-12);
        assert_relative_eq!(ev[2], 3.0 + 3f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(ev.iter().sum::<f64>(), m.trace(), max_relative = 1e-12);
    }

    #[test]
    fn trace_product_matches_definition() {
        let a = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 3.0]]);
        let x = SymMatrix::from_rows(&[&[5.0, -1.0], &[-1.0, 7.0]]);
        assert_eq!(a.trace_product(&x), 1.0 * 5.0 + 2.0 * 2.0 * -1.0 + 3.0 * 7.0);
    }

    #[test]
    fn f32_eigenvalues() {
        let m = SymMatrix::<f32>::diag(&[-1.0, 2.0]);
        assert_eq!(m.eigenvalues().as_slice(), &[-1.0f32, 2.0]);
    }
}
