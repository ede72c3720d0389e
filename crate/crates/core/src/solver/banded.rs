//! Square band matrices with in-place LU factorisation (no pivoting).

use crate::scalar::Real;

pub(crate) struct BandedMatrix<T> {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i − bw ..= i + bw`.
    data: Vec<T>,
}

impl<T: Real> BandedMatrix<T> {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![T::zero(); n * (2 * bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i.abs_diff(j) <= self.bw);
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    #[cfg(test)]
    fn get(&self, i: usize, j: usize) -> T {
        if i.abs_diff(j) > self.bw {
            T::zero()
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Doolittle LU in place. Returns `false` on a vanishing pivot.
    ///
    /// Pivoting is unnecessary for the diagonally dominant Jacobians of the
    /// monotone scheme.
    pub(crate) fn factorize(&mut self) -> bool {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if !(pivot.abs() > T::min_positive_value()) || !pivot.is_finite() {
                return false;
            }
            let last = (k + bw).min(n - 1);
            for i in (k + 1)..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == T::zero() {
                    continue;
                }
                for j in (k + 1)..=last {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] = self.data[ij] - l * kj;
                }
            }
        }
        true
    }

    /// Solves `LU x = b` in place after [`factorize`](Self::factorize).
    pub(crate) fn solve(&self, b: &mut [T]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut acc = b[i];
            for j in i.saturating_sub(bw)..i {
                acc = acc - self.data[self.idx(i, j)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in (i + 1)..=(i + bw).min(n - 1) {
                acc = acc - self.data[self.idx(i, j)] * b[j];
            }
            b[i] = acc / self.data[self.idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 6;
        let mut a = BandedMatrix::<f64>::zeros(n, 1);
        for i in 0..n {
            a.set(i, i, -2.5);
            if i > 0 {
                a.set(i, i - 1, 1.0);
            }
            if i + 1 < n {
                a.set(i, i + 1, 1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a.get(i, j) * x[j]).sum())
            .collect();
        assert!(a.factorize());
        a.solve(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut a = BandedMatrix::<f64>::zeros(2, 1);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        assert!(!a.factorize());
    }
}
