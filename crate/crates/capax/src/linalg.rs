//! Banded LU factorization without pivoting.
//!
//! The 2D Newton steps produce a 5-point operator that is strictly
//! diagonally dominant, so LU without pivoting is stable and the band
//! structure (half-bandwidth = one grid dimension) is preserved.

/// Band-storage matrix: `kl` sub-diagonals, `ku` super-diagonals.
///
/// Entry `(i, j)` with `j - ku <= i <= j + kl` lives at
/// `data[(ku + i - j) * n + j]`.
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; (kl + ku + 1) * n],
        }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku >= j && j + self.kl >= i, "({i},{j}) outside band");
        (self.ku + i - j) * self.n + j
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.index(i, j);
        self.data[idx] = value;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    /// In-place LU without pivoting. Returns `false` if a pivot underflows
    /// to zero (matrix numerically singular).
    pub fn lu_factor(&mut self) -> bool {
        let n = self.n;
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot == 0.0 || !pivot.is_finite() {
                return false;
            }
            let i_end = (k + self.kl).min(n - 1);
            let j_end = (k + self.ku).min(n - 1);
            for i in (k + 1)..=i_end {
                let l = self.get(i, k) / pivot;
                self.set(i, k, l);
                if l != 0.0 {
                    for j in (k + 1)..=j_end {
                        let v = self.get(i, j) - l * self.get(k, j);
                        self.set(i, j, v);
                    }
                }
            }
        }
        true
    }

    /// Solves `L U x = rhs` in place after [`Self::lu_factor`].
    pub fn lu_solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        for i in 1..n {
            let j_start = i.saturating_sub(self.kl);
            let mut acc = rhs[i];
            for j in j_start..i {
                acc -= self.get(i, j) * rhs[j];
            }
            rhs[i] = acc;
        }
        for i in (0..n).rev() {
            let j_end = (i + self.ku).min(n - 1);
            let mut acc = rhs[i];
            for j in (i + 1)..=j_end {
                acc -= self.get(i, j) * rhs[j];
            }
            rhs[i] = acc / self.get(i, i);
        }
    }
}
