//! Small direct linear-algebra kernels.
//!
//! Everything here works on matrices with a few thousand rows at most: the
//! traffic equations (d×d), the routing-matrix spectral radius, and the dense
//! Perron-root oracle used to cross-check power iteration.

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot vanishes (relative to the largest entry of `a`).
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Square matrix stored by rows inside a symmetric band `|i - j| <= half_width`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    half_width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, half_width: usize) -> Self {
        Self {
            n,
            half_width,
            data: vec![0.0; n * (2 * half_width + 1)],
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let half_width = n.saturating_sub(1);
        let mut m = Self::zeros(n, half_width);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.half_width);
        i * (2 * self.half_width + 1) + (j + self.half_width - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.half_width {
            0.0
        } else {
            self.data[self.offset(i, j)]
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i.abs_diff(j) <= self.half_width, "entry outside band");
        let o = self.offset(i, j);
        self.data[o] = v;
    }

    fn row_sums(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| {
            let lo = i.saturating_sub(self.half_width);
            let hi = (i + self.half_width + 1).min(self.n);
            (lo..hi).map(|j| self.get(i, j)).sum()
        })
    }

    /// For a Metzler matrix `Q` (nonnegative off-diagonal), decides whether
    /// `shift·I − Q` is a nonsingular M-matrix, i.e. whether `shift` exceeds the
    /// Perron root of `Q`. Elimination without pivoting keeps the band and is
    /// stable on M-matrices; the test is that every pivot stays positive.
    pub fn shift_is_above_perron_root(&self, shift: f64) -> bool {
        let n = self.n;
        let w = self.half_width;
        let mut a = self.clone();
        for v in a.data.iter_mut() {
            *v = -*v;
        }
        for i in 0..n {
            let o = a.offset(i, i);
            a.data[o] += shift;
        }
        for k in 0..n {
            let pivot = a.get(k, k);
            if pivot <= 0.0 || !pivot.is_finite() {
                return false;
            }
            let end = (k + w + 1).min(n);
            for i in k + 1..end {
                let lik = a.get(i, k);
                if lik == 0.0 {
                    continue;
                }
                let factor = lik / pivot;
                for j in k + 1..end {
                    let akj = a.get(k, j);
                    if akj != 0.0 {
                        let o = a.offset(i, j);
                        a.data[o] -= factor * akj;
                    }
                }
            }
        }
        true
    }

    /// Perron root (largest real eigenvalue) of a Metzler matrix, by bisection
    /// on the M-matrix test. The root lies between the smallest and largest
    /// row sums.
    pub fn metzler_perron_root(&self) -> f64 {
        if self.n == 0 {
            return f64::NEG_INFINITY;
        }
        let (mut lo, mut hi) = self
            .row_sums()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s), hi.max(s))
            });
        if lo == hi {
            // Q·1 = lo·1 and a positive eigenvector belongs to the Perron root.
            return lo;
        }
        let scale = lo.abs().max(hi.abs()).max(1e-300);
        hi += 1e-12 * scale;
        while !self.shift_is_above_perron_root(hi) {
            hi += (hi - lo).max(1e-12 * scale);
        }
        lo -= 1e-12 * scale;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.shift_is_above_perron_root(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_two_by_two() {
        let x = solve_dense(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_rejected() {
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn perron_root_of_periodic_and_nilpotent_matrices() {
        let swap = BandMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!((swap.metzler_perron_root() - 1.0).abs() < 1e-12);
        let tandem = BandMatrix::from_dense(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(tandem.metzler_perron_root().abs() < 1e-12);
    }

    #[test]
    fn perron_root_of_birth_death_generator() {
        // Killed M/M/1 on {1..n}: eigenvalues -(l+m) + 2 sqrt(lm) cos(pi j/(n+1)).
        let (l, m, n) = (1.0, 4.0, 30usize);
        let mut q = BandMatrix::zeros(n, 1);
        for i in 0..n {
            q.set(i, i, -(l + m));
            if i + 1 < n {
                q.set(i, i + 1, l);
                q.set(i + 1, i, m);
            }
        }
        let exact = -(l + m) + 2.0 * (l * m).sqrt() * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((q.metzler_perron_root() - exact).abs() < 1e-12);
    }
}
