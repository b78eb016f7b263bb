//! Banded linear systems with partial pivoting.
//!
//! LAPACK-style band storage: a matrix with `kl` subdiagonals and `ku`
//! superdiagonals keeps entry `(i, j)` at packed row `kl + ku + i - j` of
//! column `j`. The extra `kl` rows on top absorb fill-in from row pivoting.

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularInfo {
    /// Column at which elimination found a zero pivot.
    pub column: usize,
    /// Largest pivot magnitude seen before the breakdown.
    pub max_pivot: f64,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, ldab, data: vec![0.0; ldab * n] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // padded storage covers kl+ku superdiagonals (pivoting fill) and kl
        // subdiagonals
        debug_assert!(i + self.kl + self.ku >= j && j + self.kl >= i);
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }

    /// In-place LU factorization with row partial pivoting.
    pub fn factor(mut self) -> Result<FactoredBanded, SingularInfo> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut ipiv = vec![0usize; n];
        let mut last_col = if n > 0 { 0usize } else { 0 };
        let mut max_pivot = 0.0f64;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search in column j over rows j..=j+km
            let mut jp = 0usize;
            let mut best = 0.0f64;
            for p in 0..=km {
                let v = self.get(j + p, j).abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            max_pivot = max_pivot.max(best);
            if best == 0.0 || !best.is_finite() {
                return Err(SingularInfo { column: j, max_pivot });
            }
            last_col = last_col.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for col in j..=last_col {
                    let a = self.get(j, col);
                    let b = self.get(j + jp, col);
                    self.set(j, col, b);
                    self.set(j + jp, col, a);
                }
            }
            if km > 0 {
                let pv = self.get(j, j);
                for i in j + 1..=j + km {
                    let v = self.get(i, j) / pv;
                    self.set(i, j, v);
                }
                for col in j + 1..=last_col {
                    let f = self.get(j, col);
                    if f != 0.0 {
                        for i in j + 1..=j + km {
                            let m = self.get(i, j);
                            self.add(i, col, -m * f);
                        }
                    }
                }
            }
        }
        Ok(FactoredBanded { mat: self, ipiv })
    }
}

#[derive(Debug, Clone)]
pub struct FactoredBanded {
    mat: BandedMatrix,
    ipiv: Vec<usize>,
}

impl FactoredBanded {
    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let band = self.mat.kl + self.mat.ku;
        assert_eq!(b.len(), n);
        // forward substitution with the pivoted unit-lower factor
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(p, j);
            }
            let lm = kl.min(n - 1 - j);
            for i in 1..=lm {
                b[j + i] -= self.mat.get(j + i, j) * b[j];
            }
        }
        // back substitution with the banded upper factor
        for j in (0..n).rev() {
            b[j] /= self.mat.get(j, j);
            let lm = band.min(j);
            for i in 1..=lm {
                b[j - i] -= self.mat.get(j - i, j) * b[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(a: &mut Vec<Vec<f64>>, b: &mut [f64]) {
        let n = b.len();
        for j in 0..n {
            let mut p = j;
            for i in j + 1..n {
                if a[i][j].abs() > a[p][j].abs() {
                    p = i;
                }
            }
            a.swap(j, p);
            b.swap(j, p);
            for i in j + 1..n {
                let m = a[i][j] / a[j][j];
                for k in j..n {
                    a[i][k] -= m * a[j][k];
                }
                b[i] -= m * b[j];
            }
        }
        for j in (0..n).rev() {
            for k in j + 1..n {
                b[j] -= a[j][k] * b[k];
            }
            b[j] /= a[j][j];
        }
    }

    #[test]
    fn matches_dense_solver_on_random_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..50 {
            let n = rng.gen_range(3..40);
            let kl = rng.gen_range(1..4.min(n));
            let ku = rng.gen_range(1..4.min(n));
            let mut band = BandedMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if j + kl >= i && i + ku >= j {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        band.set(i, j, v);
                        dense[i][j] = v;
                    }
                }
            }
            // keep it comfortably nonsingular
            for i in 0..n {
                band.add(i, i, 3.0);
                dense[i][i] += 3.0;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = b.clone();
            band.factor().unwrap().solve(&mut x);
            let mut x_ref = b.clone();
            dense_solve(&mut dense.clone(), &mut x_ref);
            for i in 0..n {
                assert!(
                    (x[i] - x_ref[i]).abs() < 1e-9,
                    "trial {trial}: x[{i}] = {} vs {}",
                    x[i],
                    x_ref[i]
                );
            }
        }
    }

    #[test]
    fn pivoting_required_case() {
        // zero on the diagonal forces a row swap
        let mut band = BandedMatrix::zeros(3, 1, 1);
        band.set(0, 0, 0.0);
        band.set(0, 1, 2.0);
        band.set(1, 0, 1.0);
        band.set(1, 1, 1.0);
        band.set(1, 2, 1.0);
        band.set(2, 1, 4.0);
        band.set(2, 2, 1.0);
        let f = band.factor().unwrap();
        // A = [[0,2,0],[1,1,1],[0,4,1]], b = [2,3,5] -> x = [1,1,1]
        let mut x = vec![2.0, 3.0, 5.0];
        f.solve(&mut x);
        for v in &x {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_reports_column() {
        let mut band = BandedMatrix::zeros(3, 1, 1);
        band.set(0, 0, 1.0);
        band.set(1, 1, 0.0);
        band.set(0, 1, 0.0);
        band.set(2, 1, 0.0);
        band.set(1, 0, 0.0);
        band.set(1, 2, 0.0);
        band.set(2, 2, 1.0);
        let err = band.factor().unwrap_err();
        assert_eq!(err.column, 1);
    }
}
