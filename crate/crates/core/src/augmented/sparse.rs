//! Row-major sparse matrices with entries kept in insertion order.

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMat {
    pub fn zeros(dim: usize) -> Self {
        Self {
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            rows: (0..dim).map(|r| vec![(r, 1.0)]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.rows[r]
            .iter()
            .filter(|&&(m, _)| m == c)
            .map(|&(_, v)| v)
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `M · h` for a stack of p-vectors. Each row accumulates from zero in
    /// entry order.
    pub fn apply(&self, h: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let p = h.first().map_or(0, Vec::len);
        self.rows
            .iter()
            .map(|row| {
                let mut acc = vec![0.0; p];
                for &(m, w) in row {
                    for (a, b) in acc.iter_mut().zip(&h[m]) {
                        *a += w * b;
                    }
                }
                acc
            })
            .collect()
    }

    /// `M · e_c`.
    pub fn column(&self, c: usize) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(r, row)| {
                let v: f64 = row.iter().filter(|&&(m, _)| m == c).map(|&(_, v)| v).sum();
                (v != 0.0).then_some((r, v))
            })
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(_, v)| v).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim()];
        for row in &self.rows {
            for &(m, v) in row {
                s[m] += v;
            }
        }
        s
    }

    /// `self · other`, merging duplicate columns within each row.
    pub fn matmul(&self, other: &SparseMat) -> SparseMat {
        let dim = other.dim();
        let mut dense = vec![0.0; dim];
        let mut touched: Vec<usize> = Vec::new();
        let rows = self
            .rows
            .iter()
            .map(|row| {
                for &(m, a) in row {
                    for &(c, b) in &other.rows[m] {
                        if dense[c] == 0.0 && !touched.contains(&c) {
                            touched.push(c);
                        }
                        dense[c] += a * b;
                    }
                }
                touched.sort_unstable();
                let out: Vec<(usize, f64)> = touched
                    .drain(..)
                    .filter_map(|c| {
                        let v = std::mem::take(&mut dense[c]);
                        (v != 0.0).then_some((c, v))
                    })
                    .collect();
                out
            })
            .collect();
        SparseMat { rows }
    }

    /// `self · M` for dense `M`.
    pub fn mul_dense(&self, m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.apply(m)
    }

    /// `M · self` for dense `M`.
    pub fn left_mul_dense(&self, m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let dim = self.dim();
        m.iter()
            .map(|mrow| {
                let mut out = vec![0.0; dim];
                for (r, row) in self.rows.iter().enumerate() {
                    let a = mrow[r];
                    if a != 0.0 {
                        for &(c, v) in row {
                            out[c] += a * v;
                        }
                    }
                }
                out
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![0.0; dim];
                for &(m, v) in row {
                    d[m] += v;
                }
                d
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseMat {
            rows: vec![
                vec![(0, 0.5), (2, 0.5)],
                vec![(1, 1.0)],
                vec![(0, 0.25), (1, 0.75)],
            ],
        };
        let b = SparseMat {
            rows: vec![vec![(1, 2.0)], vec![(0, 1.0), (2, -1.0)], vec![(2, 3.0)]],
        };
        assert_eq!(
            a.matmul(&b).to_dense(),
            dense_mul(&a.to_dense(), &b.to_dense())
        );
        let m = vec![
            vec![1.0, 2.0, 3.0],
            vec![0.0, 1.0, 0.0],
            vec![4.0, 0.0, 1.0],
        ];
        assert_eq!(a.left_mul_dense(&m), dense_mul(&m, &a.to_dense()));
        assert_eq!(a.mul_dense(&m), dense_mul(&a.to_dense(), &m));
        assert_eq!(a.column(0), vec![(0, 0.5), (2, 0.25)]);
    }

    #[test]
    fn sums() {
        let a = SparseMat {
            rows: vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]],
        };
        assert_eq!(a.row_sums(), vec![1.0, 1.0]);
        assert_eq!(a.col_sums(), vec![0.5, 1.5]);
        assert_eq!(SparseMat::identity(3).nnz(), 3);
    }
}
