use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::Standardizer;

/// Column-oriented access to a standardized design matrix Z.
///
/// `col_dot` takes Σr so sparse layouts can apply the centering term without
/// touching every row; dense layouts ignore it.
pub trait Design: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// Z·w
    fn mul(&self, w: ArrayView1<'_, f64>) -> Array1<f64>;
    /// Zᵀ·r
    fn tmul(&self, r: ArrayView1<'_, f64>) -> Array1<f64>;
    /// zⱼᵀ·r, where `r_sum` is Σr.
    fn col_dot(&self, j: usize, r: ArrayView1<'_, f64>, r_sum: f64) -> f64;
    /// r += a·zⱼ, returning the change in Σr.
    fn col_axpy(&self, j: usize, a: f64, r: &mut Array1<f64>) -> f64;
    /// ‖zⱼ‖²
    fn col_sq(&self, j: usize) -> f64;

    fn frobenius_sq(&self) -> f64 {
        (0..self.ncols()).map(|j| self.col_sq(j)).sum()
    }
}

impl Design for ArrayView2<'_, f64> {
    fn nrows(&self) -> usize {
        self.dim().0
    }

    fn ncols(&self) -> usize {
        self.dim().1
    }

    fn mul(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        self.dot(&w)
    }

    fn tmul(&self, r: ArrayView1<'_, f64>) -> Array1<f64> {
        self.t().dot(&r)
    }

    fn col_dot(&self, j: usize, r: ArrayView1<'_, f64>, _r_sum: f64) -> f64 {
        self.column(j).dot(&r)
    }

    fn col_axpy(&self, j: usize, a: f64, r: &mut Array1<f64>) -> f64 {
        r.scaled_add(a, &self.column(j));
        0.0
    }

    fn col_sq(&self, j: usize) -> f64 {
        let c = self.column(j);
        c.dot(&c)
    }

    fn frobenius_sq(&self) -> f64 {
        self.iter().map(|v| v * v).sum()
    }
}

impl Design for Array2<f64> {
    fn nrows(&self) -> usize {
        self.view().nrows()
    }

    fn ncols(&self) -> usize {
        self.view().ncols()
    }

    fn mul(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        self.view().mul(w)
    }

    fn tmul(&self, r: ArrayView1<'_, f64>) -> Array1<f64> {
        self.view().tmul(r)
    }

    fn col_dot(&self, j: usize, r: ArrayView1<'_, f64>, r_sum: f64) -> f64 {
        self.view().col_dot(j, r, r_sum)
    }

    fn col_axpy(&self, j: usize, a: f64, r: &mut Array1<f64>) -> f64 {
        self.view().col_axpy(j, a, r)
    }

    fn col_sq(&self, j: usize) -> f64 {
        self.view().col_sq(j)
    }

    fn frobenius_sq(&self) -> f64 {
        self.view().frobenius_sq()
    }
}

/// Z = (X − μ)/σ for a mostly-zero X, stored as the nonzeros of X in both
/// column- and row-major order. Products cost O(nnz + n + p).
#[derive(Debug, Clone)]
pub struct SparseStandardized {
    n: usize,
    p: usize,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
    col_sums: Vec<f64>,
    col_sqs: Vec<f64>,
}

impl SparseStandardized {
    pub fn new(x: ArrayView2<'_, f64>, standardizer: &Standardizer) -> Self {
        let (n, p) = x.dim();
        let (mut col_ptr, mut col_rows, mut col_vals) = (vec![0], Vec::new(), Vec::new());
        let mut col_sums = Vec::with_capacity(p);
        let mut col_sqs = Vec::with_capacity(p);
        for (j, col) in x.columns().into_iter().enumerate() {
            let (m, s) = (standardizer.means[j], standardizer.stds[j]);
            let (mut sum, mut sq, mut nnz) = (0.0, 0.0, 0usize);
            for (i, &v) in col.iter().enumerate() {
                if v != 0.0 {
                    col_rows.push(i);
                    col_vals.push(v);
                    sum += v;
                    sq += (v - m) * (v - m);
                    nnz += 1;
                }
            }
            col_ptr.push(col_rows.len());
            col_sums.push((sum - n as f64 * m) / s);
            col_sqs.push((sq + (n - nnz) as f64 * m * m) / (s * s));
        }
        let (mut row_ptr, mut row_cols, mut row_vals) = (vec![0], Vec::new(), Vec::new());
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    row_cols.push(j);
                    row_vals.push(v);
                }
            }
            row_ptr.push(row_cols.len());
        }
        SparseStandardized {
            n,
            p,
            col_ptr,
            col_rows,
            col_vals,
            row_ptr,
            row_cols,
            row_vals,
            means: standardizer.means.clone(),
            stds: standardizer.stds.clone(),
            col_sums,
            col_sqs,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_vals.len()
    }

    fn raw_col_dot(&self, j: usize, r: ArrayView1<'_, f64>) -> f64 {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        self.col_rows[span.clone()]
            .iter()
            .zip(&self.col_vals[span])
            .map(|(&i, &v)| v * r[i])
            .sum()
    }
}

impl Design for SparseStandardized {
    fn nrows(&self) -> usize {
        self.n
    }

    fn ncols(&self) -> usize {
        self.p
    }

    fn mul(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        let scaled: Vec<f64> = w.iter().zip(&self.stds).map(|(w, s)| w / s).collect();
        let shift: f64 = scaled.iter().zip(&self.means).map(|(v, m)| v * m).sum();
        (0..self.n)
            .map(|i| {
                let span = self.row_ptr[i]..self.row_ptr[i + 1];
                let dot: f64 = self.row_cols[span.clone()]
                    .iter()
                    .zip(&self.row_vals[span])
                    .map(|(&j, &v)| v * scaled[j])
                    .sum();
                dot - shift
            })
            .collect()
    }

    fn tmul(&self, r: ArrayView1<'_, f64>) -> Array1<f64> {
        let r_sum = r.sum();
        (0..self.p).map(|j| self.col_dot(j, r, r_sum)).collect()
    }

    fn col_dot(&self, j: usize, r: ArrayView1<'_, f64>, r_sum: f64) -> f64 {
        (self.raw_col_dot(j, r) - self.means[j] * r_sum) / self.stds[j]
    }

    fn col_axpy(&self, j: usize, a: f64, r: &mut Array1<f64>) -> f64 {
        let c = a / self.stds[j];
        let m = self.means[j];
        if m != 0.0 {
            r.mapv_inplace(|v| v - c * m);
        }
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        for (&i, &v) in self.col_rows[span.clone()].iter().zip(&self.col_vals[span]) {
            r[i] += c * v;
        }
        a * self.col_sums[j]
    }

    fn col_sq(&self, j: usize) -> f64 {
        self.col_sqs[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> (Array2<f64>, Standardizer) {
        let x = array![
            [0.0, 2.0, 0.0, 5.0],
            [1.0, 0.0, 0.0, 5.0],
            [0.0, 0.0, 3.0, 5.0],
            [4.0, 1.0, 0.0, 5.0],
            [0.0, 0.0, 0.0, 5.0]
        ];
        let s = Standardizer::fit(x.view());
        (x, s)
    }

    #[test]
    fn sparse_matches_dense() {
        let (x, s) = sample();
        let z = s.transform(x.view());
        let sp = SparseStandardized::new(x.view(), &s);
        assert_eq!(sp.nnz(), 10);
        let w = array![0.3, -1.2, 0.7, 2.0];
        let r = array![1.0, -2.0, 0.5, 0.25, 3.0];
        let close = |a: &Array1<f64>, b: &Array1<f64>| a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-12);
        assert!(close(&sp.mul(w.view()), &z.mul(w.view())));
        assert!(close(&sp.tmul(r.view()), &z.tmul(r.view())));
        for j in 0..4 {
            assert!((sp.col_sq(j) - z.col_sq(j)).abs() < 1e-12);
            assert!((sp.col_dot(j, r.view(), r.sum()) - z.col_dot(j, r.view(), 0.0)).abs() < 1e-12);
            let (mut a, mut b) = (r.clone(), r.clone());
            let d = sp.col_axpy(j, 0.8, &mut a);
            z.col_axpy(j, 0.8, &mut b);
            assert!(close(&a, &b));
            assert!((d - (a.sum() - r.sum())).abs() < 1e-12);
        }
        assert!((sp.frobenius_sq() - z.frobenius_sq()).abs() < 1e-12);
    }
}
