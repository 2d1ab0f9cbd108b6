//! Minimal sparse kit: triplet accumulation during assembly, compressed
//! sparse rows for solves, and the Matrix Market export.

use rayon::prelude::*;

/// Coordinate-form accumulator used while assembling operators.
#[derive(Debug, Clone)]
pub struct Triplets {
    pub n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i as u32, j as u32, v));
    }

    /// Add a symmetric difference edge with energy coefficient `k`:
    /// contributes k*(u_i - u_j)^2 to the energy 1/2 u'Au, i.e. matrix
    /// entries +2k on both diagonals and -2k on both off-diagonals.
    pub fn add_edge(&mut self, i: usize, j: usize, k: f64) {
        debug_assert!(i != j);
        let w = 2.0 * k;
        self.push(i, i, w);
        self.push(j, j, w);
        self.push(i, j, -w);
        self.push(j, i, -w);
    }

    pub fn extend_from(&mut self, other: &Triplets) {
        debug_assert_eq!(self.n, other.n);
        self.entries.extend_from_slice(&other.entries);
    }

    /// Merge duplicates into CSR. Entries are sorted by (row, col) and
    /// accumulated in that deterministic order.
    pub fn to_csr(&self) -> Csr {
        let mut sorted = self.entries.clone();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut rows = Vec::with_capacity(sorted.len());
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        for &(i, j, v) in &sorted {
            if let (Some(&li), Some(&lj)) = (rows.last(), cols.last()) {
                if li == i && lj == j {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
        let mut row_ptr = vec![0usize; self.n + 1];
        for &i in &rows {
            row_ptr[i as usize + 1] += 1;
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

/// Compressed sparse rows; rows sorted by column, duplicates merged.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    /// y = A x. Row-parallel; each output entry is a sequential dot product
    /// in column order, so the result is bitwise independent of thread count.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c as usize];
            }
            *yi = acc;
        });
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// u' A u via one matvec and a sequential dot product.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        self.apply(u).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (i, di) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c as usize == i {
                    *di = *v;
                }
            }
        }
        d
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Exact entrywise symmetry: every (i, j, v) has a matching (j, i, v).
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let j = *c as usize;
                let (jcols, jvals) = self.row(j);
                match jcols.binary_search(&(i as u32)) {
                    Ok(p) => {
                        if jvals[p].to_bits() != v.to_bits() {
                            return false;
                        }
                    }
                    Err(_) => return false,
                }
            }
        }
        true
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c as usize)] = *v;
            }
        }
        m
    }
}

/// Matrix Market coordinate export, symmetric storage (lower triangle,
/// 1-based indices, 17 significant digits).
pub fn write_matrix_market(a: &Csr) -> String {
    let mut entries = Vec::new();
    for i in 0..a.n {
        let (cols, vals) = a.row(i);
        for (c, v) in cols.iter().zip(vals) {
            let j = *c as usize;
            if j <= i {
                entries.push((i, j, *v));
            }
        }
    }
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix coordinate real symmetric\n");
    out.push_str(&format!("{} {} {}\n", a.n, a.n, entries.len()));
    for (i, j, v) in entries {
        out.push_str(&format!("{} {} {:.16e}\n", i + 1, j + 1, v));
    }
    out
}
