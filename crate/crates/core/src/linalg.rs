//! Dense matrix exponential and a minimal compressed-row sparse matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

pub fn norm1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = norm1(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * Complex64::new(0.5f64.powi(s), 0.0);
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != Complex64::new(0.0, 0.0));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(merged.len());
        let mut vals = Vec::with_capacity(merged.len());
        for (r, c, v) in merged {
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.cols[k], self.vals[k]));
            }
        }
        out
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.vals[self.row_ptr[r] + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let t = self.triplets().into_iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        SparseMatrix::from_triplets(self.dim, t)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        SparseMatrix::from_triplets(
            self.dim,
            self.triplets().into_iter().map(|(r, c, v)| (r, c, v * s)).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut t = self.triplets();
        t.extend(other.triplets());
        SparseMatrix::from_triplets(self.dim, t)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut t = Vec::new();
        let mut acc = vec![Complex64::new(0.0, 0.0); self.dim];
        let mut touched = Vec::new();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let (mid, a) = (self.cols[k], self.vals[k]);
                for l in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    let c = other.cols[l];
                    if acc[c] == Complex64::new(0.0, 0.0) {
                        touched.push(c);
                    }
                    acc[c] += a * other.vals[l];
                }
            }
            for &c in &touched {
                t.push((r, c, acc[c]));
                acc[c] = Complex64::new(0.0, 0.0);
            }
            touched.clear();
        }
        SparseMatrix::from_triplets(self.dim, t)
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).add(&other.matmul(self).scale(Complex64::new(-1.0, 0.0)))
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.dim];
        for (k, &c) in self.cols.iter().enumerate() {
            col[c] += self.vals[k].norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// `out = self · x` for every column of `x`.
    pub fn apply(&self, x: &CMatrix, out: &mut CMatrix) {
        for j in 0..x.ncols() {
            let xc = x.column(j);
            let mut oc = out.column_mut(j);
            for r in 0..self.dim {
                let mut s = Complex64::new(0.0, 0.0);
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    s += self.vals[k] * xc[self.cols[k]];
                }
                oc[r] = s;
            }
        }
    }
}

/// Several sparse matrices laid out on one shared sparsity pattern so that
/// linear combinations cost `O(nnz)`.
#[derive(Debug, Clone)]
pub struct SparseFamily {
    pattern: SparseMatrix,
    components: Vec<Vec<Complex64>>,
    norms: Vec<f64>,
}

impl SparseFamily {
    pub fn new(members: &[&SparseMatrix]) -> Self {
        let dim = members[0].dim;
        let mut t = Vec::new();
        for m in members {
            for (r, c, _) in m.triplets() {
                t.push((r, c, Complex64::new(1.0, 0.0)));
            }
        }
        let pattern = SparseMatrix::from_triplets(dim, t);
        let components = members
            .iter()
            .map(|m| {
                let mut vals = vec![Complex64::new(0.0, 0.0); pattern.nnz()];
                for (r, c, v) in m.triplets() {
                    let row = &pattern.cols[pattern.row_ptr[r]..pattern.row_ptr[r + 1]];
                    let k = row.binary_search(&c).expect("entry in union pattern");
                    vals[pattern.row_ptr[r] + k] = v;
                }
                vals
            })
            .collect();
        let norms = members.iter().map(|m| m.norm1()).collect();
        SparseFamily { pattern, components, norms }
    }

    /// `Σ_i coeffs[i] · member_i`, together with an upper bound on its 1-norm.
    pub fn combine(&self, coeffs: &[Complex64]) -> (SparseMatrix, f64) {
        let mut m = self.pattern.clone();
        for v in m.vals.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        let mut bound = 0.0;
        for ((comp, &c), n) in self.components.iter().zip(coeffs).zip(&self.norms) {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            bound += c.norm() * n;
            for (v, x) in m.vals.iter_mut().zip(comp) {
                *v += c * x;
            }
        }
        (m, bound)
    }
}

/// `exp(A)·X` by a scaled Taylor series, for `A` given in sparse form with
/// 1-norm bound `norm`.
pub fn expm_apply(a: &SparseMatrix, norm: f64, x: &CMatrix) -> CMatrix {
    let steps = (norm / 0.5).ceil().max(1.0) as usize;
    let scale = Complex64::new(1.0 / steps as f64, 0.0);
    let mut cur = x.clone();
    let mut term = x.clone();
    let mut tmp = x.clone();
    for _ in 0..steps {
        term.copy_from(&cur);
        let mut k = 1;
        loop {
            a.apply(&term, &mut tmp);
            let f = scale / k as f64;
            term.zip_apply(&tmp, |t, v| *t = v * f);
            cur += &term;
            let tn = term.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let cn = cur.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if tn <= 1e-18 * cn || k > 60 {
                break;
            }
            k += 1;
        }
    }
    cur
}
