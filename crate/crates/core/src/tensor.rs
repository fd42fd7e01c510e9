//! Dense row-major `f32` matrices.
//!
//! Every operation that can produce a non-finite value checks its output and
//! returns [`Error::Numeric`] instead of letting NaN or infinity escape.
//! Dot products accumulate in `f64` with the inner dimension ascending, so a
//! product is reproducible bit-for-bit on a given build.

use std::fmt;

use crate::error::{Error, Result};

/// Above this input softplus returns its argument unchanged.
const SOFTPLUS_LINEAR_CUTOFF: f32 = 30.0;

#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Softplus,
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

/// `acc = a_row * b` where `b` is row-major with `acc.len()` columns. Each
/// entry is summed in `f64` over ascending `k`.
fn accumulate_row(a_row: &[f32], b: &[f32], acc: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { accumulate_row_avx2(a_row, b, acc) };
            return;
        }
    }
    accumulate_row_generic(a_row, b, acc);
}

// Same code, compiled with wider vectors. Rust never fuses the multiply and
// add, so results are bit-identical to the generic path.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn accumulate_row_avx2(a_row: &[f32], b: &[f32], acc: &mut [f64]) {
    accumulate_row_generic(a_row, b, acc);
}

#[inline(always)]
fn accumulate_row_generic(a_row: &[f32], b: &[f32], acc: &mut [f64]) {
    let m = acc.len();
    if m == 0 {
        return;
    }
    acc.iter_mut().for_each(|a| *a = 0.0);
    // Four rows of `b` per sweep; each accumulator still adds its terms in
    // ascending `k`.
    let mut quads = a_row.chunks_exact(4);
    let mut rows = b.chunks_exact(m);
    for a in quads.by_ref() {
        let (a0, a1, a2, a3) = (
            f64::from(a[0]),
            f64::from(a[1]),
            f64::from(a[2]),
            f64::from(a[3]),
        );
        let b0 = &rows.next().expect("row count checked")[..m];
        let b1 = &rows.next().expect("row count checked")[..m];
        let b2 = &rows.next().expect("row count checked")[..m];
        let b3 = &rows.next().expect("row count checked")[..m];
        for j in 0..m {
            let mut s = acc[j];
            s += a0 * f64::from(b0[j]);
            s += a1 * f64::from(b1[j]);
            s += a2 * f64::from(b2[j]);
            s += a3 * f64::from(b3[j]);
            acc[j] = s;
        }
    }
    for (&a, row) in quads.remainder().iter().zip(rows) {
        let a = f64::from(a);
        for (s, &bv) in acc.iter_mut().zip(row) {
            *s += a * f64::from(bv);
        }
    }
}

/// `log(1 + e^x)`, linear above the cutoff so large inputs cannot overflow.
pub fn softplus(x: f32) -> f32 {
    if x > SOFTPLUS_LINEAR_CUTOFF {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Unary {
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Softplus => softplus(x),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Softplus => "softplus",
            Unary::Exp => "exp",
            Unary::Log => "log",
        }
    }
}

impl Binary {
    pub fn apply(self, a: f32, b: f32) -> f32 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps a row-major buffer. Fails if the length is wrong or any entry is
    /// not finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::config(format!(
                "buffer of length {} cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = Mat { rows, cols, data };
        m.check_finite("from_vec")?;
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::config(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Mat::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact panics on a zero chunk size.
        let width = self.cols.max(1);
        self.data
            .chunks_exact(width)
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Mat {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Matrix product. Each entry is an `f64` sum over the inner dimension in
    /// ascending order, rounded once to `f32`.
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::config(format!(
                "matmul shape mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, m) = (self.rows, other.cols);
        let mut out = Mat::zeros(n, m);
        let mut acc = vec![0f64; m];
        for i in 0..n {
            accumulate_row(self.row(i), &other.data, &mut acc);
            for (o, &s) in out.row_mut(i).iter_mut().zip(&acc) {
                *o = s as f32;
            }
        }
        out.check_finite("matmul")?;
        Ok(out)
    }

    pub fn map(&self, op: Unary) -> Result<Mat> {
        let out = Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| op.apply(x)).collect(),
        };
        out.check_finite(op.name())?;
        Ok(out)
    }

    pub fn zip(&self, op: Binary, other: &Mat) -> Result<Mat> {
        if self.shape() != other.shape() {
            return Err(Error::config(format!(
                "{} shape mismatch: {:?} vs {:?}",
                op.name(),
                self.shape(),
                other.shape()
            )));
        }
        let out = Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| op.apply(a, b))
                .collect(),
        };
        out.check_finite(op.name())?;
        Ok(out)
    }

    pub fn scale(&self, factor: f32) -> Result<Mat> {
        let out = Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * factor).collect(),
        };
        out.check_finite("scale")?;
        Ok(out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&self, bias: &[f32]) -> Result<Mat> {
        if bias.len() != self.cols {
            return Err(Error::config(format!(
                "bias of length {} for matrix with {} columns",
                bias.len(),
                self.cols
            )));
        }
        let mut out = self.clone();
        if self.cols > 0 {
            for row in out.data.chunks_exact_mut(self.cols) {
                for (x, &b) in row.iter_mut().zip(bias) {
                    *x += b;
                }
            }
        }
        out.check_finite("add_row_vector")?;
        Ok(out)
    }

    /// Column sums accumulated in `f64`, rows ascending.
    pub fn column_sums(&self) -> Vec<f32> {
        let mut acc = vec![0f64; self.cols];
        for row in self.row_iter() {
            for (a, &x) in acc.iter_mut().zip(row) {
                *a += f64::from(x);
            }
        }
        acc.into_iter().map(|a| a as f32).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn check_finite(&self, stage: &'static str) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(p) => Err(Error::numeric(
                stage,
                format!(
                    "non-finite value {} at ({}, {})",
                    self.data[p],
                    p / self.cols.max(1),
                    p % self.cols.max(1)
                ),
            )),
        }
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat {}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.row_iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive_matmul(a: &Mat, b: &Mat) -> Mat {
        let mut out = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0f64;
                for k in 0..a.cols() {
                    s += f64::from(a.get(i, k)) * f64::from(b.get(k, j));
                }
                out.set(i, j, s as f32);
            }
        }
        out
    }

    #[test]
    fn identity_times_x() {
        let x = Mat::from_rows(&[[1.0, -2.0], [0.5, 3.0], [7.0, 0.25]]).unwrap();
        assert_eq!(Mat::identity(3).matmul(&x).unwrap(), x);
    }

    #[test]
    fn small_product_by_hand() {
        let a = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Mat::from_rows(&[[0.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn random_product_matches_triple_loop() {
        let mut rng = Rng::new(17);
        let a = rng.uniform_mat(5, 7, -2.0, 2.0);
        let b = rng.uniform_mat(7, 3, -2.0, 2.0);
        assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b));
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let err = Mat::zeros(2, 3).matmul(&Mat::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn softplus_and_tanh_values() {
        assert!((softplus(0.0) - std::f32::consts::LN_2).abs() < 1e-7);
        assert_eq!(0f32.tanh(), 0.0);
        // log(1 + e^40) - 40 is about 4.2e-18.
        assert!((softplus(40.0) - 40.0).abs() < 1e-6);
        assert!(softplus(-100.0) >= 0.0);
        assert!(softplus(-100.0).is_finite());
    }

    #[test]
    fn elementwise_ops() {
        let a = Mat::from_rows(&[[0.0, 1.0]]).unwrap();
        let b = Mat::from_rows(&[[2.0, 3.0]]).unwrap();
        assert_eq!(a.zip(Binary::Add, &b).unwrap().as_slice(), &[2.0, 4.0]);
        assert_eq!(a.zip(Binary::Sub, &b).unwrap().as_slice(), &[-2.0, -2.0]);
        assert_eq!(a.zip(Binary::Mul, &b).unwrap().as_slice(), &[0.0, 3.0]);
        assert_eq!(b.scale(0.5).unwrap().as_slice(), &[1.0, 1.5]);
        assert_eq!(a.map(Unary::Exp).unwrap().as_slice()[0], 1.0);
        assert!(matches!(
            a.zip(Binary::Add, &Mat::zeros(2, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_results_are_errors() {
        let a = Mat::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(matches!(a.map(Unary::Log), Err(Error::Numeric { stage: "log", .. })));
        let big = Mat::from_rows(&[[100.0]]).unwrap();
        assert!(matches!(big.map(Unary::Exp), Err(Error::Numeric { .. })));
        assert!(Mat::from_vec(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn transpose_and_select() {
        let x = Mat::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let t = x.transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.row(2), &[3.0, 6.0]);
        assert_eq!(x.select_rows(&[1, 1, 0]).row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(x.column_sums(), vec![5.0, 7.0, 9.0]);
    }
}
