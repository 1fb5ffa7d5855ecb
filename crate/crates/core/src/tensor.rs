//! Dense row-major f64 tensors with the small op set the model needs.
//!
//! Matrix products go through `matrixmultiply::dgemm`, which is single-threaded
//! and uses a fixed blocked summation order, so results are reproducible
//! run-to-run. Everything else is plain loops with deterministic iteration.

use crate::error::NumericsError;

/// Dense tensor: a shape and row-major f64 storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        let expect: usize = shape.iter().product();
        if expect != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(NumericsError::InvalidArgument(format!(
                "shape {:?} does not match data length {}",
                shape,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    /// 2-D tensor from nested rows; rows must be equally long.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(NumericsError::InvalidArgument(
                "ragged rows in from_rows".into(),
            ));
        }
        Tensor::new(vec![r, c], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> Result<f64, NumericsError> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(NumericsError::NotScalar(self.shape.clone()))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn rows_cols(&self, op: &'static str) -> Result<(usize, usize), NumericsError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(NumericsError::BadRank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    /// Matrix product. 2-D × 2-D is the standard product; a rank-3 lhs is
    /// treated as a batch of matrices applied against a shared 2-D rhs, and
    /// rank-3 × rank-3 multiplies batch-wise.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, NumericsError> {
        match (self.shape.as_slice(), other.shape.as_slice()) {
            ([m, k], [k2, n]) => {
                if k != k2 {
                    return Err(self.shape_mismatch("matmul", other));
                }
                let mut out = Tensor::zeros(&[*m, *n]);
                dgemm_rowmajor(*m, *k, *n, &self.data, &other.data, out.data_mut());
                Ok(out)
            }
            ([b, m, k], [k2, n]) => {
                if k != k2 {
                    return Err(self.shape_mismatch("matmul", other));
                }
                let mut out = Tensor::zeros(&[*b, *m, *n]);
                for i in 0..*b {
                    dgemm_rowmajor(
                        *m,
                        *k,
                        *n,
                        &self.data[i * m * k..(i + 1) * m * k],
                        &other.data,
                        &mut out.data[i * m * n..(i + 1) * m * n],
                    );
                }
                Ok(out)
            }
            ([b, m, k], [b2, k2, n]) => {
                if b != b2 || k != k2 {
                    return Err(self.shape_mismatch("matmul", other));
                }
                let mut out = Tensor::zeros(&[*b, *m, *n]);
                for i in 0..*b {
                    dgemm_rowmajor(
                        *m,
                        *k,
                        *n,
                        &self.data[i * m * k..(i + 1) * m * k],
                        &other.data[i * k * n..(i + 1) * k * n],
                        &mut out.data[i * m * n..(i + 1) * m * n],
                    );
                }
                Ok(out)
            }
            _ => Err(self.shape_mismatch("matmul", other)),
        }
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor, NumericsError> {
        let (r, c) = self.rows_cols("transpose")?;
        let mut out = Tensor::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(out)
    }

    fn shape_mismatch(&self, op: &'static str, other: &Tensor) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Tensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumericsError> {
        if self.shape != other.shape {
            return Err(self.shape_mismatch(op, other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Add a 1×n row vector to every row of an m×n matrix.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor, NumericsError> {
        let (_, c) = self.rows_cols("add_row")?;
        if row.len() != c {
            return Err(self.shape_mismatch("add_row", row));
        }
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(c) {
            for (v, b) in chunk.iter_mut().zip(&row.data) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Numerically stabilized softmax along the last axis.
    pub fn softmax(&self) -> Result<Tensor, NumericsError> {
        let width = *self.shape.last().ok_or(NumericsError::BadRank {
            op: "softmax",
            expected: 1,
            shape: self.shape.clone(),
        })?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(width) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(out)
    }

    /// Layer normalization over the last axis with affine gain/bias, using the
    /// population variance (divide by d).
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor, NumericsError> {
        let width = *self.shape.last().ok_or(NumericsError::BadRank {
            op: "layer_norm",
            expected: 1,
            shape: self.shape.clone(),
        })?;
        if gain.len() != width || bias.len() != width {
            return Err(self.shape_mismatch("layer_norm", gain));
        }
        if eps <= 0.0 {
            return Err(NumericsError::InvalidArgument(
                "layer_norm eps must be positive".into(),
            ));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(width) {
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (v, (g, b)) in row.iter_mut().zip(gain.data.iter().zip(&bias.data)) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        Ok(out)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|v| v.max(0.0))
    }

    pub fn sin(&self) -> Tensor {
        self.map(f64::sin)
    }

    /// Column-wise concatenation of 2-D tensors with equal row counts.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidArgument(
                "concat_cols of zero tensors".into(),
            ));
        }
        let (rows, _) = parts[0].rows_cols("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.rows_cols("concat_cols")?;
            if r != rows {
                return Err(parts[0].shape_mismatch("concat_cols", p));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(&[rows, total]);
        for i in 0..rows {
            let mut off = 0;
            for (p, &w) in parts.iter().zip(&widths) {
                out.data[i * total + off..i * total + off + w]
                    .copy_from_slice(&p.data[i * w..(i + 1) * w]);
                off += w;
            }
        }
        Ok(out)
    }

    /// Columns `[start, start+width)` of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Tensor, NumericsError> {
        let (r, c) = self.rows_cols("slice_cols")?;
        if start + width > c || width == 0 {
            return Err(NumericsError::InvalidArgument(format!(
                "slice_cols [{start}, {}) out of {c} columns",
                start + width
            )));
        }
        let mut out = Tensor::zeros(&[r, width]);
        for i in 0..r {
            out.data[i * width..(i + 1) * width]
                .copy_from_slice(&self.data[i * c + start..i * c + start + width]);
        }
        Ok(out)
    }

    /// Mean over rows of an m×n matrix, producing a 1×n row.
    pub fn mean_rows(&self) -> Result<Tensor, NumericsError> {
        let (r, c) = self.rows_cols("mean_rows")?;
        let mut out = Tensor::zeros(&[1, c]);
        for row in self.data.chunks(c) {
            for (o, v) in out.data.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in out.data.iter_mut() {
            *o /= r as f64;
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Euclidean norm of the flattened tensor.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// C = A·B for row-major matrices (beta = 0).
fn dgemm_rowmajor(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let id = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(id.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_value() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t2(&[&[1.0], &[1.0]]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        assert!(matches!(
            a.matmul(&b),
            Err(NumericsError::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn matmul_batched_matches_per_slice() {
        let a = Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let b = t2(&[&[1.0, 0.5], &[0.0, 2.0], &[1.0, -1.0]]);
        let out = a.matmul(&b).unwrap();
        assert_eq!(out.shape(), &[2, 2, 2]);
        for i in 0..2 {
            let slice = Tensor::new(vec![2, 3], a.data()[i * 6..(i + 1) * 6].to_vec()).unwrap();
            let expect = slice.matmul(&b).unwrap();
            assert_eq!(&out.data()[i * 4..(i + 1) * 4], expect.data());
        }
    }

    #[test]
    fn softmax_symmetry_and_hand_value() {
        let s = t2(&[&[0.0, 0.0]]).softmax().unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);

        let s = t2(&[&[1.0_f64.ln(), 3.0_f64.ln()]]).softmax().unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-15);
        assert!((s.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariant_and_normalized() {
        let x = t2(&[&[0.3, -1.2, 2.5, 0.0], &[10.0, 10.5, 9.5, 11.0]]);
        let a = x.softmax().unwrap();
        let b = x.map(|v| v + 123.456).softmax().unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
        for row in a.data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_values() {
        let gain = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let bias = Tensor::zeros(&[1, 2]);

        // constant row collapses to zeros
        let c = t2(&[&[5.0, 5.0]]).layer_norm(&gain, &bias, 1e-5).unwrap();
        assert!(c.data().iter().all(|v| v.abs() < 1e-12));

        // [1,3] -> [-1,1] with eps ~ 0
        let y = t2(&[&[1.0, 3.0]]).layer_norm(&gain, &bias, 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-6);
        assert!((y.data()[1] - 1.0).abs() < 1e-6);

        // gain 0 -> output equals bias
        let g0 = Tensor::zeros(&[1, 2]);
        let b = Tensor::new(vec![1, 2], vec![0.7, -0.3]).unwrap();
        let y = t2(&[&[1.0, 3.0]]).layer_norm(&g0, &b, 1e-5).unwrap();
        assert_eq!(y.data(), b.data());
    }

    #[test]
    fn layer_norm_moments() {
        let gain = Tensor::new(vec![1, 4], vec![1.0; 4]).unwrap();
        let bias = Tensor::zeros(&[1, 4]);
        let x = t2(&[&[0.4, -1.3, 2.2, 0.9], &[3.0, 0.1, -0.5, 1.7]]);
        let y = x.layer_norm(&gain, &bias, 1e-12).unwrap();
        for row in y.data().chunks(4) {
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = x.relu();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        assert_eq!(y.relu().data(), y.data());
        let neg = Tensor::new(vec![2], vec![-3.0, -0.5]).unwrap();
        assert!(neg.relu().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn concat_slice_roundtrip() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t2(&[&[5.0], &[6.0]]);
        let cat = Tensor::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 3]);
        assert_eq!(cat.slice_cols(0, 2).unwrap(), a);
        assert_eq!(cat.slice_cols(2, 1).unwrap(), b);
    }

    #[test]
    fn mean_rows_value() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 6.0]]);
        let m = a.mean_rows().unwrap();
        assert_eq!(m.data(), &[2.0, 4.0]);
    }

    #[test]
    fn transpose_roundtrip() {
        let a = t2(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(a.transpose().unwrap().transpose().unwrap(), a);
        assert_eq!(a.transpose().unwrap().shape(), &[3, 2]);
    }
}
