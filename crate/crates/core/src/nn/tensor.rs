use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar, GEMM_MIN_ROWS};

/// Dense row-major tensor. Most tensors here are matrices; vectors are `[1, n]` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![S::zero(); shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// A `[1, n]` row.
    pub fn row(data: Vec<S>) -> Self {
        Tensor { shape: vec![1, data.len()], data }
    }

    pub fn scalar(value: S) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension (1 for a scalar-shaped tensor).
    pub fn rows(&self) -> usize {
        if self.shape.len() < 2 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Product of the trailing dimensions.
    pub fn cols(&self) -> usize {
        if self.shape.len() < 2 {
            self.data.len()
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row_slice(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<S>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| T::of(v.as_f64())).collect() }
    }

    /// `x · wᵀ + b` for `x: [n, in]`, `w: [out, in]`, `b: [1, out]`.
    pub fn affine(x: &Tensor<S>, w: &Tensor<S>, b: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        let (n, k) = (x.rows(), x.cols());
        let (out, k2) = (w.rows(), w.cols());
        if k != k2 {
            return Err(Error::Shape(format!("linear: input has {k} features, weight expects {k2}")));
        }
        if let Some(b) = b {
            if b.len() != out {
                return Err(Error::Shape(format!("linear: bias has {} entries, expected {out}", b.len())));
            }
        }
        let mut y = vec![S::zero(); n * out];
        if let Some(b) = b {
            for yr in y.chunks_mut(out) {
                yr.copy_from_slice(&b.data);
            }
        }
        if n < GEMM_MIN_ROWS {
            for (r, yr) in y.chunks_mut(out).enumerate() {
                let xr = x.row_slice(r);
                for (j, yj) in yr.iter_mut().enumerate() {
                    *yj += dot(xr, w.row_slice(j));
                }
            }
        } else {
            let beta = if b.is_some() { S::one() } else { S::zero() };
            S::gemm(n, k, out, S::one(), (&x.data, k, 1), (&w.data, 1, k), beta, &mut y, out);
        }
        Tensor::matrix(n, out, y)
    }

    /// `a · bᵀ` for `a: [n, k]`, `b: [m, k]`.
    pub fn matmul_t(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        Tensor::affine(a, b, None)
    }

    /// `a · b` for `a: [n, k]`, `b: [k, m]`.
    pub fn matmul(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        let (n, k) = (a.rows(), a.cols());
        if b.rows() != k {
            return Err(Error::Shape(format!("matmul: inner dimensions {k} and {} differ", b.rows())));
        }
        let m = b.cols();
        let mut y = vec![S::zero(); n * m];
        S::gemm(n, k, m, S::one(), (&a.data, k, 1), (&b.data, m, 1), S::zero(), &mut y, m);
        Tensor::matrix(n, m, y)
    }
}

/// Softmax of `logits + o·mask`; errors when every entry is masked.
pub fn masked_softmax<S: Scalar>(logits: &[S], mask: &[bool], o: S) -> Result<Vec<S>> {
    if logits.len() != mask.len() {
        return Err(Error::Shape(format!("{} logits but {} mask entries", logits.len(), mask.len())));
    }
    if mask.iter().all(|&m| m) {
        return Err(Error::AllMasked);
    }
    let z: Vec<S> = logits.iter().zip(mask).map(|(&l, &m)| if m { l + o } else { l }).collect();
    let max = z.iter().copied().fold(S::neg_infinity(), S::max);
    let e: Vec<S> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: S = e.iter().copied().sum();
    Ok(e.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_hand_example() {
        let x = Tensor::row(vec![1.0f64, 2.0]);
        let w = Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let y = Tensor::affine(&x, &w, Some(&Tensor::row(vec![0.0, 0.0]))).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0]);
        let id = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(Tensor::affine(&x, &id, None).unwrap(), x);
    }

    #[test]
    fn shape_errors() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
        let x = Tensor::row(vec![1.0f32, 2.0, 3.0]);
        let w = Tensor::<f32>::zeros(&[2, 2]);
        assert!(Tensor::affine(&x, &w, None).is_err());
    }

    #[test]
    fn matmul_agrees_with_transpose_form() {
        let a = Tensor::matrix(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let bt = Tensor::matrix(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(Tensor::matmul(&a, &b).unwrap(), Tensor::matmul_t(&a, &bt).unwrap());
    }

    #[test]
    fn masked_softmax_examples() {
        let o = -999999.0f32;
        let p = masked_softmax(&[1.0f32, 1.0], &[false, true], o).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-6 && p[1] < 1e-6);
        let p = masked_softmax(&[0.0f64; 3], &[false; 3], -999999.0).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
        let p = masked_softmax(&[2f64.ln(), 0.0], &[false, false], -999999.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(masked_softmax(&[0.0f32; 2], &[true; 2], o), Err(Error::AllMasked)));
    }
}
