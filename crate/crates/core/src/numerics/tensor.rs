use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim("tensor", shape, &[data.len()]));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::dim("from_rows", &[c], &[row.len()]));
            }
            data.extend_from_slice(row);
        }
        Self::new(&[r, c], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension of a matrix (1 for vectors).
    #[inline]
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Trailing extent: product of all but the first dimension.
    #[inline]
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn require_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::dim(op, &self.shape, &[0, 0]));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (k, m) = self.require_matrix("matmul_tn")?;
        let (k2, n) = other.require_matrix("matmul_tn")?;
        if k != k2 {
            return Err(Error::dim("matmul_tn", &self.shape, &other.shape));
        }
        let mut out = vec![T::zero(); m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.require_matrix("matmul_nt")?;
        let (n, k2) = other.require_matrix("matmul_nt")?;
        if k != k2 {
            return Err(Error::dim("matmul_nt", &self.shape, &other.shape));
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = T::zero();
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out[i * n + j] = acc;
            }
        }
        Tensor::new(&[m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor<T>> {
        let (m, n) = self.require_matrix("transpose")?;
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(&[n, m], out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[T]) -> Result<()> {
        if bias.len() != self.cols() {
            return Err(Error::dim("add_row_vector", &self.shape, &[bias.len()]));
        }
        let c = self.cols();
        for row in self.data.chunks_mut(c) {
            for (x, &b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim("add", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// Column sums of a matrix.
    pub fn sum_rows(&self) -> Vec<T> {
        let c = self.cols();
        let mut out = vec![T::zero(); c];
        for row in self.data.chunks(c.max(1)) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let a = Tensor::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i = Tensor::identity(2);
        assert_eq!(i.matmul(&a).unwrap(), a);
    }

    #[test]
    fn row_times_column() {
        let a = Tensor::<f64>::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::<f64>::new(&[2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn transposed_products_agree() {
        let a = Tensor::<f64>::new(&[3, 2], vec![1.0, -2.0, 0.5, 4.0, 3.0, 1.0]).unwrap();
        let b = Tensor::<f64>::new(&[3, 4], (0..12).map(|x| x as f64 * 0.3 - 1.0).collect()).unwrap();
        let tn = a.matmul_tn(&b).unwrap();
        let direct = a.transpose().unwrap().matmul(&b).unwrap();
        assert_eq!(tn, direct);
        let nt = b.transpose().unwrap().matmul_nt(&a.transpose().unwrap()).unwrap();
        let direct = b.transpose().unwrap().matmul(&a).unwrap();
        for (x, y) in nt.data().iter().zip(direct.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
