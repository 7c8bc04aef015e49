//! Order-3 tensors, matricization, mode products and Tucker reconstruction.
//!
//! Storage is slice-major: entry `(i, j, l)` of an `n1 × n2 × n3` tensor lives
//! at `i + n1 * (j + n2 * l)`. Each frontal slice is therefore a contiguous
//! column-major `n1 × n2` block, and the mode-1 unfolding is the raw buffer
//! viewed as an `n1 × (n2 n3)` column-major matrix.
//!
//! Unfoldings follow the usual convention with the remaining indices ordered
//! first-fastest:
//!
//! ```text
//! M1[i, j + n2 l] = a_ijl      (n1 × n2 n3)
//! M2[j, i + n1 l] = a_ijl      (n2 × n1 n3)
//! M3[l, i + n1 j] = a_ijl      (n3 × n1 n2)
//! ```

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tensor mode (1-based, as in the unfolding formulas).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn from_index(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::invalid("mode", format!("must be 1, 2 or 3, got {k}"))),
        }
    }

    fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }
}

/// Dense order-3 tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3<T: Real> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            dims: [n1, n2, n3],
            data: vec![T::zero(); n1 * n2 * n3],
        }
    }

    pub fn from_fn(n1: usize, n2: usize, n3: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for l in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    data.push(f(i, j, l));
                }
            }
        }
        Self {
            dims: [n1, n2, n3],
            data,
        }
    }

    /// Builds from a slice-major buffer.
    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::dims("Tensor3::from_vec", n, data.len()));
        }
        Ok(Self { dims, data })
    }

    /// Stacks equally shaped matrices as frontal slices.
    pub fn from_slices(slices: &[DMatrix<T>]) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(Error::invalid("slices", "at least one slice required"));
        };
        let (n1, n2) = first.shape();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for (l, s) in slices.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::dims("Tensor3::from_slices", (n1, n2, l), s.shape()));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            dims: [n1, n2, slices.len()],
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> T {
        let [n1, n2, _] = self.dims;
        self.data[i + n1 * (j + n2 * l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, l: usize, v: T) {
        let [n1, n2, _] = self.dims;
        self.data[i + n1 * (j + n2 * l)] = v;
    }

    pub fn n_slices(&self) -> usize {
        self.dims[2]
    }

    /// Frontal slice `l` as a borrowed matrix view.
    pub fn slice_view(&self, l: usize) -> DMatrixView<'_, T> {
        let [n1, n2, _] = self.dims;
        let block = &self.data[n1 * n2 * l..n1 * n2 * (l + 1)];
        DMatrixView::from_slice(block, n1, n2)
    }

    pub fn slice(&self, l: usize) -> DMatrix<T> {
        self.slice_view(l).into_owned()
    }

    pub fn slices(&self) -> Vec<DMatrix<T>> {
        (0..self.dims[2]).map(|l| self.slice(l)).collect()
    }

    /// Tensor made of frontal slices `start..end`.
    pub fn slice_range(&self, start: usize, end: usize) -> Result<Self> {
        let [n1, n2, n3] = self.dims;
        if start >= end || end > n3 {
            return Err(Error::invalid(
                "slice_range",
                format!("{start}..{end} outside 0..{n3}"),
            ));
        }
        Ok(Self {
            dims: [n1, n2, end - start],
            data: self.data[n1 * n2 * start..n1 * n2 * end].to_vec(),
        })
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite_value())
    }

    /// Largest relative asymmetry `max_l ‖S_l − S_lᵀ‖_max / max(‖S_l‖_max, tiny)`.
    pub fn max_slice_asymmetry(&self) -> T {
        let [n1, n2, n3] = self.dims;
        if n1 != n2 {
            return T::max_value().unwrap_or_else(T::one);
        }
        let mut worst = T::zero();
        for l in 0..n3 {
            let mut scale = T::tiny();
            let mut diff = T::zero();
            for j in 0..n2 {
                for i in 0..n1 {
                    let a = self.get(i, j, l);
                    scale = scale.max(a.abs());
                    diff = diff.max((a - self.get(j, i, l)).abs());
                }
            }
            worst = worst.max(diff / scale);
        }
        worst
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::dims("Tensor3::sub", self.dims, other.dims));
        }
        Ok(Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::dims("Tensor3::add", self.dims, other.dims));
        }
        Ok(Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// Mode-`mode` unfolding.
    pub fn matricize(&self, mode: Mode) -> DMatrix<T> {
        let [n1, n2, n3] = self.dims;
        match mode {
            Mode::One => DMatrix::from_column_slice(n1, n2 * n3, &self.data),
            Mode::Two => {
                let mut m = DMatrix::zeros(n2, n1 * n3);
                for l in 0..n3 {
                    for j in 0..n2 {
                        for i in 0..n1 {
                            m[(j, i + n1 * l)] = self.get(i, j, l);
                        }
                    }
                }
                m
            }
            Mode::Three => {
                // Row l of M3 is the slice buffer, so M3ᵀ is the raw buffer
                // viewed as (n1 n2) × n3.
                DMatrix::from_column_slice(n1 * n2, n3, &self.data).transpose()
            }
        }
    }

    /// `M Mᵀ` for the mode-`mode` unfolding `M`, without materializing it.
    pub fn gram(&self, mode: Mode) -> DMatrix<T> {
        let [n1, n2, n3] = self.dims;
        match mode {
            Mode::One => {
                let m = DMatrixView::from_slice(&self.data, n1, n2 * n3);
                m * m.transpose()
            }
            Mode::Two => (0..n3).fold(DMatrix::zeros(n2, n2), |acc, l| {
                let s = self.slice_view(l);
                acc + s.transpose() * s
            }),
            Mode::Three => {
                let m = DMatrixView::from_slice(&self.data, n1 * n2, n3);
                m.transpose() * m
            }
        }
    }

    /// Inverse of [`Tensor3::matricize`] for the given target dimensions.
    pub fn fold(m: &DMatrix<T>, mode: Mode, dims: [usize; 3]) -> Result<Self> {
        let [n1, n2, n3] = dims;
        let expected = match mode {
            Mode::One => (n1, n2 * n3),
            Mode::Two => (n2, n1 * n3),
            Mode::Three => (n3, n1 * n2),
        };
        if m.shape() != expected {
            return Err(Error::dims("Tensor3::fold", expected, m.shape()));
        }
        let data = match mode {
            Mode::One => m.as_slice().to_vec(),
            Mode::Two => {
                let mut out = Self::zeros(n1, n2, n3);
                for l in 0..n3 {
                    for j in 0..n2 {
                        for i in 0..n1 {
                            out.set(i, j, l, m[(j, i + n1 * l)]);
                        }
                    }
                }
                return Ok(out);
            }
            Mode::Three => m.transpose().as_slice().to_vec(),
        };
        Ok(Self { dims, data })
    }

    /// Mode product `self ×_mode a`, where `a` has as many columns as the
    /// tensor's extent along `mode`.
    pub fn mode_product(&self, a: &DMatrix<T>, mode: Mode) -> Result<Self> {
        let axis = mode.axis();
        if a.ncols() != self.dims[axis] {
            return Err(Error::DimensionMismatch {
                context: "mode_product",
                expected: format!(
                    "matrix with {} columns (tensor extent along mode {})",
                    self.dims[axis],
                    axis + 1
                ),
                actual: format!("{} × {} matrix", a.nrows(), a.ncols()),
            });
        }
        let mut dims = self.dims;
        dims[axis] = a.nrows();
        match mode {
            // Slice-wise products avoid materializing the mode-2 unfolding.
            Mode::One => {
                let unfolded = a * self.matricize(Mode::One);
                Self::fold(&unfolded, Mode::One, dims)
            }
            Mode::Two => {
                let at = a.transpose();
                let slices: Vec<DMatrix<T>> = (0..self.dims[2])
                    .map(|l| self.slice_view(l) * &at)
                    .collect();
                if slices.is_empty() {
                    return Ok(Self::zeros(dims[0], dims[1], 0));
                }
                Self::from_slices(&slices)
            }
            Mode::Three => {
                let unfolded = a * self.matricize(Mode::Three);
                Self::fold(&unfolded, Mode::Three, dims)
            }
        }
    }
}

/// Tucker factors of a tensor with a shared loading on modes 1 and 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerFactors<T: Real> {
    /// `r1 × r1 × r2` core.
    pub core: Tensor3<T>,
    /// `p × r1`, column-orthonormal.
    pub loading_q: DMatrix<T>,
    /// `D × r2`, column-orthonormal.
    pub loading_v: DMatrix<T>,
}

impl<T: Real> TuckerFactors<T> {
    pub fn new(core: Tensor3<T>, loading_q: DMatrix<T>, loading_v: DMatrix<T>) -> Result<Self> {
        let [a, b, c] = core.dims();
        if a != b || loading_q.ncols() != a || loading_v.ncols() != c {
            return Err(Error::dims(
                "TuckerFactors::new",
                "core r1×r1×r2 with Q: p×r1, V: D×r2".to_string(),
                format!(
                    "core {:?}, Q {:?}, V {:?}",
                    core.dims(),
                    loading_q.shape(),
                    loading_v.shape()
                ),
            ));
        }
        Ok(Self {
            core,
            loading_q,
            loading_v,
        })
    }

    /// `core ×₁ Q ×₂ Q ×₃ V`.
    pub fn reconstruct(&self) -> Result<Tensor3<T>> {
        tucker_reconstruct(&self.core, &self.loading_q, &self.loading_v)
    }
}

/// `core ×₁ q ×₂ q ×₃ v`.
pub fn tucker_reconstruct<T: Real>(
    core: &Tensor3<T>,
    q: &DMatrix<T>,
    v: &DMatrix<T>,
) -> Result<Tensor3<T>> {
    // Mode 3 first keeps the intermediate small (r1 × r1 × D).
    core.mode_product(v, Mode::Three)?
        .mode_product(q, Mode::One)?
        .mode_product(q, Mode::Two)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> Tensor3<f64> {
        Tensor3::from_fn(2, 2, 2, |i, j, k| (1 + i + 2 * j + 4 * k) as f64)
    }

    #[test]
    fn mode_one_unfolding_matches_definition() {
        let m = example().matricize(Mode::One);
        let expected = DMatrix::from_row_slice(2, 4, &[1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(m, expected);
    }

    #[test]
    fn mode_two_and_three_unfoldings() {
        let t = example();
        let m2 = t.matricize(Mode::Two);
        assert_eq!(
            m2,
            DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0])
        );
        let m3 = t.matricize(Mode::Three);
        assert_eq!(
            m3,
            DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
        );
    }

    #[test]
    fn scalar_mode_product() {
        let t = Tensor3::from_vec([1, 1, 1], vec![3.5]).unwrap();
        let out = t.mode_product(&DMatrix::from_element(1, 1, 2.0), Mode::One).unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let err = example()
            .mode_product(&DMatrix::zeros(3, 3), Mode::Two)
            .unwrap_err();
        assert!(err.to_string().contains("mode_product"));
    }

    #[test]
    fn single_entry_reconstruction() {
        let core = Tensor3::from_vec([1, 1, 1], vec![1.0]).unwrap();
        let mut q = DMatrix::zeros(3, 1);
        q[(0, 0)] = 1.0;
        let mut v = DMatrix::zeros(4, 1);
        v[(0, 0)] = 1.0;
        let t = TuckerFactors::new(core, q, v).unwrap().reconstruct().unwrap();
        assert_eq!(t.dims(), [3, 3, 4]);
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(t.frobenius_norm(), 1.0);
    }

    #[test]
    fn slice_range_and_views() {
        let t = example();
        let tail = t.slice_range(1, 2).unwrap();
        assert_eq!(tail.slice(0), t.slice(1));
        assert!(t.slice_range(1, 1).is_err());
    }
}
