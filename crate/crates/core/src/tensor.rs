//! Dense row-major arrays.

use crate::error::{Error, Result};
use crate::Scalar;

/// A dense, row-major, n-dimensional array of [`Scalar`]s.
///
/// Every extent is at least one and the buffer length always equals the
/// product of the shape.
#[derive(Clone, Debug, PartialEq)]
pub struct NdArray {
    shape: Vec<usize>,
    data: Vec<Scalar>,
}

impl NdArray {
    pub fn new(shape: Vec<usize>, data: Vec<Scalar>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::usage(format!(
                "shape {shape:?} holds {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(NdArray { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: Scalar) -> Self {
        check_shape(shape).expect("invalid shape");
        let n = shape.iter().product();
        NdArray {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// A one-element array of shape `[1]`.
    pub fn scalar(value: Scalar) -> Self {
        NdArray {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// A rank-1 array.
    pub fn from_vec(data: Vec<Scalar>) -> Self {
        assert!(!data.is_empty(), "arrays must hold at least one element");
        NdArray {
            shape: vec![data.len()],
            data,
        }
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

    pub fn data(&self) -> &[Scalar] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Scalar] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Scalar> {
        self.data
    }

    /// The single value of a one-element array.
    pub fn item(&self) -> Result<Scalar> {
        if self.data.len() != 1 {
            return Err(Error::usage(format!(
                "item() on an array of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        NdArray::new(shape.to_vec(), self.data.clone())
    }

    /// Elements per leading index, i.e. the size of one "row" along axis 0.
    pub fn row_len(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn map(&self, f: impl Fn(Scalar) -> Scalar) -> Self {
        NdArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &NdArray, f: impl Fn(Scalar, Scalar) -> Scalar) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        NdArray {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &NdArray) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn fill(&mut self, value: Scalar) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> Scalar {
        self.data.iter().sum()
    }

    pub fn max(&self) -> Scalar {
        self.data
            .iter()
            .cloned()
            .fold(Scalar::NEG_INFINITY, Scalar::max)
    }

    pub fn min(&self) -> Scalar {
        self.data
            .iter()
            .cloned()
            .fold(Scalar::INFINITY, Scalar::min)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stack equally shaped arrays along a new leading axis.
    pub fn stack(items: &[&NdArray]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::usage("cannot stack zero arrays"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * items.len());
        for item in items {
            if item.shape != first.shape {
                return Err(Error::usage(format!(
                    "cannot stack {:?} with {:?}",
                    item.shape, first.shape
                )));
            }
            data.extend_from_slice(&item.data);
        }
        NdArray::new(shape, data)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::usage("arrays need at least one dimension"));
    }
    if shape.contains(&0) {
        return Err(Error::usage(format!("zero extent in shape {shape:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_buffers() {
        assert!(NdArray::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(NdArray::new(vec![2, 0], vec![]).is_err());
        assert!(NdArray::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn stack_adds_leading_axis() {
        let a = NdArray::from_vec(vec![1.0, 2.0]);
        let b = NdArray::from_vec(vec![3.0, 4.0]);
        let s = NdArray::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.row(1), &[3.0, 4.0]);
    }
}
