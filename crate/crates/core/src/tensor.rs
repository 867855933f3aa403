//! Dense row-major tensors and the named parameter store.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn normal<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        Tensor {
            shape: shape.to_vec(),
            data: (0..shape.iter().product::<usize>())
                .map(|_| T::from_f64_lossy(dist.sample(rng)))
                .collect(),
        }
    }

    /// Weight matrix `[fan_in, fan_out]` with std `gain / sqrt(fan_in)`.
    pub fn fan_in<R: Rng>(shape: &[usize], gain: f64, rng: &mut R) -> Self {
        Self::normal(shape, gain / (shape[0] as f64).sqrt(), rng)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }
}

/// Handle to one tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of named tensors. Gradients use the same type with
/// identical names and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn zeros_like(&self) -> Self {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn data(&self, id: ParamId) -> &[T] {
        &self.tensors[id.0].data
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.tensors[id.0].data
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ParamStore<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn global_norm(&self) -> T {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Converts every value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
                })
                .collect(),
        }
    }
}

/// `out[m×n] = a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.iter_mut().for_each(|v| *v = T::zero());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m×n] += aᵀ · b` for `a[k×m]`, `b[k×n]`; the weight-gradient product.
pub fn matmul_at_b_acc<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += a[m×n] · bᵀ` for `b[k×n]`; the input-gradient product.
pub fn matmul_a_bt_acc<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * k + j] += acc;
        }
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Adds `bias` to every row of `x`.
pub fn add_bias<T: Scalar>(x: &mut [T], bias: &[T]) {
    for row in x.chunks_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Accumulates the column sums of `dy` into `dbias`.
pub fn bias_grad_acc<T: Scalar>(dy: &[T], dbias: &mut [T]) {
    for row in dy.chunks(dbias.len()) {
        for (g, &v) in dbias.iter_mut().zip(row) {
            *g += v;
        }
    }
}

/// In-place numerically stable softmax.
pub fn softmax_in_place<T: Scalar>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_shapes_and_values() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut out = [0.0; 4];
        matmul(&a, &b, 2, 3, 2, &mut out);
        assert_eq!(out, [58.0, 64.0, 139.0, 154.0]);

        // aᵀ·b with a 2x3 (k=2,m=3), b 2x2
        let bb = [1.0f64, 0.0, 0.0, 1.0];
        let mut g = [0.0; 6];
        matmul_at_b_acc(&a, &bb, 2, 3, 2, &mut g);
        assert_eq!(g, [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);

        // a·bᵀ with a 2x2, b 3x2
        let mut h = [0.0; 6];
        matmul_a_bt_acc(&bb, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 2, 3, &mut h);
        assert_eq!(h, [1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn softmax_basic() {
        let mut x = [2.0f64.ln(), 0.0];
        softmax_in_place(&mut x);
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15);
        let mut y = [1000.0f32, 1000.0];
        softmax_in_place(&mut y);
        assert_eq!(y, [0.5, 0.5]);
    }
}
