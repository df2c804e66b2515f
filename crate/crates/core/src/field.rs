//! Scalar fields on the quotient lattice.

use std::ops::Deref;
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{Lattice, LatticePoint};
use crate::scalar::Scalar;

/// Real-valued function on lattice nodes, stored in canonical node order.
#[derive(Debug, Clone)]
pub struct Field<T> {
    lattice: Arc<Lattice>,
    values: Vec<T>,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum FieldError<T: Scalar> {
    #[error("field is not strictly positive (min value {0})")]
    NonPositive(T),
    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),
}

impl<T: Scalar> Field<T> {
    pub fn constant(lattice: &Arc<Lattice>, value: T) -> Self {
        Self {
            lattice: Arc::clone(lattice),
            values: vec![value; lattice.node_count()],
        }
    }

    pub fn zeros(lattice: &Arc<Lattice>) -> Self {
        Self::constant(lattice, T::zero())
    }

    pub fn ones(lattice: &Arc<Lattice>) -> Self {
        Self::constant(lattice, T::one())
    }

    pub fn from_fn(lattice: &Arc<Lattice>, mut f: impl FnMut(LatticePoint) -> T) -> Self {
        let values = (0..lattice.node_count())
            .map(|id| f(lattice.point_of(id)))
            .collect();
        Self {
            lattice: Arc::clone(lattice),
            values,
        }
    }

    /// Wraps an existing value vector; the length must match the node count.
    pub fn from_values(lattice: &Arc<Lattice>, values: Vec<T>) -> Self {
        assert_eq!(
            values.len(),
            lattice.node_count(),
            "value vector length must equal the node count"
        );
        Self {
            lattice: Arc::clone(lattice),
            values,
        }
    }

    /// Deterministic pseudo-random field with entries uniform in `[lo, hi)`.
    ///
    /// Backed by splitmix64 so that identical seeds reproduce bit-identical
    /// fields on every platform.
    pub fn seeded_uniform(lattice: &Arc<Lattice>, seed: u64, lo: T, hi: T) -> Self {
        let mut state = seed;
        let span = hi - lo;
        Self::from_fn(lattice, |_| {
            let u = splitmix64(&mut state);
            // 53 high bits -> uniform double in [0, 1).
            let unit = T::of_f64((u >> 11) as f64 / (1u64 << 53) as f64);
            lo + span * unit
        })
    }

    #[inline]
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, p: LatticePoint) -> T {
        self.values[self.lattice.index_of(p)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            lattice: Arc::clone(&self.lattice),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_same_lattice(self, other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self {
            lattice: Arc::clone(&self.lattice),
            values,
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul_pointwise(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self + factor * other`, the workhorse of the iterative solvers.
    pub fn axpy(&mut self, factor: T, other: &Self) {
        assert_same_lattice(self, other);
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn norm_inf(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Plain Euclidean norm of the coefficient vector (no volume weights);
    /// this is the norm used in solver residual contracts.
    pub fn norm_l2(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Volume-weighted integral `(1/N^4) * sum(values)`.
    pub fn integrate(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.lattice.node_volume::<T>()
    }

    /// Volume-weighted inner product `(1/N^4) * sum(u_i v_i)`.
    ///
    /// # Panics
    /// Panics if the fields live on different lattices.
    pub fn inner(&self, other: &Self) -> T {
        assert_same_lattice(self, other);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum::<T>()
            * self.lattice.node_volume::<T>()
    }

    /// Volume-weighted L2 norm, `sqrt(<u, u>)`.
    pub fn norm_l2_weighted(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Validates strict positivity and wraps the field.
    pub fn into_positive(self) -> Result<PositiveField<T>, FieldError<T>> {
        if let Some(idx) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(idx));
        }
        let min = self.min_value();
        if min <= T::zero() {
            return Err(FieldError::NonPositive(min));
        }
        Ok(PositiveField(self))
    }
}

#[inline]
pub(crate) fn assert_same_lattice<T>(a: &Field<T>, b: &Field<T>) {
    assert!(
        Arc::ptr_eq(&a.lattice, &b.lattice) || a.lattice.spec() == b.lattice.spec(),
        "fields live on different lattices"
    );
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Field with a strict positivity invariant (`min > 0`), enforced at
/// construction.
#[derive(Debug, Clone)]
pub struct PositiveField<T>(Field<T>);

impl<T: Scalar> PositiveField<T> {
    pub fn constant(lattice: &Arc<Lattice>, value: T) -> Result<Self, FieldError<T>> {
        Field::constant(lattice, value).into_positive()
    }

    #[inline]
    pub fn field(&self) -> &Field<T> {
        &self.0
    }

    pub fn into_field(self) -> Field<T> {
        self.0
    }

    /// Pointwise power; positivity is preserved.
    pub fn powf(&self, exponent: T) -> PositiveField<T> {
        PositiveField(self.0.map(|v| v.powf(exponent)))
    }

    pub fn scaled_positive(&self, factor: T) -> Result<Self, FieldError<T>> {
        self.0.scaled(factor).into_positive()
    }
}

impl<T> Deref for PositiveField<T> {
    type Target = Field<T>;

    fn deref(&self) -> &Field<T> {
        &self.0
    }
}

impl<T: Scalar> AsRef<Field<T>> for PositiveField<T> {
    fn as_ref(&self) -> &Field<T> {
        &self.0
    }
}

/// One value per directed forward edge: the `X+` edge of node `p` is stored
/// at `p`'s index, the `Y+` edge at `node_count + index`.
#[derive(Debug, Clone)]
pub struct EdgeField<T> {
    lattice: Arc<Lattice>,
    values: Vec<T>,
}

impl<T: Scalar> EdgeField<T> {
    pub fn new(lattice: &Arc<Lattice>, values: Vec<T>) -> Self {
        assert_eq!(values.len(), 2 * lattice.node_count());
        Self {
            lattice: Arc::clone(lattice),
            values,
        }
    }

    #[inline]
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn x_edge(&self, id: usize) -> T {
        self.values[id]
    }

    #[inline]
    pub fn y_edge(&self, id: usize) -> T {
        self.values[self.lattice.node_count() + id]
    }
}
