//! Fusion and sparsity penalties and the sparse coupling operator.

use crate::error::{Error, Result};
use crate::panel::{CoefficientSet, PanelSpec};
use crate::scalar::Scalar;

/// Sum over unordered class pairs and entries of `|a_k - a_k'|`.
pub fn eval_pairwise_fusion<T: Scalar, V: AsRef<[T]>>(values: &[V]) -> Result<T> {
    let len = values.first().map_or(0, |v| v.as_ref().len());
    if values.iter().any(|v| v.as_ref().len() != len) {
        return Err(Error::DimensionMismatch("fusion penalty needs equal-length class vectors".into()));
    }
    let mut acc = T::zero();
    for (a, va) in values.iter().enumerate() {
        for vb in &values[a + 1..] {
            for (x, y) in va.as_ref().iter().zip(vb.as_ref()) {
                acc += (*x - *y).abs();
            }
        }
    }
    Ok(acc)
}

/// Sum of absolute values over all classes and entries.
pub fn eval_l1<T: Scalar, V: AsRef<[T]>>(values: &[V]) -> T {
    values
        .iter()
        .flat_map(|v| v.as_ref().iter())
        .fold(T::zero(), |a, b| a + b.abs())
}

/// `sign(v) * max(|v| - t, 0)`
#[inline]
pub fn soft_threshold<T: Scalar>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

/// One row of the coupling matrix: `weight * (beta_first[q] - beta_second[q])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRow<T> {
    pub first: usize,
    pub second: usize,
    pub position: usize,
    pub weight: T,
}

/// Sparse coupling matrix pairing every coefficient position across every
/// unordered pair of classes. Never materialized densely.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionCoupling<T: Scalar> {
    pairs: Vec<(usize, usize)>,
    positions: usize,
    classes: usize,
    weight: T,
}

impl<T: Scalar> FusionCoupling<T> {
    pub fn weight(&self) -> T {
        self.weight
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of rows, K(K-1)/2 * P * J^2.
    pub fn row_count(&self) -> usize {
        self.pairs.len() * self.positions
    }

    /// `(rows, d)`
    pub fn dims(&self) -> (usize, usize) {
        (self.row_count(), self.classes * self.positions)
    }

    pub fn rows(&self) -> impl Iterator<Item = CouplingRow<T>> + '_ {
        (0..self.positions).flat_map(move |q| {
            self.pairs.iter().map(move |&(a, b)| CouplingRow {
                first: a,
                second: b,
                position: q,
                weight: self.weight,
            })
        })
    }

    /// `C beta`, in [`FusionCoupling::rows`] order.
    pub fn apply(&self, beta: &CoefficientSet<T>) -> Vec<T> {
        self.rows()
            .map(|r| r.weight * (beta.class_values(r.first)[r.position] - beta.class_values(r.second)[r.position]))
            .collect()
    }

    /// `C' alpha` accumulated into a coefficient set shaped like `like`.
    pub fn apply_transpose(&self, alpha: &[T], like: &CoefficientSet<T>) -> CoefficientSet<T> {
        let mut out = CoefficientSet::zeros(like.classes(), like.series(), like.order());
        for (r, a) in self.rows().zip(alpha) {
            out.class_values_mut(r.first)[r.position] += r.weight * *a;
            out.class_values_mut(r.second)[r.position] -= r.weight * *a;
        }
        out
    }

    /// `sum_rows |row . beta|`, equal to `weight * P1(beta)`.
    pub fn abs_sum(&self, beta: &CoefficientSet<T>) -> T {
        self.apply(beta).into_iter().fold(T::zero(), |a, b| a + b.abs())
    }
}

/// Coupling for all unordered class pairs with weight `lambda1`.
pub fn build_coupling<T: Scalar>(spec: &PanelSpec, lambda1: T) -> Result<FusionCoupling<T>> {
    if spec.classes < 2 {
        return Err(Error::FusionUndefined(spec.classes));
    }
    if !(lambda1 >= T::zero()) {
        return Err(Error::InvalidParameter(format!("lambda1 must be >= 0, got {lambda1}")));
    }
    let k = spec.classes;
    let pairs = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    Ok(FusionCoupling {
        pairs,
        positions: spec.coefficients_per_class(),
        classes: k,
        weight: lambda1,
    })
}
