//! Multi-class panel data, the stacked regression form and coefficient storage.

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};

/// Dimensions of a multi-class VAR(P) problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PanelSpec {
    /// K
    pub classes: usize,
    /// J
    pub series: usize,
    /// T
    pub time_len: usize,
    /// P
    pub order: usize,
}

impl PanelSpec {
    pub fn new(classes: usize, series: usize, time_len: usize, order: usize) -> Result<Self> {
        if classes == 0 || series == 0 || time_len == 0 || order == 0 {
            return Err(Error::InvalidSpec(format!(
                "K={classes}, J={series}, T={time_len}, P={order} must all be positive"
            )));
        }
        if time_len <= order {
            return Err(Error::OrderTooLarge { order, time_len });
        }
        Ok(PanelSpec {
            classes,
            series,
            time_len,
            order,
        })
    }

    /// N = T - P, the number of usable equations per series.
    pub fn effective_len(&self) -> usize {
        self.time_len - self.order
    }

    /// P * J^2
    pub fn coefficients_per_class(&self) -> usize {
        self.order * self.series * self.series
    }

    /// d = K * P * J^2
    pub fn total_coefficients(&self) -> usize {
        self.classes * self.coefficients_per_class()
    }
}

/// Per-class `T x J` observation matrices with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiClassPanel<T: Scalar> {
    data: Vec<DMatrix<T>>,
    series_names: Vec<String>,
    class_names: Vec<String>,
}

impl<T: Scalar> MultiClassPanel<T> {
    pub fn new(data: Vec<DMatrix<T>>, series_names: Vec<String>, class_names: Vec<String>) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::InvalidSpec("panel has no classes".into()))?;
        let (t, j) = first.shape();
        if t == 0 || j == 0 {
            return Err(Error::InvalidSpec(format!("class 0 has shape {t}x{j}")));
        }
        for (k, m) in data.iter().enumerate() {
            if m.shape() != (t, j) {
                return Err(Error::Unbalanced(format!(
                    "class {k} has shape {}x{}, class 0 has {t}x{j}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            for r in 0..t {
                for c in 0..j {
                    if !m[(r, c)].is_finite() {
                        return Err(Error::NonFinite {
                            class: k,
                            time: r,
                            series: c,
                        });
                    }
                }
            }
        }
        if series_names.len() != j {
            return Err(Error::DimensionMismatch(format!(
                "{} series names for {j} series",
                series_names.len()
            )));
        }
        if class_names.len() != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} class names for {} classes",
                class_names.len(),
                data.len()
            )));
        }
        Ok(MultiClassPanel {
            data,
            series_names,
            class_names,
        })
    }

    /// Panel with generated labels `y1..yJ` and `class1..classK`.
    pub fn unlabeled(data: Vec<DMatrix<T>>) -> Result<Self> {
        let j = data.first().map_or(0, |m| m.ncols());
        let k = data.len();
        Self::new(
            data,
            (1..=j).map(|i| format!("y{i}")).collect(),
            (1..=k).map(|i| format!("class{i}")).collect(),
        )
    }

    pub fn classes(&self) -> usize {
        self.data.len()
    }

    pub fn series(&self) -> usize {
        self.data[0].ncols()
    }

    pub fn time_len(&self) -> usize {
        self.data[0].nrows()
    }

    pub fn spec(&self, order: usize) -> Result<PanelSpec> {
        PanelSpec::new(self.classes(), self.series(), self.time_len(), order)
    }

    pub fn class_data(&self, k: usize) -> &DMatrix<T> {
        &self.data[k]
    }

    pub fn data(&self) -> &[DMatrix<T>] {
        &self.data
    }

    pub fn series_names(&self) -> &[String] {
        &self.series_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    fn map_columns(&self, f: impl Fn(&mut [T]) -> T) -> (Self, Vec<DVector<T>>) {
        let mut out = self.clone();
        let stats = out
            .data
            .iter_mut()
            .map(|m| {
                let j = m.ncols();
                DVector::from_iterator(j, (0..j).map(|c| f(m.column_mut(c).as_mut_slice())))
            })
            .collect();
        (out, stats)
    }
}

/// Subtracts each (class, series) mean. Returns the centered panel and the
/// per-class vectors of means.
pub fn center_panel<T: Scalar>(panel: &MultiClassPanel<T>) -> (MultiClassPanel<T>, Vec<DVector<T>>) {
    panel.map_columns(|col| {
        let mean = col.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(col.len());
        for v in col.iter_mut() {
            *v -= mean;
        }
        mean
    })
}

/// Divides each (class, series) column by its standard deviation (divisor T).
/// Constant columns are left untouched and report a scale of 1. Expects a
/// centered panel.
pub fn scale_panel<T: Scalar>(panel: &MultiClassPanel<T>) -> (MultiClassPanel<T>, Vec<DVector<T>>) {
    panel.map_columns(|col| {
        let ss = col.iter().fold(T::zero(), |a, &b| a + b * b);
        let sd = (ss / T::from_count(col.len())).sqrt();
        if sd > T::zero() {
            for v in col.iter_mut() {
                *v /= sd;
            }
            sd
        } else {
            T::one()
        }
    })
}

/// Regression data of one class together with cached cross products.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDesign<T: Scalar> {
    /// `N x J` targets, row t = y_{t+P}.
    pub targets: DMatrix<T>,
    /// `N x JP` lagged predictors `[y_{t-1}' ... y_{t-P}']`.
    pub predictors: DMatrix<T>,
    /// `X0' X0`
    pub gram: DMatrix<T>,
    /// `Y' X0`
    pub cross: DMatrix<T>,
    /// `Y' Y`
    pub target_gram: DMatrix<T>,
}

impl<T: Scalar> ClassDesign<T> {
    fn new(targets: DMatrix<T>, predictors: DMatrix<T>) -> Self {
        let gram = predictors.tr_mul(&predictors);
        let cross = targets.tr_mul(&predictors);
        let target_gram = targets.tr_mul(&targets);
        ClassDesign {
            targets,
            predictors,
            gram,
            cross,
            target_gram,
        }
    }

    /// Response vector of length `N * J`, series 1 first.
    pub fn response(&self) -> DVector<T> {
        DVector::from_column_slice(self.targets.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedDesign<T: Scalar> {
    pub spec: PanelSpec,
    pub classes: Vec<ClassDesign<T>>,
}

impl<T: Scalar> StackedDesign<T> {
    pub fn effective_len(&self) -> usize {
        self.spec.effective_len()
    }
}

/// Builds the lagged regression form of every class.
pub fn build_stacked<T: Scalar>(panel: &MultiClassPanel<T>, order: usize) -> Result<StackedDesign<T>> {
    let spec = panel.spec(order)?;
    let n = spec.effective_len();
    let j = spec.series;
    let classes = panel
        .data()
        .iter()
        .map(|y| {
            let targets = y.rows(order, n).into_owned();
            let predictors = DMatrix::from_fn(n, j * order, |t, c| {
                let lag = c / j + 1;
                y[(t + order - lag, c % j)]
            });
            ClassDesign::new(targets, predictors)
        })
        .collect();
    Ok(StackedDesign { spec, classes })
}

/// Autoregressive coefficients: for each class one `J x JP` block `[B_1 ... B_P]`.
///
/// Entry `(i, p*J + j)` of class `k` is the effect of series `j` at lag `p+1`
/// on series `i`. A coefficient *position* indexes the column-major storage of
/// that block, `q = p*J^2 + j*J + i`, and is shared by every class.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet<T: Scalar> {
    blocks: Vec<DMatrix<T>>,
    order: usize,
}

impl<T: Scalar> CoefficientSet<T> {
    pub fn zeros(classes: usize, series: usize, order: usize) -> Self {
        CoefficientSet {
            blocks: vec![DMatrix::zeros(series, series * order); classes],
            order,
        }
    }

    pub fn zeros_like(spec: &PanelSpec) -> Self {
        Self::zeros(spec.classes, spec.series, spec.order)
    }

    /// From per-class lists of `J x J` lag matrices.
    pub fn from_lags(lags: Vec<Vec<DMatrix<T>>>) -> Result<Self> {
        let order = lags.first().map_or(0, |l| l.len());
        let j = lags.first().and_then(|l| l.first()).map_or(0, |m| m.nrows());
        if order == 0 || j == 0 {
            return Err(Error::InvalidSpec("empty coefficient set".into()));
        }
        let mut blocks = Vec::with_capacity(lags.len());
        for (k, class) in lags.iter().enumerate() {
            if class.len() != order || class.iter().any(|m| m.shape() != (j, j)) {
                return Err(Error::DimensionMismatch(format!("class {k} lag matrices")));
            }
            let mut block = DMatrix::zeros(j, j * order);
            for (p, m) in class.iter().enumerate() {
                block.columns_mut(p * j, j).copy_from(m);
            }
            blocks.push(block);
        }
        Ok(CoefficientSet { blocks, order })
    }

    pub fn from_blocks(blocks: Vec<DMatrix<T>>, order: usize) -> Result<Self> {
        let j = blocks.first().map_or(0, |b| b.nrows());
        if order == 0 || j == 0 || blocks.iter().any(|b| b.shape() != (j, j * order)) {
            return Err(Error::DimensionMismatch("coefficient blocks".into()));
        }
        Ok(CoefficientSet { blocks, order })
    }

    pub fn classes(&self) -> usize {
        self.blocks.len()
    }

    pub fn series(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// P * J^2
    pub fn positions(&self) -> usize {
        self.blocks[0].len()
    }

    /// d = K * P * J^2
    pub fn len(&self) -> usize {
        self.classes() * self.positions()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// beta_{p,ij}^{(k)} with zero-based `lag` (0 = first lag).
    pub fn get(&self, k: usize, lag: usize, i: usize, j: usize) -> T {
        self.blocks[k][(i, lag * self.series() + j)]
    }

    pub fn set(&mut self, k: usize, lag: usize, i: usize, j: usize, v: T) {
        let s = self.series();
        self.blocks[k][(i, lag * s + j)] = v;
    }

    /// The `J x J` matrix B_{lag+1} of class `k`.
    pub fn lag_matrix(&self, k: usize, lag: usize) -> DMatrix<T> {
        let j = self.series();
        self.blocks[k].columns(lag * j, j).into_owned()
    }

    pub fn block(&self, k: usize) -> &DMatrix<T> {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut DMatrix<T> {
        &mut self.blocks[k]
    }

    pub fn fill_zero(&mut self) {
        for b in &mut self.blocks {
            b.fill(T::zero());
        }
    }

    pub fn blocks(&self) -> &[DMatrix<T>] {
        &self.blocks
    }

    /// Position index of (lag, i, j), zero-based.
    pub fn position(&self, lag: usize, i: usize, j: usize) -> usize {
        let s = self.series();
        lag * s * s + j * s + i
    }

    /// Inverse of [`CoefficientSet::position`].
    pub fn unravel(&self, q: usize) -> (usize, usize, usize) {
        let s = self.series();
        (q / (s * s), q % s, (q / s) % s)
    }

    pub fn class_values(&self, k: usize) -> &[T] {
        self.blocks[k].as_slice()
    }

    pub fn class_values_mut(&mut self, k: usize) -> &mut [T] {
        self.blocks[k].as_mut_slice()
    }

    /// Per-class coefficient lists, in position order.
    pub fn to_class_vectors(&self) -> Vec<Vec<T>> {
        self.blocks.iter().map(|b| b.as_slice().to_vec()).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.iter().filter(|v| **v != T::zero()).count())
            .sum()
    }

    /// Largest cross-class range `max_k b - min_k b` over all positions.
    pub fn max_cross_class_range(&self) -> T {
        (0..self.positions())
            .map(|q| {
                let (lo, hi) = self.blocks.iter().fold(
                    (self.blocks[0].as_slice()[q], self.blocks[0].as_slice()[q]),
                    |(lo, hi), b| (lo.min(b.as_slice()[q]), hi.max(b.as_slice()[q])),
                );
                hi - lo
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    fn check_against(&self, spec: &PanelSpec) -> Result<()> {
        if self.classes() != spec.classes || self.series() != spec.series || self.order != spec.order {
            return Err(Error::DimensionMismatch(format!(
                "coefficients are K={} J={} P={}, design is K={} J={} P={}",
                self.classes(),
                self.series(),
                self.order,
                spec.classes,
                spec.series,
                spec.order
            )));
        }
        Ok(())
    }

    /// Companion matrix of class `k`.
    pub fn companion(&self, k: usize) -> DMatrix<T> {
        let j = self.series();
        let jp = j * self.order;
        let mut c = DMatrix::zeros(jp, jp);
        c.rows_mut(0, j).copy_from(&self.blocks[k]);
        for r in j..jp {
            c[(r, r - j)] = T::one();
        }
        c
    }
}

pub(crate) fn ensure_matches<T: Scalar>(spec: &PanelSpec, beta: &CoefficientSet<T>) -> Result<()> {
    beta.check_against(spec)
}

/// Per-class `N x J` residual matrices `Y - X0 B'`.
pub fn residuals<T: Scalar>(design: &StackedDesign<T>, beta: &CoefficientSet<T>) -> Result<Vec<DMatrix<T>>> {
    beta.check_against(&design.spec)?;
    Ok(design
        .classes
        .iter()
        .zip(beta.blocks())
        .map(|(c, b)| &c.targets - &c.predictors * b.transpose())
        .collect())
}

/// Spectral radius of the companion matrix of class `k`; the VAR is stable iff < 1.
pub fn var_stability<T: Scalar>(beta: &CoefficientSet<T>, k: usize) -> T {
    linalg::spectral_radius(&beta.companion(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_class(values: &[f64], j: usize) -> MultiClassPanel<f64> {
        let t = values.len() / j;
        MultiClassPanel::unlabeled(vec![DMatrix::from_row_slice(t, j, values)]).unwrap()
    }

    #[test]
    fn centering_examples() {
        let (c, means) = center_panel(&one_class(&[1.0, 2.0, 3.0], 1));
        assert_eq!(c.class_data(0).as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(means[0][0], 2.0);

        let (c2, means2) = center_panel(&c);
        assert_eq!(c2, c);
        assert_eq!(means2[0][0], 0.0);

        let (c3, means3) = center_panel(&one_class(&[5.0, 5.0, 5.0], 1));
        assert_eq!(c3.class_data(0).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(means3[0][0], 5.0);
    }

    #[test]
    fn centering_is_per_class() {
        let p = MultiClassPanel::unlabeled(vec![
            DMatrix::from_row_slice(2, 1, &[1.0, 3.0]),
            DMatrix::from_row_slice(2, 1, &[10.0, 20.0]),
        ])
        .unwrap();
        let (c, means) = center_panel(&p);
        assert_eq!(means[0][0], 2.0);
        assert_eq!(means[1][0], 15.0);
        assert_eq!(c.class_data(1).as_slice(), &[-5.0, 5.0]);
    }

    #[test]
    fn scaling_gives_unit_variance() {
        let (c, _) = center_panel(&one_class(&[1.0, 2.0, 3.0, 6.0], 1));
        let (s, sd) = scale_panel(&c);
        let var: f64 = s.class_data(0).iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-12);
        assert!(sd[0][0] > 0.0);
        let (s0, sd0) = scale_panel(&one_class(&[0.0, 0.0], 1));
        assert_eq!(sd0[0][0], 1.0);
        assert_eq!(s0.class_data(0).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_panels() {
        assert!(matches!(
            MultiClassPanel::unlabeled(vec![DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN])]),
            Err(Error::NonFinite { class: 0, time: 1, series: 0 })
        ));
        assert!(matches!(
            MultiClassPanel::unlabeled(vec![DMatrix::<f64>::zeros(3, 2), DMatrix::zeros(4, 2)]),
            Err(Error::Unbalanced(_))
        ));
        let p = one_class(&[1.0, 2.0, 3.0], 1);
        assert!(matches!(build_stacked(&p, 3), Err(Error::OrderTooLarge { .. })));
    }

    #[test]
    fn one_lag_shift() {
        let d = build_stacked(&one_class(&[1.0, 2.0, 3.0], 1), 1).unwrap();
        assert_eq!(d.classes[0].targets.as_slice(), &[2.0, 3.0]);
        assert_eq!(d.classes[0].predictors.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn two_lag_shift() {
        let d = build_stacked(&one_class(&[1.0, 2.0, 3.0, 4.0], 1), 2).unwrap();
        assert_eq!(d.effective_len(), 2);
        let x = &d.classes[0].predictors;
        assert_eq!(d.classes[0].targets.as_slice(), &[3.0, 4.0]);
        // row t: (lag 1, lag 2)
        assert_eq!((x[(0, 0)], x[(0, 1)]), (2.0, 1.0));
        assert_eq!((x[(1, 0)], x[(1, 1)]), (3.0, 2.0));
    }

    #[test]
    fn two_series_stacking_matches_direct_recursion() {
        // y_t = B y_{t-1} evaluated by hand, then compared with X0 * B'
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let mut rows = vec![[1.0, -1.0]];
        for t in 1..5 {
            let prev = rows[t - 1];
            rows.push([
                0.5 * prev[0] + 0.1 * prev[1],
                -0.2 * prev[0] + 0.3 * prev[1],
            ]);
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let d = build_stacked(&one_class(&flat, 2), 1).unwrap();
        let c = &d.classes[0];
        assert_eq!(c.predictors.ncols(), 2);
        let y = c.response();
        assert_eq!(y.len(), 8);
        // series 1 stacked before series 2
        for t in 0..4 {
            assert_eq!(y[t], rows[t + 1][0]);
            assert_eq!(y[4 + t], rows[t + 1][1]);
        }
        let fitted = &c.predictors * b.transpose();
        assert!((fitted - &c.targets).abs().max() < 1e-15);
    }

    #[test]
    fn residual_examples() {
        let p = one_class(&[1.0, 0.5, 0.2, -0.3], 1);
        let d = build_stacked(&p, 1).unwrap();
        let zero = CoefficientSet::zeros(1, 1, 1);
        assert_eq!(residuals(&d, &zero).unwrap()[0], d.classes[0].targets);

        let mut beta = CoefficientSet::zeros(1, 1, 1);
        beta.set(0, 0, 0, 0, 0.4);
        let e = residuals(&d, &beta).unwrap();
        let expected = [0.5 - 0.4 * 1.0, 0.2 - 0.4 * 0.5, -0.3 - 0.4 * 0.2];
        for (a, b) in e[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }

        assert!(matches!(
            residuals(&d, &CoefficientSet::zeros(2, 1, 1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn coefficient_positions_roundtrip() {
        let beta = CoefficientSet::<f64>::zeros(2, 3, 2);
        assert_eq!(beta.positions(), 18);
        assert_eq!(beta.len(), 36);
        for q in 0..18 {
            let (p, i, j) = beta.unravel(q);
            assert_eq!(beta.position(p, i, j), q);
        }
        let mut b = beta.clone();
        b.set(1, 1, 2, 0, 7.0);
        assert_eq!(b.class_values(1)[b.position(1, 2, 0)], 7.0);
        assert_eq!(b.lag_matrix(1, 1)[(2, 0)], 7.0);
    }

    #[test]
    fn stability_examples() {
        let mut upper = DMatrix::from_element(3, 3, 0.0);
        for i in 0..3 {
            upper[(i, i)] = 0.5;
            for j in i + 1..3 {
                upper[(i, j)] = 0.3;
            }
        }
        let beta = CoefficientSet::from_lags(vec![vec![upper]]).unwrap();
        assert!((var_stability(&beta, 0) - 0.5f64).abs() < 1e-10);

        let id = CoefficientSet::from_lags(vec![vec![DMatrix::<f64>::identity(2, 2)]]).unwrap();
        assert!((var_stability(&id, 0) - 1.0).abs() < 1e-12);
    }
}
