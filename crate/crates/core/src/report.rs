//! Diagnostics of a fitted model: value clusters across classes, lagged
//! effect networks and support overlap between classes.

use crate::error::{Error, Result};
use crate::panel::CoefficientSet;
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Default merge tolerance for [`cluster_report`].
pub const DEFAULT_TAU: f64 = 1e-4;

/// A set of coefficient positions `(lag, target i, source j)`, zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientSubset {
    positions: Vec<(usize, usize, usize)>,
}

impl CoefficientSubset {
    /// Every position of a `series`-dimensional VAR of the given order.
    pub fn all(series: usize, order: usize) -> Self {
        let positions = (0..order)
            .flat_map(|p| (0..series).flat_map(move |i| (0..series).map(move |j| (p, i, j))))
            .collect();
        CoefficientSubset { positions }
    }

    /// Effects of `sources` on `targets` at one lag.
    pub fn block(lag: usize, targets: &[usize], sources: &[usize]) -> Self {
        let positions = targets
            .iter()
            .flat_map(|&i| sources.iter().map(move |&j| (lag, i, j)))
            .collect();
        CoefficientSubset { positions }
    }

    pub fn from_positions(positions: Vec<(usize, usize, usize)>) -> Self {
        CoefficientSubset { positions }
    }

    pub fn positions(&self) -> &[(usize, usize, usize)] {
        &self.positions
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn check<T: Scalar>(&self, beta: &CoefficientSet<T>) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::InvalidParameter("coefficient subset is empty".into()));
        }
        let (j, p) = (beta.series(), beta.order());
        if let Some(bad) = self.positions.iter().find(|&&(l, a, b)| l >= p || a >= j || b >= j) {
            return Err(Error::InvalidParameter(format!(
                "position (lag {}, {}, {}) outside a {j}-series VAR({p})",
                bad.0 + 1,
                bad.1,
                bad.2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGroup {
    /// Zero-based class indices, ascending.
    pub classes: Vec<usize>,
    /// Mean of the members' estimates.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionClusters {
    pub lag: usize,
    pub target: usize,
    pub source: usize,
    /// Ordered by smallest member class.
    pub groups: Vec<ClusterGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub tau: f64,
    pub positions: Vec<PositionClusters>,
}

/// Splits `values` into groups chained by gaps of at most `tau`.
pub fn cluster_values(values: &[f64], tau: f64) -> Vec<ClusterGroup> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (idx, &c) in order.iter().enumerate() {
        if idx == 0 || values[c] - values[order[idx - 1]] > tau {
            groups.push(vec![c]);
        } else {
            groups.last_mut().expect("group opened").push(c);
        }
    }
    let mut out: Vec<ClusterGroup> = groups
        .into_iter()
        .map(|mut classes| {
            classes.sort_unstable();
            let value = classes.iter().map(|&c| values[c]).sum::<f64>() / classes.len() as f64;
            ClusterGroup { classes, value }
        })
        .collect();
    out.sort_by_key(|g| g.classes[0]);
    out
}

/// Groups classes with (transitively) equal estimates at every position.
pub fn cluster_report<T: Scalar>(beta: &CoefficientSet<T>, tau: f64) -> Result<ClusterReport> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    let subset = CoefficientSubset::all(beta.series(), beta.order());
    let positions = subset
        .positions()
        .iter()
        .map(|&(lag, target, source)| {
            let values: Vec<f64> = (0..beta.classes())
                .map(|k| beta.get(k, lag, target, source).as_f64())
                .collect();
            PositionClusters {
                lag,
                target,
                source,
                groups: cluster_values(&values, tau),
            }
        })
        .collect();
    Ok(ClusterReport { tau, positions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub class: usize,
    pub lag: usize,
    /// Influencing series j.
    pub source: usize,
    /// Influenced series i.
    pub target: usize,
    pub weight: f64,
}

impl NetworkEdge {
    pub fn is_positive(&self) -> bool {
        self.weight > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub class_names: Vec<String>,
    pub series_names: Vec<String>,
    pub edges: Vec<NetworkEdge>,
}

/// Widest DOT pen, used for the largest absolute weight.
const MAX_PENWIDTH: f64 = 8.0;

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl Network {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `(out, in)` degree per series for one class.
    pub fn degrees(&self, class: usize) -> (Vec<usize>, Vec<usize>) {
        let j = self.series_names.len();
        let mut out = vec![0; j];
        let mut inn = vec![0; j];
        for e in self.edges.iter().filter(|e| e.class == class) {
            out[e.source] += 1;
            inn[e.target] += 1;
        }
        (out, inn)
    }

    /// Graphviz text: one subgraph per class, edges `source -> target`,
    /// pen width proportional to `|weight|`, blue for positive and red for
    /// negative effects.
    pub fn to_dot(&self) -> String {
        let wmax = self.edges.iter().map(|e| e.weight.abs()).fold(0.0, f64::max);
        let scale = if wmax > 0.0 { MAX_PENWIDTH / wmax } else { 0.0 };
        let mut s = String::from("digraph mcvar {\n");
        for (k, class) in self.class_names.iter().enumerate() {
            let _ = writeln!(s, "  subgraph cluster_{k} {{");
            let _ = writeln!(s, "    label={};", dot_quote(class));
            for (j, name) in self.series_names.iter().enumerate() {
                let _ = writeln!(s, "    {} [label={}];", dot_quote(&format!("{k}:{j}")), dot_quote(name));
            }
            for e in self.edges.iter().filter(|e| e.class == k) {
                let (color, sign) = if e.is_positive() {
                    ("blue", "positive")
                } else {
                    ("red", "negative")
                };
                let _ = writeln!(
                    s,
                    "    {} -> {} [penwidth={:.6}, color={color}, sign={sign}, weight_value={:e}, lag={}];",
                    dot_quote(&format!("{k}:{}", e.source)),
                    dot_quote(&format!("{k}:{}", e.target)),
                    e.weight.abs() * scale,
                    e.weight,
                    e.lag + 1
                );
            }
            s.push_str("  }\n");
        }
        s.push_str("}\n");
        s
    }

    /// `class,lag,source,target,weight,sign`, lags one-based.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,lag,source,target,weight,sign\n");
        for e in &self.edges {
            let _ = writeln!(
                s,
                "{},{},{},{},{:e},{}",
                self.class_names[e.class],
                e.lag + 1,
                self.series_names[e.source],
                self.series_names[e.target],
                e.weight,
                if e.is_positive() { "positive" } else { "negative" }
            );
        }
        s
    }
}

/// One directed edge `j -> i` per class and nonzero coefficient in `subset`.
pub fn network_export<T: Scalar>(
    beta: &CoefficientSet<T>,
    subset: &CoefficientSubset,
    class_names: &[String],
    series_names: &[String],
) -> Result<Network> {
    subset.check(beta)?;
    if class_names.len() != beta.classes() || series_names.len() != beta.series() {
        return Err(Error::DimensionMismatch("names do not match the coefficient set".into()));
    }
    let mut edges = Vec::new();
    for k in 0..beta.classes() {
        for &(lag, target, source) in subset.positions() {
            let w = beta.get(k, lag, target, source).as_f64();
            if w != 0.0 {
                edges.push(NetworkEdge {
                    class: k,
                    lag,
                    source,
                    target,
                    weight: w,
                });
            }
        }
    }
    Ok(Network {
        class_names: class_names.to_vec(),
        series_names: series_names.to_vec(),
        edges,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub class_names: Vec<String>,
    /// Entry `(i, j)`: share of class i's nonzero effects also nonzero in j.
    pub values: DMatrix<f64>,
    /// Classes without any nonzero effect in the subset; their rows are 0.
    pub empty_rows: Vec<usize>,
}

impl SimilarityMatrix {
    /// Square CSV with class names heading rows and columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class");
        for name in &self.class_names {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (i, name) in self.class_names.iter().enumerate() {
            s.push_str(name);
            for j in 0..self.class_names.len() {
                let _ = write!(s, ",{}", self.values[(i, j)]);
            }
            s.push('\n');
        }
        s
    }
}

/// Support overlap between classes over `subset`, normalized by the row
/// class's support size.
pub fn similarity_matrix<T: Scalar>(
    beta: &CoefficientSet<T>,
    subset: &CoefficientSubset,
    class_names: &[String],
) -> Result<SimilarityMatrix> {
    subset.check(beta)?;
    if class_names.len() != beta.classes() {
        return Err(Error::DimensionMismatch("class names do not match the coefficient set".into()));
    }
    let k = beta.classes();
    let support: Vec<Vec<bool>> = (0..k)
        .map(|c| {
            subset
                .positions()
                .iter()
                .map(|&(l, i, j)| beta.get(c, l, i, j) != T::zero())
                .collect()
        })
        .collect();
    let sizes: Vec<usize> = support.iter().map(|s| s.iter().filter(|b| **b).count()).collect();
    let values = DMatrix::from_fn(k, k, |a, b| {
        if sizes[a] == 0 {
            return 0.0;
        }
        let shared = support[a].iter().zip(&support[b]).filter(|(x, y)| **x && **y).count();
        shared as f64 / sizes[a] as f64
    });
    Ok(SimilarityMatrix {
        class_names: class_names.to_vec(),
        values,
        empty_rows: (0..k).filter(|&c| sizes[c] == 0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn beta_from(values: &[[f64; 4]]) -> CoefficientSet<f64> {
        let lags = values
            .iter()
            .map(|v| vec![DMatrix::from_row_slice(2, 2, v)])
            .collect();
        CoefficientSet::from_lags(lags).unwrap()
    }

    #[test]
    fn clusters_example() {
        let g = cluster_values(&[0.3, 0.3, 0.0], 1e-4);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].classes, vec![0, 1]);
        assert_eq!(g[0].value, 0.3);
        assert_eq!(g[1].classes, vec![2]);
        assert_eq!(g[1].value, 0.0);
    }

    #[test]
    fn clusters_chain_transitively() {
        let g = cluster_values(&[0.0, 0.8e-4, 1.6e-4], 1e-4);
        assert_eq!(g.len(), 1);
        let g = cluster_values(&[0.1, 0.1 + 1e-9, 0.1 - 1e-9], 1e-4);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].classes, vec![0, 1, 2]);
    }

    #[test]
    fn cluster_scenarios() {
        // signs and sizes differ
        let g = cluster_values(&[0.2, 0.2, -0.1, -0.1, 0.0], 1e-4);
        assert_eq!(g.len(), 3);
        assert!(g.iter().any(|c| c.value > 0.0) && g.iter().any(|c| c.value < 0.0));
        // same sign, different sizes
        let g = cluster_values(&[0.2, 0.2, 0.05, 0.05, 0.05], 1e-4);
        assert_eq!(g.len(), 2);
        assert!(g.iter().all(|c| c.value > 0.0));
        // a single group
        let g = cluster_values(&[-0.07; 5], 1e-4);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].classes.len(), 5);
    }

    #[test]
    fn cluster_report_covers_positions() {
        let beta = beta_from(&[[0.3, 0.0, 0.1, 0.5], [0.3, 0.0, 0.2, 0.5], [0.0, 0.0, 0.3, 0.5]]);
        let r = cluster_report(&beta, 1e-4).unwrap();
        assert_eq!(r.positions.len(), 4);
        let p = r.positions.iter().find(|p| p.target == 0 && p.source == 0).unwrap();
        assert_eq!(p.groups.len(), 2);
        for p in &r.positions {
            let mut all: Vec<usize> = p.groups.iter().flat_map(|g| g.classes.clone()).collect();
            all.sort_unstable();
            assert_eq!(all, vec![0, 1, 2]);
        }
        assert!(cluster_report(&beta, -1.0).is_err());
    }

    #[test]
    fn single_edge_mapping() {
        let beta = beta_from(&[[0.0, -0.2, 0.0, 0.0]]);
        let net = network_export(&beta, &CoefficientSubset::all(2, 1), &names("c", 1), &names("y", 2)).unwrap();
        assert_eq!(net.edge_count(), 1);
        let e = &net.edges[0];
        assert_eq!((e.source, e.target), (1, 0));
        assert!(!e.is_positive());
        assert_eq!(e.weight, -0.2);
        let dot = net.to_dot();
        assert!(dot.contains("\"0:1\" -> \"0:0\""));
        assert!(dot.contains("color=red"));
        assert!(dot.contains("sign=negative"));
    }

    #[test]
    fn hand_counted_degrees() {
        // class 0: 1->0, 2->0, 0->1, 2->2 ; class 1: none
        let mut beta = CoefficientSet::<f64>::zeros(2, 3, 1);
        beta.set(0, 0, 0, 1, 0.4);
        beta.set(0, 0, 0, 2, -0.1);
        beta.set(0, 0, 1, 0, 0.2);
        beta.set(0, 0, 2, 2, 0.5);
        let net = network_export(&beta, &CoefficientSubset::all(3, 1), &names("c", 2), &names("y", 3)).unwrap();
        assert_eq!(net.edge_count(), beta.nonzero_count());
        let (out, inn) = net.degrees(0);
        assert_eq!(out, vec![1, 1, 2]);
        assert_eq!(inn, vec![2, 1, 1]);
        assert_eq!(net.degrees(1), (vec![0; 3], vec![0; 3]));
        let dot = net.to_dot();
        assert!(dot.contains("subgraph cluster_1"));
        assert!(dot.contains(&format!("penwidth={:.6}", MAX_PENWIDTH)));
        assert!(dot.contains(&format!("penwidth={:.6}", MAX_PENWIDTH * 0.2)));
    }

    #[test]
    fn similarity_examples() {
        // supports over positions a=(0,0), b=(0,1), c=(1,0), d=(1,1)
        let beta = beta_from(&[[1.0, 1.0, 1.0, 0.0], [0.0, 2.0, 3.0, 4.0], [0.0; 4]]);
        let m = similarity_matrix(&beta, &CoefficientSubset::all(2, 1), &names("s", 3)).unwrap();
        assert!((m.values[(0, 1)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.values[(1, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.values[(0, 0)], 1.0);
        assert_eq!(m.values[(2, 2)], 0.0);
        assert_eq!(m.empty_rows, vec![2]);

        let same = beta_from(&[[1.0, 0.0, 1.0, 0.0], [5.0, 0.0, -1.0, 0.0]]);
        let m = similarity_matrix(&same, &CoefficientSubset::all(2, 1), &names("s", 2)).unwrap();
        assert!(m.values.iter().all(|v| *v == 1.0));

        let disjoint = beta_from(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        let m = similarity_matrix(&disjoint, &CoefficientSubset::all(2, 1), &names("s", 2)).unwrap();
        assert_eq!(m.values[(0, 1)], 0.0);
        assert_eq!(m.values[(1, 0)], 0.0);
    }

    #[test]
    fn similarity_csv_shape() {
        let beta = beta_from(&[[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]);
        let m = similarity_matrix(&beta, &CoefficientSubset::all(2, 1), &names("s", 2)).unwrap();
        assert_eq!(m.to_csv(), "class,s1,s2\ns1,1,1\ns2,1,1\n");
    }

    #[test]
    fn subset_validation() {
        let beta = CoefficientSet::<f64>::zeros(1, 2, 1);
        let bad = CoefficientSubset::block(1, &[0], &[0]);
        assert!(similarity_matrix(&beta, &bad, &names("s", 1)).is_err());
        let empty = CoefficientSubset::block(0, &[], &[0]);
        assert!(similarity_matrix(&beta, &empty, &names("s", 1)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn similarity_ignores_magnitudes(v in proptest::collection::vec(prop_oneof![Just(0.0), -1.0..1.0f64], 12)) {
                let rows: Vec<[f64; 4]> = v.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
                let beta = beta_from(&rows);
                let doubled = beta_from(&rows.iter().map(|r| r.map(|x| 2.0 * x)).collect::<Vec<_>>());
                let sub = CoefficientSubset::all(2, 1);
                let a = similarity_matrix(&beta, &sub, &names("s", 3)).unwrap();
                let b = similarity_matrix(&doubled, &sub, &names("s", 3)).unwrap();
                prop_assert_eq!(&a.values, &b.values);
                prop_assert!(a.values.iter().all(|x| (0.0..=1.0).contains(x)));
                for i in 0..3 {
                    if !a.empty_rows.contains(&i) {
                        prop_assert_eq!(a.values[(i, i)], 1.0);
                    }
                }
            }

            #[test]
            fn clusters_partition(v in proptest::collection::vec(-1.0..1.0f64, 1..12), tau in 0.0..0.3f64) {
                let g = cluster_values(&v, tau);
                let mut all: Vec<usize> = g.iter().flat_map(|c| c.classes.clone()).collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..v.len()).collect::<Vec<_>>());
            }
        }
    }
}
