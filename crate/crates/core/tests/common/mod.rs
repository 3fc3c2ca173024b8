//! Independent reference computations shared by the oracle tests and the
//! acceptance run.

#![allow(dead_code)]

use mcvar::jgl::{jgl_fit, AdmmOptions, LogDetWeight, PrecisionSet};
use mcvar::panel::{build_stacked, CoefficientSet, MultiClassPanel};
use mcvar::penalty::{build_coupling, eval_pairwise_fusion};
use mcvar::spg::{gls_loss, gls_loss_grad, smooth_fusion, spg_fit, SpgOptions};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Scalar AR(1) paths `y_t = b y_{t-1} + e_t`, one per coefficient.
pub fn ar1_paths(coefs: &[f64], t: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    coefs
        .iter()
        .map(|&b| {
            let mut y = vec![0.0; t];
            y[0] = normal(&mut r);
            for i in 1..t {
                y[i] = b * y[i - 1] + normal(&mut r);
            }
            y
        })
        .collect()
}

pub fn random_spd(j: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(j, j, |_, _| normal(r));
    &a * a.transpose() / j as f64 + DMatrix::identity(j, j)
}

pub fn random_panel(k: usize, j: usize, t: usize, r: &mut ChaCha8Rng) -> MultiClassPanel<f64> {
    MultiClassPanel::unlabeled((0..k).map(|_| DMatrix::from_fn(t, j, |_, _| normal(r))).collect()).unwrap()
}

pub struct SpgToyCheck {
    pub spg_objective: f64,
    pub grid_objective: f64,
    /// `mu * M / 2` with M coupling rows.
    pub smoothing_gap: f64,
}

/// Two scalar AR(1) classes; exhaustive search over `[-2, 2]^2` at step 1e-3
/// of the exact objective, against `spg_fit` with default options.
pub fn spg_toy(lambda1: f64, lambda2: f64, omegas: [f64; 2], seed: u64) -> SpgToyCheck {
    let paths = ar1_paths(&[0.5, 0.65], 20, seed);
    // sum_t (y_t - b y_{t-1})^2 = a - 2 b h + b^2 g
    let stats: Vec<(f64, f64, f64)> = paths
        .iter()
        .map(|y| {
            let a: f64 = y[1..].iter().map(|v| v * v).sum();
            let h: f64 = (1..y.len()).map(|t| y[t] * y[t - 1]).sum();
            let g: f64 = y[..y.len() - 1].iter().map(|v| v * v).sum();
            (a, h, g)
        })
        .collect();
    let loss = |k: usize, b: f64| {
        let (a, h, g) = stats[k];
        omegas[k] * (a - 2.0 * b * h + b * b * g)
    };
    let exact = |b1: f64, b2: f64| loss(0, b1) + loss(1, b2) + lambda1 * (b1 - b2).abs() + lambda2 * (b1.abs() + b2.abs());

    let steps = 4001;
    let grid: Vec<f64> = (0..steps).map(|i| -2.0 + i as f64 * 1e-3).collect();
    let l1: Vec<f64> = grid.iter().map(|&b| loss(0, b) + lambda2 * b.abs()).collect();
    let l2: Vec<f64> = grid.iter().map(|&b| loss(1, b) + lambda2 * b.abs()).collect();
    let mut best = f64::INFINITY;
    for (i, &bi) in grid.iter().enumerate() {
        for (jdx, &bj) in grid.iter().enumerate() {
            let v = l1[i] + l2[jdx] + lambda1 * (bi - bj).abs();
            if v < best {
                best = v;
            }
        }
    }

    let data = paths.iter().map(|y| DMatrix::from_column_slice(y.len(), 1, y)).collect();
    let panel = MultiClassPanel::unlabeled(data).unwrap();
    let design = build_stacked(&panel, 1).unwrap();
    let omega = PrecisionSet::new(omegas.iter().map(|&w| DMatrix::from_element(1, 1, w)).collect()).unwrap();
    let opts = SpgOptions::default();
    let fit = spg_fit(&design, &omega, lambda1, lambda2, &opts, None).unwrap();
    let b = (fit.beta.get(0, 0, 0, 0), fit.beta.get(1, 0, 0, 0));
    let rows = if lambda1 > 0.0 { 1.0 } else { 0.0 };
    SpgToyCheck {
        spg_objective: exact(b.0, b.1),
        grid_objective: best,
        smoothing_gap: opts.mu * rows / 2.0,
    }
}

fn prox_objective(z: &[f64], x: &[f64], tf: f64, ts: f64) -> f64 {
    let mut v = 0.0;
    for i in 0..z.len() {
        v += 0.5 * (z[i] - x[i]).powi(2) + ts * z[i].abs();
        for j in i + 1..z.len() {
            v += tf * (z[i] - z[j]).abs();
        }
    }
    v
}

/// Coarse-to-fine grid minimizer of the three-class fusion prox objective.
pub fn prox_grid3(x: &[f64; 3], tf: f64, ts: f64) -> [f64; 3] {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min) - 0.1;
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.1;
    let mut center = [0.5 * (lo + hi); 3];
    let mut half = 0.5 * (hi - lo) + 0.05;
    let mut step = 0.01;
    for _ in 0..4 {
        let n = (2.0 * half / step).ceil() as i64;
        let axis = |c: f64| -> Vec<f64> {
            let mut v: Vec<f64> = (0..=n).map(|i| c - half + i as f64 * step).collect();
            v.push(0.0);
            v
        };
        let (a0, a1, a2) = (axis(center[0]), axis(center[1]), axis(center[2]));
        let mut best = (f64::INFINITY, center);
        for &z0 in &a0 {
            for &z1 in &a1 {
                for &z2 in &a2 {
                    let z = [z0, z1, z2];
                    let v = prox_objective(&z, x, tf, ts);
                    if v < best.0 {
                        best = (v, z);
                    }
                }
            }
        }
        center = best.1;
        half = 3.0 * step;
        step /= 10.0;
    }
    center
}

pub fn prox_objective3(z: &[f64], x: &[f64; 3], tf: f64, ts: f64) -> f64 {
    prox_objective(z, x, tf, ts)
}

/// Nelder-Mead with restarts; returns the best point and value.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], scale: f64, restarts: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut best = (x0.to_vec(), f(x0));
    let mut size = scale;
    for _ in 0..restarts {
        let mut simplex: Vec<Vec<f64>> = vec![best.0.clone()];
        for i in 0..n {
            let mut p = best.0.clone();
            p[i] += size;
            simplex.push(p);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
        for _ in 0..4000 {
            let mut idx: Vec<usize> = (0..=n).collect();
            idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
            vals = idx.iter().map(|&i| vals[i]).collect();
            if (vals[n] - vals[0]).abs() < 1e-13 {
                break;
            }
            let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|p| p[d]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (simplex[n][d] - centroid[d])).collect() };
            let xr = along(-1.0);
            let fr = f(&xr);
            if fr < vals[0] {
                let xe = along(-2.0);
                let fe = f(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    vals[n] = fe;
                } else {
                    simplex[n] = xr;
                    vals[n] = fr;
                }
            } else if fr < vals[n - 1] {
                simplex[n] = xr;
                vals[n] = fr;
            } else {
                let xc = if fr < vals[n] { along(-0.5) } else { along(0.5) };
                let fc = f(&xc);
                if fc < vals[n].min(fr) {
                    simplex[n] = xc;
                    vals[n] = fc;
                } else {
                    let x0 = simplex[0].clone();
                    for i in 1..=n {
                        simplex[i] = (0..n).map(|d| x0[d] + 0.5 * (simplex[i][d] - x0[d])).collect();
                        vals[i] = f(&simplex[i]);
                    }
                }
            }
        }
        let i = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        if vals[i] < best.1 {
            best = (simplex[i].clone(), vals[i]);
        }
        size = (size * 0.3).max(1e-6);
    }
    best
}

/// Exact fused graphical lasso criterion for two 2x2 classes, parameterized
/// by `(w11, w12, w22)` per class; `+inf` off the PD cone.
pub fn jgl_objective_2x2(p: &[f64], s: &[DMatrix<f64>; 2], n: f64, g1: f64, g2: f64, jw: f64) -> f64 {
    let mut v = 0.0;
    for k in 0..2 {
        let (a, b, c) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
        let det = a * c - b * b;
        if a <= 0.0 || det <= 0.0 {
            return f64::INFINITY;
        }
        let tr = s[k][(0, 0)] * a + 2.0 * s[k][(0, 1)] * b + s[k][(1, 1)] * c;
        v += n * (tr - jw * det.ln());
        v += g2 * (a.abs() + 2.0 * b.abs() + c.abs());
    }
    v += g1 * ((p[0] - p[3]).abs() + 2.0 * (p[1] - p[4]).abs() + (p[2] - p[5]).abs());
    v
}

pub struct JglCheck {
    pub admm_objective: f64,
    pub reference_objective: f64,
}

pub fn jgl_vs_nelder_mead(seed: u64, g1: f64, g2: f64, weight: LogDetWeight) -> JglCheck {
    let mut r = rng(seed);
    let s = [random_spd(2, &mut r) * 0.5, random_spd(2, &mut r) * 0.7];
    let n = 30usize;
    let jw = weight.value::<f64>(2);
    let f = |p: &[f64]| jgl_objective_2x2(p, &s, n as f64, g1, g2, jw);
    let mut x0 = Vec::new();
    for sk in &s {
        let inv = sk.clone().try_inverse().unwrap() * jw;
        x0.extend_from_slice(&[inv[(0, 0)], inv[(0, 1)], inv[(1, 1)]]);
    }
    let (_, reference) = nelder_mead(&f, &x0, 0.2, 40);
    let opts = AdmmOptions {
        log_det_weight: weight,
        ..Default::default()
    };
    let out = jgl_fit(&s, g1, g2, n, &opts, None).unwrap();
    let w = out.precision.matrices();
    let p = [w[0][(0, 0)], w[0][(0, 1)], w[0][(1, 1)], w[1][(0, 0)], w[1][(0, 1)], w[1][(1, 1)]];
    JglCheck {
        admm_objective: f(&p),
        reference_objective: reference,
    }
}

/// Relative error between the analytic gradient of `g + h_mu` and central
/// differences, on a random K=3, J=2, P=2 instance.
pub fn gradient_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let panel = random_panel(3, 2, 15, &mut r);
    let design = build_stacked(&panel, 2).unwrap();
    let omega = PrecisionSet::new((0..3).map(|_| random_spd(2, &mut r)).collect()).unwrap();
    let lambda1 = 0.5 + r.random::<f64>();
    let mu = 1e-3;
    let coupling = build_coupling(&design.spec, lambda1).unwrap();
    let mut beta = CoefficientSet::zeros_like(&design.spec);
    for k in 0..3 {
        for v in beta.class_values_mut(k) {
            *v = 0.5 * normal(&mut r);
        }
    }
    let value = |b: &CoefficientSet<f64>| gls_loss(b, &design, &omega).unwrap() + smooth_fusion(b, &coupling, mu).unwrap().0;
    let (_, g_loss) = gls_loss_grad(&beta, &design, &omega).unwrap();
    let (_, g_smooth) = smooth_fusion(&beta, &coupling, mu).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..3 {
        for q in 0..beta.class_values(k).len() {
            let x = beta.class_values(k)[q];
            let h = 1e-6 * x.abs().max(1.0);
            let mut plus = beta.clone();
            plus.class_values_mut(k)[q] = x + h;
            let mut minus = beta.clone();
            minus.class_values_mut(k)[q] = x - h;
            let fd = (value(&plus) - value(&minus)) / (2.0 * h);
            let an = g_loss.class_values(k)[q] + g_smooth.class_values(k)[q];
            num += (fd - an).powi(2);
            den += an * an;
        }
    }
    (num / den).sqrt()
}

/// `(lambda1 P1 - h_mu, mu M / 2)` at a random coefficient set.
pub fn smoothing_gap(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let spec = mcvar::PanelSpec::new(4, 3, 10, 2).unwrap();
    let lambda1 = 0.1 + 2.0 * r.random::<f64>();
    let mu = [1e-3, 1e-2, 0.1, 1.0][(seed % 4) as usize];
    let mut beta = CoefficientSet::zeros_like(&spec);
    for k in 0..4 {
        for v in beta.class_values_mut(k) {
            // mix of tiny and large differences so both Huber branches occur
            *v = if r.random::<bool>() { 1e-3 * normal(&mut r) } else { normal(&mut r) };
        }
    }
    let coupling = build_coupling(&spec, lambda1).unwrap();
    let vals: Vec<&[f64]> = (0..4).map(|k| beta.class_values(k)).collect();
    let exact = lambda1 * eval_pairwise_fusion(&vals).unwrap();
    let h = smooth_fusion(&beta, &coupling, mu).unwrap().0;
    (exact - h, mu * coupling.row_count() as f64 / 2.0)
}

/// Characteristic polynomial coefficients of `a` (monic, highest first) by
/// Faddeev-LeVerrier.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let id = DMatrix::<f64>::identity(n, n);
    let mut c = 1.0;
    for k in 1..=n {
        m = a * &m + &id * c;
        c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// All roots of a monic polynomial by Durand-Kerner iteration.
pub fn durand_kerner(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex<f64>| coeffs.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..5000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut den = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / den;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}
