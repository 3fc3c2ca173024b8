//! Coefficient stage: smoothed fused lasso under GLS loss, solved by FISTA.
//!
//! The fusion penalty `lambda1 * P1` is replaced by its Nesterov smoothing
//! `h_mu(beta) = max_{|alpha|_inf <= 1} alpha' C beta - mu/2 |alpha|^2`,
//! which per coupling row is a Huber function of `z = row . beta`. The
//! remaining `lambda2 * P2` term is handled by the soft-thresholding prox.

use crate::error::{Error, Result};
use crate::jgl::PrecisionSet;
use crate::linalg;
use crate::panel::{ensure_matches, residuals, CoefficientSet, StackedDesign};
use crate::penalty::{build_coupling, eval_l1, eval_pairwise_fusion, soft_threshold, FusionCoupling};
use crate::scalar::Scalar;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpgOptions<T> {
    /// Smoothing parameter, > 0.
    pub mu: T,
    pub max_iter: usize,
    /// Relative objective change below which iterations stop.
    pub tol: T,
}

impl<T: Scalar> Default for SpgOptions<T> {
    fn default() -> Self {
        SpgOptions {
            mu: T::lit(1e-3),
            max_iter: 2000,
            tol: T::lit(1e-6),
        }
    }
}

impl<T: Scalar> SpgOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.mu > T::zero()) {
            return Err(Error::InvalidParameter(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.tol > T::zero()) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("SPG tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Value of `h_mu` and its gradient `C' alpha*`.
pub fn smooth_fusion<T: Scalar>(
    beta: &CoefficientSet<T>,
    coupling: &FusionCoupling<T>,
    mu: T,
) -> Result<(T, CoefficientSet<T>)> {
    if !(mu > T::zero()) {
        return Err(Error::InvalidParameter(format!("mu must be > 0, got {mu}")));
    }
    let mut grad = CoefficientSet::zeros(beta.classes(), beta.series(), beta.order());
    let value = smooth_fusion_into(beta, coupling, mu, &mut grad);
    Ok((value, grad))
}

/// Adds the gradient into `grad` and returns the value.
fn smooth_fusion_into<T: Scalar>(
    beta: &CoefficientSet<T>,
    coupling: &FusionCoupling<T>,
    mu: T,
    grad: &mut CoefficientSet<T>,
) -> T {
    let w = coupling.weight();
    let half = T::lit(0.5);
    let mut value = T::zero();
    for &(a, b) in coupling.pairs() {
        let (va, vb) = (beta.class_values(a), beta.class_values(b));
        let mut ga = vec![T::zero(); va.len()];
        for q in 0..va.len() {
            let z = w * (va[q] - vb[q]);
            let alpha = if z > mu {
                value += z - half * mu;
                T::one()
            } else if z < -mu {
                value += -z - half * mu;
                -T::one()
            } else {
                value += z * z / (mu + mu);
                z / mu
            };
            ga[q] = w * alpha;
        }
        for (g, d) in grad.class_values_mut(a).iter_mut().zip(&ga) {
            *g += *d;
        }
        for (g, d) in grad.class_values_mut(b).iter_mut().zip(&ga) {
            *g -= *d;
        }
    }
    value
}

/// `sum_k e_k' (Omega_k kron I_N) e_k` and its gradient `-2 Omega_k E_k' X0_k`.
pub fn gls_loss_grad<T: Scalar>(
    beta: &CoefficientSet<T>,
    design: &StackedDesign<T>,
    omega: &PrecisionSet<T>,
) -> Result<(T, CoefficientSet<T>)> {
    check_omega(design, omega)?;
    omega.ensure_positive_definite()?;
    let res = residuals(design, beta)?;
    let mut value = T::zero();
    let mut blocks = Vec::with_capacity(res.len());
    let two = T::lit(2.0);
    for ((e, c), w) in res.iter().zip(&design.classes).zip(omega.matrices()) {
        let ete = e.tr_mul(e);
        value += linalg::trace_product(w, &ete);
        blocks.push(-(w * e.tr_mul(&c.predictors)) * two);
    }
    Ok((value, CoefficientSet::from_blocks(blocks, beta.order())?))
}

/// GLS loss alone, evaluated from residuals.
pub fn gls_loss<T: Scalar>(beta: &CoefficientSet<T>, design: &StackedDesign<T>, omega: &PrecisionSet<T>) -> Result<T> {
    check_omega(design, omega)?;
    let res = residuals(design, beta)?;
    Ok(res
        .iter()
        .zip(omega.matrices())
        .map(|(e, w)| linalg::trace_product(w, &e.tr_mul(e)))
        .fold(T::zero(), |a, b| a + b))
}

fn check_omega<T: Scalar>(design: &StackedDesign<T>, omega: &PrecisionSet<T>) -> Result<()> {
    if omega.classes() != design.spec.classes || omega.series() != design.spec.series {
        return Err(Error::DimensionMismatch(format!(
            "precision set is K={} J={}, design is K={} J={}",
            omega.classes(),
            omega.series(),
            design.spec.classes,
            design.spec.series
        )));
    }
    Ok(())
}

/// Upper bound on the gradient Lipschitz constant of `g + h_mu`:
/// `2 max_k lmax(X0'X0) lmax(Omega) + lambda1^2 K / mu`.
pub fn lipschitz_bound<T: Scalar>(
    design: &StackedDesign<T>,
    omega: &PrecisionSet<T>,
    coupling: Option<&FusionCoupling<T>>,
    mu: T,
) -> T {
    let smooth = design
        .classes
        .iter()
        .zip(omega.matrices())
        .map(|(c, w)| linalg::largest_eigenvalue(&c.gram) * linalg::largest_eigenvalue(w))
        .fold(T::zero(), |a, b| a.max(b));
    let fusion = coupling.map_or(T::zero(), |c| c.weight() * c.weight() * T::from_count(c.classes()) / mu);
    T::lit(2.0) * smooth + fusion
}

/// Exact (unsmoothed) coefficient objective `g + lambda1 P1 + lambda2 P2`.
pub fn exact_beta_objective<T: Scalar>(
    beta: &CoefficientSet<T>,
    design: &StackedDesign<T>,
    omega: &PrecisionSet<T>,
    lambda1: T,
    lambda2: T,
) -> Result<T> {
    let g = gls_loss(beta, design, omega)?;
    let vals: Vec<&[T]> = (0..beta.classes()).map(|k| beta.class_values(k)).collect();
    let p1 = if lambda1 == T::zero() {
        T::zero()
    } else {
        eval_pairwise_fusion(&vals)?
    };
    Ok(g + lambda1 * p1 + lambda2 * eval_l1(&vals))
}

/// Smoothed objective `g + h_mu + lambda2 P2`.
pub fn smoothed_beta_objective<T: Scalar>(
    beta: &CoefficientSet<T>,
    design: &StackedDesign<T>,
    omega: &PrecisionSet<T>,
    lambda1: T,
    lambda2: T,
    mu: T,
) -> Result<T> {
    let g = gls_loss(beta, design, omega)?;
    let h = if lambda1 > T::zero() && beta.classes() > 1 {
        smooth_fusion(beta, &build_coupling(&design.spec, lambda1)?, mu)?.0
    } else {
        T::zero()
    };
    let vals: Vec<&[T]> = (0..beta.classes()).map(|k| beta.class_values(k)).collect();
    Ok(g + h + lambda2 * eval_l1(&vals))
}

#[derive(Debug, Clone)]
pub struct SpgOutcome<T: Scalar> {
    pub beta: CoefficientSet<T>,
    /// Smoothed objective at `beta`.
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    pub lipschitz: T,
}

/// Gram-based evaluation of the smooth part for the inner loop.
struct SmoothProblem<'a, T: Scalar> {
    design: &'a StackedDesign<T>,
    omega: &'a PrecisionSet<T>,
    coupling: Option<FusionCoupling<T>>,
    mu: T,
    /// tr(Omega_k Y_k'Y_k)
    base: Vec<T>,
}

impl<'a, T: Scalar> SmoothProblem<'a, T> {
    fn new(design: &'a StackedDesign<T>, omega: &'a PrecisionSet<T>, lambda1: T, mu: T) -> Result<Self> {
        let coupling = if lambda1 > T::zero() && design.spec.classes > 1 {
            Some(build_coupling(&design.spec, lambda1)?)
        } else {
            None
        };
        let base = design
            .classes
            .iter()
            .zip(omega.matrices())
            .map(|(c, w)| linalg::trace_product(w, &c.target_gram))
            .collect();
        Ok(SmoothProblem {
            design,
            omega,
            coupling,
            mu,
            base,
        })
    }

    /// Value of `g + h_mu`; writes the gradient into `grad` when given.
    fn eval(&self, beta: &CoefficientSet<T>, grad: Option<&mut CoefficientSet<T>>) -> T {
        let two = T::lit(2.0);
        let mut value = T::zero();
        let mut grad = grad;
        for (k, (c, w)) in self.design.classes.iter().zip(self.omega.matrices()).enumerate() {
            let b = beta.block(k);
            // R = H - B G ; g_k = tr(W YY) - tr(W (H + R) B')
            let r: DMatrix<T> = &c.cross - b * &c.gram;
            let hr = &c.cross + &r;
            let whr = w * hr;
            value += self.base[k] - linalg::trace_product(&whr, &b.transpose());
            if let Some(g) = grad.as_deref_mut() {
                let gk = g.block_mut(k);
                gk.copy_from(&(w * &r));
                *gk *= -two;
            }
        }
        if let Some(coupling) = &self.coupling {
            match grad {
                Some(g) => value += smooth_fusion_into(beta, coupling, self.mu, g),
                None => {
                    let mut scratch = CoefficientSet::zeros(beta.classes(), beta.series(), beta.order());
                    value += smooth_fusion_into(beta, coupling, self.mu, &mut scratch);
                }
            }
        }
        value
    }
}

fn l1_of<T: Scalar>(beta: &CoefficientSet<T>) -> T {
    beta.blocks().iter().flat_map(|b| b.iter()).fold(T::zero(), |a, v| a + v.abs())
}

/// FISTA on `g + h_mu + lambda2 P2` with Omega fixed.
///
/// Starts from `warm` when given, zero otherwise. Stops when the relative
/// objective change drops below `options.tol`; reaching `max_iter` is not an
/// error, the best iterate is returned with `converged = false`.
pub fn spg_fit<T: Scalar>(
    design: &StackedDesign<T>,
    omega: &PrecisionSet<T>,
    lambda1: T,
    lambda2: T,
    options: &SpgOptions<T>,
    warm: Option<&CoefficientSet<T>>,
) -> Result<SpgOutcome<T>> {
    options.validate()?;
    if !(lambda1 >= T::zero() && lambda2 >= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "lambda1, lambda2 must be >= 0, got {lambda1}, {lambda2}"
        )));
    }
    check_omega(design, omega)?;
    let spec = design.spec;
    let problem = SmoothProblem::new(design, omega, lambda1, options.mu)?;
    let lipschitz = lipschitz_bound(design, omega, problem.coupling.as_ref(), options.mu);
    let zero = CoefficientSet::zeros_like(&spec);
    if lipschitz == T::zero() {
        // no data signal and no coupling: zero is optimal
        return Ok(SpgOutcome {
            objective: problem.eval(&zero, None),
            beta: zero,
            iterations: 0,
            converged: true,
            lipschitz,
        });
    }
    let step = T::one() / lipschitz;
    let thresh = lambda2 * step;

    let objective = |b: &CoefficientSet<T>| problem.eval(b, None) + lambda2 * l1_of(b);

    let mut x = match warm {
        Some(w) => {
            ensure_matches(&spec, w)?;
            w.clone()
        }
        None => zero.clone(),
    };
    let mut y = x.clone();
    let mut grad = zero.clone();
    let mut t = T::one();
    let mut f_prev = objective(&x);
    let mut best = (f_prev, x.clone());
    let f_zero = if warm.is_some() { objective(&zero) } else { f_prev };
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..options.max_iter {
        iterations = it + 1;
        grad.fill_zero();
        problem.eval(&y, Some(&mut grad));
        let mut x_new = y.clone();
        for k in 0..spec.classes {
            let g = grad.class_values(k);
            for (v, gv) in x_new.class_values_mut(k).iter_mut().zip(g) {
                *v = soft_threshold(*v - step * *gv, thresh);
            }
        }
        let t_new = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
        let momentum = (t - T::one()) / t_new;
        for k in 0..spec.classes {
            let (xn, xo) = (x_new.class_values(k), x.class_values(k));
            for ((yv, a), b) in y.class_values_mut(k).iter_mut().zip(xn).zip(xo) {
                *yv = *a + momentum * (*a - *b);
            }
        }
        t = t_new;
        x = x_new;
        let f = objective(&x);
        if f < best.0 {
            best = (f, x.clone());
        }
        let denom = f_prev.abs().max(T::lit(1e-300));
        if (f_prev - f).abs() / denom < options.tol {
            converged = true;
            break;
        }
        f_prev = f;
    }

    if f_zero < best.0 {
        best = (f_zero, zero);
    }
    Ok(SpgOutcome {
        beta: best.1,
        objective: best.0,
        iterations,
        converged,
        lipschitz,
    })
}
