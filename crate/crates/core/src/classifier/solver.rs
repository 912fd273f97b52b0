//! Binary L2-regularized logistic regression,
//!
//! ```text
//! f(w) = 0.5 * ||w||^2 + C * sum_i log(1 + exp(-y_i * w.x_i))
//! ```
//!
//! minimized by Newton's method with conjugate-gradient inner solves and an
//! Armijo backtracking line search.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use super::{ClassifierError, TrainingConfig};

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// The objective for one `+1/-1` labelled design matrix.
#[derive(Debug, Clone, Copy)]
pub struct BinaryProblem<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    c: f64,
}

impl<'a> BinaryProblem<'a> {
    pub fn new(x: ArrayView2<'a, f64>, y: &'a [f64], c: f64) -> Result<Self, ClassifierError> {
        if x.nrows() != y.len() {
            return Err(ClassifierError::Shape(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(ClassifierError::InvalidConfig(format!(
                "C must be positive and finite, got {c}"
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(ClassifierError::InvalidConfig(format!(
                "binary labels must be +1 or -1, got {bad}"
            )));
        }
        let positives = y.iter().filter(|&&v| v > 0.0).count();
        if positives == 0 || positives == y.len() {
            return Err(ClassifierError::SingleClass);
        }
        Ok(Self { x, y, c })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn margins(&self, w: ArrayView1<f64>) -> Array1<f64> {
        let mut z = self.x.dot(&w);
        z.iter_mut().zip(self.y).for_each(|(z, y)| *z *= y);
        z
    }

    fn objective_at(&self, w: ArrayView1<f64>, margins: &Array1<f64>) -> f64 {
        let loss: f64 = margins.iter().map(|&m| softplus(-m)).sum();
        0.5 * w.dot(&w) + self.c * loss
    }

    pub fn objective(&self, w: ArrayView1<f64>) -> f64 {
        self.objective_at(w, &self.margins(w))
    }

    fn gradient_at(&self, w: ArrayView1<f64>, margins: &Array1<f64>) -> Array1<f64> {
        let coef: Array1<f64> = margins
            .iter()
            .zip(self.y)
            .map(|(&m, &y)| self.c * (sigmoid(m) - 1.0) * y)
            .collect();
        &w + &self.x.t().dot(&coef)
    }

    pub fn gradient(&self, w: ArrayView1<f64>) -> Array1<f64> {
        self.gradient_at(w, &self.margins(w))
    }

    /// `(I + C X^T D X) v` with `D` the per-sample curvature weights.
    fn hessian_product(&self, curvature: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        let xv = self.x.dot(v) * curvature;
        v + &(self.x.t().dot(&xv) * self.c)
    }
}

/// Result of a converged minimization.
#[derive(Debug, Clone)]
pub struct Solution {
    pub weights: Array1<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Solves `H d = -g` approximately; stops once the residual drops below
/// `rtol * ||g||`.
fn conjugate_gradient(
    problem: &BinaryProblem,
    curvature: &Array1<f64>,
    g: &Array1<f64>,
    rtol: f64,
) -> Array1<f64> {
    let mut d = Array1::zeros(g.len());
    let mut r = -g;
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let target = rtol * rtol * rr;
    let max_iter = 2 * g.len() + 10;
    for _ in 0..max_iter {
        if rr <= target {
            break;
        }
        let hp = problem.hessian_product(curvature, &p);
        let alpha = rr / p.dot(&hp);
        d.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &hp);
        let rr_next = r.dot(&r);
        p = &r + &(p * (rr_next / rr));
        rr = rr_next;
    }
    d
}

/// Newton-CG from `init` (zeros when `None`).
///
/// Stops when `||grad f(w)|| <= tolerance * max(1, ||grad f(0)||)`.
pub fn minimize(
    problem: &BinaryProblem,
    init: Option<ArrayView1<f64>>,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Solution, ClassifierError> {
    let dim = problem.dim();
    let zero = Array1::zeros(dim);
    let g0 = norm(&problem.gradient(zero.view()));
    let threshold = tolerance * g0.max(1.0);

    let mut w = match init {
        Some(init) if init.len() == dim => init.to_owned(),
        Some(init) => {
            return Err(ClassifierError::Shape(format!(
                "initial point has length {}, expected {dim}",
                init.len()
            )))
        }
        None => zero,
    };
    let mut margins = problem.margins(w.view());
    let mut f = problem.objective_at(w.view(), &margins);
    let mut g = problem.gradient_at(w.view(), &margins);
    let mut gnorm = norm(&g);

    for iteration in 0..=max_iterations {
        if gnorm <= threshold {
            return Ok(Solution {
                weights: w,
                iterations: iteration,
                gradient_norm: gnorm,
            });
        }
        if iteration == max_iterations {
            break;
        }
        let curvature: Array1<f64> = margins
            .iter()
            .map(|&m| {
                let s = sigmoid(m);
                s * (1.0 - s)
            })
            .collect();
        let rtol = (gnorm / g0.max(1.0)).sqrt().min(0.1);
        let step = conjugate_gradient(problem, &curvature, &g, rtol);
        let slope = g.dot(&step);

        // Below this the Armijo test only compares rounding noise of f.
        let noise = 64.0 * f64::EPSILON * f.abs().max(1.0);
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..if -slope > noise { MAX_HALVINGS } else { 0 } {
            let trial = &w + &(&step * t);
            let trial_margins = problem.margins(trial.view());
            let trial_f = problem.objective_at(trial.view(), &trial_margins);
            if trial_f <= f + ARMIJO * t * slope {
                accepted = Some((trial, trial_margins, trial_f));
                break;
            }
            t *= 0.5;
        }
        // Near the optimum take the full step as long as it shrinks the gradient.
        let (next, next_margins, next_f) = match accepted {
            Some(found) => found,
            None => {
                let trial = &w + &step;
                let trial_margins = problem.margins(trial.view());
                let trial_g = problem.gradient_at(trial.view(), &trial_margins);
                if norm(&trial_g) >= gnorm {
                    return Err(ClassifierError::NonConvergence {
                        iterations: iteration,
                        gradient_norm: gnorm,
                    });
                }
                let trial_f = problem.objective_at(trial.view(), &trial_margins);
                (trial, trial_margins, trial_f)
            }
        };
        w = next;
        margins = next_margins;
        f = next_f;
        g = problem.gradient_at(w.view(), &margins);
        gnorm = norm(&g);
    }
    Err(ClassifierError::NonConvergence {
        iterations: max_iterations,
        gradient_norm: gnorm,
    })
}

/// Appends a constant-1 column.
pub(crate) fn with_bias_column(x: ArrayView2<f64>) -> ndarray::Array2<f64> {
    let ones = ndarray::Array2::ones((x.nrows(), 1));
    ndarray::concatenate(Axis(1), &[x, ones.view()]).expect("row counts match")
}

/// Trains one binary model on `+1/-1` labels. With `cfg.fit_bias` the
/// returned vector has one extra trailing entry for the intercept.
pub fn train_binary(
    x: ArrayView2<f64>,
    y: &[f64],
    c: f64,
    cfg: &TrainingConfig,
) -> Result<Array1<f64>, ClassifierError> {
    let augmented;
    let design = if cfg.fit_bias {
        augmented = with_bias_column(x);
        augmented.view()
    } else {
        x
    };
    let problem = BinaryProblem::new(design, y, c)?;
    Ok(minimize(&problem, None, cfg.tolerance, cfg.max_iterations)?.weights)
}
