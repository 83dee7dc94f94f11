//! Maximum-likelihood estimation of the per-author discount and
//! concentration parameters.
//!
//! The objective is the P0-independent partition likelihood
//! log[(theta | alpha)_k / (theta)_n * prod_j (1 - alpha)_{n_j - 1}],
//! a function of the token count n, the type count k, and the multiplicity
//! spectrum r alone. The climb is gradient ascent with momentum; a
//! derivative sign flip triggers a bisection step (the coordinate moves to
//! the mean of its last two values and its velocity halves), and a domain
//! exit resets the coordinate near the violated border while halving the
//! damping retention and that coordinate's step scale. After 50 such
//! corrections the fit exits with clamped values.
//!
//! Note on the alpha gradient: differentiating the objective gives the
//! multiplicity term as sum_i r_i [psi(1 - alpha) - psi(i - alpha)], and
//! that is the sign the finite-difference tests pin down.

use serde::Serialize;

use crate::pdmodel::AuthorParams;
use crate::special::digamma_unchecked;
use crate::tokenizer::MultiplicitySpectrum;

/// Stopping rule for the climb.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Converged when the gradient's Euclidean norm drops below this.
    pub grad_tol: f64,
    pub max_iterations: u32,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tol: 1e-7,
            max_iterations: 100_000,
        }
    }
}

const ALPHA_START: f64 = 0.3;
const STEP_ALPHA_START: f64 = 1e-4;
const STEP_THETA_START: f64 = 1.0;
const ETA_START: f64 = 0.9;
const MAX_RESETS: u32 = 50;

/// Outcome of one author fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitReport {
    pub params: AuthorParams,
    pub converged: bool,
    pub iterations: u32,
    pub final_gradient_norm: f64,
    pub resets_used: u32,
}

/// d/d theta of the log partition likelihood.
///
/// For theta <= 0 the expression is shifted by one through
/// psi(x + 1) = psi(x) + 1/x, mirroring the cancellation of the leading
/// theta factors in the objective itself.
pub fn grad_theta(alpha: f64, theta: f64, n: u64, k: u64) -> f64 {
    let ratio = theta / alpha;
    if theta > 0.0 {
        (digamma_unchecked(ratio + k as f64) - digamma_unchecked(ratio)) / alpha
            + digamma_unchecked(theta)
            - digamma_unchecked(theta + n as f64)
    } else {
        (digamma_unchecked(ratio + k as f64) - digamma_unchecked(ratio + 1.0)) / alpha
            + digamma_unchecked(theta + 1.0)
            - digamma_unchecked(theta + n as f64)
    }
}

/// d/d alpha of the log partition likelihood.
pub fn grad_alpha(alpha: f64, theta: f64, k: u64, spectrum: &MultiplicitySpectrum) -> f64 {
    let ratio = theta / alpha;
    let psi_one = digamma_unchecked(1.0 - alpha);
    let mut tail = 0.0;
    for (multiplicity, r) in spectrum.iter() {
        if multiplicity > 1 {
            tail += r as f64 * (psi_one - digamma_unchecked(multiplicity as f64 - alpha));
        }
    }
    if theta > 0.0 {
        (theta / (alpha * alpha))
            * (digamma_unchecked(ratio) - digamma_unchecked(ratio + k as f64))
            + k as f64 / alpha
            + tail
    } else {
        (theta / (alpha * alpha))
            * (digamma_unchecked(ratio + 1.0) - digamma_unchecked(ratio + k as f64))
            + (k - 1) as f64 / alpha
            + tail
    }
}

struct Coordinate {
    value: f64,
    velocity: f64,
    step_scale: f64,
    /// Damping retention; halved together with the step scale on a domain
    /// exit of this coordinate, leaving the other coordinate's momentum
    /// intact.
    eta: f64,
    prev: Option<(f64, f64)>, // (value, gradient) at the previous iterate
}

impl Coordinate {
    fn new(value: f64, step_scale: f64) -> Self {
        Coordinate {
            value,
            velocity: 0.0,
            step_scale,
            eta: ETA_START,
            prev: None,
        }
    }

    /// Momentum update, or a bisection step when the derivative flipped
    /// sign since the previous iterate.
    fn propose(&mut self, gradient: f64) -> f64 {
        let flipped = matches!(self.prev, Some((_, g)) if g * gradient < 0.0);
        let proposal = if flipped {
            self.velocity *= 0.5;
            0.5 * (self.value + self.prev.unwrap().0)
        } else {
            self.velocity = self.eta * self.velocity + gradient;
            self.value + self.step_scale * self.velocity
        };
        self.prev = Some((self.value, gradient));
        proposal
    }

    /// Entering from a reset: forget momentum and history, shrink the step
    /// scale and damping retention.
    fn reset_to(&mut self, value: f64) {
        self.velocity = 0.0;
        self.prev = None;
        self.value = value;
        self.step_scale *= 0.5;
        self.eta *= 0.5;
    }
}

/// Fit (alpha, theta) to a count multiset summarized by its multiplicity
/// spectrum. Always returns a report; `converged = false` means the
/// iteration or correction budget ran out first.
pub fn fit_author(spectrum: &MultiplicitySpectrum) -> FitReport {
    fit_author_with(spectrum, &FitOptions::default())
}

pub fn fit_author_with(spectrum: &MultiplicitySpectrum, options: &FitOptions) -> FitReport {
    let n = spectrum.total_tokens();
    let k = spectrum.total_types();
    if k == 0 {
        return FitReport {
            params: AuthorParams::new(ALPHA_START, 1.0).unwrap(),
            converged: false,
            iterations: 0,
            final_gradient_norm: f64::INFINITY,
            resets_used: 0,
        };
    }

    let mut alpha = Coordinate::new(ALPHA_START, STEP_ALPHA_START);
    let mut theta = Coordinate::new(k as f64, STEP_THETA_START);
    let mut resets: u32 = 0;
    let mut iterations: u32 = 0;
    let mut grad_norm = f64::INFINITY;

    while iterations < options.max_iterations {
        iterations += 1;
        let ga = grad_alpha(alpha.value, theta.value, k, spectrum);
        let gt = grad_theta(alpha.value, theta.value, n, k);
        grad_norm = ga.hypot(gt);
        if grad_norm < options.grad_tol {
            return FitReport {
                params: AuthorParams::new(alpha.value, theta.value).unwrap(),
                converged: true,
                iterations,
                final_gradient_norm: grad_norm,
                resets_used: resets,
            };
        }

        let mut next_alpha = alpha.propose(ga);
        let next_theta = theta.propose(gt);

        if next_alpha <= 0.0 || next_alpha >= 1.0 {
            resets += 1;
            if resets > MAX_RESETS {
                return clamped_exit(next_alpha, next_theta, iterations, grad_norm, MAX_RESETS);
            }
            next_alpha = if next_alpha <= 0.0 { 0.01 } else { 0.99 };
            alpha.reset_to(next_alpha);
        } else {
            alpha.value = next_alpha;
        }

        if next_theta <= -next_alpha {
            resets += 1;
            if resets > MAX_RESETS {
                return clamped_exit(next_alpha, next_theta, iterations, grad_norm, MAX_RESETS);
            }
            theta.reset_to(-next_alpha + 0.1);
        } else {
            theta.value = next_theta;
        }
    }

    let alpha_final = alpha.value.clamp(0.001, 0.999);
    FitReport {
        params: AuthorParams::new(alpha_final, theta.value.max(-alpha_final + 0.01)).unwrap(),
        converged: false,
        iterations,
        final_gradient_norm: grad_norm,
        resets_used: resets,
    }
}

fn clamped_exit(
    alpha: f64,
    theta: f64,
    iterations: u32,
    grad_norm: f64,
    resets: u32,
) -> FitReport {
    let alpha = alpha.clamp(0.001, 0.999);
    let theta = theta.max(-alpha + 0.01);
    FitReport {
        params: AuthorParams::new(alpha, theta).unwrap(),
        converged: false,
        iterations,
        final_gradient_norm: grad_norm,
        resets_used: resets,
    }
}
