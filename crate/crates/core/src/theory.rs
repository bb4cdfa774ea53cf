//! Closed-form accuracy and distortion bounds.
//!
//! Notation: `alpha` is the AR coefficient, `sigma2` the stationary
//! per-coordinate variance, `rate` the bits per dimension per slot, `s` the
//! sampling period and `p` the update period. Accuracies are
//! `1 - distortion / sigma2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::QuantizerProfile;
use crate::scalar::Scalar;

fn two<S: Scalar>() -> S {
    S::lit(2.0)
}

/// `delta0(R) = alpha^2 (1 - 2^{-2R}) / (1 - alpha^2 2^{-2R})`.
pub fn eval_delta0<S: Scalar>(alpha: S, rate: S) -> S {
    let a2 = alpha * alpha;
    let d = two::<S>().powf(-two::<S>() * rate);
    a2 * (S::one() - d) / (S::one() - a2 * d)
}

/// `g(s) = (1 - alpha^{2s}) / (s (1 - alpha^2))`; `g(1) = 1`.
pub fn eval_g<S: Scalar>(alpha: S, s: usize) -> S {
    let a2 = alpha * alpha;
    (S::one() - a2.powi(s as i32)) / (S::from_count(s) * (S::one() - a2))
}

/// Accuracy-speed curve from explicit constants:
/// `alpha^{2p} / (1 - alpha^{2p} theta) * (1 - eps2 / sigma2 - theta)`.
pub fn gamma_from_constants<S: Scalar>(theta: S, eps2: S, alpha: S, sigma2: S, p: S) -> S {
    let a2p = (alpha * alpha).powf(p);
    a2p / (S::one() - a2p * theta) * (S::one() - eps2 / sigma2 - theta)
}

/// Accuracy-speed curve of a quantizer family; `theta` and `eps` are taken
/// at the per-update rate `rate * p`. Accepts real `p > 0`.
pub fn eval_gamma<S: Scalar>(
    profile: &QuantizerProfile<S>,
    alpha: S,
    sigma2: S,
    rate: S,
    p: S,
) -> S {
    let total = rate * p;
    gamma_from_constants(profile.theta(total), profile.eps2(total), alpha, sigma2, p)
}

/// Divisors of `s` in increasing order.
pub fn divisors(s: usize) -> Vec<usize> {
    (1..=s).filter(|p| s.is_multiple_of(*p)).collect()
}

/// `(p, Gamma(p))` over the divisors of `s`.
pub fn speed_curve<S: Scalar>(
    profile: &QuantizerProfile<S>,
    alpha: S,
    sigma2: S,
    rate: S,
    s: usize,
) -> Vec<(usize, S)> {
    divisors(s)
        .into_iter()
        .map(|p| {
            (
                p,
                eval_gamma(profile, alpha, sigma2, rate, S::from_count(p)),
            )
        })
        .collect()
}

/// Divisor of `s` maximizing `Gamma`; ties go to the smaller `p`.
pub fn select_p<S: Scalar>(
    profile: &QuantizerProfile<S>,
    alpha: S,
    sigma2: S,
    rate: S,
    s: usize,
) -> usize {
    let mut best = (1, eval_gamma(profile, alpha, sigma2, rate, S::one()));
    for (p, gamma) in speed_curve(profile, alpha, sigma2, rate, s)
        .into_iter()
        .skip(1)
    {
        if gamma > best.1 {
            best = (p, gamma);
        }
    }
    best.0
}

/// Asymptotic upper bound on the time-averaged distortion of the `p`-SU
/// scheme with a `(theta, eps)` quantizer whose failure probability is at
/// most `beta^2`.
#[allow(clippy::too_many_arguments)]
pub fn eval_bt_limit<S: Scalar>(
    theta: S,
    eps: S,
    beta: S,
    alpha: S,
    sigma2: S,
    kappa: S,
    s: usize,
    p: usize,
) -> Result<S> {
    if !(theta >= S::zero() && theta < S::one()) {
        return Err(Error::invalid(format!(
            "theta must lie in [0, 1), got {theta}"
        )));
    }
    if !(beta >= S::zero() && beta <= S::one()) {
        return Err(Error::invalid(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    if p == 0 || s == 0 || !s.is_multiple_of(p) {
        return Err(Error::invalid(format!("p = {p} must divide s = {s}")));
    }
    let a2 = alpha * alpha;
    let a2p = a2.powi(p as i32);
    let a2s = a2.powi(s as i32);
    let g = eval_g(alpha, s);
    let shrink = a2p / (S::one() - a2p * theta);
    let main = sigma2 * (S::one() - g * shrink * (S::one() - eps * eps / sigma2 - theta));
    let fail = kappa * beta * g / (S::one() - a2s)
        * (S::one() - a2s * a2p * (S::one() - theta) / (S::one() - a2p * theta));
    Ok(main + fail)
}

/// Iterates `d_k = 2^{-2Rs} (alpha^{2s} d_{k-1} + sigma2 (1 - alpha^{2s}))`
/// from `d_0 = 0` for `k = 1..=iterations`; returns the iterates and the
/// fixed point.
pub fn converse_dstar<S: Scalar>(
    alpha: S,
    sigma2: S,
    rate: S,
    s: usize,
    iterations: usize,
) -> (Vec<S>, S) {
    let a2s = (alpha * alpha).powi(s as i32);
    let c = two::<S>().powf(-two::<S>() * rate * S::from_count(s));
    let mut seq = Vec::with_capacity(iterations + 1);
    let mut d = S::zero();
    seq.push(d);
    for _ in 0..iterations {
        d = c * (a2s * d + sigma2 * (S::one() - a2s));
        seq.push(d);
    }
    let limit = sigma2 * (S::one() - a2s) * c / (S::one() - a2s * c);
    (seq, limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConverseBound<S: Scalar> {
    /// Largest accuracy any tracking code can attain.
    pub accuracy: S,
    /// Smallest asymptotic distortion any tracking code can attain.
    pub floor: S,
}

/// Converse bound. The floor is assembled from the limit of the `d*`
/// recursion; the accuracy is `1 - floor / sigma2`.
pub fn converse_accuracy<S: Scalar>(alpha: S, sigma2: S, rate: S, s: usize) -> ConverseBound<S> {
    let a2 = alpha * alpha;
    let a2s = a2.powi(s as i32);
    let ss = S::from_count(s);
    let c = two::<S>().powf(-two::<S>() * rate * ss);
    let c1 = two::<S>().powf(-two::<S>() * rate);
    let (_, dstar) = converse_dstar(alpha, sigma2, rate, s, 0);
    let coef = a2s * (S::one() - a2s * c) / (ss * (S::one() - a2 * c1));
    let tail = S::one() + (S::one() - a2s) * (S::one() - a2s * c) / (ss * (S::one() - a2 * c1))
        - eval_g(alpha, s);
    let floor = coef * dstar + sigma2 * tail;
    ConverseBound {
        accuracy: S::one() - floor / sigma2,
        floor,
    }
}

/// Averaged bound for a sequence with `x_k <= a x_{k-1} + b`: `b / (1 - a)`.
pub fn recursive_average_bound<S: Scalar>(a: S, b: S) -> Result<S> {
    if !(a.abs() < S::one()) {
        return Err(Error::invalid(format!("|a| must be below 1, got a = {a}")));
    }
    if !b.is_finite() {
        return Err(Error::invalid("b must be finite"));
    }
    Ok(b / (S::one() - a))
}

/// Per-slot distortion bound at offset `i = t - ks` after `j` updates of the
/// sample estimate, given the distortion `d_ks` at the sampling instant.
#[allow(clippy::too_many_arguments)]
pub fn per_slot_bound<S: Scalar>(
    theta: S,
    eps2: S,
    beta: S,
    alpha: S,
    sigma2: S,
    kappa: S,
    d_ks: S,
    j: usize,
    i: usize,
) -> S {
    let decay = (alpha * alpha).powi(i as i32);
    let theta_j = theta.powi(j as i32);
    let geometric = if theta == S::one() {
        S::from_count(j)
    } else {
        (S::one() - theta_j) / (S::one() - theta)
    };
    decay * theta_j * d_ks
        + sigma2 * (S::one() - decay)
        + decay * geometric * eps2
        + decay * kappa * beta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TheoryParams<S: Scalar> {
    pub alpha: S,
    pub sigma2: S,
    pub rate: S,
    pub s: usize,
    /// Normalized fourth-moment bound.
    pub kappa: S,
    pub profile: QuantizerProfile<S>,
    /// Square root of the failure probability.
    pub beta: S,
}

impl<S: Scalar> TheoryParams<S> {
    pub fn new(alpha: S, sigma2: S, rate: S, s: usize) -> Result<Self> {
        let params = TheoryParams {
            alpha,
            sigma2,
            rate,
            s,
            kappa: S::lit(3.0).sqrt(),
            profile: QuantizerProfile::Ideal,
            beta: S::zero(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > S::zero() && self.alpha < S::one()) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.sigma2 > S::zero() && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.rate > S::zero() && self.rate.is_finite()) {
            return Err(Error::invalid(format!(
                "rate must be positive, got {}",
                self.rate
            )));
        }
        if self.s == 0 {
            return Err(Error::invalid("sampling period s must be at least 1"));
        }
        if !(self.beta >= S::zero() && self.beta <= S::one()) {
            return Err(Error::invalid(format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        if !(self.kappa >= S::zero() && self.kappa.is_finite()) {
            return Err(Error::invalid(format!(
                "kappa must be nonnegative, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TheoryReport<S: Scalar> {
    pub delta0: S,
    pub g: S,
    /// `delta0 * g`.
    pub achievable_accuracy: S,
    pub converse_accuracy: S,
    pub converse_floor: S,
    /// `(p, Gamma(p))` over the divisors of `s`.
    pub gamma_curve: Vec<(usize, S)>,
    pub p_star: usize,
    /// Asymptotic distortion bound at `p_star`; absent when `theta = 1`.
    pub b_infinity: Option<S>,
    pub dstar_limit: S,
}

pub fn theory_report<S: Scalar>(params: &TheoryParams<S>) -> Result<TheoryReport<S>> {
    params.validate()?;
    let TheoryParams {
        alpha,
        sigma2,
        rate,
        s,
        kappa,
        ref profile,
        beta,
    } = *params;
    let delta0 = eval_delta0(alpha, rate);
    let g = eval_g(alpha, s);
    let converse = converse_accuracy(alpha, sigma2, rate, s);
    let p_star = select_p(profile, alpha, sigma2, rate, s);
    let total = rate * S::from_count(p_star);
    let theta = profile.theta(total);
    let b_infinity = if theta < S::one() {
        Some(eval_bt_limit(
            theta,
            profile.eps2(total).sqrt(),
            beta,
            alpha,
            sigma2,
            kappa,
            s,
            p_star,
        )?)
    } else {
        None
    };
    Ok(TheoryReport {
        delta0,
        g,
        achievable_accuracy: delta0 * g,
        converse_accuracy: converse.accuracy,
        converse_floor: converse.floor,
        gamma_curve: speed_curve(profile, alpha, sigma2, rate, s),
        p_star,
        b_infinity,
        dstar_limit: converse_dstar(alpha, sigma2, rate, s, 0).1,
    })
}
