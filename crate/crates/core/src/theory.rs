//! Closed-form acceptance-length model.
//!
//! Token agreement is modelled as i.i.d. Bernoulli(α) per draft position, so
//! `P(τ ≥ k) = α^k` and `E[τ] = Σ_{k=1..K} α^k`. Relaxing the irrelevant
//! fraction `1 − ρ` of positions raises the per-position acceptance to
//! `ᾱ = 1 − ρ(1 − α)`.

use serde::Serialize;
use thiserror::Error;

/// Largest draft length accepted by the closed forms.
pub const MAX_K: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("{name} = {value} is outside {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
}

fn check(name: &'static str, value: f64, domain: &'static str, ok: bool) -> Result<(), TheoryError> {
    if ok && !value.is_nan() {
        Ok(())
    } else {
        Err(TheoryError::Domain { name, value, domain })
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), TheoryError> {
    check(name, value, "[0, 1]", (0.0..=1.0).contains(&value))
}

fn check_k(k: usize) -> Result<(), TheoryError> {
    check("K", k as f64, "[1, 1e6]", (1..=MAX_K).contains(&k))
}

fn check_latency(name: &'static str, value: f64) -> Result<(), TheoryError> {
    check(name, value, "(0, inf)", value > 0.0 && value.is_finite())
}

/// `Σ_{k=1..K} a^k`, with the `a = 1` limit taken exactly.
fn geometric_partial_sum(a: f64, k: usize) -> f64 {
    if a == 1.0 {
        k as f64
    } else {
        a * (1.0 - a.powi(k as i32)) / (1.0 - a)
    }
}

/// Expected accepted length under exact-match verification.
pub fn expected_tau_strict(alpha: f64, k: usize) -> Result<f64, TheoryError> {
    check_unit("alpha", alpha)?;
    check_k(k)?;
    Ok(geometric_partial_sum(alpha, k))
}

/// The `1/ε` ceiling on strict expected acceptance.
pub fn strict_bound(alpha: f64) -> Result<f64, TheoryError> {
    check("alpha", alpha, "[0, 1)", (0.0..1.0).contains(&alpha))?;
    Ok(1.0 / (1.0 - alpha))
}

/// `ᾱ = 1 − ρ(1 − α)`.
pub fn effective_alignment(alpha: f64, rho: f64) -> Result<f64, TheoryError> {
    check_unit("alpha", alpha)?;
    check_unit("rho", rho)?;
    Ok(1.0 - rho * (1.0 - alpha))
}

/// Expected accepted length when only the relevant fraction `ρ` is strict.
pub fn expected_tau_loose(alpha: f64, rho: f64, k: usize) -> Result<f64, TheoryError> {
    let effective = effective_alignment(alpha, rho)?;
    check_k(k)?;
    Ok(geometric_partial_sum(effective, k))
}

/// Loose-over-strict ratio: exact at finite K, and the `1/ρ` approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRatio {
    pub exact: f64,
    pub asymptotic: f64,
}

pub fn scaling_ratio(alpha: f64, rho: f64, k: usize) -> Result<ScalingRatio, TheoryError> {
    check("alpha", alpha, "(0, 1]", alpha > 0.0 && alpha <= 1.0)?;
    check("rho", rho, "(0, 1]", rho > 0.0 && rho <= 1.0)?;
    let strict = expected_tau_strict(alpha, k)?;
    let loose = expected_tau_loose(alpha, rho, k)?;
    Ok(ScalingRatio {
        exact: loose / strict,
        asymptotic: 1.0 / rho,
    })
}

/// `E[τ]·T_t / (K·T_d + T_t^K)`.
pub fn speedup_model(expected_tau: f64, t_t: f64, t_d: f64, t_t_k: f64, k: usize) -> Result<f64, TheoryError> {
    check("expected_tau", expected_tau, "[0, inf)", expected_tau >= 0.0 && expected_tau.is_finite())?;
    check_latency("T_t", t_t)?;
    check_latency("T_d", t_d)?;
    check_latency("T_t^K", t_t_k)?;
    check_k(k)?;
    Ok(expected_tau * t_t / (k as f64 * t_d + t_t_k))
}

/// The α at which strict expected acceptance equals `tau`, by bisection.
pub fn alpha_for_expected_tau(tau: f64, k: usize) -> Result<f64, TheoryError> {
    check_k(k)?;
    check("tau", tau, "[0, K]", tau >= 0.0 && tau <= k as f64)?;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if geometric_partial_sum(mid, k) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Validated bundle of model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryParams {
    pub alpha: f64,
    pub rho: f64,
    pub k: usize,
    /// `(T_t, T_d, T_t^K)`, when speedups are wanted.
    pub latencies: Option<(f64, f64, f64)>,
}

/// Everything the model predicts for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheorySummary {
    pub failure_rate: f64,
    pub tau_strict: f64,
    pub tau_loose: f64,
    pub effective_alignment: f64,
    pub ratio: ScalingRatio,
    pub strict_bound: f64,
    pub speedup_strict: Option<f64>,
    pub speedup_loose: Option<f64>,
}

impl TheoryParams {
    pub fn new(alpha: f64, rho: f64, k: usize) -> Result<Self, TheoryError> {
        check("alpha", alpha, "(0, 1)", alpha > 0.0 && alpha < 1.0)?;
        check("rho", rho, "(0, 1]", rho > 0.0 && rho <= 1.0)?;
        check_k(k)?;
        Ok(Self {
            alpha,
            rho,
            k,
            latencies: None,
        })
    }

    pub fn with_latencies(mut self, t_t: f64, t_d: f64, t_t_k: f64) -> Result<Self, TheoryError> {
        check_latency("T_t", t_t)?;
        check_latency("T_d", t_d)?;
        check_latency("T_t^K", t_t_k)?;
        self.latencies = Some((t_t, t_d, t_t_k));
        Ok(self)
    }

    /// Speedup at an arbitrary expected acceptance, when latencies are set.
    pub fn speedup(&self, expected_tau: f64) -> Result<Option<f64>, TheoryError> {
        self.latencies
            .map(|(t_t, t_d, t_t_k)| speedup_model(expected_tau, t_t, t_d, t_t_k, self.k))
            .transpose()
    }

    pub fn summary(&self) -> Result<TheorySummary, TheoryError> {
        let tau_strict = expected_tau_strict(self.alpha, self.k)?;
        let tau_loose = expected_tau_loose(self.alpha, self.rho, self.k)?;
        Ok(TheorySummary {
            failure_rate: 1.0 - self.alpha,
            tau_strict,
            tau_loose,
            effective_alignment: effective_alignment(self.alpha, self.rho)?,
            ratio: scaling_ratio(self.alpha, self.rho, self.k)?,
            strict_bound: strict_bound(self.alpha)?,
            speedup_strict: self.speedup(tau_strict)?,
            speedup_loose: self.speedup(tau_loose)?,
        })
    }
}
