//! Closed-form generalization bounds and a Monte-Carlo estimate of the
//! linearized Rademacher complexity. Logarithms are natural throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix, DEFAULT_EIG_TOL};
use crate::solver::ConstraintSet;

/// Inputs shared by the bound formulas. `r` is the unsquared radius
/// (`r_F` or `r₁`); `alpha` bounds the norm of the lifted matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub r: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub c: f64,
}

fn check_n_d(n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if d < 2 {
        return Err(Error::invalid(
            "d must be at least 2 (log d must be positive)",
        ));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!(
            "{name} must be nonnegative and finite, got {v}"
        )));
    }
    Ok(())
}

/// `r² · α · √(ln d / n)` for the trace ball.
pub fn rademacher_trace(r: f64, alpha: f64, n: usize, d: usize) -> Result<f64> {
    check_n_d(n, d)?;
    check_nonneg("r", r)?;
    check_nonneg("alpha", alpha)?;
    Ok(r * r * alpha * ((d as f64).ln() / n as f64).sqrt())
}

/// `r² · α · √(4 ln(2d) / n)` for the ℓ1 ball.
pub fn rademacher_l1(r: f64, alpha: f64, n: usize, d: usize) -> Result<f64> {
    check_n_d(n, d)?;
    check_nonneg("r", r)?;
    check_nonneg("alpha", alpha)?;
    Ok(r * r * alpha * (4.0 * (2.0 * d as f64).ln() / n as f64).sqrt())
}

/// `5 c √(2 ln(8/δ) / n)`, the concentration term of the risk bound.
pub fn concentration_term(c: f64, n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_nonneg("c", c)?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    Ok(5.0 * c * (2.0 * (8.0 / delta).ln() / n as f64).sqrt())
}

/// `2 · rad + 5 c √(2 ln(8/δ) / n)`.
pub fn generalization_bound(rad: f64, c: f64, n: usize, delta: f64) -> Result<f64> {
    check_nonneg("rad", rad)?;
    Ok(2.0 * rad + concentration_term(c, n, delta)?)
}

/// Sup of the hinge loss over the feasible set: `1 + radius · κ²`, where the
/// constraint radius is already the squared parameter (`r_F²` or `r₁²`).
pub fn loss_bound_c(constraint: &ConstraintSet, kappa: f64) -> Result<f64> {
    check_nonneg("kappa", kappa)?;
    Ok(1.0 + constraint.radius() * kappa * kappa)
}

/// `⌈((5 + 5 r² κ²) / ε)² · ln(8d / δ)⌉`.
pub fn sample_complexity(epsilon: f64, delta: f64, d: usize, r: f64, kappa: f64) -> Result<u64> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    check_delta(delta)?;
    check_nonneg("r", r)?;
    check_nonneg("kappa", kappa)?;
    if d == 0 {
        return Err(Error::invalid("d must be at least 1"));
    }
    let lead = (5.0 + 5.0 * r * r * kappa * kappa) / epsilon;
    let n = lead * lead * (8.0 * d as f64 / delta).ln();
    if !n.is_finite() || n > u64::MAX as f64 {
        return Err(Error::invalid("sample complexity overflows"));
    }
    Ok(n.ceil() as u64)
}

/// `2√2 r² κ² √(k ln d / n) + 5c √(2 ln(8/δ) / n)` for `k` negatives.
pub fn multi_negative_bound(
    r: f64,
    kappa: f64,
    k: usize,
    n: usize,
    d: usize,
    c: f64,
    delta: f64,
) -> Result<f64> {
    check_n_d(n, d)?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    check_nonneg("r", r)?;
    check_nonneg("kappa", kappa)?;
    let complexity = 2.0
        * 2f64.sqrt()
        * r
        * r
        * kappa
        * kappa
        * ((k as f64) * (d as f64).ln() / n as f64).sqrt();
    Ok(complexity + concentration_term(c, n, delta)?)
}

/// Sample mean and standard error of a Monte-Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Estimates `E_σ sup_{G∈𝒢} ⟨G, Σ σ_i U_i⟩ / n`.
///
/// The supremum is exact for the trace ball (`τ · max(0, λ_max)`). For the ℓ1
/// ball the PSD constraint is dropped, giving the upper value `r · ‖Σ σ_i U_i‖_∞`.
/// Each trial draws its signs from its own ChaCha8 stream (`seed`, stream =
/// trial index).
pub fn mc_linear_rademacher(
    us: &[SymMatrix],
    constraint: &ConstraintSet,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let first = us
        .first()
        .ok_or_else(|| Error::invalid("no lifted samples"))?;
    let d = first.dim();
    if us.iter().any(|u| u.dim() != d) {
        return Err(Error::invalid("lifted matrices have mixed dimensions"));
    }
    let n = us.len() as f64;

    let mut values = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let mut sum = SymMatrix::zeros(d);
        for u in us {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sum.axpy(sign, u);
        }
        let sup = match *constraint {
            ConstraintSet::TraceBall { tau } => {
                let top = sym_eigen(&sum, DEFAULT_EIG_TOL)?.values()[0];
                tau * top.max(0.0)
            }
            ConstraintSet::L1Ball { r } => r * sum.linf_norm(),
        };
        values.push(sup / n);
    }

    let mean = values.iter().sum::<f64>() / trials as f64;
    let stderr = if trials > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate { mean, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_trace_examples() {
        let v = rademacher_trace(1.0, 2.0, 100, 10).unwrap();
        assert!((v - 2.0 * (10f64.ln() / 100.0).sqrt()).abs() < 1e-15);
        assert!((v - 0.303_485_425_877_029_3).abs() < 1e-15);
        assert_eq!(rademacher_trace(1.0, 0.0, 100, 10).unwrap(), 0.0);
        let q = rademacher_trace(1.0, 2.0, 400, 10).unwrap();
        assert!((q - v / 2.0).abs() < 1e-15);
        assert!(rademacher_trace(1.0, 2.0, 100, 1).is_err());
    }

    #[test]
    fn rademacher_l1_examples() {
        let v = rademacher_l1(1.0, 2.0, 100, 10).unwrap();
        assert!((v - 0.692_327_353_040_914_1).abs() < 1e-15);
        assert_eq!(rademacher_l1(1.0, 0.0, 100, 10).unwrap(), 0.0);
        assert!((rademacher_l1(1.0, 2.0, 400, 10).unwrap() - v / 2.0).abs() < 1e-15);
    }

    #[test]
    fn generalization_examples() {
        let v = generalization_bound(0.0, 1.0, 200, 0.05).unwrap();
        assert!((v - 1.126_407_321_446_578_8).abs() < 1e-15);
        let big = generalization_bound(0.0, 1.0, 1_000_000_000_000, 0.05).unwrap();
        assert!(big < 1e-3);
        let doubled = generalization_bound(0.0, 2.0, 200, 0.05).unwrap();
        assert!((doubled - 2.0 * v).abs() < 1e-14);
        assert!(generalization_bound(0.0, 1.0, 200, 1.0).is_err());
        assert!(generalization_bound(0.0, 1.0, 200, 0.0).is_err());
    }

    #[test]
    fn loss_bound_examples() {
        let trace = ConstraintSet::TraceBall { tau: 1.0 };
        assert_eq!(loss_bound_c(&trace, 1.0).unwrap(), 2.0);
        assert_eq!(loss_bound_c(&trace, 0.0).unwrap(), 1.0);
        assert_eq!(
            loss_bound_c(&ConstraintSet::L1Ball { r: 4.0 }, 1.0).unwrap(),
            5.0
        );
    }

    #[test]
    fn sample_complexity_examples() {
        assert_eq!(sample_complexity(0.1, 0.1, 4, 1.0, 1.0).unwrap(), 57684);
        let raw = |eps: f64| (10.0 / eps).powi(2) * 320f64.ln();
        assert!((raw(0.05) / raw(0.1) - 4.0).abs() < 1e-12);
        let want = ((5.0f64 / 0.1).powi(2) * (32.0f64 / 0.1).ln()).ceil() as u64;
        assert_eq!(sample_complexity(0.1, 0.1, 4, 0.0, 1.0).unwrap(), want);
        assert!(sample_complexity(0.0, 0.1, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn multi_negative_examples() {
        let v = multi_negative_bound(1.0, 1.0, 2, 1000, 10, 2.0, 0.05).unwrap();
        assert!((v - 1.199_430_372_930_726_3).abs() < 1e-14);
        let second = concentration_term(2.0, 1000, 0.05).unwrap();
        let first1 = multi_negative_bound(1.0, 1.0, 1, 1000, 10, 2.0, 0.05).unwrap() - second;
        let first4 = multi_negative_bound(1.0, 1.0, 4, 1000, 10, 2.0, 0.05).unwrap() - second;
        assert!((first4 - 2.0 * first1).abs() < 1e-14);
        assert!((first1 - 2.0 * 2f64.sqrt() * (10f64.ln() / 1000.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mc_zero_data() {
        let us = vec![SymMatrix::zeros(3); 4];
        let est = mc_linear_rademacher(&us, &ConstraintSet::TraceBall { tau: 2.0 }, 50, 1).unwrap();
        assert_eq!((est.mean, est.stderr), (0.0, 0.0));
        assert!(mc_linear_rademacher(&us, &ConstraintSet::TraceBall { tau: 2.0 }, 0, 1).is_err());
    }

    #[test]
    fn mc_single_diag_is_fair_coin() {
        let us = vec![SymMatrix::from_diag(&[1.0, 0.0])];
        let est =
            mc_linear_rademacher(&us, &ConstraintSet::TraceBall { tau: 1.0 }, 4000, 5).unwrap();
        assert!((est.mean - 0.5).abs() < 4.0 * est.stderr, "{est:?}");
    }
}
