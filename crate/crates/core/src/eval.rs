//! Recovering `Ŵ` from `Ĝ`, error rates, and bound certificates.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    generalization_bound, multi_negative_bound, rademacher_l1, rademacher_trace, BoundInputs,
};
use crate::data::{g_value, ContrastiveSample, Dataset, RepresentationMatrix};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix, DEFAULT_EIG_TOL};
use crate::solver::{hinge_objective, hinge_objective_multi, ConstraintKind, ConstraintSet};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// `Ŵ = Λ₊^{1/2} Vᵀ`, keeping eigenvalues above `rank_tol · max(λ_max, 1)`.
///
/// The returned matrix has one row per retained eigenvalue, so a zero input
/// yields a `0 × d` representation.
pub fn recover_w(g_hat: &SymMatrix, rank_tol: f64) -> Result<RepresentationMatrix> {
    if !(rank_tol >= 0.0) {
        return Err(Error::invalid("rank_tol must be nonnegative"));
    }
    let eig = sym_eigen(g_hat, DEFAULT_EIG_TOL)?;
    let values = eig.values();
    let d = g_hat.dim();
    let cutoff = rank_tol * values[0].max(1.0);
    let lowest = values[d - 1];
    if lowest < -cutoff {
        return Err(Error::invalid(format!(
            "matrix is not positive semidefinite: eigenvalue {lowest:e} below -{cutoff:e}"
        )));
    }
    let kept: Vec<usize> = (0..d).filter(|&j| values[j] > cutoff).collect();
    let mut data = Vec::with_capacity(kept.len() * d);
    for &j in &kept {
        let s = values[j].sqrt();
        data.extend((0..d).map(|i| s * eig.component(i, j)));
    }
    RepresentationMatrix::new(kept.len(), d, data)
}

/// Anything that assigns a contrastive score to `(x, y, z)`: a Gram matrix
/// through `⟨G, (x−z)(x−z)ᵀ − (x−y)(x−y)ᵀ⟩`, or a representation through
/// `g_W`.
pub trait Scorer {
    fn input_dim(&self) -> usize;
    fn score(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64>;
}

impl Scorer for SymMatrix {
    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn score(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
        let sample = ContrastiveSample::triplet(x.to_vec(), y.to_vec(), z.to_vec(), 1)?;
        self.inner(&crate::data::build_u(&sample)?)
    }
}

impl Scorer for RepresentationMatrix {
    fn input_dim(&self) -> usize {
        self.cols()
    }

    fn score(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
        g_value(self, x, y, z)
    }
}

fn check_dim(scorer: &impl Scorer, d: usize) -> Result<()> {
    if scorer.input_dim() != d {
        return Err(Error::invalid(format!(
            "model expects dimension {}, data has {d}",
            scorer.input_dim()
        )));
    }
    Ok(())
}

/// Predicted label of a triplet. A zero score is returned as the opposite of
/// the stored label, so ties always count as mistakes.
pub fn predict(scorer: &impl Scorer, sample: &ContrastiveSample) -> Result<i8> {
    if sample.k() != 1 {
        return Err(Error::invalid(
            "predict handles single-negative samples; use empirical_error for k >= 2",
        ));
    }
    check_dim(scorer, sample.dim())?;
    let s = scorer.score(&sample.x, &sample.y, sample.z())?;
    Ok(if s > 0.0 {
        1
    } else if s < 0.0 {
        -1
    } else {
        -sample.label
    })
}

/// Signed score of a sample: `b · score` for triplets, the minimum over
/// negatives otherwise. Positive means correctly ordered.
pub fn signed_score(scorer: &impl Scorer, sample: &ContrastiveSample) -> Result<f64> {
    if sample.k() == 1 {
        return Ok(f64::from(sample.label) * scorer.score(&sample.x, &sample.y, sample.z())?);
    }
    sample
        .negatives
        .iter()
        .map(|z| scorer.score(&sample.x, &sample.y, z))
        .try_fold(f64::INFINITY, |acc, s| Ok(acc.min(s?)))
}

/// Fraction of samples whose signed score is `≤ 0`.
pub fn empirical_error(scorer: &impl Scorer, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("empirical error of an empty dataset"));
    }
    check_dim(scorer, ds.dim)?;
    let mut wrong = 0usize;
    for s in &ds.samples {
        if signed_score(scorer, s)? <= 0.0 {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / ds.len() as f64)
}

/// Hinge objective of `g` on the lifted samples of `ds`.
pub fn train_hinge(g: &SymMatrix, ds: &Dataset) -> Result<f64> {
    if ds.k == 1 {
        hinge_objective(g, &ds.lift()?)
    } else {
        hinge_objective_multi(g, &ds.lift_multi()?)
    }
}

/// Largest norm of a lifted training matrix, in the norm the complexity
/// bound pairs with the constraint: spectral for the trace ball, largest
/// entry for the ℓ1 ball.
pub fn measured_alpha(ds: &Dataset, kind: ConstraintKind) -> Result<f64> {
    let lifts: Vec<SymMatrix> = if ds.k == 1 {
        ds.lift()?
    } else {
        ds.lift_multi()?.into_iter().flatten().collect()
    };
    lifts.iter().try_fold(0.0f64, |acc, u| {
        let norm = match kind {
            ConstraintKind::Trace => u.spectral_norm()?,
            ConstraintKind::L1 => u.linf_norm(),
        };
        Ok(acc.max(norm))
    })
}

/// Bound inputs for a training set: `r = √radius`, `alpha` measured from the
/// data, `c = 1 + radius · κ²`.
pub fn bound_inputs_for(
    train: &Dataset,
    constraint: &ConstraintSet,
    kappa: f64,
    delta: f64,
    epsilon: f64,
) -> Result<BoundInputs> {
    Ok(BoundInputs {
        r: constraint.radius().sqrt(),
        kappa,
        alpha: measured_alpha(train, constraint.kind())?,
        n: train.len(),
        d: train.dim,
        k: train.k,
        delta,
        epsilon,
        c: crate::bounds::loss_bound_c(constraint, kappa)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub rademacher_bound: f64,
    pub c: f64,
    pub generalization_bound: f64,
    /// Error of the recovered `Ŵ` on the test set.
    pub empirical_test_error: f64,
    pub train_hinge: f64,
    /// Smallest signed score of `Ĝ` over the training set.
    pub margin_min: f64,
    pub recovered_rank: usize,
    pub pass: bool,
    pub inputs: BoundInputs,
}

impl BoundCertificate {
    pub const CSV_HEADER: &'static str = "n,d,k,constraint,seed,rademacher_bound,c,generalization_bound,empirical_test_error,train_hinge,margin_min,recovered_rank,pass";

    pub fn csv_row(&self, constraint: ConstraintKind, seed: u64) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.inputs.n,
            self.inputs.d,
            self.inputs.k,
            constraint,
            seed,
            self.rademacher_bound,
            self.c,
            self.generalization_bound,
            self.empirical_test_error,
            self.train_hinge,
            self.margin_min,
            self.recovered_rank,
            self.pass
        )
    }
}

/// Evaluates `ĝ` on held-out data and compares its error with the risk bound.
///
/// Single-negative runs use `2·ℛ + 5c√(2 ln(8/δ)/n)` with the closed-form
/// complexity of the constraint. Multi-negative runs use the trace-ball
/// bound for `k` negatives.
pub fn certify(
    g_hat: &SymMatrix,
    train: &Dataset,
    test: &Dataset,
    inputs: &BoundInputs,
    constraint: &ConstraintSet,
    rank_tol: f64,
) -> Result<BoundCertificate> {
    if train.dim != test.dim || train.k != test.k {
        return Err(Error::invalid(format!(
            "train (d={}, k={}) and test (d={}, k={}) disagree",
            train.dim, train.k, test.dim, test.k
        )));
    }
    if g_hat.dim() != train.dim {
        return Err(Error::invalid(format!(
            "G has dimension {}, data has {}",
            g_hat.dim(),
            train.dim
        )));
    }
    let (rademacher_bound, bound) = if train.k == 1 {
        let rad = match constraint.kind() {
            ConstraintKind::Trace => rademacher_trace(inputs.r, inputs.alpha, inputs.n, inputs.d)?,
            ConstraintKind::L1 => rademacher_l1(inputs.r, inputs.alpha, inputs.n, inputs.d)?,
        };
        (
            rad,
            generalization_bound(rad, inputs.c, inputs.n, inputs.delta)?,
        )
    } else {
        if constraint.kind() != ConstraintKind::Trace {
            return Err(Error::invalid(
                "the multi-negative bound is available for the trace ball only",
            ));
        }
        let rad = 2f64.sqrt()
            * inputs.r.powi(2)
            * inputs.kappa.powi(2)
            * (inputs.k as f64 * (inputs.d as f64).ln() / inputs.n as f64).sqrt();
        let bound = multi_negative_bound(
            inputs.r,
            inputs.kappa,
            inputs.k,
            inputs.n,
            inputs.d,
            inputs.c,
            inputs.delta,
        )?;
        (rad, bound)
    };

    let w_hat = recover_w(g_hat, rank_tol)?;
    let empirical_test_error = empirical_error(&w_hat, test)?;
    let train_hinge = train_hinge(g_hat, train)?;
    let margin_min = train
        .samples
        .iter()
        .map(|s| signed_score(g_hat, s))
        .try_fold(f64::INFINITY, |acc, s| Ok::<_, Error>(acc.min(s?)))?;

    Ok(BoundCertificate {
        rademacher_bound,
        c: inputs.c,
        generalization_bound: bound,
        empirical_test_error,
        train_hinge,
        margin_min,
        recovered_rank: w_hat.rows(),
        pass: empirical_test_error <= bound,
        inputs: *inputs,
    })
}
