//! Projected subgradient descent for the relaxed hinge-loss ERM
//!
//! ```text
//! minimize  (1/n) Σ_i max{0, 1 − ⟨G, U_i⟩}            over G ∈ 𝒢
//! minimize  (1/n) Σ_i max{0, 1 − min_j ⟨G, U_ij⟩}     (several negatives)
//! ```
//!
//! where `𝒢` is either `{G ⪰ 0, tr G ≤ τ}` or `{G ⪰ 0, ‖G‖₁ ≤ r}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::projection::{project_psd_l1, project_psd_trace_ball, DykstraParams};

/// Which feasible set a run uses; also selects the example norm of the
/// generator (ℓ2 for `Trace`, ℓ∞ for `L1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Trace,
    L1,
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintKind::Trace => "trace",
            ConstraintKind::L1 => "l1",
        })
    }
}

impl std::str::FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(ConstraintKind::Trace),
            "l1" => Ok(ConstraintKind::L1),
            other => Err(Error::invalid(format!(
                "unknown constraint '{other}' (expected 'trace' or 'l1')"
            ))),
        }
    }
}

/// `{G ⪰ 0, tr G ≤ tau}` or `{G ⪰ 0, ‖G‖₁ ≤ r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    TraceBall { tau: f64 },
    L1Ball { r: f64 },
}

impl ConstraintSet {
    pub fn new(kind: ConstraintKind, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!(
                "constraint radius must be positive and finite, got {radius}"
            )));
        }
        Ok(match kind {
            ConstraintKind::Trace => ConstraintSet::TraceBall { tau: radius },
            ConstraintKind::L1 => ConstraintSet::L1Ball { r: radius },
        })
    }

    pub fn kind(&self) -> ConstraintKind {
        match self {
            ConstraintSet::TraceBall { .. } => ConstraintKind::Trace,
            ConstraintSet::L1Ball { .. } => ConstraintKind::L1,
        }
    }

    /// `tau` or `r`, i.e. the squared radius of the representation ball.
    pub fn radius(&self) -> f64 {
        match *self {
            ConstraintSet::TraceBall { tau } => tau,
            ConstraintSet::L1Ball { r } => r,
        }
    }

    pub fn project(&self, m: &SymMatrix, dykstra: DykstraParams) -> Result<SymMatrix> {
        match *self {
            ConstraintSet::TraceBall { tau } => project_psd_trace_ball(m, tau),
            ConstraintSet::L1Ball { r } => project_psd_l1(m, r, dykstra),
        }
    }

    /// The matrix norm bounded by this set (trace for PSD input, or entrywise ℓ1).
    pub fn norm_of(&self, m: &SymMatrix) -> f64 {
        match self {
            ConstraintSet::TraceBall { .. } => m.trace(),
            ConstraintSet::L1Ball { .. } => m.l1_norm(),
        }
    }

    /// `max(0, −λ_min(M), norm(M) − radius)`.
    pub fn feasibility_residual(&self, m: &SymMatrix) -> Result<f64> {
        let neg = (-m.min_eigenvalue()?).max(0.0);
        let over = (self.norm_of(m) - self.radius()).max(0.0);
        Ok(neg.max(over))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Initial step; `None` selects `radius / (1 + max_i ‖U_i‖_F)`.
    pub step0: Option<f64>,
    /// Stop once the best objective is at most `tol`, or once it has not
    /// improved by more than `tol` for `stall_window` iterations.
    pub tol: f64,
    pub stall_window: usize,
    /// Frobenius size of a random symmetric start (projected); 0 starts at G = 0.
    pub init_perturbation: f64,
    pub seed: u64,
    #[serde(skip)]
    pub dykstra: DykstraParams,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            step0: None,
            tol: 1e-6,
            stall_window: 1000,
            init_perturbation: 0.0,
            seed: 0,
            dykstra: DykstraParams::default(),
        }
    }
}

/// Lifted training data: one matrix per sample, or `k` per sample.
#[derive(Clone, Copy, Debug)]
pub enum Lifted<'a> {
    Single(&'a [SymMatrix]),
    Multi(&'a [Vec<SymMatrix>]),
}

impl Lifted<'_> {
    fn len(&self) -> usize {
        match self {
            Lifted::Single(us) => us.len(),
            Lifted::Multi(ls) => ls.len(),
        }
    }

    fn validate(&self) -> Result<usize> {
        let mut all = self.matrices();
        let first = all
            .next()
            .ok_or_else(|| Error::invalid("no lifted samples"))?;
        let d = first.dim();
        if all.any(|u| u.dim() != d) {
            return Err(Error::invalid("lifted matrices have mixed dimensions"));
        }
        if let Lifted::Multi(ls) = self {
            let k = ls[0].len();
            if k == 0 || ls.iter().any(|l| l.len() != k) {
                return Err(Error::invalid("ragged or empty negative lists"));
            }
        }
        Ok(d)
    }

    fn matrices(&self) -> Box<dyn Iterator<Item = &SymMatrix> + '_> {
        match self {
            Lifted::Single(us) => Box::new(us.iter()),
            Lifted::Multi(ls) => Box::new(ls.iter().flatten()),
        }
    }

    /// The per-sample active matrix at `g`, if the hinge is active.
    fn active<'m>(&'m self, g: &SymMatrix, i: usize) -> (f64, Option<&'m SymMatrix>) {
        match self {
            Lifted::Single(us) => {
                let s = g.inner_unchecked(&us[i]);
                (s, (s < 1.0).then_some(&us[i]))
            }
            Lifted::Multi(ls) => {
                let (mut best, mut arg) = (f64::INFINITY, 0);
                for (j, u) in ls[i].iter().enumerate() {
                    let s = g.inner_unchecked(u);
                    if s < best {
                        best = s;
                        arg = j;
                    }
                }
                (best, (best < 1.0).then_some(&ls[i][arg]))
            }
        }
    }

    fn objective(&self, g: &SymMatrix) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| (1.0 - self.active(g, i).0).max(0.0))
            .sum::<f64>()
            / n as f64
    }

    fn subgradient(&self, g: &SymMatrix) -> SymMatrix {
        self.value_and_subgradient(g).1
    }

    fn value_and_subgradient(&self, g: &SymMatrix) -> (f64, SymMatrix) {
        let n = self.len();
        let mut sub = SymMatrix::zeros(g.dim());
        let mut total = 0.0;
        for i in 0..n {
            let (score, active) = self.active(g, i);
            total += (1.0 - score).max(0.0);
            if let Some(u) = active {
                sub.axpy(-1.0, u);
            }
        }
        let inv = 1.0 / n as f64;
        (total * inv, sub.scaled(inv))
    }
}

fn check_against(g: &SymMatrix, data: Lifted<'_>) -> Result<()> {
    let d = data.validate()?;
    if g.dim() != d {
        return Err(Error::invalid(format!(
            "G has dimension {}, data has {d}",
            g.dim()
        )));
    }
    Ok(())
}

/// `(1/n) Σ max{0, 1 − ⟨G, U_i⟩}`.
pub fn hinge_objective(g: &SymMatrix, us: &[SymMatrix]) -> Result<f64> {
    let data = Lifted::Single(us);
    check_against(g, data)?;
    Ok(data.objective(g))
}

/// `(1/n) Σ max{0, 1 − min_j ⟨G, U_ij⟩}`.
pub fn hinge_objective_multi(g: &SymMatrix, u_lists: &[Vec<SymMatrix>]) -> Result<f64> {
    let data = Lifted::Multi(u_lists);
    check_against(g, data)?;
    Ok(data.objective(g))
}

/// `−(1/n) Σ_{⟨G,U_i⟩ < 1} U_i`; samples exactly at the hinge contribute 0.
pub fn subgradient(g: &SymMatrix, us: &[SymMatrix]) -> Result<SymMatrix> {
    let data = Lifted::Single(us);
    check_against(g, data)?;
    Ok(data.subgradient(g))
}

/// Each sample with `min_j ⟨G,U_ij⟩ < 1` contributes `−U_ij*/n`, with `j*`
/// the lowest index attaining the minimum.
pub fn subgradient_multi(g: &SymMatrix, u_lists: &[Vec<SymMatrix>]) -> Result<SymMatrix> {
    let data = Lifted::Multi(u_lists);
    check_against(g, data)?;
    Ok(data.subgradient(g))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SolveReport {
    pub best_objective: f64,
    #[serde(rename = "iterations")]
    pub iterations_run: usize,
    pub feasibility_residual: f64,
    pub objective_trace: Vec<f64>,
    pub g_hat: SymMatrix,
}

/// Default initial step: `radius / (1 + max ‖U‖_F)`.
pub fn default_step0(data: Lifted<'_>, constraint: &ConstraintSet) -> f64 {
    let max_fro = data.matrices().map(SymMatrix::fro_norm).fold(0.0, f64::max);
    constraint.radius() / (1.0 + max_fro)
}

/// Runs `G_{t+1} = Π(G_t − η_t ∂f(G_t))` with `η_t = step0 / √(t+1)`,
/// keeping the best iterate.
pub fn solve(
    data: Lifted<'_>,
    constraint: &ConstraintSet,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let d = data.validate()?;
    if let Some(s) = cfg.step0 {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("step0 must be positive, got {s}")));
        }
    }
    if cfg.tol.is_nan() {
        return Err(Error::invalid("tol must not be NaN"));
    }
    let step0 = cfg.step0.unwrap_or_else(|| default_step0(data, constraint));

    let mut g = if cfg.init_perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let noise = SymMatrix::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let scale = cfg.init_perturbation / noise.fro_norm().max(f64::MIN_POSITIVE);
        constraint.project(&noise.scaled(scale), cfg.dykstra)?
    } else {
        SymMatrix::zeros(d)
    };

    let (mut value, mut sub) = data.value_and_subgradient(&g);
    let mut trace = vec![value];
    let mut best = value;
    let mut best_g = g.clone();
    let mut reference = value;
    let mut last_progress = 0usize;
    let mut iterations = 0usize;

    if best > cfg.tol {
        for t in 0..cfg.max_iters {
            let eta = step0 / ((t + 1) as f64).sqrt();
            let mut stepped = g;
            stepped.axpy(-eta, &sub);
            g = constraint.project(&stepped, cfg.dykstra)?;
            (value, sub) = data.value_and_subgradient(&g);
            trace.push(value);
            iterations = t + 1;

            if value < best {
                best = value;
                best_g = g.clone();
                if reference - best > cfg.tol {
                    reference = best;
                    last_progress = iterations;
                }
            }
            if best <= cfg.tol || iterations - last_progress >= cfg.stall_window {
                break;
            }
        }
    }

    let feasibility_residual = constraint.feasibility_residual(&best_g)?;
    Ok(SolveReport {
        best_objective: best,
        iterations_run: iterations,
        feasibility_residual,
        objective_trace: trace,
        g_hat: best_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Matrices whose inner products with `G = I` are the given values.
    fn with_scores(d: usize, scores: &[f64]) -> Vec<SymMatrix> {
        scores
            .iter()
            .map(|&s| {
                SymMatrix::from_diag(&{
                    let mut v = vec![0.0; d];
                    v[0] = s;
                    v
                })
            })
            .collect()
    }

    #[test]
    fn objective_examples() {
        let us = with_scores(2, &[2.0, 0.5, -1.0]);
        assert_eq!(hinge_objective(&SymMatrix::zeros(2), &us).unwrap(), 1.0);
        let i2 = SymMatrix::identity(2);
        assert!((hinge_objective(&i2, &us).unwrap() - 2.5 / 3.0).abs() < 1e-15);
        assert_eq!(
            hinge_objective(&i2, &with_scores(2, &[1.0, 1.0])).unwrap(),
            0.0
        );
        assert!(hinge_objective(&i2, &[]).is_err());
        assert!(hinge_objective(&SymMatrix::identity(3), &us).is_err());
    }

    #[test]
    fn multi_objective_examples() {
        let i2 = SymMatrix::identity(2);
        let lists = vec![with_scores(2, &[2.0, 0.5])];
        assert_eq!(hinge_objective_multi(&i2, &lists).unwrap(), 0.5);
        let lists = vec![with_scores(2, &[2.0, 1.5]), with_scores(2, &[1.0, 3.0])];
        assert_eq!(hinge_objective_multi(&i2, &lists).unwrap(), 0.0);
        let ragged = vec![with_scores(2, &[2.0, 1.5]), with_scores(2, &[1.0])];
        assert!(hinge_objective_multi(&i2, &ragged).is_err());
    }

    #[test]
    fn k1_reduction_is_exact() {
        let us = with_scores(3, &[0.3, -2.0, 4.0, 1.0]);
        let lists: Vec<Vec<SymMatrix>> = us.iter().map(|u| vec![u.clone()]).collect();
        let g = SymMatrix::from_fn(3, |i, j| 0.1 * (i + 2 * j) as f64);
        assert_eq!(
            hinge_objective(&g, &us).unwrap().to_bits(),
            hinge_objective_multi(&g, &lists).unwrap().to_bits()
        );
        assert_eq!(
            subgradient(&g, &us).unwrap(),
            subgradient_multi(&g, &lists).unwrap()
        );
    }

    #[test]
    fn subgradient_examples() {
        let us = with_scores(2, &[2.0, 0.5]);
        let z = SymMatrix::zeros(2);
        let mut want = SymMatrix::zeros(2);
        want.axpy(-0.5, &us[0]);
        want.axpy(-0.5, &us[1]);
        assert_eq!(subgradient(&z, &us).unwrap(), want);

        let i2 = SymMatrix::identity(2);
        assert_eq!(subgradient(&i2, &with_scores(2, &[1.5, 3.0])).unwrap(), z);
        assert_eq!(subgradient(&i2, &us).unwrap(), us[1].scaled(-0.5));
        // boundary inner = 1 is inactive
        assert_eq!(subgradient(&i2, &with_scores(2, &[1.0])).unwrap(), z);
    }

    #[test]
    fn multi_tie_breaks_to_lowest_index() {
        let a = SymMatrix::from_diag(&[0.2, 0.0]);
        let b = SymMatrix::from_rows(&[vec![0.1, 5.0], vec![5.0, 0.1]]).unwrap();
        let i2 = SymMatrix::identity(2);
        assert_eq!(i2.inner(&a).unwrap(), i2.inner(&b).unwrap());
        let lists = vec![vec![a.clone(), b]];
        assert_eq!(subgradient_multi(&i2, &lists).unwrap(), a.scaled(-1.0));
    }

    #[test]
    fn identity_lift_reaches_zero() {
        let d = 3;
        let us = vec![SymMatrix::identity(d)];
        let c = ConstraintSet::new(ConstraintKind::Trace, d as f64).unwrap();
        let rep = solve(Lifted::Single(&us), &c, &SolverConfig::default()).unwrap();
        assert_eq!(rep.best_objective, 0.0);
        assert!(rep.feasibility_residual <= 1e-8);
    }

    #[test]
    fn infinite_tol_returns_start() {
        let us = vec![SymMatrix::identity(2)];
        let c = ConstraintSet::new(ConstraintKind::Trace, 2.0).unwrap();
        let cfg = SolverConfig {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let rep = solve(Lifted::Single(&us), &c, &cfg).unwrap();
        assert_eq!(rep.g_hat, SymMatrix::zeros(2));
        assert_eq!(rep.best_objective, 1.0);
        assert_eq!(rep.iterations_run, 0);
        let cfg = SolverConfig {
            max_iters: 0,
            ..Default::default()
        };
        let rep = solve(Lifted::Single(&us), &c, &cfg).unwrap();
        assert_eq!((rep.best_objective, rep.objective_trace.len()), (1.0, 1));
    }

    #[test]
    fn constraint_parsing_and_validation() {
        assert_eq!("l1".parse::<ConstraintKind>().unwrap(), ConstraintKind::L1);
        assert!("nuclear".parse::<ConstraintKind>().is_err());
        assert!(ConstraintSet::new(ConstraintKind::Trace, 0.0).is_err());
        assert!(ConstraintSet::new(ConstraintKind::L1, f64::NAN).is_err());
    }

    #[test]
    fn report_json_shape() {
        let rep = SolveReport {
            best_objective: 0.5,
            iterations_run: 3,
            feasibility_residual: 0.0,
            objective_trace: vec![1.0, 0.5],
            g_hat: SymMatrix::identity(2),
        };
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["iterations"], 3);
        assert_eq!(v["g_hat"], serde_json::json!([[1.0, 0.0], [0.0, 1.0]]));
    }
}
