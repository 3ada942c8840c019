//! Planted-target dataset generation.
//!
//! A random target `W*` with unit Frobenius norm is drawn from the seed. Example
//! vectors are drawn uniformly from the radius-`kappa` ball (ℓ2 for trace-ball
//! runs, ℓ∞ for ℓ1-ball runs) and triples are kept only when the raw score
//! clears `gamma0`. Publishing `W*/√gamma0` instead of `W*` then gives every
//! sample a contrastive margin of at least 1.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`. The target uses
//! stream 0 of `seed`; samples use stream 1 of the sample seed. Within a
//! sample, coordinates are drawn in the order `x, y, z_1, …`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{g_value, ContrastiveSample, Dataset, Metadata, RepresentationMatrix};
use crate::error::{Error, Result};
use crate::solver::ConstraintKind;

const TARGET_STREAM: u64 = 0;
const SAMPLE_STREAM: u64 = 1;

/// Rejections tolerated for one anchor/positive pair before it is redrawn.
const PER_ANCHOR_REJECTIONS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub d: usize,
    pub d_prime: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub k: usize,
    pub kappa: f64,
    /// Raw margin; defaults to `0.2 · kappa²`.
    #[serde(default)]
    pub gamma0: Option<f64>,
    pub constraint: ConstraintKind,
    pub seed: u64,
    /// Defaults to `1000 · n`.
    #[serde(default)]
    pub max_rejections: Option<usize>,
}

fn one() -> usize {
    1
}

impl GenConfig {
    pub fn new(
        d: usize,
        d_prime: usize,
        n: usize,
        kappa: f64,
        constraint: ConstraintKind,
        seed: u64,
    ) -> Self {
        Self {
            d,
            d_prime,
            n,
            k: 1,
            kappa,
            gamma0: None,
            constraint,
            seed,
            max_rejections: None,
        }
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0.unwrap_or(0.2 * self.kappa * self.kappa)
    }

    pub fn max_rejections(&self) -> usize {
        self.max_rejections.unwrap_or(1000 * self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: &str| Err(Error::invalid(format!("{field}: {msg}")));
        if self.d == 0 {
            return fail("d", "must be at least 1");
        }
        if self.d_prime == 0 || self.d_prime > self.d {
            return fail("d_prime", "must satisfy 1 <= d_prime <= d");
        }
        if self.n == 0 {
            return fail("n", "must be at least 1");
        }
        if self.k == 0 {
            return fail("k", "must be at least 1");
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return fail("kappa", "must be positive and finite");
        }
        let g = self.gamma0();
        if !(g > 0.0) || !g.is_finite() {
            return fail("gamma0", "must be positive and finite");
        }
        Ok(())
    }
}

/// Output of a generation run.
#[derive(Clone, Debug)]
pub struct Generated {
    pub dataset: Dataset,
    /// `W*/√gamma0`; every sample has margin ≥ 1 under it.
    pub target: RepresentationMatrix,
    /// Norm of `target` matching the constraint (Frobenius for the trace
    /// ball, entrywise ℓ1 for the ℓ1 ball). Its square is a solver radius
    /// whose feasible set contains `targetᵀ target`.
    pub effective_radius: f64,
    pub acceptance_rate: f64,
}

/// Unit-Frobenius target drawn from a standard normal stream.
pub fn plant_target(cfg: &GenConfig) -> Result<RepresentationMatrix> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TARGET_STREAM);
    let mut data: Vec<f64> = (0..cfg.d_prime * cfg.d)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut data {
        *v /= norm;
    }
    RepresentationMatrix::new(cfg.d_prime, cfg.d, data)
}

/// The planted target scaled by `1/√gamma0`, with its constraint-relevant norm.
pub fn scaled_target(cfg: &GenConfig) -> Result<(RepresentationMatrix, f64)> {
    let w = plant_target(cfg)?.scaled(1.0 / cfg.gamma0().sqrt());
    let radius = match cfg.constraint {
        ConstraintKind::Trace => w.fro_norm(),
        ConstraintKind::L1 => w.l1_norm(),
    };
    Ok((w, radius))
}

fn draw_example(rng: &mut ChaCha8Rng, d: usize, kappa: f64, kind: ConstraintKind) -> Vec<f64> {
    match kind {
        ConstraintKind::L1 => (0..d).map(|_| rng.random_range(-kappa..=kappa)).collect(),
        ConstraintKind::Trace => loop {
            let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let u: f64 = rng.random();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let scale = kappa * u.powf(1.0 / d as f64) / norm;
            let v: Vec<f64> = g.iter().map(|c| c * scale).collect();
            if v.iter().map(|c| c * c).sum::<f64>().sqrt() <= kappa {
                break v;
            }
        },
    }
}

/// Generates `cfg.n` samples from the sample stream of `cfg.seed`.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Generated> {
    generate_split(cfg, cfg.seed, cfg.n)
}

/// Generates `n` samples for the target planted by `cfg.seed`, drawing
/// examples from the sample stream of `sample_seed`. Train and test sets
/// share a target and differ in `sample_seed`.
pub fn generate_split(cfg: &GenConfig, sample_seed: u64, n: usize) -> Result<Generated> {
    cfg.validate()?;
    let (target, effective_radius) = scaled_target(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    rng.set_stream(SAMPLE_STREAM);

    let budget = cfg.max_rejections();
    let mut rejections = 0usize;
    let mut accepted = 0usize;
    let exhausted = |accepted: usize, rejections: usize| Error::Generation {
        message: format!("rejection budget of {budget} exceeded after {accepted} samples"),
        acceptance_rate: accepted as f64 / (accepted + rejections).max(1) as f64,
    };
    let draw = |rng: &mut ChaCha8Rng| draw_example(rng, cfg.d, cfg.kappa, cfg.constraint);

    let mut samples = Vec::with_capacity(n);
    while samples.len() < n {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        if cfg.k == 1 {
            let z = draw(&mut rng);
            let g = g_value(&target, &x, &y, &z)?;
            if g.abs() >= 1.0 {
                let label = if g > 0.0 { 1 } else { -1 };
                samples.push(ContrastiveSample::triplet(x, y, z, label)?);
                accepted += 1;
            } else {
                rejections += 1;
                if rejections > budget {
                    return Err(exhausted(accepted, rejections));
                }
            }
            continue;
        }

        let mut negatives = Vec::with_capacity(cfg.k);
        let mut local = 0usize;
        while negatives.len() < cfg.k && local < PER_ANCHOR_REJECTIONS {
            let z = draw(&mut rng);
            if g_value(&target, &x, &y, &z)? >= 1.0 {
                negatives.push(z);
                accepted += 1;
            } else {
                local += 1;
                rejections += 1;
                if rejections > budget {
                    return Err(exhausted(accepted, rejections));
                }
            }
        }
        if negatives.len() == cfg.k {
            samples.push(ContrastiveSample::with_negatives(x, y, negatives)?);
        }
    }

    let acceptance_rate = accepted as f64 / (accepted + rejections).max(1) as f64;
    let mut meta = Metadata::new();
    meta.insert("generator".into(), json!("uniform-ball"));
    meta.insert("rng".into(), json!("chacha8"));
    meta.insert("seed".into(), json!(cfg.seed));
    meta.insert("sample_seed".into(), json!(sample_seed));
    meta.insert("kappa".into(), json!(cfg.kappa));
    meta.insert("gamma0".into(), json!(cfg.gamma0()));
    meta.insert("d_prime".into(), json!(cfg.d_prime));
    meta.insert("constraint".into(), json!(cfg.constraint));
    meta.insert("effective_radius".into(), json!(effective_radius));
    meta.insert("acceptance_rate".into(), json!(acceptance_rate));
    meta.insert("target".into(), json!(target.to_rows()));
    let dataset = Dataset::new(cfg.d, cfg.k, samples, meta)?;
    Ok(Generated {
        dataset,
        target,
        effective_radius,
        acceptance_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{margin_of, write_dataset};

    fn cfg(kind: ConstraintKind) -> GenConfig {
        GenConfig::new(6, 2, 60, 1.0, kind, 17)
    }

    #[test]
    fn target_is_deterministic_and_unit() {
        let c = cfg(ConstraintKind::Trace);
        let a = plant_target(&c).unwrap();
        assert_eq!(a, plant_target(&c).unwrap());
        assert!((a.fro_norm() - 1.0).abs() < 1e-12);
        let row = plant_target(&GenConfig::new(2, 1, 1, 1.0, ConstraintKind::Trace, 3)).unwrap();
        assert_eq!((row.rows(), row.cols()), (1, 2));
    }

    #[test]
    fn margins_norms_and_labels() {
        for kind in [ConstraintKind::Trace, ConstraintKind::L1] {
            let c = cfg(kind);
            let out = generate_dataset(&c).unwrap();
            assert_eq!(out.dataset.len(), c.n);
            let raw = plant_target(&c).unwrap();
            for s in &out.dataset.samples {
                assert!(margin_of(&out.target, s).unwrap() >= 1.0 - 1e-12);
                let g = g_value(&raw, &s.x, &s.y, s.z()).unwrap();
                assert_eq!(s.label, if g > 0.0 { 1 } else { -1 });
                for v in [&s.x, &s.y, &s.negatives[0]] {
                    let n = match kind {
                        ConstraintKind::Trace => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
                        ConstraintKind::L1 => v.iter().fold(0.0f64, |a, c| a.max(c.abs())),
                    };
                    assert!(n <= c.kappa);
                }
            }
        }
    }

    #[test]
    fn multi_negative_margins() {
        let mut c = cfg(ConstraintKind::Trace);
        c.k = 3;
        let out = generate_dataset(&c).unwrap();
        assert!(out
            .dataset
            .samples
            .iter()
            .all(|s| s.k() == 3 && s.label == 1));
        for s in &out.dataset.samples {
            assert!(margin_of(&out.target, s).unwrap() >= 1.0);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = cfg(ConstraintKind::Trace);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_dataset(&generate_dataset(&c).unwrap().dataset, &mut a).unwrap();
        write_dataset(&generate_dataset(&c).unwrap().dataset, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_shares_target() {
        let c = cfg(ConstraintKind::Trace);
        let train = generate_dataset(&c).unwrap();
        let test = generate_split(&c, 99, 10).unwrap();
        assert_eq!(train.target, test.target);
        assert_ne!(train.dataset.samples[0], test.dataset.samples[0]);
    }

    #[test]
    fn budget_exhaustion_reports_rate() {
        let mut c = cfg(ConstraintKind::Trace);
        c.gamma0 = Some(100.0);
        c.max_rejections = Some(50);
        match generate_dataset(&c) {
            Err(Error::Generation {
                acceptance_rate, ..
            }) => assert!(acceptance_rate < 0.5),
            other => panic!("expected generation failure, got {other:?}"),
        }
    }

    #[test]
    fn validation_names_fields() {
        let mut c = cfg(ConstraintKind::Trace);
        c.gamma0 = Some(0.0);
        assert!(c.validate().unwrap_err().to_string().contains("gamma0"));
        let mut c = cfg(ConstraintKind::Trace);
        c.d_prime = 7;
        assert!(c.validate().unwrap_err().to_string().contains("d_prime"));
    }
}
