//! Contrastive samples, the Gram-matrix lifting, and datasets.
//!
//! For a representation `W`, the contrastive score of `(x, y, z)` is
//! `g_W = ‖Wx − Wz‖² − ‖Wx − Wy‖²`. Since `‖Wv‖² = ⟨WᵀW, vvᵀ⟩`, the signed
//! score `b·g_W` is linear in `G = WᵀW`: it equals `⟨G, U⟩` with
//! `U = b((x−z)(x−z)ᵀ − (x−y)(x−y)ᵀ)`.

mod jsonl;

use serde::{Deserialize, Serialize};

pub use jsonl::{read_dataset, read_dataset_file, write_dataset, write_dataset_file};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Free-form run metadata, kept sorted by key.
pub type Metadata = serde_json::Map<String, serde_json::Value>;

/// Anchor `x`, positive `y`, negatives `z_1..z_k`, and a ±1 label.
///
/// With a single negative the label says which of `y`, `z` is closer to `x`
/// (`+1`: `y`). With several negatives the label is always `+1` and `y` is the
/// closest example.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    pub label: i8,
}

impl ContrastiveSample {
    pub fn triplet(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, label: i8) -> Result<Self> {
        let s = Self {
            x,
            y,
            negatives: vec![z],
            label,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_negatives(x: Vec<f64>, y: Vec<f64>, negatives: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self {
            x,
            y,
            negatives,
            label: 1,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Number of negatives.
    pub fn k(&self) -> usize {
        self.negatives.len()
    }

    /// The single negative of a triplet.
    pub fn z(&self) -> &[f64] {
        &self.negatives[0]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.x.len();
        if d == 0 {
            return Err(Error::invalid("sample vectors must be non-empty"));
        }
        if self.y.len() != d {
            return Err(Error::invalid(format!(
                "positive has dimension {}, anchor has {d}",
                self.y.len()
            )));
        }
        if self.negatives.is_empty() {
            return Err(Error::invalid("a sample needs at least one negative"));
        }
        if let Some((j, z)) = self
            .negatives
            .iter()
            .enumerate()
            .find(|(_, z)| z.len() != d)
        {
            return Err(Error::invalid(format!(
                "negative {j} has dimension {}, anchor has {d}",
                z.len()
            )));
        }
        if self.label != 1 && self.label != -1 {
            return Err(Error::invalid(format!(
                "label must be ±1, got {}",
                self.label
            )));
        }
        if self.negatives.len() >= 2 && self.label != 1 {
            return Err(Error::invalid("multi-negative samples must carry label +1"));
        }
        let finite = |v: &Vec<f64>| v.iter().all(|c| c.is_finite());
        if !finite(&self.x) || !finite(&self.y) || !self.negatives.iter().all(finite) {
            return Err(Error::invalid("sample has non-finite coordinates"));
        }
        Ok(())
    }
}

/// A collection of samples sharing dimension `dim` and negatives count `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub k: usize,
    pub samples: Vec<ContrastiveSample>,
    pub meta: Metadata,
}

impl Dataset {
    pub fn new(
        dim: usize,
        k: usize,
        samples: Vec<ContrastiveSample>,
        meta: Metadata,
    ) -> Result<Self> {
        let ds = Self {
            dim,
            k,
            samples,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.k == 0 {
            return Err(Error::invalid("dataset dim and k must be positive"));
        }
        for (i, s) in self.samples.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::invalid(format!("sample {i}: {e}")))?;
            if s.dim() != self.dim || s.k() != self.k {
                return Err(Error::invalid(format!(
                    "sample {i} has shape (d={}, k={}), dataset expects (d={}, k={})",
                    s.dim(),
                    s.k(),
                    self.dim,
                    self.k
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Signed lifts `U_i`, one per sample. Requires `k = 1`.
    pub fn lift(&self) -> Result<Vec<SymMatrix>> {
        self.samples.iter().map(build_u).collect()
    }

    /// Per-sample lists of `U_ij`. Requires every label to be `+1`.
    pub fn lift_multi(&self) -> Result<Vec<Vec<SymMatrix>>> {
        self.samples.iter().map(build_u_multi).collect()
    }
}

/// A `rows × cols` linear representation, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RepresentationMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RepresentationMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("representation has non-finite entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged representation rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Self {
            rows: d,
            cols: d,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::invalid(format!(
                "vector has dimension {}, representation expects {}",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `WᵀW`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::from_fn(self.cols, |i, j| {
            (0..self.rows)
                .map(|r| self.get(r, i) * self.get(r, j))
                .sum()
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise ℓ1 norm.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }
}

impl TryFrom<Vec<Vec<f64>>> for RepresentationMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_rows(&rows, cols)
    }
}

impl From<RepresentationMatrix> for Vec<Vec<f64>> {
    fn from(w: RepresentationMatrix) -> Self {
        w.to_rows()
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

/// `‖Wx − Wz‖² − ‖Wx − Wy‖²`.
pub fn g_value(w: &RepresentationMatrix, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != z.len() {
        return Err(Error::invalid("triple vectors must share a dimension"));
    }
    let far = w.apply(&diff(x, z))?;
    let near = w.apply(&diff(x, y))?;
    Ok(sq_norm(&far) - sq_norm(&near))
}

fn lift_pair(x: &[f64], y: &[f64], z: &[f64], b: f64) -> SymMatrix {
    let a = diff(x, z);
    let c = diff(x, y);
    SymMatrix::from_fn(x.len(), |i, j| b * (a[i] * a[j] - c[i] * c[j]))
}

/// `U = b((x−z)(x−z)ᵀ − (x−y)(x−y)ᵀ)` for a single-negative sample.
pub fn build_u(sample: &ContrastiveSample) -> Result<SymMatrix> {
    if sample.k() != 1 {
        return Err(Error::invalid(format!(
            "build_u needs exactly one negative, sample has {}",
            sample.k()
        )));
    }
    sample.validate()?;
    Ok(lift_pair(
        &sample.x,
        &sample.y,
        sample.z(),
        f64::from(sample.label),
    ))
}

/// `U_j = (x−z_j)(x−z_j)ᵀ − (x−y)(x−y)ᵀ` for each negative.
pub fn build_u_multi(sample: &ContrastiveSample) -> Result<Vec<SymMatrix>> {
    if sample.label != 1 {
        return Err(Error::invalid("multi-negative lifting requires label +1"));
    }
    sample.validate()?;
    Ok(sample
        .negatives
        .iter()
        .map(|z| lift_pair(&sample.x, &sample.y, z, 1.0))
        .collect())
}

/// `b·g_W` for a triplet, `min_j g_W(x, y, z_j)` with several negatives.
pub fn margin_of(w: &RepresentationMatrix, sample: &ContrastiveSample) -> Result<f64> {
    if sample.k() == 1 {
        return Ok(f64::from(sample.label) * g_value(w, &sample.x, &sample.y, sample.z())?);
    }
    sample
        .negatives
        .iter()
        .map(|z| g_value(w, &sample.x, &sample.y, z))
        .try_fold(f64::INFINITY, |acc, g| Ok(acc.min(g?)))
}
