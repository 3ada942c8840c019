//! Semismooth Newton augmented Lagrangian projection onto `{G ⪰ 0, ‖G‖₁ ≤ r}`.
//!
//! Works on the dual `min_Y ½‖Π₊(M − Y)‖² + r‖Y‖_∞` split as `Y = W`. Each
//! inner problem is smooth and is solved by Newton-CG with generalized
//! Jacobians of `Π₊` and of the ℓ1-ball projection. The multiplier of the
//! splitting constraint converges to the projection.

use super::water_level;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix};

const MAX_OUTER: usize = 100;
const MAX_NEWTON: usize = 100;
const MAX_CG: usize = 200;
const MAX_HALVINGS: usize = 50;
const MAX_SIGMA: f64 = 1e4;
const EIG_TOL: f64 = 1e-12;

/// Outer stopping tolerance, relative to `1 + ‖M‖_F`.
pub(super) const REL_TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `op(A) · op(B)` for row-major `d × d` matrices.
fn matmul(a: &[f64], b: &[f64], d: usize, ta: bool, tb: bool) -> Vec<f64> {
    let mut c = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = if ta { a[k * d + i] } else { a[i * d + k] };
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                let bkj = if tb { b[j * d + k] } else { b[k * d + j] };
                c[i * d + j] += aik * bkj;
            }
        }
    }
    c
}

/// `Π₊(A)` with what is needed to apply its generalized Jacobian.
struct PsdPart {
    d: usize,
    vectors: Vec<f64>,
    omega: Vec<f64>,
    proj: SymMatrix,
}

impl PsdPart {
    fn new(a: &SymMatrix) -> Result<Self> {
        let d = a.dim();
        let eig = sym_eigen(a, EIG_TOL)?;
        let lam = eig.values();
        let mut vectors = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                vectors[i * d + j] = eig.component(i, j);
            }
        }
        let mut omega = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let (x, y) = (lam[i], lam[j]);
                omega[i * d + j] = if x > 0.0 && y > 0.0 {
                    1.0
                } else if x <= 0.0 && y <= 0.0 {
                    0.0
                } else {
                    (x.max(0.0) - y.max(0.0)) / (x - y)
                };
            }
        }
        let clamped: Vec<f64> = lam.iter().map(|v| v.max(0.0)).collect();
        Ok(Self {
            d,
            vectors,
            omega,
            proj: eig.reconstruct_with(&clamped),
        })
    }

    /// `V (Ω ∘ VᵀHV) Vᵀ`.
    fn jacobian(&self, h: &[f64]) -> Vec<f64> {
        let d = self.d;
        let v = &self.vectors;
        let mut t = matmul(&matmul(v, h, d, true, false), v, d, false, false);
        for (x, w) in t.iter_mut().zip(&self.omega) {
            *x *= w;
        }
        let out = matmul(&matmul(v, &t, d, false, false), v, d, false, true);
        let mut sym = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                sym[i * d + j] = 0.5 * (out[i * d + j] + out[j * d + i]);
            }
        }
        sym
    }
}

/// Entrywise ℓ1-ball projection of `u` with its soft-threshold level.
struct BallPart {
    u: Vec<f64>,
    proj: Vec<f64>,
    theta: Option<f64>,
}

impl BallPart {
    fn new(u: Vec<f64>, r: f64) -> Self {
        let abs: Vec<f64> = u.iter().map(|x| x.abs()).collect();
        if abs.iter().sum::<f64>() <= r {
            return Self {
                proj: u.clone(),
                u,
                theta: None,
            };
        }
        let theta = water_level(&abs, r);
        let proj = u
            .iter()
            .map(|x| x.signum() * (x.abs() - theta).max(0.0))
            .collect();
        Self {
            u,
            proj,
            theta: Some(theta),
        }
    }

    fn jacobian(&self, h: &[f64]) -> Vec<f64> {
        let Some(theta) = self.theta else {
            return h.to_vec();
        };
        let active: Vec<bool> = self.u.iter().map(|x| x.abs() > theta).collect();
        let count = active.iter().filter(|&&a| a).count();
        if count == 0 {
            return vec![0.0; h.len()];
        }
        let s: f64 = (0..h.len())
            .filter(|&k| active[k])
            .map(|k| self.u[k].signum() * h[k])
            .sum::<f64>()
            / count as f64;
        (0..h.len())
            .map(|k| {
                if active[k] {
                    h[k] - self.u[k].signum() * s
                } else {
                    0.0
                }
            })
            .collect()
    }
}

struct State {
    psd: PsdPart,
    ball: BallPart,
    psi: f64,
    grad: Vec<f64>,
}

struct Problem<'a> {
    m: &'a SymMatrix,
    r: f64,
}

impl Problem<'_> {
    fn state(&self, y: &[f64], x: &[f64], sigma: f64) -> Result<State> {
        let d = self.m.dim();
        let mf = self.m.as_slice();
        let psd = PsdPart::new(&SymMatrix::from_fn(d, |i, j| mf[i * d + j] - y[i * d + j]))?;
        let ball = BallPart::new(
            x.iter().zip(y).map(|(a, b)| a + sigma * b).collect(),
            self.r,
        );
        let g = psd.proj.as_slice();
        // Moreau envelope of r‖·‖_∞ at (X + σY)/σ
        let w_inf = ball
            .u
            .iter()
            .zip(&ball.proj)
            .fold(0.0f64, |acc, (a, b)| acc.max(((a - b) / sigma).abs()));
        let envelope = self.r * w_inf + 0.5 * dot(&ball.proj, &ball.proj) / sigma;
        let psi = 0.5 * dot(g, g) + envelope;
        let grad = ball.proj.iter().zip(g).map(|(p, q)| p - q).collect();
        Ok(State {
            psd,
            ball,
            psi,
            grad,
        })
    }

    /// Truncated CG on `(∂Π₊ + σ ∂Π_B + εI) h = −∇ψ`.
    fn newton_direction(&self, st: &State, sigma: f64) -> Vec<f64> {
        let n = st.grad.len();
        let gn = norm(&st.grad);
        let reg = gn.min(1e-8);
        let target = gn.min(0.1) * gn;
        let mut h = vec![0.0; n];
        let mut res: Vec<f64> = st.grad.iter().map(|v| -v).collect();
        let mut p = res.clone();
        let mut rs = dot(&res, &res);
        for _ in 0..MAX_CG {
            if rs.sqrt() <= target {
                break;
            }
            let a1 = st.psd.jacobian(&p);
            let a2 = st.ball.jacobian(&p);
            let q: Vec<f64> = (0..n).map(|k| a1[k] + sigma * a2[k] + reg * p[k]).collect();
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                break;
            }
            let alpha = rs / pq;
            for k in 0..n {
                h[k] += alpha * p[k];
                res[k] -= alpha * q[k];
            }
            let rs_next = dot(&res, &res);
            for k in 0..n {
                p[k] = res[k] + rs_next / rs * p[k];
            }
            rs = rs_next;
        }
        h
    }

    fn solve(&self) -> Result<SymMatrix> {
        let d = self.m.dim();
        let scale = 1.0 + self.m.fro_norm();
        let start = PsdPart::new(self.m)?.proj;
        let mut x = BallPart::new(start.as_slice().to_vec(), self.r).proj;
        let mut y = vec![0.0; d * d];
        let mut sigma = 1.0;
        let mut prev_change = f64::INFINITY;
        let mut residual = f64::INFINITY;

        for _ in 0..MAX_OUTER {
            let mut st = self.state(&y, &x, sigma)?;
            let inner_tol = (1e-13 * scale).max((0.01 * prev_change).min(1e-3 * scale));
            for _ in 0..MAX_NEWTON {
                let gn = norm(&st.grad);
                if gn <= inner_tol {
                    break;
                }
                let h = self.newton_direction(&st, sigma);
                let slope = dot(&st.grad, &h).min(0.0);
                let mut t = 1.0;
                let mut accepted = None;
                for _ in 0..MAX_HALVINGS {
                    let trial: Vec<f64> = y.iter().zip(&h).map(|(a, b)| a + t * b).collect();
                    let next = self.state(&trial, &x, sigma)?;
                    // near the floating-point floor ψ stops resolving decrease
                    if next.psi <= st.psi + 1e-4 * t * slope || norm(&next.grad) <= 0.5 * gn {
                        accepted = Some((trial, next));
                        break;
                    }
                    t *= 0.5;
                }
                match accepted {
                    Some((trial, next)) => {
                        y = trial;
                        st = next;
                    }
                    None => break,
                }
            }

            let change = dist(&st.ball.proj, &x);
            let gap = dist(&st.ball.proj, st.psd.proj.as_slice());
            x = st.ball.proj;
            residual = change.max(gap);
            if residual <= REL_TOL * scale {
                let g = st.psd.proj;
                let l1 = g.l1_norm();
                return Ok(if l1 > self.r {
                    g.scaled(self.r / l1)
                } else {
                    g
                });
            }
            if change > 0.25 * prev_change {
                sigma = (3.0 * sigma).min(MAX_SIGMA);
            }
            prev_change = change;
        }
        Err(Error::NumericalFailure {
            message: format!("semismooth Newton projection did not converge in {MAX_OUTER} rounds"),
            residual,
        })
    }
}

/// Projection of `m` onto `{G ⪰ 0, ‖G‖₁ ≤ r}` for `r > 0`.
pub(super) fn project(m: &SymMatrix, r: f64) -> Result<SymMatrix> {
    Problem { m, r }.solve()
}
