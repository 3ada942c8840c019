//! Euclidean projections onto `{G ⪰ 0, tr G ≤ τ}` and `{G ⪰ 0, ‖G‖₁ ≤ r}`.

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix, DEFAULT_EIG_TOL};

mod ssn;

/// Iteration budget and stopping tolerance for Dykstra's algorithm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DykstraParams {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for DykstraParams {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-8,
        }
    }
}

/// Threshold `θ` such that `Σ max(0, u_i − θ) = radius`, for nonnegative `u`
/// whose sum exceeds `radius > 0`.
fn water_level(nonneg: &[f64], radius: f64) -> f64 {
    let mut sorted = nonneg.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Projection onto `{λ : λ_i ≥ 0, Σ λ_i ≤ tau}`.
pub fn project_capped_simplex(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    let clamped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= tau {
        return Ok(clamped);
    }
    if tau == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let theta = water_level(&clamped, tau);
    Ok(clamped.iter().map(|&x| (x - theta).max(0.0)).collect())
}

/// Projection onto the ℓ1 ball `{w : ‖w‖₁ ≤ r}` by soft thresholding.
pub fn project_l1_ball(v: &[f64], r: f64) -> Result<Vec<f64>> {
    if !(r >= 0.0) {
        return Err(Error::invalid(format!(
            "radius must be nonnegative, got {r}"
        )));
    }
    let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    if abs.iter().sum::<f64>() <= r {
        return Ok(v.to_vec());
    }
    if r == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let theta = water_level(&abs, r);
    Ok(v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect())
}

/// Projection onto the PSD cone by clamping negative eigenvalues.
pub fn project_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(m, DEFAULT_EIG_TOL)?;
    if eig.values().iter().all(|&l| l >= 0.0) {
        return Ok(m.clone());
    }
    let clamped: Vec<f64> = eig.values().iter().map(|&l| l.max(0.0)).collect();
    Ok(eig.reconstruct_with(&clamped))
}

/// Projection onto `{G ⪰ 0, tr G ≤ tau}` through the eigenvalues.
pub fn project_psd_trace_ball(m: &SymMatrix, tau: f64) -> Result<SymMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    let eig = sym_eigen(m, DEFAULT_EIG_TOL)?;
    let projected = project_capped_simplex(eig.values(), tau)?;
    Ok(eig.reconstruct_with(&projected))
}

/// Projection onto the entrywise ℓ1 ball `{G : Σ|G_ij| ≤ r}`.
pub fn project_l1_entrywise(m: &SymMatrix, r: f64) -> Result<SymMatrix> {
    let flat = project_l1_ball(m.as_slice(), r)?;
    let d = m.dim();
    Ok(SymMatrix::from_fn(d, |i, j| flat[i * d + j]))
}

/// Projection onto `{G ⪰ 0, ‖G‖₁ ≤ r}` by Dykstra's alternating projections.
///
/// Each round projects onto the ℓ1 ball and then onto the PSD cone, carrying
/// the two correction terms. Iteration stops when both the change in the PSD
/// iterate and its gap to the ℓ1 iterate are within `params.tol` (Frobenius).
/// The returned matrix is the last PSD iterate, shrunk by `r / ‖X‖₁` if it
/// still overshoots the ball, so it is PSD and inside the ball.
///
/// Dykstra can crawl when the solution sits on a degenerate face (a zero row,
/// say). If `params.max_iter` rounds are not enough, the projection is
/// finished by a semismooth Newton augmented Lagrangian solve of the dual.
pub fn project_psd_l1(m: &SymMatrix, r: f64, params: DykstraParams) -> Result<SymMatrix> {
    if !(r >= 0.0) {
        return Err(Error::invalid(format!(
            "radius must be nonnegative, got {r}"
        )));
    }
    let d = m.dim();
    if r == 0.0 {
        return Ok(SymMatrix::zeros(d));
    }
    let mut x = m.clone();
    let mut p = SymMatrix::zeros(d);
    let mut q = SymMatrix::zeros(d);
    let mut residual = f64::INFINITY;
    for _ in 0..params.max_iter {
        let xp = &x + &p;
        let y = project_l1_entrywise(&xp, r)?;
        p = &xp - &y;
        let yq = &y + &q;
        let next = project_psd(&yq)?;
        q = &yq - &next;

        let change = (&next - &x).fro_norm();
        let gap = (&next - &y).fro_norm();
        x = next;
        residual = change.max(gap);
        if residual <= params.tol {
            let l1 = x.l1_norm();
            if l1 > r {
                x = x.scaled(r / l1);
            }
            return Ok(x);
        }
    }
    ssn::project(m, r).map_err(|e| match e {
        Error::NumericalFailure { message, residual: newton } => Error::NumericalFailure {
            message: format!(
                "Dykstra projection did not converge in {} iterations (residual {residual:e}); {message}",
                params.max_iter
            ),
            residual: newton,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn mat_close(a: &SymMatrix, b: &SymMatrix, tol: f64) -> bool {
        (a - b).fro_norm() <= tol
    }

    #[test]
    fn capped_simplex_examples() {
        assert!(close(
            &project_capped_simplex(&[3.0, 1.0], 2.0).unwrap(),
            &[2.0, 0.0],
            1e-12
        ));
        assert_eq!(
            project_capped_simplex(&[0.5, 0.3], 2.0).unwrap(),
            vec![0.5, 0.3]
        );
        assert_eq!(
            project_capped_simplex(&[-1.0, 1.0], 5.0).unwrap(),
            vec![0.0, 1.0]
        );
        assert_eq!(
            project_capped_simplex(&[4.0, 1.0], 0.0).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(project_capped_simplex(&[1.0], -1.0).is_err());
    }

    #[test]
    fn capped_simplex_kkt() {
        // water level θ = 2 leaves a single active coordinate
        let v = [4.0, 2.0, 1.0, -3.0];
        let out = project_capped_simplex(&v, 2.0).unwrap();
        assert!((out.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        let theta = v[0] - out[0];
        for (vi, oi) in v.iter().zip(&out) {
            assert!((oi - (vi - theta).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_ball_examples() {
        assert!(close(
            &project_l1_ball(&[3.0, 1.0], 2.0).unwrap(),
            &[2.0, 0.0],
            1e-12
        ));
        assert_eq!(project_l1_ball(&[0.5, -0.5], 2.0).unwrap(), vec![0.5, -0.5]);
        assert!(close(
            &project_l1_ball(&[1.0, 1.0, 1.0], 1.5).unwrap(),
            &[0.5, 0.5, 0.5],
            1e-12
        ));
        assert!(close(
            &project_l1_ball(&[-3.0, 1.0], 2.0).unwrap(),
            &[-2.0, 0.0],
            1e-12
        ));
        assert!(project_l1_ball(&[1.0], -0.1).is_err());
    }

    #[test]
    fn trace_ball_examples() {
        let out = project_psd_trace_ball(&SymMatrix::from_diag(&[3.0, 1.0]), 2.0).unwrap();
        assert!(mat_close(&out, &SymMatrix::from_diag(&[2.0, 0.0]), 1e-10));
        let out = project_psd_trace_ball(&SymMatrix::from_diag(&[-1.0, 1.0]), 5.0).unwrap();
        assert!(mat_close(&out, &SymMatrix::from_diag(&[0.0, 1.0]), 1e-10));
        let m = SymMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let out = project_psd_trace_ball(&m, 1.0).unwrap();
        let want = SymMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(mat_close(&out, &want, 1e-10));
    }

    #[test]
    fn psd_l1_examples() {
        let params = DykstraParams::default();
        let out = project_psd_l1(&SymMatrix::from_diag(&[2.0, -1.0]), 1.0, params).unwrap();
        assert!(mat_close(&out, &SymMatrix::from_diag(&[1.0, 0.0]), 1e-10));
        let m = SymMatrix::from_diag(&[0.2, 0.1]);
        assert!(mat_close(
            &project_psd_l1(&m, 1.0, params).unwrap(),
            &m,
            1e-12
        ));
        let m = SymMatrix::from_rows(&[vec![1.0, -3.0], vec![-3.0, 2.0]]).unwrap();
        assert_eq!(
            project_psd_l1(&m, 0.0, params).unwrap(),
            SymMatrix::zeros(2)
        );
    }

    #[test]
    fn newton_finish_matches_long_dykstra() {
        // Dykstra needs ~3000 rounds here
        let m = SymMatrix::from_rows(&[
            vec![-2.7662659189599488, -0.69237469351455],
            vec![-0.69237469351455, 1.6251889631015914],
        ])
        .unwrap();
        let r = 1.0399177662346888;
        let short = project_psd_l1(&m, r, DykstraParams::default()).unwrap();
        let long = project_psd_l1(
            &m,
            r,
            DykstraParams {
                max_iter: 100_000,
                tol: 1e-12,
            },
        )
        .unwrap();
        let newton = ssn::project(&m, r).unwrap();
        assert!(mat_close(&short, &long, 1e-9));
        assert!(mat_close(&newton, &long, 1e-9));
        assert!(newton.l1_norm() <= r && newton.min_eigenvalue().unwrap() >= -1e-12);
    }

    #[test]
    fn newton_matches_frozen_long_run() {
        // reference: 785 491 Dykstra rounds to a 1e-12 residual
        let m = SymMatrix::from_rows(&[
            vec![1.9889436709287942, -1.5223847223705014, -0.9530932564999026],
            vec![-1.5223847223705014, 2.3207262001020386, 1.2816071374745928],
            vec![-0.9530932564999026, 1.2816071374745928, -0.7215253307836917],
        ])
        .unwrap();
        let want = SymMatrix::from_rows(&[
            vec![
                0.7108497455105918,
                -0.2442894949718344,
                6.404302544012197e-13,
            ],
            vec![
                -0.2442894949718344,
                1.042634761292351,
                0.0011384011247942893,
            ],
            vec![
                6.404302544012197e-13,
                0.0011384011247942893,
                1.351810382967081e-6,
            ],
        ])
        .unwrap();
        let r = 2.244341650806397;
        let got = project_psd_l1(&m, r, DykstraParams::default()).unwrap();
        assert!(mat_close(&got, &want, 1e-9), "{got:?}");
        assert!(got.l1_norm() <= r && got.min_eigenvalue().unwrap() >= -1e-12);
    }

    #[test]
    fn zero_matrix_is_fixed() {
        let z = SymMatrix::zeros(4);
        assert_eq!(project_psd_trace_ball(&z, 0.0).unwrap(), z);
        assert_eq!(project_psd_trace_ball(&z, 3.0).unwrap(), z);
        assert_eq!(
            project_psd_l1(&z, 3.0, DykstraParams::default()).unwrap(),
            z
        );
    }
}
