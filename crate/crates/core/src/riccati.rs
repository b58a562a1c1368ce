//! Discrete algebraic Riccati equation and spectral checks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Value-function matrix of the robot plus its convergence certificate.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub iterations: usize,
    /// ∞-norm of the last sweep's update, `‖f(P) − P‖`.
    pub residual: f64,
    /// Residual after every sweep, in order.
    pub history: Vec<f64>,
}

/// One Riccati sweep: `AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA + Q`.
pub fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let at_p = a.transpose() * p;
    let bt_p = b.transpose() * p;
    let gram = r + &bt_p * b;
    let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite("R + BᵀPB"))?;
    let gain = chol.solve(&(&bt_p * a));
    Ok(&at_p * a - &at_p * b * gain + q)
}

/// ∞-norm (max row sum) of the DARE defect `P − f(P)`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    Ok(inf_norm(&(p - riccati_map(a, b, q, r, p)?)))
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Fixed-point iteration for the DARE, started at `P₀ = Q`.
///
/// Stops when the sweep residual drops below `tol`, or when it reaches the
/// rounding floor `64 ε max(1, ‖P‖∞)` below which the iteration can no longer
/// make progress in double precision.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Dimension(format!(
            "DARE needs A n×n, B n×m, Q n×n, R m×m; got A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    for (name, m) in [("A", a), ("B", b), ("Q", q), ("R", r)] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
    }
    if r.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("R"));
    }

    let mut p = q.clone();
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = riccati_map(a, b, q, r, &p)?;
        let next = (&next + next.transpose()) * 0.5;
        residual = inf_norm(&(&next - &p));
        history.push(residual);
        p = next;
        if !residual.is_finite() {
            break;
        }
        let floor = 64.0 * f64::EPSILON * inf_norm(&p).max(1.0);
        if residual <= tol || residual <= floor {
            return Ok(RiccatiSolution { p, iterations: it, residual, history });
        }
    }
    Err(Error::RiccatiNotConverged { iterations: history.len(), residual })
}

/// Largest eigenvalue modulus, from the real Schur form.
///
/// Francis iteration can stall on repeated eigenvalues; it is retried at
/// looser deflation tolerances and, failing that, the radius falls back to
/// [`gelfand_radius`].
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("spectral radius of a {:?} matrix", m.shape())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral_radius input"));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12] {
        if let Some(schur) = m.clone().try_schur(eps, 10_000) {
            return Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    Ok(gelfand_radius(m, 60))
}

/// `lim ‖M^(2^k)‖^(2^-k)` by repeated normalized squaring.
///
/// Converges for every square matrix; Jordan blocks slow it to an error of
/// order `log(2^k) / 2^k`.
pub fn gelfand_radius(m: &DMatrix<f64>, squarings: u32) -> f64 {
    let mut log_rho = 0.0;
    let mut weight = 1.0;
    let mut cur = m.clone();
    for _ in 0..squarings {
        let norm = cur.norm();
        if norm == 0.0 {
            return 0.0;
        }
        log_rho += weight * norm.ln();
        cur /= norm;
        cur = &cur * &cur;
        weight *= 0.5;
    }
    let tail = cur.norm();
    if tail == 0.0 {
        return 0.0;
    }
    (log_rho + weight * tail.ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::discretize_mass_damper;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_dynamics_gives_q() {
        let sol = solve_dare(&s(0.0), &s(1.0), &s(2.0), &s(1.0), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(sol.p[(0, 0)], 2.0);
    }

    #[test]
    fn scalar_golden_ratio() {
        let sol = solve_dare(&s(1.0), &s(1.0), &s(1.0), &s(1.0), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - phi).abs() < 1e-11, "{}", sol.p[(0, 0)]);
    }

    #[test]
    fn uncontrolled_reduces_to_lyapunov() {
        let sol = solve_dare(&s(0.5), &s(0.0), &s(1.0), &s(1.0), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((sol.p[(0, 0)] - 4.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn rejects_indefinite_r() {
        let err = solve_dare(&s(1.0), &s(1.0), &s(1.0), &s(-1.0), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite("R"));
    }

    #[test]
    fn reports_non_convergence() {
        // unstable and uncontrollable: the iteration diverges
        let err = solve_dare(&s(2.0), &s(0.0), &s(1.0), &s(1.0), DEFAULT_TOL, 50).unwrap_err();
        assert!(matches!(err, Error::RiccatiNotConverged { iterations: 50, .. }));
    }

    #[test]
    fn default_plant_block_structure_and_defect() {
        let d = discretize_mass_damper(0.2, 4.0, 0.01).unwrap();
        let q = d.c.transpose() * DMatrix::<f64>::identity(3, 3) * 400.0 * &d.c;
        let r = DMatrix::<f64>::identity(3, 3);
        let sol = solve_dare(&d.a, &d.b, &q, &r, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(dare_residual(&d.a, &d.b, &q, &r, &sol.p).unwrap() <= 1e-9);
        assert!(sol.residual <= 1e-9);
        for i in 0..6 {
            for j in 0..6 {
                assert!((sol.p[(i, j)] - sol.p[(j, i)]).abs() <= 1e-12);
                // cross-axis couplings vanish
                if i % 3 != j % 3 {
                    assert_eq!(sol.p[(i, j)], 0.0);
                }
            }
        }
        for axis in 1..3 {
            for (di, dj) in [(0, 0), (0, 3), (3, 3)] {
                assert_eq!(sol.p[(axis + di, axis + dj)], sol.p[(di, dj)]);
            }
        }
        let eig = sol.p.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e >= -1e-12));
        // monotone after the first 10 sweeps
        for w in sol.history[10..].windows(2) {
            assert!(w[1] <= w[0], "{w:?}");
        }
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&DMatrix::identity(2, 2)).unwrap() - 1.0).abs() < 1e-12);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(spectral_radius(&nil).unwrap().abs() < 1e-12);
        let d = discretize_mass_damper(0.2, 4.0, 0.01).unwrap();
        assert!((spectral_radius(&d.a).unwrap() - 1.0).abs() < 1e-9);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn schur_and_gelfand_agree() {
        let mut rng = crate::rng::SplitMix64::new(21);
        for n in 1..7 {
            for _ in 0..20 {
                let m = DMatrix::from_fn(n, n, |_, _| rng.next_f64() * 2.0 - 1.0);
                let (a, b) = (spectral_radius(&m).unwrap(), gelfand_radius(&m, 60));
                assert!((a - b).abs() <= 1e-9 * a.max(1e-3), "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn repeated_eigenvalue_blocks() {
        // three identical decoupled 2×2 blocks with eigenvalues {0.9, 0.7}
        let mut m = DMatrix::identity(6, 6);
        for i in 0..3 {
            m[(i, i + 3)] = 0.01;
            m[(i + 3, i)] = -3.0;
            m[(i + 3, i + 3)] = 0.6;
        }
        assert!((spectral_radius(&m).unwrap() - 0.9).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_rejects_nan() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert_eq!(spectral_radius(&m).unwrap_err(), Error::NonFinite("spectral_radius input"));
    }
}
