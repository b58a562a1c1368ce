//! Soft-Nash best response, its trust-region / max-entropy stage forms and
//! the baseline controllers.
//!
//! The robot minimizes the one-step lookahead
//!
//! ```text
//! J(u) = uᵀR_r u + τ (u − α u_h)ᵀ S (u − α u_h) + (A x + B u)ᵀ P_r (A x + B u)
//! ```
//!
//! whose Hessian is `H(τ) = R_r + τS + BᵀP_rB` and linear term
//! `b = BᵀP_rA x − τα S u_h`, so `u* = −H⁻¹ b = −K_r x + Align u_h`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Dynamics, ReferenceSample, StylusState};
use crate::riccati::RiccatiSolution;

const SYM_TOL: f64 = 1e-12;

/// Weights of the robot stage cost plus the human cost used for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    /// Tracking weight on task-space error (p×p, PSD).
    pub q_r: DMatrix<f64>,
    /// Robot effort weight (m×m, PD).
    pub r_r: DMatrix<f64>,
    /// Action-space metric of the attraction term (m×m, PD).
    pub s: DMatrix<f64>,
    /// Nominal blend toward the human command.
    pub alpha: f64,
    pub q_h: DMatrix<f64>,
    pub r_h: DMatrix<f64>,
}

impl CostWeights {
    /// Isotropic weights on a 3-axis task.
    pub fn isotropic(q_r: f64, r_r: f64, s: f64, alpha: f64, q_h: f64, r_h: f64) -> Result<Self> {
        let eye = DMatrix::<f64>::identity(3, 3);
        Self {
            q_r: &eye * q_r,
            r_r: &eye * r_r,
            s: &eye * s,
            alpha,
            q_h: &eye * q_h,
            r_h: &eye * r_h,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        check_symmetric("Q_r", &self.q_r)?;
        check_symmetric("Q_h", &self.q_h)?;
        check_psd("Q_r", &self.q_r)?;
        check_psd("Q_h", &self.q_h)?;
        check_pd("R_r", &self.r_r)?;
        check_pd("R_h", &self.r_h)?;
        check_pd("S", &self.s)?;
        let m = self.r_r.nrows();
        if self.s.nrows() != m || self.r_h.nrows() != m {
            return Err(Error::Dimension("R_r, R_h and S must share the input dimension".into()));
        }
        if self.q_r.shape() != self.q_h.shape() {
            return Err(Error::Dimension("Q_r and Q_h must share the output dimension".into()));
        }
        if !self.alpha.is_finite() {
            return Err(Error::NonFinite("alpha"));
        }
        Ok(self)
    }

    /// State weight `CᵀQ_rC` for the Riccati equation.
    pub fn state_weight(&self, dyn_: &Dynamics) -> DMatrix<f64> {
        dyn_.c.transpose() * &self.q_r * &dyn_.c
    }
}

fn check_symmetric(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{name} is not square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    if (m - m.transpose()).amax() > SYM_TOL {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    Ok(())
}

fn check_pd(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(name, m)?;
    m.clone().cholesky().map(|_| ()).ok_or(Error::NotPositiveDefinite(name))
}

fn check_psd(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.clone().symmetric_eigen().eigenvalues.iter().any(|&e| e < -SYM_TOL) {
        return Err(Error::InvalidParameter(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

/// Softness τ ≥ 0.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct Softness(f64);

impl Softness {
    pub const HARD: Softness = Softness(0.0);

    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau >= 0.0 {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidParameter(format!("softness must be finite and >= 0, got {tau}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Precomputed Soft-Nash feedback for one (plant, weights, P_r, τ).
#[derive(Clone, Debug)]
pub struct ControllerGains {
    pub tau: Softness,
    /// `H(τ) = R_r + τS + BᵀP_rB`.
    pub h: DMatrix<f64>,
    /// `K_r = H⁻¹ BᵀP_rA`.
    pub k_r: DMatrix<f64>,
    /// `Align = H⁻¹ (τ α S)`.
    pub align: DMatrix<f64>,
}

pub fn compute_gains(
    dyn_: &Dynamics,
    w: &CostWeights,
    p: &RiccatiSolution,
    tau: Softness,
) -> Result<ControllerGains> {
    let (n, m) = (dyn_.state_dim(), dyn_.input_dim());
    if p.p.shape() != (n, n) || w.r_r.shape() != (m, m) {
        return Err(Error::Dimension("gains: P_r must be n×n and R_r m×m".into()));
    }
    let bt_p = dyn_.b.transpose() * &p.p;
    let h = &w.r_r + &w.s * tau.value() + &bt_p * &dyn_.b;
    let h = (&h + h.transpose()) * 0.5;
    let chol = h.clone().cholesky().ok_or(Error::NotPositiveDefinite("H(τ)"))?;
    let k_r = chol.solve(&(&bt_p * &dyn_.a));
    let align = chol.solve(&(&w.s * (tau.value() * w.alpha)));
    if k_r.iter().chain(align.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("controller gains"));
    }
    Ok(ControllerGains { tau, h, k_r, align })
}

/// `u* = −K_r x + Align u_h`.
pub fn best_response(g: &ControllerGains, x: &DVector<f64>, u_h: &DVector<f64>) -> DVector<f64> {
    -(&g.k_r * x) + &g.align * u_h
}

/// Best response through the linear term, `−H⁻¹(BᵀP_rA x − τα S u_h)`.
pub fn best_response_from_linear_term(
    dyn_: &Dynamics,
    w: &CostWeights,
    p: &DMatrix<f64>,
    tau: Softness,
    x: &DVector<f64>,
    u_h: &DVector<f64>,
) -> Result<DVector<f64>> {
    let bt_p = dyn_.b.transpose() * p;
    let h = &w.r_r + &w.s * tau.value() + &bt_p * &dyn_.b;
    let lin = &bt_p * &dyn_.a * x - &w.s * u_h * (tau.value() * w.alpha);
    let chol = h.cholesky().ok_or(Error::NotPositiveDefinite("H(τ)"))?;
    Ok(-chol.solve(&lin))
}

/// Minimizer of the stage problem with the KL trust region in its
/// deterministic limit: `uᵀR_r u + (β/2)(u − αu_h)ᵀΣ₀⁻¹(u − αu_h)`.
///
/// Equals [`best_response`] with `P_r = 0`, `S = ½Σ₀⁻¹` and `τ = β`.
pub fn stage_best_response(
    w: &CostWeights,
    prior_cov: &DMatrix<f64>,
    beta: f64,
    alpha: f64,
    u_h: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (hess, attraction) = stage_terms(w, prior_cov, beta)?;
    let chol = hess.cholesky().ok_or(Error::NotPositiveDefinite("R_r + (β/2)Σ₀⁻¹"))?;
    Ok(chol.solve(&(attraction * u_h * alpha)))
}

// Returns (R_r + (β/2)Σ₀⁻¹, (β/2)Σ₀⁻¹).
fn stage_terms(w: &CostWeights, prior_cov: &DMatrix<f64>, beta: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("β must be >= 0, got {beta}")));
    }
    if prior_cov.shape() != w.r_r.shape() {
        return Err(Error::Dimension("Σ₀ must match R_r".into()));
    }
    let attraction = prior_precision(prior_cov)? * (0.5 * beta);
    Ok((&w.r_r + &attraction, attraction))
}

fn prior_precision(prior_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if prior_cov.clone().cholesky().is_none() {
        return Err(Error::Singular("Σ₀"));
    }
    prior_cov.clone().try_inverse().ok_or(Error::Singular("Σ₀"))
}

/// Gaussian robot policy `N(μ*, Σ*)` with its prior and weights.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub prior_cov: DMatrix<f64>,
    pub beta: f64,
    pub lambda: f64,
}

/// Maximum-entropy stage policy: mean from [`stage_best_response`],
/// covariance `Σ* = λ (R_r + βΣ₀⁻¹)⁻¹`.
pub fn maxent_stage_policy(
    w: &CostWeights,
    prior_cov: &DMatrix<f64>,
    beta: f64,
    lambda: f64,
    alpha: f64,
    u_h: &DVector<f64>,
) -> Result<GaussianPolicy> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("λ must be >= 0, got {lambda}")));
    }
    let mean = stage_best_response(w, prior_cov, beta, alpha, u_h)?;
    let prior_prec = prior_precision(prior_cov)?;
    let precision = &w.r_r + prior_prec * beta;
    if precision.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("R_r + βΣ₀⁻¹"));
    }
    let inv = precision.try_inverse().ok_or(Error::Singular("R_r + βΣ₀⁻¹"))?;
    let covariance = inv * lambda;
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(GaussianPolicy { mean, covariance, prior_cov: prior_cov.clone(), beta, lambda })
}

/// Classic virtual fixture: PD on the tracking error.
pub fn classic_vf(k_p: f64, k_d: f64, x: &StylusState, r: &ReferenceSample) -> Vector3<f64> {
    -(x.position - r.position) * k_p - (x.velocity - r.velocity) * k_d
}

/// Robot and human stage losses `(ℓ_r, ℓ_h)`.
pub fn stage_costs(
    w: &CostWeights,
    tau: Softness,
    alpha: f64,
    e: &DVector<f64>,
    u_r: &DVector<f64>,
    u_h: &DVector<f64>,
) -> (f64, f64) {
    let d = u_r - u_h * alpha;
    let l_r = (e.transpose() * &w.q_r * e)[(0, 0)]
        + (u_r.transpose() * &w.r_r * u_r)[(0, 0)]
        + tau.value() * (d.transpose() * &w.s * &d)[(0, 0)];
    let l_h = (e.transpose() * &w.q_h * e)[(0, 0)] + (u_h.transpose() * &w.r_h * u_h)[(0, 0)];
    (l_r, l_h)
}

/// Assistance modes of the experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Classic,
    Nash(Softness),
    None,
}

impl Mode {
    /// The eight modes in canonical order.
    pub fn standard_set() -> Vec<Mode> {
        let mut v = vec![Mode::Classic];
        v.extend(STANDARD_TAUS.iter().map(|&t| Mode::Nash(Softness(t))));
        v.push(Mode::None);
        v
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Mode::Nash(t) => Some(t.value()),
            _ => None,
        }
    }

    pub fn is_standard(&self) -> bool {
        Mode::standard_set().contains(self)
    }

    /// Mode from a family name and optional softness: `"NASH"` takes τ from
    /// `tau`; `"NASH_<τ>"`, `"CLASSIC"` and `"NONE"` ignore it.
    pub fn from_parts(name: &str, tau: Option<f64>) -> Result<Self> {
        if name == "NASH" {
            let tau = tau.ok_or_else(|| Error::InvalidParameter("NASH requires a softness value".into()))?;
            return Softness::new(tau).map(Mode::Nash);
        }
        name.parse()
    }
}

pub const STANDARD_TAUS: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 5.0, 8.0];

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Classic => write!(f, "CLASSIC"),
            Mode::None => write!(f, "NONE"),
            Mode::Nash(t) => write!(f, "NASH_{}", t.value()),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CLASSIC" => Ok(Mode::Classic),
            "NONE" => Ok(Mode::None),
            _ => {
                let tau = s
                    .strip_prefix("NASH_")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| Error::UnknownMode(s.to_string()))?;
                Softness::new(tau).map(Mode::Nash).map_err(|_| Error::UnknownMode(s.to_string()))
            }
        }
    }
}

impl Serialize for Mode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::discretize_mass_damper;
    use crate::riccati::{solve_dare, DEFAULT_MAX_ITER, DEFAULT_TOL};

    const PHI: f64 = 1.618_033_988_749_894_8;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar_setup(alpha: f64) -> (Dynamics, CostWeights, RiccatiSolution) {
        let dyn_ = Dynamics::new(s(1.0), s(1.0), s(1.0), 1.0).unwrap();
        let w = CostWeights { q_r: s(1.0), r_r: s(1.0), s: s(1.0), alpha, q_h: s(1.0), r_h: s(1.0) };
        let p = solve_dare(&dyn_.a, &dyn_.b, &s(1.0), &s(1.0), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        (dyn_, w, p)
    }

    #[test]
    fn scalar_gains_at_unit_softness() {
        let (d, w, p) = scalar_setup(1.0);
        let g = compute_gains(&d, &w, &p, Softness::new(1.0).unwrap()).unwrap();
        assert!((g.h[(0, 0)] - (2.0 + PHI)).abs() < 1e-10);
        assert!((g.k_r[(0, 0)] - PHI / (2.0 + PHI)).abs() < 1e-10);
        assert!((g.align[(0, 0)] - 1.0 / (2.0 + PHI)).abs() < 1e-10);
        assert!((g.k_r[(0, 0)] - 0.4472).abs() < 1e-4);
        assert!((g.align[(0, 0)] - 0.2764).abs() < 1e-4);
    }

    #[test]
    fn hard_nash_has_no_alignment() {
        let (d, w, p) = scalar_setup(1.0);
        let g = compute_gains(&d, &w, &p, Softness::HARD).unwrap();
        assert_eq!(g.align[(0, 0)], 0.0);
        let u = best_response(&g, &DVector::from_element(1, 1.0), &DVector::from_element(1, 0.0));
        assert!((u[0] + PHI / (1.0 + PHI)).abs() < 1e-10);
        assert!((u[0] + 0.618034).abs() < 1e-6);
    }

    #[test]
    fn very_soft_passes_human_through() {
        let (d, w, p) = scalar_setup(1.0);
        let g = compute_gains(&d, &w, &p, Softness::new(1e8).unwrap()).unwrap();
        assert!((g.align[(0, 0)] - 1.0).abs() < 1e-7);
        assert!(g.k_r.amax() <= 1e-7);
    }

    #[test]
    fn pass_through_on_default_plant() {
        let d = discretize_mass_damper(0.2, 4.0, 0.01).unwrap();
        let w = CostWeights::isotropic(400.0, 1.0, 1.0, 0.8, 400.0, 1.0).unwrap();
        let q = w.state_weight(&d);
        let p = solve_dare(&d.a, &d.b, &q, &w.r_r, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let g = compute_gains(&d, &w, &p, Softness::new(1e8).unwrap()).unwrap();
        let x = DVector::from_vec(vec![0.5, -0.3, 0.2, 0.4, 0.1, -0.6]);
        let u = best_response(&g, &x, &DVector::from_vec(vec![2.0, 0.0, 0.0]));
        assert!((u - DVector::from_vec(vec![1.6, 0.0, 0.0])).amax() < 1e-4);
    }

    #[test]
    fn zero_inputs_give_zero_force() {
        let (d, w, p) = scalar_setup(1.0);
        let g = compute_gains(&d, &w, &p, Softness::new(3.0).unwrap()).unwrap();
        assert_eq!(best_response(&g, &DVector::zeros(1), &DVector::zeros(1))[0], 0.0);
    }

    #[test]
    fn stage_response_examples() {
        let w = CostWeights { q_r: s(1.0), r_r: s(1.0), s: s(1.0), alpha: 1.0, q_h: s(1.0), r_h: s(1.0) };
        let u_h = DVector::from_element(1, 2.0);
        assert_eq!(stage_best_response(&w, &s(1.0), 0.0, 1.0, &u_h).unwrap()[0], 0.0);
        // (1 + 1/2)⁻¹ · (1/2) · 1 · 2
        let u = stage_best_response(&w, &s(1.0), 1.0, 1.0, &u_h).unwrap();
        assert!((u[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(stage_best_response(&w, &s(0.0), 1.0, 1.0, &u_h).unwrap_err(), Error::Singular("Σ₀"));
    }

    #[test]
    fn maxent_examples() {
        let w = CostWeights { q_r: s(1.0), r_r: s(1.0), s: s(1.0), alpha: 1.0, q_h: s(1.0), r_h: s(1.0) };
        let u_h = DVector::from_element(1, 2.0);
        let pol = maxent_stage_policy(&w, &s(1.0), 1.0, 2.0, 1.0, &u_h).unwrap();
        assert_eq!(pol.covariance[(0, 0)], 1.0);
        let cold = maxent_stage_policy(&w, &s(1.0), 1.0, 0.0, 1.0, &u_h).unwrap();
        assert_eq!(cold.covariance[(0, 0)], 0.0);
        assert_eq!(cold.mean, pol.mean);
        assert!(maxent_stage_policy(&w, &s(1.0), 1.0, -1.0, 1.0, &u_h).is_err());
    }

    #[test]
    fn classic_vf_examples() {
        let r = ReferenceSample { position: Vector3::new(0.01, 0.02, 0.0), velocity: Vector3::new(0.1, 0.0, 0.0) };
        let on = StylusState { position: r.position, velocity: r.velocity };
        assert_eq!(classic_vf(200.0, 10.0, &on, &r), Vector3::zeros());
        let off = StylusState { position: Vector3::new(0.01, 0.0, 0.0), velocity: Vector3::zeros() };
        let r0 = ReferenceSample::default();
        let f = classic_vf(200.0, 10.0, &off, &r0);
        assert!((f - Vector3::new(-2.0, 0.0, 0.0)).amax() < 1e-15);
        assert_eq!(classic_vf(0.0, 0.0, &off, &r), Vector3::zeros());
    }

    #[test]
    fn stage_cost_examples() {
        let w = CostWeights { q_r: s(1.0), r_r: s(1.0), s: s(1.0), alpha: 1.0, q_h: s(1.0), r_h: s(1.0) };
        let one = |v: f64| DVector::from_element(1, v);
        let (l_r, _) = stage_costs(&w, Softness::new(2.0).unwrap(), 1.0, &one(3.0), &one(1.0), &one(0.0));
        assert_eq!(l_r, 12.0);
        let (l_r, _) = stage_costs(&w, Softness::new(5.0).unwrap(), 1.0, &one(0.0), &one(1.5), &one(1.5));
        assert_eq!(l_r, 2.25);
        assert_eq!(stage_costs(&w, Softness::new(5.0).unwrap(), 1.0, &one(0.0), &one(0.0), &one(0.0)), (0.0, 0.0));
    }

    #[test]
    fn weights_validation() {
        assert!(CostWeights::isotropic(400.0, 0.0, 1.0, 1.0, 400.0, 1.0).is_err());
        assert!(CostWeights::isotropic(400.0, 1.0, -1.0, 1.0, 400.0, 1.0).is_err());
        assert!(CostWeights::isotropic(-1.0, 1.0, 1.0, 1.0, 400.0, 1.0).is_err());
        assert!(CostWeights::isotropic(400.0, 1.0, 1.0, f64::NAN, 400.0, 1.0).is_err());
        let mut w = CostWeights::isotropic(400.0, 1.0, 1.0, 1.0, 400.0, 1.0).unwrap();
        w.r_r[(0, 1)] = 0.5;
        assert!(w.validated().is_err());
    }

    #[test]
    fn softness_rejects_negative() {
        assert!(Softness::new(-0.1).is_err());
        assert!(Softness::new(f64::INFINITY).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        let names: Vec<String> = Mode::standard_set().iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["CLASSIC", "NASH_0", "NASH_1", "NASH_2", "NASH_3", "NASH_5", "NASH_8", "NONE"]);
        for n in &names {
            assert_eq!(&n.parse::<Mode>().unwrap().to_string(), n);
        }
        assert_eq!("NASH_2.5".parse::<Mode>().unwrap().tau(), Some(2.5));
        assert!("NASH_-1".parse::<Mode>().is_err());
        assert!("SOFT".parse::<Mode>().is_err());
    }

    #[test]
    fn mode_from_parts() {
        assert_eq!(Mode::from_parts("NASH", Some(3.0)).unwrap().tau(), Some(3.0));
        assert_eq!(Mode::from_parts("NASH_5", None).unwrap().tau(), Some(5.0));
        assert_eq!(Mode::from_parts("CLASSIC", Some(1.0)).unwrap(), Mode::Classic);
        assert!(Mode::from_parts("NASH", None).is_err());
        assert!(Mode::from_parts("NASH", Some(f64::NAN)).is_err());
    }
}
