//! Plant definition and the shared state/reference types.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the per-axis mass–damper stylus model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassDamper {
    pub mass: f64,
    pub damping: f64,
}

/// Linear discrete-time plant `x⁺ = A x + B F`, output `y = C x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub period: f64,
    pub plant: Option<MassDamper>,
}

impl Dynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidParameter(format!("step period must be positive, got {period}")));
        }
        if !a.is_square() {
            return Err(Error::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, A has {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} cols, A has {n}", c.ncols())));
        }
        Ok(Self { a, b, c, period, plant: None })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// One step of the plant: returns `A x + B F`.
    pub fn step(&self, x: &DVector<f64>, force: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.state_dim() || force.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "step expects x∈R^{} and F∈R^{}, got {} and {}",
                self.state_dim(),
                self.input_dim(),
                x.len(),
                force.len()
            )));
        }
        Ok(&self.a * x + &self.b * force)
    }
}

/// Forward-Euler discretization of three decoupled mass–damper axes.
///
/// State is `[p; v]`. Per axis `A = [[1, T], [0, 1 − cT/m]]`, `B = [0; T/m]`,
/// and `C = [I 0]` selects position.
pub fn discretize_mass_damper(mass: f64, damping: f64, period: f64) -> Result<Dynamics> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
    }
    if !(damping >= 0.0 && damping.is_finite()) {
        return Err(Error::InvalidParameter(format!("damping must be non-negative, got {damping}")));
    }
    let ratio = damping * period / mass;
    if ratio >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "cT/m = {ratio} >= 1 makes the Euler step unstable"
        )));
    }

    let mut a = DMatrix::<f64>::identity(6, 6);
    let mut b = DMatrix::<f64>::zeros(6, 3);
    let mut c = DMatrix::<f64>::zeros(3, 6);
    for i in 0..3 {
        a[(i, i + 3)] = period;
        a[(i + 3, i + 3)] = 1.0 - ratio;
        b[(i + 3, i)] = period / mass;
        c[(i, i)] = 1.0;
    }
    let mut dyn_ = Dynamics::new(a, b, c, period)?;
    dyn_.plant = Some(MassDamper { mass, damping });
    Ok(dyn_)
}

/// Stylus position and velocity, packed as `x = [p; v]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StylusState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl StylusState {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(6, self.position.iter().chain(self.velocity.iter()).copied())
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        Self {
            position: Vector3::new(x[0], x[1], x[2]),
            velocity: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite())
    }
}

/// Axis-aligned workspace bounds in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorkspaceBox {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        for i in 0..3 {
            if !(min[i] < max[i]) {
                return Err(Error::InvalidParameter(format!(
                    "workspace axis {i}: min {} must be below max {}",
                    min[i], max[i]
                )));
            }
        }
        Ok(Self { min, max })
    }

    pub fn symmetric(half_width: f64) -> Result<Self> {
        Self::new([-half_width; 3], [half_width; 3])
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i]))
    }

    pub fn clamp(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| p[i].clamp(self.min[i], self.max[i]))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Target position and its forward-difference velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReferenceSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}
