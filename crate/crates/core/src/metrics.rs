//! Objective metrics of a trial: RMS error, conflict energy, assist effort
//! and the non-fighting index.
//!
//! All sums run through [`MetricAccumulator`], so batch evaluation of a
//! record and incremental evaluation of a live session produce identical
//! bits for identical series.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::TrialRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// m
    pub rms: f64,
    /// J
    pub conflict_energy: f64,
    /// N·s
    pub assist_effort: f64,
    /// `None` when no assistance was delivered.
    pub nfi: Option<f64>,
    pub spectral_radius: Option<f64>,
}

/// Running sums over per-step samples `(e_k, u_r(k), v_k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricAccumulator {
    period: f64,
    steps: usize,
    sq_error: f64,
    opposing_power: f64,
    force_norm: f64,
}

impl MetricAccumulator {
    pub fn new(period: f64) -> Self {
        Self { period, steps: 0, sq_error: 0.0, opposing_power: 0.0, force_norm: 0.0 }
    }

    pub fn push(&mut self, error: &Vector3<f64>, assist: &Vector3<f64>, velocity: &Vector3<f64>) {
        self.steps += 1;
        self.sq_error += error.norm_squared();
        self.opposing_power += (-assist.dot(velocity)).max(0.0);
        self.force_norm += assist.norm();
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rms(&self) -> Result<f64> {
        if self.steps == 0 {
            return Err(Error::Empty("record"));
        }
        Ok((self.sq_error / self.steps as f64).sqrt())
    }

    pub fn conflict_energy(&self) -> f64 {
        self.opposing_power * self.period
    }

    pub fn assist_effort(&self) -> f64 {
        self.force_norm * self.period
    }

    pub fn nfi(&self) -> Option<f64> {
        nfi_of(self.conflict_energy(), self.assist_effort())
    }

    pub fn metrics(&self, spectral_radius: Option<f64>) -> Result<TrialMetrics> {
        Ok(TrialMetrics {
            rms: self.rms()?,
            conflict_energy: self.conflict_energy(),
            assist_effort: self.assist_effort(),
            nfi: self.nfi(),
            spectral_radius,
        })
    }
}

pub fn nfi_of(conflict: f64, assist: f64) -> Option<f64> {
    (assist > 0.0).then(|| conflict / assist)
}

fn accumulate(rec: &TrialRecord) -> MetricAccumulator {
    let mut acc = MetricAccumulator::new(rec.period);
    for k in 0..rec.len() {
        acc.push(&rec.error(k), &rec.u_r[k], &rec.states[k].velocity);
    }
    acc
}

/// `sqrt(mean ‖e_k‖²)`, m.
pub fn rms_error(rec: &TrialRecord) -> Result<f64> {
    accumulate(rec).rms()
}

/// `Σ max(0, −u_r·v) T`, J.
pub fn conflict_energy(rec: &TrialRecord) -> f64 {
    accumulate(rec).conflict_energy()
}

/// `Σ ‖u_r‖ T`, N·s.
pub fn assist_effort(rec: &TrialRecord) -> f64 {
    accumulate(rec).assist_effort()
}

/// Conflict per unit assist; `None` when assist effort is zero.
pub fn nfi(rec: &TrialRecord) -> Option<f64> {
    accumulate(rec).nfi()
}

pub fn compute_metrics(rec: &TrialRecord, spectral_radius: Option<f64>) -> Result<TrialMetrics> {
    accumulate(rec).metrics(spectral_radius)
}
