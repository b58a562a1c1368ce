//! Synthetic operator and the seeded target trajectory.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ReferenceSample, StylusState, WorkspaceBox};
use crate::rng::SplitMix64;

/// Scripted interval during which the operator tracks an offset target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub start_s: f64,
    pub end_s: f64,
    pub offset_m: [f64; 3],
}

impl Deviation {
    fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }
}

/// Delayed noisy PD tracker standing in for the operator's force channel.
#[derive(Clone, Debug, PartialEq)]
pub struct HumanModel {
    /// N/m
    pub k_p: f64,
    /// N·s/m
    pub k_d: f64,
    pub delay_steps: usize,
    /// Per-axis force noise std-dev, N.
    pub noise_std: f64,
    pub deviations: Vec<Deviation>,
}

impl HumanModel {
    pub fn validated(self, duration: f64) -> Result<Self> {
        if !(self.k_p >= 0.0 && self.k_d >= 0.0 && self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("human gains and noise must be >= 0".into()));
        }
        let mut spans: Vec<_> = self.deviations.clone();
        spans.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for d in &spans {
            if !(d.start_s >= 0.0 && d.start_s < d.end_s && d.end_s <= duration) {
                return Err(Error::InvalidParameter(format!(
                    "deviation [{}, {}) must lie inside [0, {duration}]",
                    d.start_s, d.end_s
                )));
            }
        }
        if spans.windows(2).any(|w| w[1].start_s < w[0].end_s) {
            return Err(Error::InvalidParameter("deviation intervals overlap".into()));
        }
        Ok(self)
    }

    /// Offset active at time `t`, if any.
    pub fn active_offset(&self, t: f64) -> Vector3<f64> {
        self.deviations
            .iter()
            .find(|d| d.contains(t))
            .map(|d| Vector3::from(d.offset_m))
            .unwrap_or_else(Vector3::zeros)
    }

    /// Linearized gains `(K_hp, K_hd)` when no deviation or noise is active.
    pub fn linear_gains(&self) -> (f64, f64) {
        (self.k_p, self.k_d)
    }
}

/// Operator force at step `k`.
///
/// The PD term reads the stylus and target `delay_steps` in the past
/// (zero before the first sample) toward the target shifted by the offset
/// active at step `k`. Three normal draws are taken from `rng` on every call.
pub fn human_command(
    model: &HumanModel,
    states: &[StylusState],
    targets: &[ReferenceSample],
    k: usize,
    period: f64,
    rng: &mut SplitMix64,
) -> Vector3<f64> {
    let noise = Vector3::new(
        rng.normal(model.noise_std),
        rng.normal(model.noise_std),
        rng.normal(model.noise_std),
    );
    let pd = match k.checked_sub(model.delay_steps) {
        Some(j) if j < states.len() && j < targets.len() => {
            let (x, r) = (&states[j], &targets[j]);
            let goal = r.position + model.active_offset(k as f64 * period);
            (goal - x.position) * model.k_p + (r.velocity - x.velocity) * model.k_d
        }
        _ => Vector3::zeros(),
    };
    pd + noise
}

/// Parameters of the low-pass filtered, saturated random walk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub seed: u64,
    /// Filter coefficient λ_f in (0, 1].
    pub filter: f64,
    /// Std-dev of the velocity drive η, m/s.
    pub drive_std: f64,
    pub workspace: WorkspaceBox,
    pub duration: f64,
    pub period: f64,
}

impl TrajectoryConfig {
    pub fn steps(&self) -> usize {
        (self.duration / self.period).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.filter > 0.0 && self.filter <= 1.0) {
            return Err(Error::InvalidParameter(format!("filter must lie in (0, 1], got {}", self.filter)));
        }
        if !(self.drive_std >= 0.0 && self.drive_std.is_finite()) {
            return Err(Error::InvalidParameter("drive amplitude must be >= 0".into()));
        }
        if !(self.period > 0.0 && self.duration > 0.0) {
            return Err(Error::InvalidParameter("duration and period must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic target path of `cfg.steps()` samples.
///
/// `q₀` is the workspace center and the latent velocity starts at zero;
/// then `q_{k+1} = clamp(q_k + w_k T)` and `w_{k+1} = (1 − λ_f) w_k + λ_f η_k`
/// with `η_k` drawn per axis (x, y, z). Velocities are forward differences.
pub fn generate_trajectory(cfg: &TrajectoryConfig) -> Result<Vec<ReferenceSample>> {
    cfg.validate()?;
    let n = cfg.steps();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut q = cfg.workspace.center();
    let mut w = Vector3::<f64>::zeros();
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(q);
    for _ in 0..n {
        q = cfg.workspace.clamp(&(q + w * cfg.period));
        positions.push(q);
        for i in 0..3 {
            let eta = rng.normal(cfg.drive_std);
            w[i] = (1.0 - cfg.filter) * w[i] + cfg.filter * eta;
        }
    }
    Ok(positions
        .windows(2)
        .map(|pair| ReferenceSample {
            position: pair[0],
            velocity: (pair[1] - pair[0]) / cfg.period,
        })
        .collect())
}
