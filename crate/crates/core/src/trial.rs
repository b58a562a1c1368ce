//! Closed-loop simulation of one (mode, seed) trial.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::config::{pd_matrix, Lab};
use crate::controller::{best_response, classic_vf, compute_gains, ControllerGains, Mode};
use crate::error::{Error, Result};
use crate::human::{generate_trajectory, human_command, TrajectoryConfig};
use crate::metrics::{compute_metrics, TrialMetrics};
use crate::model::{Dynamics, ReferenceSample, StylusState};
use crate::riccati::spectral_radius;
use crate::rng::SplitMix64;

/// Stream selectors xor-ed into the trial seed.
pub const TRAJECTORY_STREAM: u64 = 0x7472_616A_6563_746F;
pub const HUMAN_NOISE_STREAM: u64 = 0x6875_6D61_6E6E_6F69;

pub const TRACE_HEADER: &str = "k,t,px,py,pz,vx,vy,vz,qx,qy,qz,uhx,uhy,uhz,urx,ury,urz";

#[derive(Clone, Debug)]
pub struct TrialConfig {
    pub mode: Mode,
    pub seed: u64,
    pub lab: Arc<Lab>,
}

impl TrialConfig {
    pub fn new(mode: Mode, seed: u64, lab: Arc<Lab>) -> Self {
        Self { mode, seed, lab }
    }

    pub fn steps(&self) -> usize {
        (self.lab.config.trial.duration_s / self.lab.period()).round() as usize
    }

    pub fn trajectory_config(&self) -> TrajectoryConfig {
        let t = &self.lab.config.trajectory;
        TrajectoryConfig {
            seed: self.seed ^ TRAJECTORY_STREAM,
            filter: t.filter,
            drive_std: t.drive_std_m_per_s,
            workspace: self.lab.workspace,
            duration: self.lab.config.trial.duration_s,
            period: self.lab.period(),
        }
    }
}

/// Per-step series of one trial. Index `k` holds the state before the
/// step-`k` forces are applied.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub mode: Mode,
    pub seed: u64,
    pub period: f64,
    pub config_hash: String,
    pub states: Vec<StylusState>,
    pub targets: Vec<ReferenceSample>,
    pub u_h: Vec<Vector3<f64>>,
    /// Assist force after fade and clipping.
    pub u_r: Vec<Vector3<f64>>,
}

impl TrialRecord {
    pub fn empty(mode: Mode, seed: u64, period: f64, config_hash: String) -> Self {
        Self {
            mode,
            seed,
            period,
            config_hash,
            states: Vec::new(),
            targets: Vec::new(),
            u_h: Vec::new(),
            u_r: Vec::new(),
        }
    }

    pub fn push(&mut self, x: StylusState, r: ReferenceSample, u_h: Vector3<f64>, u_r: Vector3<f64>) {
        self.states.push(x);
        self.targets.push(r);
        self.u_h.push(u_h);
        self.u_r.push(u_r);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Tracking error `e_k = C x_k − q_k`.
    pub fn error(&self, k: usize) -> Vector3<f64> {
        self.states[k].position - self.targets[k].position
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for k in 0..self.len() {
            let (x, q) = (&self.states[k], &self.targets[k].position);
            let (uh, ur) = (&self.u_h[k], &self.u_r[k]);
            writeln!(
                out,
                "{k},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                k as f64 * self.period,
                x.position.x,
                x.position.y,
                x.position.z,
                x.velocity.x,
                x.velocity.y,
                x.velocity.z,
                q.x,
                q.y,
                q.z,
                uh.x,
                uh.y,
                uh.z,
                ur.x,
                ur.y,
                ur.z
            )?;
        }
        Ok(())
    }

    /// Reads a trace written by [`TrialRecord::write_csv`]. Target
    /// velocities are not part of the trace and come back as zero.
    pub fn read_csv<R: BufRead>(input: R, mode: Mode, seed: u64, period: f64) -> Result<Self> {
        let mut rec = Self::empty(mode, seed, period, String::new());
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(Error::Config("trace header missing".into())),
        }
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("trace line {}: {e}", i + 2)))?;
            if f.len() != 17 {
                return Err(Error::Config(format!("trace line {} has {} fields", i + 2, f.len())));
            }
            let v3 = |o: usize| Vector3::new(f[o], f[o + 1], f[o + 2]);
            rec.push(
                StylusState { position: v3(2), velocity: v3(5) },
                ReferenceSample { position: v3(8), velocity: Vector3::zeros() },
                v3(11),
                v3(14),
            );
        }
        Ok(rec)
    }
}

/// Assist-force law of one mode, with gains fixed for the trial.
#[derive(Clone, Debug)]
pub enum AssistLaw {
    Classic { k_p: f64, k_d: f64 },
    SoftNash(ControllerGains),
    None,
}

impl AssistLaw {
    pub fn for_mode(mode: Mode, lab: &Lab) -> Result<Self> {
        Ok(match mode {
            Mode::Classic => AssistLaw::Classic { k_p: lab.classic.k_p, k_d: lab.classic.k_d },
            Mode::Nash(tau) => AssistLaw::SoftNash(compute_gains(&lab.dynamics, &lab.weights, &lab.riccati, tau)?),
            Mode::None => AssistLaw::None,
        })
    }

    /// Raw force before fade and clipping.
    pub fn force(&self, x: &StylusState, r: &ReferenceSample, u_h: &Vector3<f64>) -> Vector3<f64> {
        match self {
            AssistLaw::Classic { k_p, k_d } => classic_vf(*k_p, *k_d, x, r),
            AssistLaw::SoftNash(g) => {
                let xi = DVector::from_iterator(
                    6,
                    (x.position - r.position).iter().chain((x.velocity - r.velocity).iter()).copied(),
                );
                let u = best_response(g, &xi, &DVector::from_column_slice(u_h.as_slice()));
                Vector3::new(u[0], u[1], u[2])
            }
            AssistLaw::None => Vector3::zeros(),
        }
    }

    /// `(K_r, Align)` such that the assist is `−K_r ξ + Align u_h`.
    pub fn feedback(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            AssistLaw::Classic { k_p, k_d } => (pd_matrix(*k_p, *k_d), DMatrix::zeros(3, 3)),
            AssistLaw::SoftNash(g) => (g.k_r.clone(), g.align.clone()),
            AssistLaw::None => (DMatrix::zeros(3, 6), DMatrix::zeros(3, 3)),
        }
    }
}

/// Fade factor: linear ramp over the first and last `fade_steps` steps,
/// zero at both end points.
pub fn fade_factor(k: usize, steps: usize, fade_steps: usize) -> f64 {
    if fade_steps == 0 {
        return 1.0;
    }
    let tail = steps.saturating_sub(1).saturating_sub(k);
    (k.min(tail) as f64 / fade_steps as f64).min(1.0)
}

/// Direction-preserving scale to `‖u‖ ≤ cap`.
pub fn clip_radial(u: Vector3<f64>, cap: f64) -> Vector3<f64> {
    let n = u.norm();
    if n > cap {
        u * (cap / n)
    } else {
        u
    }
}

/// Advances the plant under total force and enforces the workspace: a
/// clamped axis loses its outward velocity.
pub fn advance(dynamics: &Dynamics, lab: &Lab, x: &StylusState, force: &Vector3<f64>) -> Result<StylusState> {
    let next = dynamics.step(&x.to_vector(), &DVector::from_column_slice(force.as_slice()))?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("plant state"));
    }
    let mut s = StylusState::from_vector(&next);
    let ws = &lab.workspace;
    for i in 0..3 {
        if s.position[i] < ws.min[i] || s.position[i] > ws.max[i] {
            s.position[i] = s.position[i].clamp(ws.min[i], ws.max[i]);
            s.velocity[i] = 0.0;
        }
    }
    Ok(s)
}

pub fn simulate_trial(cfg: &TrialConfig) -> Result<TrialRecord> {
    let lab = &*cfg.lab;
    let steps = cfg.steps();
    let period = lab.period();
    let targets = generate_trajectory(&cfg.trajectory_config())?;
    let law = AssistLaw::for_mode(cfg.mode, lab)?;
    let fade_steps = (lab.config.trial.fade_s / period).round() as usize;
    let cap = lab.config.trial.force_cap;
    let mut noise = SplitMix64::new(cfg.seed ^ HUMAN_NOISE_STREAM);

    let mut rec = TrialRecord::empty(cfg.mode, cfg.seed, period, lab.config_hash.clone());
    rec.states.reserve(steps);
    let mut x = StylusState { position: lab.workspace.center(), velocity: Vector3::zeros() };
    for (k, r) in targets.iter().enumerate().take(steps) {
        rec.states.push(x);
        rec.targets.push(*r);
        let u_h = human_command(&lab.human, &rec.states, &rec.targets, k, period, &mut noise);
        let raw = law.force(&x, r, &u_h);
        let u_r = clip_radial(raw * fade_factor(k, steps, fade_steps), cap);
        rec.u_h.push(u_h);
        rec.u_r.push(u_r);

        x = advance(&lab.dynamics, lab, &x, &(u_h + u_r)).map_err(|e| Error::Diverged {
            step: k + 1,
            detail: format!("mode {} seed {}: {e}", cfg.mode, cfg.seed),
        })?;
    }
    Ok(rec)
}

/// Spectral radius of `A − B K_r + B (Align + I) K_h`.
pub fn closed_loop_report(
    dynamics: &Dynamics,
    k_r: &DMatrix<f64>,
    align: &DMatrix<f64>,
    k_h: &DMatrix<f64>,
) -> Result<f64> {
    let m = dynamics.input_dim();
    let eye = DMatrix::<f64>::identity(m, m);
    let closed = &dynamics.a - &dynamics.b * k_r + &dynamics.b * (align + eye) * k_h;
    spectral_radius(&closed)
}

/// Closed-loop spectral radius of a mode under the lab's linearized operator.
pub fn mode_spectral_radius(mode: Mode, lab: &Lab) -> Result<f64> {
    let (k_r, align) = AssistLaw::for_mode(mode, lab)?.feedback();
    closed_loop_report(&lab.dynamics, &k_r, &align, &lab.human_feedback())
}

/// Simulates and evaluates one trial.
pub fn run_trial(cfg: &TrialConfig) -> Result<(TrialRecord, TrialMetrics)> {
    let rec = simulate_trial(cfg)?;
    let rho = mode_spectral_radius(cfg.mode, &cfg.lab)?;
    let metrics = compute_metrics(&rec, Some(rho))?;
    Ok((rec, metrics))
}
