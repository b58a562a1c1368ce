//! Per-session simulation state. Everything here is synchronous and
//! deterministic; the server only decides when to call it.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::Vector3;
use softnash_core::config::Lab;
use softnash_core::controller::Mode;
use softnash_core::human::{generate_trajectory, TrajectoryConfig};
use softnash_core::metrics::MetricAccumulator;
use softnash_core::model::{ReferenceSample, StylusState};
use softnash_core::trial::{advance, clip_radial, AssistLaw, TrialRecord, TRAJECTORY_STREAM};

use crate::protocol::{
    ClientMessage, Coupling, FinalMetrics, Handshake, LiveMetrics, ServerMessage, StateFrame, Units, Workspace,
};
use crate::{Error, Result};

/// Sessions shorter than this are reported as partial.
pub const MIN_SESSION_S: f64 = 1.0;

/// Parses the `mode`/`tau` pair of a `set_mode` frame.
pub fn parse_mode(mode: &str, tau: Option<f64>) -> Result<Mode> {
    Mode::from_parts(mode, tau).map_err(|e| Error::Protocol(e.to_string()))
}

#[derive(Clone, Debug)]
pub struct SessionState {
    lab: Arc<Lab>,
    id: u64,
    targets: Arc<Vec<ReferenceSample>>,
    stylus: StylusState,
    /// Steps since the last reset.
    step: usize,
    tick: u64,
    mode: Mode,
    law: AssistLaw,
    pointer: Vector3<f64>,
    last_seq: Option<u64>,
    record: TrialRecord,
    metrics: MetricAccumulator,
    window: VecDeque<f64>,
    window_len: usize,
    fade_steps: usize,
}

impl SessionState {
    /// New session at the workspace center. The target path is planar
    /// (z pinned to zero) and spans the configured maximum duration.
    pub fn new(lab: Arc<Lab>, id: u64, seed: u64, mode: Mode) -> Result<Self> {
        let period = lab.period();
        let traj = TrajectoryConfig {
            seed: seed ^ TRAJECTORY_STREAM,
            filter: lab.config.trajectory.filter,
            drive_std: lab.config.trajectory.drive_std_m_per_s,
            workspace: lab.workspace,
            duration: lab.config.session.max_duration_s,
            period,
        };
        let mut targets = generate_trajectory(&traj)?;
        for r in &mut targets {
            r.position.z = 0.0;
            r.velocity.z = 0.0;
        }
        Self::with_targets(lab, id, Arc::new(targets), mode)
    }

    pub fn with_targets(lab: Arc<Lab>, id: u64, targets: Arc<Vec<ReferenceSample>>, mode: Mode) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Core(softnash_core::Error::Empty("target path")));
        }
        let s = &lab.config.session;
        if !(s.coupling_k >= 0.0 && s.coupling_d >= 0.0 && s.rms_window_s > 0.0 && s.emit_every_ticks > 0) {
            return Err(Error::Protocol("invalid session settings".into()));
        }
        let period = lab.period();
        let law = AssistLaw::for_mode(mode, &lab)?;
        let window_len = ((s.rms_window_s / period).round() as usize).max(1);
        let fade_steps = (lab.config.trial.fade_s / period).round() as usize;
        let center = lab.workspace.center();
        Ok(Self {
            record: TrialRecord::empty(mode, id, period, lab.config_hash.clone()),
            metrics: MetricAccumulator::new(period),
            stylus: StylusState { position: center, velocity: Vector3::zeros() },
            pointer: Vector3::new(center.x, center.y, 0.0),
            step: 0,
            tick: 0,
            mode,
            law,
            last_seq: None,
            window: VecDeque::with_capacity(window_len),
            window_len,
            fade_steps,
            targets,
            id,
            lab,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stylus(&self) -> &StylusState {
        &self.stylus
    }

    pub fn pointer(&self) -> [f64; 2] {
        [self.pointer.x, self.pointer.y]
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    pub fn record(&self) -> &TrialRecord {
        &self.record
    }

    pub fn lab(&self) -> &Lab {
        &self.lab
    }

    /// True once the target path is used up.
    pub fn exhausted(&self) -> bool {
        self.step >= self.targets.len()
    }

    pub fn handshake(&self) -> Handshake {
        let ws = &self.lab.workspace;
        let s = &self.lab.config.session;
        Handshake {
            session: self.id,
            units: Units::default(),
            workspace: Workspace { min: [ws.min[0], ws.min[1]], max: [ws.max[0], ws.max[1]] },
            period_s: self.lab.period(),
            emit_every_ticks: s.emit_every_ticks,
            max_duration_s: self.targets.len() as f64 * self.lab.period(),
            force_cap_n: self.lab.config.trial.force_cap,
            coupling: Coupling { k_n_per_m: s.coupling_k, d_ns_per_m: s.coupling_d },
            mode: self.mode.to_string(),
            tau: self.mode.tau(),
        }
    }

    /// Applies a pointer sample unless its sequence number is not newer
    /// than the last applied one. Returns whether it was applied.
    pub fn apply_input(&mut self, seq: u64, pointer: [f64; 2]) -> Result<bool> {
        if self.last_seq.is_some_and(|last| seq <= last) {
            return Ok(false);
        }
        if !pointer.iter().all(|v| v.is_finite()) {
            return Err(Error::Protocol("pointer must be finite".into()));
        }
        let p = self.lab.workspace.clamp(&Vector3::new(pointer[0], pointer[1], 0.0));
        self.pointer = Vector3::new(p.x, p.y, 0.0);
        self.last_seq = Some(seq);
        Ok(true)
    }

    /// Switches the assist law; takes effect on the next tick.
    pub fn set_mode(&mut self, mode: Mode) -> Result<()> {
        self.law = AssistLaw::for_mode(mode, &self.lab)?;
        self.mode = mode;
        Ok(())
    }

    /// Restarts the target path and the recording. The tick counter and
    /// the input sequence filter carry on.
    pub fn reset(&mut self) {
        let center = self.lab.workspace.center();
        self.stylus = StylusState { position: center, velocity: Vector3::zeros() };
        self.step = 0;
        self.record = TrialRecord::empty(self.mode, self.id, self.lab.period(), self.lab.config_hash.clone());
        self.metrics = MetricAccumulator::new(self.lab.period());
        self.window.clear();
    }

    /// Handles one inbound frame other than `end`. Returns the reply, if any.
    pub fn handle(&mut self, msg: &ClientMessage) -> Option<ServerMessage> {
        let outcome = match msg {
            ClientMessage::Hello => return Some(ServerMessage::Config(self.handshake())),
            ClientMessage::Input { seq, pointer } => self.apply_input(*seq, *pointer).map(|_| ()),
            ClientMessage::SetMode { mode, tau } => parse_mode(mode, *tau).and_then(|m| self.set_mode(m)),
            ClientMessage::Reset => {
                self.reset();
                Ok(())
            }
            ClientMessage::End => Ok(()),
        };
        outcome.err().map(|e| ServerMessage::Error { detail: e.to_string() })
    }

    /// Human force from the virtual coupling `K_c (pointer − p) − K_cd v`.
    pub fn coupling_force(&self) -> Vector3<f64> {
        let s = &self.lab.config.session;
        (self.pointer - self.stylus.position) * s.coupling_k - self.stylus.velocity * s.coupling_d
    }

    fn fade_in(&self) -> f64 {
        if self.fade_steps == 0 {
            1.0
        } else {
            (self.step as f64 / self.fade_steps as f64).min(1.0)
        }
    }

    /// One 10 ms step: couple, assist, record, advance. Returns a state
    /// frame on every `emit_every_ticks`-th tick. A session whose path is
    /// used up does not advance.
    pub fn tick(&mut self) -> Result<Option<ServerMessage>> {
        if self.exhausted() {
            return Ok(None);
        }
        let k = self.step;
        let r = self.targets[k];
        let x = self.stylus;
        let u_h = self.coupling_force();
        let u_r = clip_radial(self.law.force(&x, &r, &u_h) * self.fade_in(), self.lab.config.trial.force_cap);

        let e = x.position - r.position;
        self.record.push(x, r, u_h, u_r);
        self.metrics.push(&e, &u_r, &x.velocity);
        if self.window.len() == self.window_len {
            self.window.pop_front();
        }
        self.window.push_back(e.norm_squared());

        self.stylus = advance(&self.lab.dynamics, &self.lab, &x, &(u_h + u_r))?;
        self.step += 1;
        self.tick += 1;

        if self.tick % self.lab.config.session.emit_every_ticks != 0 {
            return Ok(None);
        }
        let next = self.targets.get(self.step).unwrap_or(&r).position;
        Ok(Some(ServerMessage::State(StateFrame {
            tick: self.tick,
            stylus: [self.stylus.position.x, self.stylus.position.y],
            target: [next.x, next.y],
            assist: [u_r.x, u_r.y],
            mode: self.mode.to_string(),
            tau: self.mode.tau(),
            metrics: self.live_metrics(),
        })))
    }

    pub fn live_metrics(&self) -> LiveMetrics {
        let rms_window = (!self.window.is_empty())
            .then(|| (self.window.iter().sum::<f64>() / self.window.len() as f64).sqrt());
        LiveMetrics {
            rms_window,
            conflict: self.metrics.conflict_energy(),
            assist: self.metrics.assist_effort(),
            nfi: self.metrics.nfi(),
        }
    }

    /// Metrics over the recording since the last reset.
    pub fn finalize(&self) -> FinalMetrics {
        let steps = self.metrics.steps();
        let duration_s = steps as f64 * self.lab.period();
        FinalMetrics {
            steps,
            duration_s,
            partial: duration_s < MIN_SESSION_S,
            rms: self.metrics.rms().ok(),
            conflict: self.metrics.conflict_energy(),
            assist: self.metrics.assist_effort(),
            nfi: self.metrics.nfi(),
        }
    }
}

/// Value-in, value-out form of one tick: apply the latest pointer sample
/// (if any), step, and return the state with the outbound frame.
pub fn session_tick(
    mut state: SessionState,
    input: Option<(u64, [f64; 2])>,
) -> Result<(SessionState, Option<ServerMessage>)> {
    if let Some((seq, pointer)) = input {
        state.apply_input(seq, pointer)?;
    }
    let out = state.tick()?;
    Ok((state, out))
}
