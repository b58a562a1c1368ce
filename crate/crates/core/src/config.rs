//! JSON configuration with every default spelled out, and the resolved
//! [`Lab`] that trials share.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{CostWeights, Mode};
use crate::error::{Error, Result};
use crate::human::{Deviation, HumanModel};
use crate::model::{discretize_mass_damper, Dynamics, WorkspaceBox};
use crate::riccati::{solve_dare, RiccatiSolution, DEFAULT_MAX_ITER, DEFAULT_TOL};

const ARTIFACT_DEFAULT: &str = "artifact default";

fn provenance() -> String {
    ARTIFACT_DEFAULT.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub mass_kg: f64,
    #[serde(rename = "damping_Ns_per_m")]
    pub damping_ns_per_m: f64,
    pub period_s: f64,
    pub workspace_halfwidth_m: f64,
    pub provenance: String,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            mass_kg: 0.2,
            damping_ns_per_m: 4.0,
            period_s: 0.01,
            workspace_halfwidth_m: 0.1,
            provenance: provenance(),
        }
    }
}

/// Isotropic cost weights; each scalar multiplies I₃.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub q_r: f64,
    /// Extra velocity weight in the Riccati state cost.
    pub q_v: f64,
    pub r_r: f64,
    pub s: f64,
    pub alpha: f64,
    pub q_h: f64,
    pub r_h: f64,
    pub provenance: String,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            q_r: 2000.0,
            q_v: 0.0,
            r_r: 1.0,
            s: 0.2,
            alpha: 1.0,
            q_h: 2000.0,
            r_h: 1.0,
            provenance: provenance(),
        }
    }
}

/// PD gains of the classic virtual fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicConfig {
    #[serde(rename = "k_p_N_per_m")]
    pub k_p: f64,
    #[serde(rename = "k_d_Ns_per_m")]
    pub k_d: f64,
    pub provenance: String,
}

impl Default for ClassicConfig {
    fn default() -> Self {
        Self { k_p: 20.0, k_d: 4.0, provenance: provenance() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanConfig {
    #[serde(rename = "k_p_N_per_m")]
    pub k_p: f64,
    #[serde(rename = "k_d_Ns_per_m")]
    pub k_d: f64,
    pub delay_steps: usize,
    #[serde(rename = "noise_std_N")]
    pub noise_std: f64,
    pub deviations: Vec<Deviation>,
    pub provenance: String,
}

impl Default for HumanConfig {
    fn default() -> Self {
        Self {
            k_p: 30.0,
            k_d: 2.0,
            delay_steps: 3,
            noise_std: 0.1,
            deviations: vec![
                Deviation { start_s: 15.0, end_s: 20.0, offset_m: [0.03, 0.0, 0.0] },
                Deviation { start_s: 40.0, end_s: 45.0, offset_m: [0.0, 0.03, 0.0] },
            ],
            provenance: provenance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySettings {
    /// Low-pass coefficient λ_f in (0, 1].
    pub filter: f64,
    /// Std-dev of the per-step velocity drive, m/s.
    pub drive_std_m_per_s: f64,
    pub provenance: String,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self { filter: 0.02, drive_std_m_per_s: 1.0, provenance: provenance() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSettings {
    pub duration_s: f64,
    pub fade_s: f64,
    #[serde(rename = "force_cap_N")]
    pub force_cap: f64,
    pub provenance: String,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self { duration_s: 60.0, fade_s: 0.5, force_cap: 5.0, provenance: provenance() }
    }
}

/// Virtual coupling from a pointer to a force command in live sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSettings {
    #[serde(rename = "coupling_k_N_per_m")]
    pub coupling_k: f64,
    #[serde(rename = "coupling_d_Ns_per_m")]
    pub coupling_d: f64,
    pub max_duration_s: f64,
    pub rms_window_s: f64,
    pub emit_every_ticks: u64,
    pub provenance: String,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            coupling_k: 60.0,
            coupling_d: 4.0,
            max_duration_s: 600.0,
            rms_window_s: 2.0,
            emit_every_ticks: 2,
            provenance: provenance(),
        }
    }
}

/// Complete description of plant, controller weights, synthetic operator
/// and trial protocol.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub plant: PlantConfig,
    pub weights: WeightsConfig,
    pub classic: ClassicConfig,
    pub human: HumanConfig,
    pub trajectory: TrajectorySettings,
    pub trial: TrialSettings,
    pub session: SessionSettings,
}

impl LabConfig {
    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Mode × seed sweep description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub lab: LabConfig,
    pub output_dir: Option<String>,
    pub formats: Vec<OutputFormat>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            modes: Mode::standard_set(),
            seeds: (1..=12).collect(),
            lab: LabConfig::default(),
            output_dir: None,
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// PD gains of the classic fixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicGains {
    pub k_p: f64,
    pub k_d: f64,
}

/// Validated plant, weights and Riccati solution shared by all trials.
#[derive(Clone, Debug)]
pub struct Lab {
    pub config: LabConfig,
    pub config_hash: String,
    pub dynamics: Dynamics,
    pub workspace: WorkspaceBox,
    pub weights: CostWeights,
    pub riccati: RiccatiSolution,
    pub classic: ClassicGains,
    pub human: HumanModel,
}

impl Lab {
    pub fn new(config: LabConfig) -> Result<Self> {
        let p = &config.plant;
        let dynamics = discretize_mass_damper(p.mass_kg, p.damping_ns_per_m, p.period_s)?;
        let workspace = WorkspaceBox::symmetric(p.workspace_halfwidth_m)?;

        let w = &config.weights;
        let weights = CostWeights::isotropic(w.q_r, w.r_r, w.s, w.alpha, w.q_h, w.r_h)?;
        let mut q = weights.state_weight(&dynamics);
        if w.q_v < 0.0 {
            return Err(Error::Config("velocity weight must be >= 0".into()));
        }
        for i in 3..6 {
            q[(i, i)] += w.q_v;
        }
        let riccati = solve_dare(&dynamics.a, &dynamics.b, &q, &weights.r_r, DEFAULT_TOL, DEFAULT_MAX_ITER)?;

        let c = &config.classic;
        if !(c.k_p >= 0.0 && c.k_d >= 0.0) {
            return Err(Error::Config("classic gains must be >= 0".into()));
        }
        let t = &config.trial;
        if !(t.force_cap > 0.0) {
            return Err(Error::Config("force cap must be positive".into()));
        }
        if !(t.fade_s >= 0.0 && t.duration_s > 2.0 * t.fade_s) {
            return Err(Error::Config("trial duration must exceed twice the fade time".into()));
        }
        let h = &config.human;
        let human = HumanModel {
            k_p: h.k_p,
            k_d: h.k_d,
            delay_steps: h.delay_steps,
            noise_std: h.noise_std,
            deviations: h.deviations.clone(),
        }
        .validated(t.duration_s)?;

        Ok(Self {
            config_hash: config.hash(),
            classic: ClassicGains { k_p: c.k_p, k_d: c.k_d },
            dynamics,
            workspace,
            weights,
            riccati,
            human,
            config,
        })
    }

    pub fn period(&self) -> f64 {
        self.dynamics.period
    }

    /// Linearized operator as a map from error state `[p − q; v − q̇]` to force.
    pub fn human_feedback(&self) -> DMatrix<f64> {
        let (k_p, k_d) = self.human.linear_gains();
        pd_matrix(-k_p, -k_d)
    }
}

/// `[k_p I₃, k_d I₃]`.
pub fn pd_matrix(k_p: f64, k_d: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 6);
    for i in 0..3 {
        m[(i, i)] = k_p;
        m[(i, i + 3)] = k_d;
    }
    m
}
