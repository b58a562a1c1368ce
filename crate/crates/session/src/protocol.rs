//! WebSocket JSON frames. All quantities are SI.

use serde::{Deserialize, Serialize};

/// Client to server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello,
    Input { seq: u64, pointer: [f64; 2] },
    SetMode { mode: String, tau: Option<f64> },
    Reset,
    End,
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }
}

/// Server to client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Config(Handshake),
    State(StateFrame),
    Final(FinalFrame),
    Error { detail: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub velocity: String,
    pub force: String,
    pub time: String,
    pub energy: String,
    pub impulse: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "m".into(),
            velocity: "m/s".into(),
            force: "N".into(),
            time: "s".into(),
            energy: "J".into(),
            impulse: "N*s".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub k_n_per_m: f64,
    pub d_ns_per_m: f64,
}

/// One-time frame sent in reply to `hello`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub session: u64,
    pub units: Units,
    pub workspace: Workspace,
    pub period_s: f64,
    pub emit_every_ticks: u64,
    pub max_duration_s: f64,
    pub force_cap_n: f64,
    pub coupling: Coupling,
    pub mode: String,
    pub tau: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub rms_window: Option<f64>,
    pub conflict: f64,
    pub assist: f64,
    pub nfi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub stylus: [f64; 2],
    pub target: [f64; 2],
    pub assist: [f64; 2],
    pub mode: String,
    pub tau: Option<f64>,
    pub metrics: LiveMetrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub steps: usize,
    pub duration_s: f64,
    /// Session shorter than one second.
    pub partial: bool,
    pub rms: Option<f64>,
    pub conflict: f64,
    pub assist: f64,
    pub nfi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalFrame {
    pub metrics: FinalMetrics,
    /// File name of the persisted trace, relative to the server's trace directory.
    pub trace: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_frames_parse() {
        assert_eq!(ClientMessage::parse(r#"{"type":"hello"}"#).unwrap(), ClientMessage::Hello);
        assert_eq!(
            ClientMessage::parse(r#"{"type":"input","seq":7,"pointer":[0.01,-0.02]}"#).unwrap(),
            ClientMessage::Input { seq: 7, pointer: [0.01, -0.02] }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"set_mode","mode":"NASH","tau":3}"#).unwrap(),
            ClientMessage::SetMode { mode: "NASH".into(), tau: Some(3.0) }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"set_mode","mode":"CLASSIC"}"#).unwrap(),
            ClientMessage::SetMode { mode: "CLASSIC".into(), tau: None }
        );
        assert_eq!(ClientMessage::parse(r#"{"type":"reset"}"#).unwrap(), ClientMessage::Reset);
        assert_eq!(ClientMessage::parse(r#"{"type":"end"}"#).unwrap(), ClientMessage::End);
    }

    #[test]
    fn malformed_frames_rejected() {
        for bad in ["", "{", r#"{"type":"jump"}"#, r#"{"type":"input","seq":-1,"pointer":[0,0]}"#, r#"{"type":"input","seq":1,"pointer":[0]}"#] {
            assert!(ClientMessage::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn state_frame_shape() {
        let m = ServerMessage::State(StateFrame {
            tick: 4,
            stylus: [0.0, 0.5],
            target: [1.0, 0.0],
            assist: [0.25, 0.0],
            mode: "NASH_2".into(),
            tau: Some(2.0),
            metrics: LiveMetrics { rms_window: Some(0.1), conflict: 0.0, assist: 1.0, nfi: None },
        });
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["tick"], 4);
        assert_eq!(v["stylus"][1], 0.5);
        assert_eq!(v["metrics"]["rms_window"], 0.1);
        assert!(v["metrics"]["nfi"].is_null());
        let e: serde_json::Value = serde_json::from_str(&ServerMessage::Error { detail: "x".into() }.to_json()).unwrap();
        assert_eq!(e, serde_json::json!({"type": "error", "detail": "x"}));
    }
}
