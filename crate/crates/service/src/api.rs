//! `sgapi/1` payloads.

use serde::{Deserialize, Serialize};
use skillgraph::formats::API_SCHEMA;
use skillgraph::scheduler::Mode;
use skillgraph::tracker_sim::{Anchor, DirectiveRecord};
use skillgraph::{Event, SchedulerConfig, SkillGraph, StartPoint, StateDelta, TrackerConfig};

/// Longest remaining-path prefix carried by a snapshot.
pub const PLAN_PREVIEW: usize = 256;

fn schema() -> String {
    API_SCHEMA.to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub schema: Option<String>,
    /// Must match the served graph when given.
    pub graph_digest: Option<String>,
    pub scheduler: Option<SchedulerConfig>,
    pub tracker: Option<TrackerConfig>,
    pub start: Option<StartPoint>,
    /// Ticks per second; 0 runs as fast as possible and needs `max_ticks`.
    pub tick_hz: Option<f64>,
    pub max_ticks: Option<u64>,
}

/// Fully resolved session settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub scheduler: SchedulerConfig,
    pub tracker: TrackerConfig,
    pub start: StartPoint,
    pub tick_hz: f64,
    pub max_ticks: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandRequest {
    #[serde(default)]
    pub schema: Option<String>,
    pub skill: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbRequest {
    #[serde(default)]
    pub schema: Option<String>,
    pub delta: StateDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Command,
    Disturb,
    Estop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub schema: String,
    pub session: String,
    pub action: ActionKind,
    /// Tick whose step sees the action.
    pub apply_tick: u64,
}

impl Ack {
    pub fn new(session: &str, action: ActionKind, apply_tick: u64) -> Self {
        Self {
            schema: schema(),
            session: session.to_string(),
            action,
            apply_tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub schema: String,
    pub session: String,
    pub graph_digest: String,
    pub spec: SessionSpec,
    pub finished: bool,
    pub subscribers: usize,
    pub snapshot: Option<StateSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionList {
    pub schema: String,
    pub sessions: Vec<String>,
}

impl SessionList {
    pub fn new(sessions: Vec<String>) -> Self {
        Self {
            schema: schema(),
            sessions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub digest: String,
    pub remaining_len: usize,
    /// Labels of the first remaining nodes, current node first.
    pub remaining: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub q: Vec<f64>,
    pub root_xy: [f64; 2],
    pub root_yaw: f64,
    pub root_angvel: [f64; 3],
    pub p: Vec<[f64; 3]>,
}

/// One tick of a live session, after the tracker has moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub schema: String,
    pub session: String,
    pub tick: u64,
    pub mode: Mode,
    pub sim: Option<f64>,
    pub a: f64,
    pub b: f64,
    pub directive: DirectiveRecord,
    pub command: Option<String>,
    pub plan: Option<PlanView>,
    pub robot: RobotView,
    pub anchor: Anchor,
    pub events: Vec<Event>,
}

/// Messages on the snapshot stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum StreamMessage {
    Snapshot(StateSnapshot),
    /// Ticks the subscriber did not receive.
    Gap {
        schema: String,
        from: u64,
        to: u64,
    },
    /// The session stopped ticking.
    End {
        schema: String,
        tick: u64,
    },
}

impl StreamMessage {
    pub fn gap(from: u64, to: u64) -> Self {
        StreamMessage::Gap {
            schema: schema(),
            from,
            to,
        }
    }

    pub fn end(tick: u64) -> Self {
        StreamMessage::End { schema: schema(), tick }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillLane {
    pub id: String,
    pub frames: usize,
    pub first_node: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentView {
    pub from: String,
    pub to: String,
    pub d: f64,
    pub buffers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub schema: String,
    pub graph_digest: String,
    pub dataset_digest: String,
    pub nodes: usize,
    pub edges: usize,
    pub buffers: usize,
    pub lambda_sw: f64,
    pub skills: Vec<SkillLane>,
    pub segments: Vec<SegmentView>,
}

impl GraphSummary {
    pub fn of(g: &SkillGraph) -> Self {
        Self {
            schema: schema(),
            graph_digest: g.digest().to_string(),
            dataset_digest: g.meta().dataset_digest.clone(),
            nodes: g.node_count(),
            edges: g.edge_count(),
            buffers: g.buffer_count(),
            lambda_sw: g.lambda_sw(),
            skills: g
                .skills()
                .iter()
                .map(|s| SkillLane {
                    id: s.id.clone(),
                    frames: s.len(),
                    first_node: s.first.0,
                })
                .collect(),
            segments: g
                .segments()
                .iter()
                .map(|s| SegmentView {
                    from: g.label(s.from),
                    to: g.label(s.to),
                    d: s.d,
                    buffers: s.buffers.len(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnknownSession,
    UnknownSkill,
    UnknownGraph,
    ResourceLimit,
    SessionFinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub schema: String,
    pub error: ErrorBody,
}

impl ErrorPayload {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            schema: schema(),
            error: ErrorBody {
                code,
                message: message.into(),
            },
        }
    }
}

/// Rejects payloads that name a schema other than ours.
pub fn check_schema(s: &Option<String>) -> Result<(), String> {
    match s {
        Some(s) if s != API_SCHEMA => Err(format!("unsupported schema `{s}`")),
        _ => Ok(()),
    }
}
