use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::formats::EVENTS_SCHEMA;
use crate::planner::PlannerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Tracking,
    Switching,
    EStop,
    Recovering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Threshold {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "trigger", rename_all = "snake_case")]
pub enum Trigger {
    Init,
    CommandChange { skill: String },
    NearEnd,
    SafetyCross { which: Threshold, direction: Direction },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EStopReason {
    /// Similarity to the guidance target reached B.
    Safety,
    /// No entry candidate below B when planning.
    Entry,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Triggered {
        #[serde(flatten)]
        trigger: Trigger,
    },
    PlanInstalled {
        planner: PlannerKind,
        decision: String,
        target_skill: String,
        entry: String,
        path_len: usize,
        cost: f64,
        recovery: bool,
    },
    /// The current chain already satisfies the command.
    PlanKept {
        target_skill: String,
    },
    TrackExtended {
        from: String,
        to: String,
    },
    EStop {
        reason: EStopReason,
    },
    Stationary {
        angvel: f64,
    },
    Recovered,
    NoPlan {
        target_skill: String,
        reason: String,
    },
}

/// One `sgevents/1` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub mode: Mode,
    pub sim: Option<f64>,
    pub plan: Option<String>,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn trigger(&self) -> Option<&Trigger> {
        match &self.kind {
            EventKind::Triggered { trigger } => Some(trigger),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
}

/// Writes events as `sgevents/1` JSON Lines.
pub fn write_events<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    serde_json::to_writer(
        &mut w,
        &Header {
            schema: EVENTS_SCHEMA.to_string(),
        },
    )?;
    w.write_all(b"\n")?;
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(r: R) -> Result<Vec<Event>, String> {
    let mut lines = r.lines();
    let header: Header = match lines.next() {
        Some(Ok(l)) => serde_json::from_str(&l).map_err(|e| format!("line 1: {e}"))?,
        Some(Err(e)) => return Err(e.to_string()),
        None => return Err("missing header".into()),
    };
    if header.schema != EVENTS_SCHEMA {
        return Err(format!("unsupported schema `{}`", header.schema));
    }
    lines
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|(i, l)| {
            let l = l.map_err(|e| e.to_string())?;
            serde_json::from_str(&l).map_err(|e| format!("line {}: {e}", i + 2))
        })
        .collect()
}
