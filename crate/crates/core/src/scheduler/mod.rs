//! Online skill scheduler: reacts to initialization, command changes,
//! approaching the end of the installed track and similarity threshold
//! crossings; emits per-tick guidance or a damping directive.

mod events;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::fnv64;
use crate::motion_data::{canonicalize, CanonicalFrame, Frame};
use crate::planner::{
    nearest_by_similarity, plan_graph_search, plan_nn, similarity, target_prefix, EntryParams, NnPlan, Plan, PlanError,
    PlannerKind, TargetSet, ValueCache,
};
use crate::skill_graph::{NodeId, NodeKind, SkillGraph};

pub use events::{read_events, write_events, Direction, EStopReason, Event, EventKind, Mode, Threshold, Trigger};

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("graph has no cross segments")]
    NoTransitions,
    #[error("config error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub entry: EntryParams,
    /// Prefix fraction of the commanded skill that counts as arrival.
    pub tau: f64,
    pub planner: PlannerKind,
    /// Root angular velocity norm below which the robot counts as stationary, rad/s.
    pub omega_thresh: f64,
    /// Near-end horizon, ticks.
    pub h: usize,
    pub recovery_skill: Option<String>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            entry: EntryParams::default(),
            tau: 0.25,
            planner: PlannerKind::GraphSearch,
            omega_thresh: 0.1,
            h: 10,
            recovery_skill: None,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self, graph: &SkillGraph) -> Result<(), SchedError> {
        self.entry.validate().map_err(|e| SchedError::Config(e.to_string()))?;
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(SchedError::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if self.h < 1 {
            return Err(SchedError::Config("h must be at least 1".into()));
        }
        if !(self.omega_thresh.is_finite() && self.omega_thresh > 0.0) {
            return Err(SchedError::Config(format!(
                "omega_thresh must be positive, got {}",
                self.omega_thresh
            )));
        }
        if let Some(r) = &self.recovery_skill {
            graph.skill_index(r).map_err(|_| SchedError::UnknownSkill(r.clone()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    pub node: NodeId,
    /// The node's frame, or the buffer segment successor's frame.
    pub target: CanonicalFrame,
    pub kappa: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Guidance(Guidance),
    Damping,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub tick: u64,
    pub directive: Directive,
    pub mode: Mode,
    /// Similarity between the robot state and the guidance target.
    pub sim: Option<f64>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Zone {
    Inside,
    Between,
    Outside,
}

/// Single-owner scheduler state machine over one graph.
#[derive(Debug)]
pub struct Scheduler {
    graph: Arc<SkillGraph>,
    cache: Arc<ValueCache>,
    cfg: SchedulerConfig,
    tick: u64,
    mode: Mode,
    initialized: bool,
    command: Option<String>,
    targets: Option<TargetSet>,
    pending_command: bool,
    pending_estop: bool,
    recovery_targets: Option<TargetSet>,
    /// Set while a nearest-neighbor recovery is on its first stage.
    second_stage: bool,
    track: Vec<NodeId>,
    cursor: usize,
    fresh_track: bool,
    near_end_fired: bool,
    zone: Option<Zone>,
    plan_digest: Option<u64>,
    last_sim: Option<f64>,
}

impl Scheduler {
    pub fn new(graph: Arc<SkillGraph>, cache: Arc<ValueCache>, cfg: SchedulerConfig) -> Result<Self, SchedError> {
        cfg.validate(&graph)?;
        let recovery_targets = match &cfg.recovery_skill {
            Some(r) => Some(target_prefix(&graph, r, cfg.tau).map_err(|e| SchedError::Config(e.to_string()))?),
            None => None,
        };
        Ok(Scheduler {
            graph,
            cache,
            cfg,
            tick: 0,
            mode: Mode::Tracking,
            initialized: false,
            command: None,
            targets: None,
            pending_command: false,
            pending_estop: false,
            recovery_targets,
            second_stage: false,
            track: Vec::new(),
            cursor: 0,
            fresh_track: false,
            near_end_fired: false,
            zone: None,
            plan_digest: None,
            last_sim: None,
        })
    }

    pub fn graph(&self) -> &Arc<SkillGraph> {
        &self.graph
    }

    pub fn cache(&self) -> &Arc<ValueCache> {
        &self.cache
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn command_skill(&self) -> Option<&str> {
        self.command.as_deref()
    }

    pub fn targets(&self) -> Option<&TargetSet> {
        self.targets.as_ref()
    }

    /// Node the next guidance refers to, if a track is installed.
    pub fn current_node(&self) -> Option<NodeId> {
        self.track.get(self.cursor).copied()
    }

    /// Installed track from the current node on.
    pub fn remaining_track(&self) -> &[NodeId] {
        if self.track.is_empty() {
            &[]
        } else {
            &self.track[self.cursor..]
        }
    }

    pub fn plan_digest(&self) -> Option<String> {
        self.plan_digest.map(|d| format!("{d:016x}"))
    }

    pub fn last_sim(&self) -> Option<f64> {
        self.last_sim
    }

    /// Sets the commanded skill. Replanning happens on the next step.
    pub fn command(&mut self, skill: &str) -> Result<(), SchedError> {
        let targets = target_prefix(&self.graph, skill, self.cfg.tau).map_err(|e| match e {
            PlanError::UnknownSkill(s) => SchedError::UnknownSkill(s),
            other => SchedError::Config(other.to_string()),
        })?;
        self.command = Some(skill.to_string());
        self.targets = Some(targets);
        self.pending_command = true;
        Ok(())
    }

    /// Operator emergency stop, applied on the next step.
    pub fn force_estop(&mut self) {
        self.pending_estop = true;
    }

    fn event(&self, kind: EventKind) -> Event {
        Event {
            tick: self.tick,
            mode: self.mode,
            sim: self.last_sim,
            plan: self.plan_digest(),
            kind,
        }
    }

    fn zone_of(&self, sim: f64) -> Zone {
        if sim <= self.cfg.entry.a {
            Zone::Inside
        } else if sim >= self.cfg.entry.b {
            Zone::Outside
        } else {
            Zone::Between
        }
    }

    /// Chain of reference nodes from `node` (inclusive) to the end of its skill.
    fn chain_from(&self, node: NodeId) -> Vec<NodeId> {
        let mut out = vec![node];
        let mut at = node;
        while let Some(n) = self.graph.intra_next(at) {
            out.push(n);
            at = n;
        }
        out
    }

    fn install(&mut self, mut path: Vec<NodeId>, digest: u64) {
        if let Some(&last) = path.last() {
            let tail = self.chain_from(last);
            path.extend_from_slice(&tail[1..]);
        }
        self.track = path;
        self.cursor = 0;
        self.fresh_track = true;
        self.near_end_fired = false;
        self.plan_digest = Some(digest);
    }

    fn enter_estop(&mut self, reason: EStopReason, events: &mut Vec<Event>) {
        self.mode = Mode::EStop;
        self.track.clear();
        self.cursor = 0;
        self.second_stage = false;
        self.zone = None;
        events.push(self.event(EventKind::EStop { reason }));
    }

    fn plan_event(&self, plan: &Plan, decision: &str, target_skill: &str, recovery: bool) -> EventKind {
        EventKind::PlanInstalled {
            planner: plan.planner,
            decision: decision.to_string(),
            target_skill: target_skill.to_string(),
            entry: self.graph.label(plan.entry),
            path_len: plan.path.len(),
            cost: plan.cost,
            recovery,
        }
    }

    fn all_references(&self) -> TargetSet {
        let nodes = self.graph.skills().iter().flat_map(|s| s.nodes()).collect();
        TargetSet::new(self.graph.node_count(), nodes).expect("graph has reference nodes")
    }

    /// Plans toward the commanded targets from `x`. Returns false when the
    /// planner asks for an emergency stop.
    fn replan(&mut self, x: &CanonicalFrame, recovery: bool, events: &mut Vec<Event>) -> bool {
        let (targets, skill) = match (&self.targets, &self.command) {
            (Some(t), Some(s)) => (t.clone(), s.clone()),
            _ => (self.all_references(), String::new()),
        };
        let params = self.cfg.entry;
        let result = match self.cfg.planner {
            PlannerKind::GraphSearch => {
                let vt = self.cache.get_or_compute(&self.graph, &targets);
                plan_graph_search(&self.graph, &targets, x, &params, &vt)
                    .map(|(plan, decision)| (plan, decision.name().to_string(), false))
            }
            PlannerKind::NearestNeighbor => {
                let rec = if recovery { self.recovery_targets.as_ref() } else { None };
                plan_nn(&self.graph, &targets, x, &params, rec).map(|p| match p {
                    NnPlan::Single(plan) => (plan, "nearest".to_string(), false),
                    NnPlan::TwoStage { first, .. } => (first, "two_stage".to_string(), true),
                })
            }
        };
        match result {
            Ok((plan, decision, two_stage)) => {
                self.install(plan.path.clone(), plan.digest());
                self.second_stage = two_stage;
                let in_targets = targets.contains(plan.entry) && plan.path.len() == 1;
                self.mode = if recovery {
                    Mode::Recovering
                } else if in_targets {
                    Mode::Tracking
                } else {
                    Mode::Switching
                };
                events.push(self.event(self.plan_event(&plan, &decision, &skill, recovery)));
                true
            }
            Err(PlanError::EStopRequired { .. }) => {
                if recovery {
                    events.push(self.event(EventKind::NoPlan {
                        target_skill: skill,
                        reason: "no entry below the e-stop threshold".into(),
                    }));
                } else {
                    self.enter_estop(EStopReason::Entry, events);
                }
                false
            }
            Err(e) => {
                events.push(self.event(EventKind::NoPlan {
                    target_skill: skill,
                    reason: e.to_string(),
                }));
                true
            }
        }
    }

    fn initialize(&mut self, x: &CanonicalFrame, events: &mut Vec<Event>) {
        events.push(self.event(EventKind::Triggered { trigger: Trigger::Init }));
        match self.command.clone() {
            Some(skill) => {
                let s = self.graph.skill(&skill).expect("command validated");
                let w = self.graph.term_weights();
                let best = s
                    .nodes()
                    .map(|n| (n, similarity(x, self.graph.frame(n).expect("reference"), w)))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .expect("skills have frames");
                if best.1 <= self.cfg.entry.a {
                    let chain = self.chain_from(best.0);
                    self.install(chain, fnv64([u64::from(best.0 .0)]));
                    self.mode = Mode::Tracking;
                    events.push(self.event(EventKind::PlanKept { target_skill: skill }));
                } else {
                    self.replan(x, false, events);
                }
            }
            None => {
                let (node, _) = self
                    .graph
                    .nearest_reference(x, None)
                    .expect("graph has reference nodes");
                let chain = self.chain_from(node);
                self.install(chain, fnv64([u64::from(node.0)]));
                self.mode = Mode::Tracking;
            }
        }
        if self.track.is_empty() && self.mode != Mode::EStop {
            let (node, _) = self
                .graph
                .nearest_reference(x, None)
                .expect("graph has reference nodes");
            let chain = self.chain_from(node);
            self.install(chain, fnv64([u64::from(node.0)]));
            self.mode = Mode::Tracking;
        }
    }

    fn on_command(&mut self, x: &CanonicalFrame, events: &mut Vec<Event>) {
        let skill = self.command.clone().expect("pending command");
        events.push(self.event(EventKind::Triggered {
            trigger: Trigger::CommandChange { skill: skill.clone() },
        }));
        if self.mode == Mode::EStop {
            // The recovery plan picks up the new target once stationary.
            return;
        }
        if let Some(node) = self.current_node() {
            if self.graph.skill_of(node) == Some(skill.as_str()) {
                let (target, _) = self.graph.guidance_frame(node);
                if similarity(x, target, self.graph.term_weights()) <= self.cfg.entry.a {
                    self.mode = Mode::Tracking;
                    self.second_stage = false;
                    events.push(self.event(EventKind::PlanKept { target_skill: skill }));
                    return;
                }
            }
        }
        self.replan(x, false, events);
    }

    /// Extends the track past its end: jump back into the target prefix when
    /// the seam is within `threshold`, else plan from the last frame.
    fn extend_track(&mut self, threshold: f64, events: &mut Vec<Event>) {
        let Some(&last) = self.track.last() else { return };
        let targets = match &self.targets {
            Some(t) => t.clone(),
            None => {
                let skill = self
                    .graph
                    .skill_of(self.graph.anchor_reference(last))
                    .expect("reference")
                    .to_string();
                target_prefix(&self.graph, &skill, self.cfg.tau).expect("skill exists")
            }
        };
        let last_frame = self.graph.guidance_frame(last).0.clone();
        if let Some((entry, sim)) = nearest_by_similarity(&self.graph, &last_frame, &targets) {
            if sim <= threshold {
                let chain = self.chain_from(entry);
                events.push(self.event(EventKind::TrackExtended {
                    from: self.graph.label(last),
                    to: self.graph.label(entry),
                }));
                self.track.extend(chain);
                self.near_end_fired = false;
                return;
            }
        }
        if self.cfg.planner == PlannerKind::GraphSearch {
            let vt = self.cache.get_or_compute(&self.graph, &targets);
            if let Ok((plan, _)) = plan_graph_search(&self.graph, &targets, &last_frame, &self.cfg.entry, &vt) {
                let skip = usize::from(plan.path.first() == Some(&last));
                let mut path = plan.path[skip..].to_vec();
                if let Some(&end) = path.last() {
                    path.extend_from_slice(&self.chain_from(end)[1..]);
                }
                if !path.is_empty() {
                    events.push(self.event(EventKind::TrackExtended {
                        from: self.graph.label(last),
                        to: self.graph.label(path[0]),
                    }));
                    self.track.extend(path);
                    self.near_end_fired = false;
                    return;
                }
            }
        }
        events.push(self.event(EventKind::NoPlan {
            target_skill: self.command.clone().unwrap_or_default(),
            reason: "cannot extend past the end of the track".into(),
        }));
    }

    /// Advances one tick given the robot state measured at the start of it.
    pub fn step(&mut self, state: &Frame) -> StepOutput {
        let x = canonicalize(state);
        let mut events = Vec::new();

        if !self.initialized {
            self.initialized = true;
            self.pending_command = false;
            self.initialize(&x, &mut events);
        } else if self.pending_command {
            self.pending_command = false;
            self.on_command(&x, &mut events);
        }
        if self.pending_estop {
            self.pending_estop = false;
            if self.mode != Mode::EStop {
                self.enter_estop(EStopReason::Operator, &mut events);
            }
        }

        if self.mode == Mode::EStop {
            let angvel = state.root_angvel.iter().map(|w| w * w).sum::<f64>().sqrt();
            let mut recovered = false;
            if angvel < self.cfg.omega_thresh {
                events.push(self.event(EventKind::Stationary { angvel }));
                recovered = self.replan(&x, true, &mut events) && self.mode == Mode::Recovering;
            }
            if !recovered {
                self.last_sim = None;
                return self.finish(Directive::Damping, None, events);
            }
        }

        if self.fresh_track {
            self.fresh_track = false;
        } else if self.cursor + 1 < self.track.len() {
            self.cursor += 1;
        }

        if self.track.len() - 1 - self.cursor <= self.cfg.h && !self.near_end_fired {
            self.near_end_fired = true;
            events.push(self.event(EventKind::Triggered {
                trigger: Trigger::NearEnd,
            }));
            let threshold = if self.second_stage {
                self.cfg.entry.b
            } else {
                self.cfg.entry.a
            };
            let before = self.track.len();
            self.extend_track(threshold, &mut events);
            if self.second_stage && self.track.len() > before {
                self.second_stage = false;
            }
        }

        let node = self.track[self.cursor];
        let w = self.graph.term_weights();

        if self.second_stage {
            if let Some(targets) = &self.targets {
                if let Some((entry, sim)) = nearest_by_similarity(&self.graph, &x, targets) {
                    if sim <= self.cfg.entry.a {
                        let chain = self.chain_from(entry);
                        self.track.truncate(self.cursor);
                        self.track.extend(chain);
                        self.second_stage = false;
                        self.near_end_fired = false;
                        events.push(self.event(EventKind::TrackExtended {
                            from: self.graph.label(node),
                            to: self.graph.label(entry),
                        }));
                    }
                }
            }
        }
        let node = self.track[self.cursor];

        if matches!(self.mode, Mode::Switching | Mode::Recovering) && !self.second_stage {
            if let Some(t) = &self.targets {
                if t.contains(node) {
                    let was = self.mode;
                    self.mode = Mode::Tracking;
                    if was == Mode::Recovering {
                        events.push(self.event(EventKind::Recovered));
                    }
                }
            } else if self.graph.node(node).is_reference() {
                let was = self.mode;
                self.mode = Mode::Tracking;
                if was == Mode::Recovering {
                    events.push(self.event(EventKind::Recovered));
                }
            }
        }

        let (target, kappa) = self.graph.guidance_frame(node);
        let sim = similarity(&x, target, w);
        self.last_sim = Some(sim);
        let zone = self.zone_of(sim);
        if let Some(prev) = self.zone {
            for (which, boundary) in [(Threshold::A, Zone::Between), (Threshold::B, Zone::Outside)] {
                let was_past = prev >= boundary;
                let is_past = zone >= boundary;
                if was_past != is_past {
                    let direction = if is_past { Direction::Up } else { Direction::Down };
                    events.push(self.event(EventKind::Triggered {
                        trigger: Trigger::SafetyCross { which, direction },
                    }));
                }
            }
        } else if zone == Zone::Outside {
            events.push(self.event(EventKind::Triggered {
                trigger: Trigger::SafetyCross {
                    which: Threshold::B,
                    direction: Direction::Up,
                },
            }));
        }
        self.zone = Some(zone);
        if zone == Zone::Outside {
            self.enter_estop(EStopReason::Safety, &mut events);
            return self.finish(Directive::Damping, Some(sim), events);
        }
        let guidance = Guidance {
            node,
            target: target.clone(),
            kappa,
        };
        self.finish(Directive::Guidance(guidance), Some(sim), events)
    }

    fn finish(&mut self, directive: Directive, sim: Option<f64>, events: Vec<Event>) -> StepOutput {
        let out = StepOutput {
            tick: self.tick,
            directive,
            mode: self.mode,
            sim,
            events,
        };
        self.tick += 1;
        out
    }
}

/// Samples a reference node `n` intra steps upstream of a uniformly chosen
/// cross-segment head, clamped to the start of its skill.
pub fn sample_initial_state<R: Rng + ?Sized>(graph: &SkillGraph, n: usize, rng: &mut R) -> Result<NodeId, SchedError> {
    let segs = graph.segments();
    if segs.is_empty() {
        return Err(SchedError::NoTransitions);
    }
    let seg = &segs[rng.random_range(0..segs.len())];
    match graph.node(seg.from) {
        NodeKind::Reference { frame, .. } => Ok(NodeId(seg.from.0 - frame.min(n) as u32)),
        NodeKind::Buffer { .. } => unreachable!("segments start at reference nodes"),
    }
}
