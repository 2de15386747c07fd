//! Kinematic surrogate for a trained tracking policy. It converges toward
//! guidance targets at a fixed rate, decays velocities under damping, takes
//! scripted disturbances and records whole episodes.

mod script;

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::EPISODE_SCHEMA;
use crate::motion_data::{place, unplace, Frame};
use crate::planner::ValueCache;
use crate::scheduler::{Directive, Event, Mode, SchedError, Scheduler, SchedulerConfig};
use crate::skill_graph::{NodeId, SkillGraph};

pub use script::{make_difficulty_script, Difficulty, ScriptParams};

/// The simulated robot uses the same layout as a reference frame.
pub type RobotState = Frame;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Scheduler(#[from] SchedError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Fraction of the remaining gap closed per tick, in (0, 1].
    pub alpha: f64,
    /// Standard deviation of additive joint noise, radians.
    pub noise_std: f64,
    /// Velocity decay factor per tick under damping, in (0, 1).
    pub damping_rate: f64,
    /// Seconds per tick.
    pub dt: f64,
    pub rng_seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            noise_std: 0.0,
            damping_rate: 0.8,
            dt: 1.0 / 30.0,
            rng_seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise_std must be nonnegative, got {}", self.noise_std));
        }
        if !(self.damping_rate > 0.0 && self.damping_rate < 1.0) {
            return bad(format!("damping_rate must be in (0, 1), got {}", self.damping_rate));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        Ok(())
    }
}

/// Additive state offset. Empty vectors mean zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateDelta {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub root_xy: [f64; 2],
    pub root_yaw: f64,
    pub root_angvel: [f64; 3],
}

impl StateDelta {
    pub fn check(&self, joints: usize) -> Result<(), SimError> {
        for (name, v) in [("q", &self.q), ("dq", &self.dq)] {
            if !v.is_empty() && v.len() != joints {
                return Err(SimError::Config(format!(
                    "disturbance {name} has {} entries, expected {joints}",
                    v.len()
                )));
            }
        }
        let finite = self
            .q
            .iter()
            .chain(&self.dq)
            .chain(&self.root_xy)
            .chain(&self.root_angvel)
            .chain(std::iter::once(&self.root_yaw))
            .all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(SimError::Config("disturbance has non-finite values".into()))
        }
    }

    /// Applies the offset. Body positions move rigidly with the root pose.
    pub fn apply(&self, state: &mut RobotState) {
        for (x, d) in state.q.iter_mut().zip(&self.q) {
            *x += d;
        }
        for (x, d) in state.dq.iter_mut().zip(&self.dq) {
            *x += d;
        }
        for (w, d) in state.root_angvel.iter_mut().zip(self.root_angvel) {
            *w += d;
        }
        let p_hat = unplace(&state.p, state.root_xy, state.root_yaw);
        state.root_xy[0] += self.root_xy[0];
        state.root_xy[1] += self.root_xy[1];
        state.root_yaw += self.root_yaw;
        state.p = place(&p_hat, state.root_xy, state.root_yaw);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub at_tick: u64,
    pub delta: StateDelta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptCommand {
    pub at_tick: u64,
    pub skill: String,
}

/// Where an episode starts. The start skill is also the initial command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartPoint {
    pub skill: String,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub start: StartPoint,
    #[serde(default)]
    pub commands: Vec<ScriptCommand>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    /// Ticks at which an operator emergency stop is requested.
    #[serde(default)]
    pub estops: Vec<u64>,
    /// Exclusive last tick, if shorter than the run limit.
    #[serde(default)]
    pub end_tick: Option<u64>,
}

impl Script {
    pub fn starting_at(skill: &str, frame: usize) -> Self {
        Script {
            start: StartPoint {
                skill: skill.to_string(),
                frame,
            },
            commands: Vec::new(),
            disturbances: Vec::new(),
            estops: Vec::new(),
            end_tick: None,
        }
    }

    pub fn validate(&self, graph: &SkillGraph) -> Result<(), SimError> {
        if graph.reference(&self.start.skill, self.start.frame).is_none() {
            return Err(SimError::Config(format!(
                "start {}:{} is not a reference frame",
                self.start.skill, self.start.frame
            )));
        }
        for c in &self.commands {
            graph
                .skill_index(&c.skill)
                .map_err(|_| SchedError::UnknownSkill(c.skill.clone()))?;
        }
        for d in &self.disturbances {
            d.delta.check(graph.meta().joints)?;
        }
        Ok(())
    }
}

/// Advances the robot one tick under `directive`.
///
/// Guidance blends `q`, `dq`, heading-frame body positions and root angular
/// velocity toward the target with rate `alpha`, divided by κ inside buffer
/// segments; joint noise is added to `q` only. Damping scales velocities by
/// `damping_rate` and integrates them. The heading always integrates the
/// root yaw rate; the planar root position is held.
pub fn step_tracker<R: Rng + ?Sized>(
    state: &RobotState,
    directive: &Directive,
    cfg: &TrackerConfig,
    rng: &mut R,
) -> RobotState {
    let mut next = state.clone();
    let p_hat = unplace(&state.p, state.root_xy, state.root_yaw);
    match directive {
        Directive::Guidance(g) => {
            let a = if g.kappa > 0 {
                cfg.alpha / g.kappa as f64
            } else {
                cfg.alpha
            };
            let noise = (cfg.noise_std > 0.0).then(|| Normal::new(0.0, cfg.noise_std).expect("validated std"));
            for (x, t) in next.q.iter_mut().zip(&g.target.q) {
                *x = blend(*x, *t, a);
                if let Some(n) = &noise {
                    *x += n.sample(rng);
                }
            }
            for (x, t) in next.dq.iter_mut().zip(&g.target.dq) {
                *x = blend(*x, *t, a);
            }
            for (w, t) in next.root_angvel.iter_mut().zip(g.target.root_angvel) {
                *w = blend(*w, t, a);
            }
            let moved: Vec<[f64; 3]> = p_hat
                .iter()
                .zip(&g.target.p_hat)
                .map(|(b, t)| [blend(b[0], t[0], a), blend(b[1], t[1], a), blend(b[2], t[2], a)])
                .collect();
            next.root_yaw += next.root_angvel[2] * cfg.dt;
            next.p = place(&moved, next.root_xy, next.root_yaw);
            next.contacts.clone_from(&g.target.contacts);
        }
        Directive::Damping => {
            let r = cfg.damping_rate;
            for (x, v) in next.q.iter_mut().zip(next.dq.iter_mut()) {
                *v *= r;
                *x += *v * cfg.dt;
            }
            for w in &mut next.root_angvel {
                *w *= r;
            }
            next.root_yaw += next.root_angvel[2] * cfg.dt;
            next.p = place(&p_hat, next.root_xy, next.root_yaw);
        }
    }
    next
}

/// Moves `x` a fraction `a` toward `t`, landing exactly on `t` at `a = 1`.
fn blend(x: f64, t: f64, a: f64) -> f64 {
    if a >= 1.0 {
        t
    } else {
        x + a * (t - x)
    }
}

/// World placement of the reference motion: planar position fixed at the
/// start, heading integrating the guidance target's yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub xy: [f64; 2],
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirectiveRecord {
    Guidance { node: NodeId, label: String, kappa: usize },
    Damping,
}

impl DirectiveRecord {
    pub fn node(&self) -> Option<NodeId> {
        match self {
            DirectiveRecord::Guidance { node, .. } => Some(*node),
            DirectiveRecord::Damping => None,
        }
    }
}

/// One simulated tick: what the scheduler decided and the state the
/// tracker reached under that decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub mode: Mode,
    pub directive: DirectiveRecord,
    pub sim: Option<f64>,
    pub anchor: Anchor,
    pub state: RobotState,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeHeader {
    pub schema: String,
    pub dataset_digest: String,
    pub graph_digest: String,
    pub scheduler: SchedulerConfig,
    pub tracker: TrackerConfig,
    pub script: Script,
    pub max_ticks: u64,
    pub initial: RobotState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub header: EpisodeHeader,
    pub ticks: Vec<TickRecord>,
}

impl EpisodeRecord {
    /// Tick of the first command-change event, if any.
    pub fn first_command_tick(&self) -> Option<u64> {
        self.ticks
            .iter()
            .flat_map(|t| &t.events)
            .find(|e| matches!(e.trigger(), Some(crate::scheduler::Trigger::CommandChange { .. })))
            .map(|e| e.tick)
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.ticks.iter().flat_map(|t| &t.events)
    }

    /// Writes `sgepisode/1`: a header line, then one line per tick.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for t in &self.ticks {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| SimError::Schema("empty episode file".into()))??;
        let header: EpisodeHeader = serde_json::from_str(&first).map_err(|e| SimError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.schema != EPISODE_SCHEMA {
            return Err(SimError::Schema(format!("unsupported schema `{}`", header.schema)));
        }
        let mut ticks = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: TickRecord = serde_json::from_str(&line).map_err(|e| SimError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            if t.tick != ticks.len() as u64 {
                return Err(SimError::Schema(format!(
                    "line {}: tick {} out of order",
                    i + 2,
                    t.tick
                )));
            }
            ticks.push(t);
        }
        Ok(EpisodeRecord { header, ticks })
    }
}

/// Incremental episode driver shared by scripted runs and live sessions.
///
/// Actions passed between steps apply at the next tick. Every applied action
/// is logged into a script, so the finished record replays through
/// [`run_episode`] to the same ticks.
#[derive(Debug)]
pub struct EpisodeRunner {
    graph: Arc<SkillGraph>,
    sched: Scheduler,
    tracker: TrackerConfig,
    rng: ChaCha8Rng,
    anchor: Anchor,
    initial: RobotState,
    state: RobotState,
    log: Script,
    ticks: Vec<TickRecord>,
}

impl EpisodeRunner {
    pub fn new(
        graph: Arc<SkillGraph>,
        cache: Arc<ValueCache>,
        sched_cfg: &SchedulerConfig,
        tracker_cfg: &TrackerConfig,
        start: &StartPoint,
    ) -> Result<Self, SimError> {
        tracker_cfg.validate()?;
        let log = Script::starting_at(&start.skill, start.frame);
        log.validate(&graph)?;
        let mut sched = Scheduler::new(graph.clone(), cache, sched_cfg.clone())?;
        sched.command(&start.skill)?;
        let node = graph.reference(&start.skill, start.frame).expect("validated start");
        let initial = graph.frame(node).expect("reference").to_world([0.0, 0.0], 0.0);
        Ok(Self {
            anchor: Anchor {
                xy: initial.root_xy,
                yaw: initial.root_yaw,
            },
            rng: ChaCha8Rng::seed_from_u64(tracker_cfg.rng_seed),
            tracker: tracker_cfg.clone(),
            state: initial.clone(),
            initial,
            graph,
            sched,
            log,
            ticks: Vec::new(),
        })
    }

    /// Tick the next step will simulate; pending actions apply there.
    pub fn tick(&self) -> u64 {
        self.ticks.len() as u64
    }

    pub fn graph(&self) -> &Arc<SkillGraph> {
        &self.graph
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.sched
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn ticks(&self) -> &[TickRecord] {
        &self.ticks
    }

    pub fn command(&mut self, skill: &str) -> Result<(), SimError> {
        self.sched.command(skill)?;
        self.log.commands.push(ScriptCommand {
            at_tick: self.tick(),
            skill: skill.to_string(),
        });
        Ok(())
    }

    pub fn disturb(&mut self, delta: &StateDelta) -> Result<(), SimError> {
        delta.check(self.graph.meta().joints)?;
        delta.apply(&mut self.state);
        self.log.disturbances.push(Disturbance {
            at_tick: self.tick(),
            delta: delta.clone(),
        });
        Ok(())
    }

    pub fn estop(&mut self) {
        self.sched.force_estop();
        let tick = self.tick();
        if !self.log.estops.contains(&tick) {
            self.log.estops.push(tick);
        }
    }

    /// Steps the scheduler on the current state and the tracker on its
    /// directive.
    pub fn step(&mut self) -> &TickRecord {
        let out = self.sched.step(&self.state);
        let directive = match &out.directive {
            Directive::Guidance(g) => {
                self.anchor.yaw += g.target.root_angvel[2] * self.tracker.dt;
                DirectiveRecord::Guidance {
                    node: g.node,
                    label: self.graph.label(g.node),
                    kappa: g.kappa,
                }
            }
            Directive::Damping => DirectiveRecord::Damping,
        };
        self.state = step_tracker(&self.state, &out.directive, &self.tracker, &mut self.rng);
        self.ticks.push(TickRecord {
            tick: out.tick,
            mode: out.mode,
            directive,
            sim: out.sim,
            anchor: self.anchor,
            state: self.state.clone(),
            events: out.events,
        });
        self.ticks.last().expect("just pushed")
    }

    /// The record so far. Its script is the log of applied actions.
    pub fn record(&self) -> EpisodeRecord {
        self.build(self.log.clone(), self.tick(), self.ticks.clone())
    }

    fn build(&self, script: Script, max_ticks: u64, ticks: Vec<TickRecord>) -> EpisodeRecord {
        EpisodeRecord {
            header: EpisodeHeader {
                schema: EPISODE_SCHEMA.to_string(),
                dataset_digest: self.graph.meta().dataset_digest.clone(),
                graph_digest: self.graph.digest().to_string(),
                scheduler: self.sched.config().clone(),
                tracker: self.tracker.clone(),
                script,
                max_ticks,
                initial: self.initial.clone(),
            },
            ticks,
        }
    }
}

/// Runs one scripted episode. Per tick: scripted disturbances hit the state,
/// scripted commands and e-stops reach the scheduler, the scheduler steps on
/// the state and the tracker applies its directive.
pub fn run_episode(
    graph: Arc<SkillGraph>,
    cache: Arc<ValueCache>,
    sched_cfg: &SchedulerConfig,
    tracker_cfg: &TrackerConfig,
    script: &Script,
    max_ticks: u64,
) -> Result<EpisodeRecord, SimError> {
    script.validate(&graph)?;
    let mut run = EpisodeRunner::new(graph, cache, sched_cfg, tracker_cfg, &script.start)?;
    let end = script.end_tick.map_or(max_ticks, |e| e.min(max_ticks));
    for tick in 0..end {
        for d in script.disturbances.iter().filter(|d| d.at_tick == tick) {
            d.delta.apply(&mut run.state);
        }
        for c in script.commands.iter().filter(|c| c.at_tick == tick) {
            run.sched.command(&c.skill)?;
        }
        if script.estops.contains(&tick) {
            run.sched.force_estop();
        }
        run.step();
    }
    let ticks = std::mem::take(&mut run.ticks);
    Ok(run.build(script.clone(), max_ticks, ticks))
}
