//! Synchronous session core: one episode runner plus the action queue
//! discipline. The server wraps it in an owner thread.

use std::sync::Arc;

use skillgraph::formats::API_SCHEMA;
use skillgraph::{EpisodeRecord, EpisodeRunner, Script, SimError, SkillGraph, StateDelta, ValueCache};
use thiserror::Error;

use crate::api::{ActionKind, CreateSession, PlanView, RobotView, SessionSpec, StateSnapshot, PLAN_PREVIEW};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("graph `{0}` is not served here")]
    UnknownGraph(String),
    #[error("session finished at tick {0}")]
    Finished(u64),
}

impl From<SimError> for SessionError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scheduler(skillgraph::SchedError::UnknownSkill(s)) => SessionError::UnknownSkill(s),
            other => SessionError::BadRequest(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Command(String),
    Disturb(StateDelta),
    Estop,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Command(_) => ActionKind::Command,
            Action::Disturb(_) => ActionKind::Disturb,
            Action::Estop => ActionKind::Estop,
        }
    }

    /// Order within one tick boundary: disturbances hit the state, then
    /// commands and e-stops reach the scheduler. Scripted replays use the
    /// same order.
    fn rank(&self) -> u8 {
        match self {
            Action::Disturb(_) => 0,
            Action::Command(_) => 1,
            Action::Estop => 2,
        }
    }

    /// Checks everything that can be checked without the session.
    pub fn validate(&self, graph: &SkillGraph) -> Result<(), SessionError> {
        match self {
            Action::Command(skill) => graph
                .skill_index(skill)
                .map(|_| ())
                .map_err(|_| SessionError::UnknownSkill(skill.clone())),
            Action::Disturb(delta) => delta
                .check(graph.meta().joints)
                .map_err(|e| SessionError::BadRequest(e.to_string())),
            Action::Estop => Ok(()),
        }
    }
}

/// Fills a creation request from service defaults and validates it.
pub fn resolve_spec(
    graph: &SkillGraph,
    req: &CreateSession,
    defaults: &SessionSpec,
) -> Result<SessionSpec, SessionError> {
    crate::api::check_schema(&req.schema).map_err(SessionError::BadRequest)?;
    if let Some(d) = &req.graph_digest {
        if d != graph.digest() {
            return Err(SessionError::UnknownGraph(d.clone()));
        }
    }
    let spec = SessionSpec {
        scheduler: req.scheduler.clone().unwrap_or_else(|| defaults.scheduler.clone()),
        tracker: req.tracker.clone().unwrap_or_else(|| defaults.tracker.clone()),
        start: req.start.clone().unwrap_or_else(|| defaults.start.clone()),
        tick_hz: req.tick_hz.unwrap_or(defaults.tick_hz),
        max_ticks: req.max_ticks.or(defaults.max_ticks),
    };
    if !(spec.tick_hz.is_finite() && spec.tick_hz >= 0.0) {
        return Err(SessionError::BadRequest(format!(
            "tick_hz must be >= 0, got {}",
            spec.tick_hz
        )));
    }
    if spec.tick_hz == 0.0 && spec.max_ticks.is_none() {
        return Err(SessionError::BadRequest("unpaced sessions need max_ticks".into()));
    }
    if graph.reference(&spec.start.skill, spec.start.frame).is_none() {
        graph
            .skill_index(&spec.start.skill)
            .map_err(|_| SessionError::UnknownSkill(spec.start.skill.clone()))?;
        return Err(SessionError::BadRequest(format!(
            "start {}:{} is not a reference frame",
            spec.start.skill, spec.start.frame
        )));
    }
    spec.scheduler.validate(graph).map_err(|e| match e {
        skillgraph::SchedError::UnknownSkill(s) => SessionError::UnknownSkill(s),
        other => SessionError::BadRequest(other.to_string()),
    })?;
    spec.tracker
        .validate()
        .map_err(|e| SessionError::BadRequest(e.to_string()))?;
    Ok(spec)
}

#[derive(Debug)]
pub struct SessionCore {
    id: String,
    spec: SessionSpec,
    runner: EpisodeRunner,
}

impl SessionCore {
    pub fn new(
        id: &str,
        graph: Arc<SkillGraph>,
        cache: Arc<ValueCache>,
        spec: SessionSpec,
    ) -> Result<Self, SessionError> {
        let runner = EpisodeRunner::new(graph, cache, &spec.scheduler, &spec.tracker, &spec.start)?;
        Ok(Self {
            id: id.to_string(),
            spec,
            runner,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn spec(&self) -> &SessionSpec {
        &self.spec
    }

    /// Tick the next step simulates.
    pub fn tick(&self) -> u64 {
        self.runner.tick()
    }

    pub fn finished(&self) -> bool {
        self.spec.max_ticks.is_some_and(|m| self.tick() >= m)
    }

    /// Applies actions drained at one tick boundary, in arrival order within
    /// each kind. Returns, per action in the given order, the tick it
    /// applies at.
    pub fn apply(&mut self, actions: &[Action]) -> Vec<Result<u64, SessionError>> {
        let mut order: Vec<usize> = (0..actions.len()).collect();
        order.sort_by_key(|&i| actions[i].rank());
        let mut out: Vec<Option<Result<u64, SessionError>>> = (0..actions.len()).map(|_| None).collect();
        for i in order {
            out[i] = Some(self.apply_one(&actions[i]));
        }
        out.into_iter().map(|r| r.expect("every action handled")).collect()
    }

    fn apply_one(&mut self, action: &Action) -> Result<u64, SessionError> {
        if self.finished() {
            return Err(SessionError::Finished(self.tick()));
        }
        action.validate(self.runner.graph())?;
        match action {
            Action::Command(skill) => self.runner.command(skill)?,
            Action::Disturb(delta) => self.runner.disturb(delta)?,
            Action::Estop => self.runner.estop(),
        }
        Ok(self.tick())
    }

    pub fn step(&mut self) -> StateSnapshot {
        self.runner.step();
        self.snapshot()
    }

    /// View of the last simulated tick.
    ///
    /// # Panics
    /// If no tick has run yet.
    pub fn snapshot(&self) -> StateSnapshot {
        let graph = self.runner.graph();
        let sched = self.runner.scheduler();
        let rec = self.runner.ticks().last().expect("at least one tick");
        let plan = sched.plan_digest().map(|digest| {
            let rest = sched.remaining_track();
            PlanView {
                digest,
                remaining_len: rest.len(),
                remaining: rest.iter().take(PLAN_PREVIEW).map(|&n| graph.label(n)).collect(),
            }
        });
        let entry = sched.config().entry;
        StateSnapshot {
            schema: API_SCHEMA.to_string(),
            session: self.id.clone(),
            tick: rec.tick,
            mode: rec.mode,
            sim: rec.sim,
            a: entry.a,
            b: entry.b,
            directive: rec.directive.clone(),
            command: sched.command_skill().map(str::to_string),
            plan,
            robot: RobotView {
                q: rec.state.q.clone(),
                root_xy: rec.state.root_xy,
                root_yaw: rec.state.root_yaw,
                root_angvel: rec.state.root_angvel,
                p: rec.state.p.clone(),
            },
            anchor: rec.anchor,
            events: rec.events.clone(),
        }
    }

    /// The episode so far; its script is the applied action log.
    pub fn record(&self) -> EpisodeRecord {
        self.runner.record()
    }
}

/// Re-runs a session from its action log, producing the snapshot of every
/// tick.
pub fn replay(
    id: &str,
    graph: Arc<SkillGraph>,
    cache: Arc<ValueCache>,
    spec: SessionSpec,
    log: &Script,
    ticks: u64,
) -> Result<Vec<StateSnapshot>, SessionError> {
    let mut core = SessionCore::new(id, graph, cache, spec)?;
    let mut out = Vec::with_capacity(ticks as usize);
    for tick in 0..ticks {
        let mut actions: Vec<Action> = log
            .disturbances
            .iter()
            .filter(|d| d.at_tick == tick)
            .map(|d| Action::Disturb(d.delta.clone()))
            .collect();
        actions.extend(
            log.commands
                .iter()
                .filter(|c| c.at_tick == tick)
                .map(|c| Action::Command(c.skill.clone())),
        );
        if log.estops.contains(&tick) {
            actions.push(Action::Estop);
        }
        for r in core.apply(&actions) {
            r?;
        }
        out.push(core.step());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use skillgraph::scheduler::Mode;
    use skillgraph::{build_graph, run_episode, synthesize_dataset, GraphConfig, StartPoint, SynthConfig};

    fn graph() -> Arc<SkillGraph> {
        let ds = synthesize_dataset(
            &SynthConfig {
                skills: 3,
                frames: 120,
                ..SynthConfig::default()
            },
            2,
        )
        .unwrap();
        Arc::new(build_graph(&ds, &GraphConfig::default()).unwrap())
    }

    fn spec() -> SessionSpec {
        SessionSpec {
            scheduler: Default::default(),
            tracker: Default::default(),
            start: StartPoint {
                skill: "kick".into(),
                frame: 0,
            },
            tick_hz: 0.0,
            max_ticks: Some(80),
        }
    }

    #[test]
    fn same_tick_actions_apply_in_kind_order() {
        let g = graph();
        let mut core = SessionCore::new("s1", g.clone(), Arc::new(ValueCache::new()), spec()).unwrap();
        core.step();
        let spin = StateDelta {
            root_angvel: [0.0, 0.0, 2.0],
            ..StateDelta::default()
        };
        let r = core.apply(&[Action::Estop, Action::Command("dance".into()), Action::Disturb(spin)]);
        assert!(r.iter().all(|x| *x.as_ref().unwrap() == 1));
        let snap = core.step();
        assert_eq!(snap.mode, Mode::EStop);
        let log = core.record().header.script;
        assert_eq!(log.commands[0].at_tick, 1);
        assert_eq!(log.disturbances[0].at_tick, 1);
        assert_eq!(log.estops, vec![1]);
    }

    #[test]
    fn replay_reproduces_snapshots() {
        let g = graph();
        let cache = Arc::new(ValueCache::new());
        let mut core = SessionCore::new("s1", g.clone(), cache.clone(), spec()).unwrap();
        let mut live = Vec::new();
        while !core.finished() {
            match core.tick() {
                5 => {
                    core.apply(&[Action::Command("dance".into())]);
                }
                30 => {
                    core.apply(&[Action::Estop]);
                }
                _ => {}
            }
            live.push(serde_json::to_string(&core.step()).unwrap());
        }
        assert_eq!(live.len(), 80);
        assert!(matches!(
            core.apply(&[Action::Estop])[0],
            Err(SessionError::Finished(80))
        ));
        let rec = core.record();
        let again: Vec<String> = replay("s1", g.clone(), cache.clone(), spec(), &rec.header.script, 80)
            .unwrap()
            .iter()
            .map(|s| serde_json::to_string(s).unwrap())
            .collect();
        assert_eq!(again, live);
        let scripted = run_episode(g, cache, &spec().scheduler, &spec().tracker, &rec.header.script, 80).unwrap();
        assert_eq!(scripted.to_text(), rec.to_text());
    }

    #[test]
    fn spec_resolution_errors() {
        let g = graph();
        let d = spec();
        let bad = |req: CreateSession| resolve_spec(&g, &req, &d).unwrap_err();
        assert!(matches!(
            bad(CreateSession {
                tick_hz: Some(-1.0),
                ..Default::default()
            }),
            SessionError::BadRequest(_)
        ));
        let open = SessionSpec {
            max_ticks: None,
            ..spec()
        };
        let unpaced = CreateSession {
            tick_hz: Some(0.0),
            ..Default::default()
        };
        assert!(matches!(
            resolve_spec(&g, &unpaced, &open),
            Err(SessionError::BadRequest(_))
        ));
        assert!(matches!(
            bad(CreateSession {
                start: Some(StartPoint {
                    skill: "kick".into(),
                    frame: 5000,
                }),
                ..Default::default()
            }),
            SessionError::BadRequest(_)
        ));
        assert!(matches!(
            bad(CreateSession {
                graph_digest: Some("nope".into()),
                ..Default::default()
            }),
            SessionError::UnknownGraph(_)
        ));
        let mut sched = d.scheduler.clone();
        sched.recovery_skill = Some("ghost".into());
        assert!(matches!(
            bad(CreateSession {
                scheduler: Some(sched),
                ..Default::default()
            }),
            SessionError::UnknownSkill(_)
        ));
        assert!(matches!(
            bad(CreateSession {
                schema: Some("sgapi/0".into()),
                ..Default::default()
            }),
            SessionError::BadRequest(_)
        ));
        let ok = resolve_spec(&g, &CreateSession::default(), &d).unwrap();
        assert_eq!(ok, d);
    }
}
