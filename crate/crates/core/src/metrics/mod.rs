//! Imitation metrics over recorded episodes: tracking errors, switching
//! success, the foot contact reward and a normalized task reward.
//!
//! Every tick of an episode is compared with its reference: the guidance
//! target of that tick placed at the recorded anchor. Damping ticks carry no
//! guidance and are compared with the last target issued before them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion_data::{unplace, Frame};
use crate::skill_graph::SkillGraph;
use crate::tracker_sim::EpisodeRecord;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("no episodes or ticks to score")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Success threshold on the mean root-relative body position error, meters.
pub const SSR_THRESHOLD: f64 = 0.5;

/// Mean tracking errors. Velocities and accelerations are finite
/// differences per tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingErrors {
    /// Global body position error, meters.
    pub e_g_mpbpe: f64,
    /// Root-relative body position error in the heading frame, meters.
    pub e_mpbpe: f64,
    /// Joint position error, radians.
    pub e_mpjpe: f64,
    /// Joint velocity error, rad/frame.
    pub e_mpjve: f64,
    /// Body velocity error, m/frame.
    pub e_mpbve: f64,
    /// Body acceleration error, m/frame².
    pub e_mpbae: f64,
}

impl TrackingErrors {
    /// Componentwise mean.
    pub fn mean(all: &[TrackingErrors]) -> TrackingErrors {
        if all.is_empty() {
            return TrackingErrors::default();
        }
        let n = all.len() as f64;
        let sum = |f: fn(&TrackingErrors) -> f64| all.iter().map(f).sum::<f64>() / n;
        TrackingErrors {
            e_g_mpbpe: sum(|e| e.e_g_mpbpe),
            e_mpbpe: sum(|e| e.e_mpbpe),
            e_mpjpe: sum(|e| e.e_mpjpe),
            e_mpjve: sum(|e| e.e_mpjve),
            e_mpbve: sum(|e| e.e_mpbve),
            e_mpbae: sum(|e| e.e_mpbae),
        }
    }
}

fn norm3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn check_dims(state: &Frame, reference: &Frame) -> Result<()> {
    for (expected, got) in [
        (reference.q.len(), state.q.len()),
        (reference.dq.len(), state.dq.len()),
        (reference.p.len(), state.p.len()),
        (reference.contacts.len(), state.contacts.len()),
    ] {
        if expected != got {
            return Err(MetricsError::DimensionMismatch { expected, got });
        }
    }
    if state.p.is_empty() {
        return Err(MetricsError::Alignment("frames have no bodies".into()));
    }
    Ok(())
}

/// Body positions relative to the root body, in the heading frame.
fn root_relative(f: &Frame) -> Vec<[f64; 3]> {
    let p_hat = unplace(&f.p, f.root_xy, f.root_yaw);
    let root = p_hat[0];
    p_hat.iter().map(|b| sub3(*b, root)).collect()
}

/// Mean over bodies of the root-relative position error, meters.
pub fn root_relative_error(state: &Frame, reference: &Frame) -> Result<f64> {
    check_dims(state, reference)?;
    let (s, r) = (root_relative(state), root_relative(reference));
    Ok(s.iter().zip(&r).map(|(a, b)| norm3(*a, *b)).sum::<f64>() / s.len() as f64)
}

/// Errors over aligned state and reference sequences.
pub fn tracking_errors_aligned(states: &[Frame], refs: &[Frame]) -> Result<TrackingErrors> {
    if states.len() != refs.len() {
        return Err(MetricsError::Alignment(format!(
            "{} states against {} references",
            states.len(),
            refs.len()
        )));
    }
    if states.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for (s, r) in states.iter().zip(refs) {
        check_dims(s, r)?;
    }
    let n = states.len();
    let bodies = states[0].p.len() as f64;
    let joints = states[0].q.len().max(1) as f64;
    let mut e = TrackingErrors::default();
    for (s, r) in states.iter().zip(refs) {
        e.e_g_mpbpe += s.p.iter().zip(&r.p).map(|(a, b)| norm3(*a, *b)).sum::<f64>() / bodies;
        e.e_mpbpe += root_relative_error(s, r)?;
        e.e_mpjpe += s.q.iter().zip(&r.q).map(|(a, b)| (a - b).abs()).sum::<f64>() / joints;
    }
    e.e_g_mpbpe /= n as f64;
    e.e_mpbpe /= n as f64;
    e.e_mpjpe /= n as f64;

    let vel = |f: &[Frame], t: usize, b: usize| sub3(f[t].p[b], f[t - 1].p[b]);
    if n >= 2 {
        for t in 1..n {
            e.e_mpjve += (0..states[t].q.len())
                .map(|j| ((states[t].q[j] - states[t - 1].q[j]) - (refs[t].q[j] - refs[t - 1].q[j])).abs())
                .sum::<f64>()
                / joints;
            e.e_mpbve += (0..states[t].p.len())
                .map(|b| norm3(vel(states, t, b), vel(refs, t, b)))
                .sum::<f64>()
                / bodies;
        }
        e.e_mpjve /= (n - 1) as f64;
        e.e_mpbve /= (n - 1) as f64;
    }
    if n >= 3 {
        for t in 2..n {
            e.e_mpbae += (0..states[t].p.len())
                .map(|b| {
                    let a = sub3(vel(states, t, b), vel(states, t - 1, b));
                    let c = sub3(vel(refs, t, b), vel(refs, t - 1, b));
                    norm3(a, c)
                })
                .sum::<f64>()
                / bodies;
        }
        e.e_mpbae /= (n - 2) as f64;
    }
    Ok(e)
}

/// World-frame reference for every tick of an episode, starting at the first
/// tick that carries guidance. Returns the index of that tick and the frames.
pub fn reference_frames(rec: &EpisodeRecord, graph: &SkillGraph) -> Result<(usize, Vec<Frame>)> {
    if rec.header.graph_digest != graph.digest() {
        return Err(MetricsError::Alignment(format!(
            "episode was recorded on graph {}, not {}",
            rec.header.graph_digest,
            graph.digest()
        )));
    }
    let mut out = Vec::with_capacity(rec.ticks.len());
    let mut first = None;
    let mut last: Option<Frame> = None;
    for (i, t) in rec.ticks.iter().enumerate() {
        if let Some(node) = t.directive.node() {
            if node.index() >= graph.node_count() {
                return Err(MetricsError::Alignment(format!("tick {}: unknown node {node}", t.tick)));
            }
            let (target, _) = graph.guidance_frame(node);
            last = Some(target.to_world(t.anchor.xy, t.anchor.yaw));
            first.get_or_insert(i);
        }
        if let Some(f) = &last {
            out.push(f.clone());
        }
    }
    let first = first.ok_or_else(|| MetricsError::Alignment("episode never received guidance".into()))?;
    Ok((first, out))
}

pub fn tracking_errors(rec: &EpisodeRecord, graph: &SkillGraph) -> Result<TrackingErrors> {
    let (first, refs) = reference_frames(rec, graph)?;
    let states: Vec<Frame> = rec.ticks[first..].iter().map(|t| t.state.clone()).collect();
    tracking_errors_aligned(&states, &refs)
}

/// Per-tick mean root-relative error, paired with tick numbers.
pub fn error_series(rec: &EpisodeRecord, graph: &SkillGraph) -> Result<Vec<(u64, f64)>> {
    let (first, refs) = reference_frames(rec, graph)?;
    rec.ticks[first..]
        .iter()
        .zip(&refs)
        .map(|(t, r)| Ok((t.tick, root_relative_error(&t.state, r)?)))
        .collect()
}

/// True unless the error exceeds `threshold` at some tick at or after
/// `from_tick`.
pub fn passes(series: &[(u64, f64)], threshold: f64, from_tick: u64) -> bool {
    series.iter().all(|&(t, e)| t < from_tick || e <= threshold)
}

/// Success of one episode, judged from its first command change on (from
/// the start when it has none).
pub fn episode_succeeds(rec: &EpisodeRecord, graph: &SkillGraph, threshold: f64) -> Result<bool> {
    let series = error_series(rec, graph)?;
    Ok(passes(&series, threshold, rec.first_command_tick().unwrap_or(0)))
}

/// Fraction of successful outcomes.
pub fn success_rate(outcomes: &[bool]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(outcomes.iter().filter(|&&ok| ok).count() as f64 / outcomes.len() as f64)
}

pub fn ssr(episodes: &[EpisodeRecord], graph: &SkillGraph, threshold: f64) -> Result<f64> {
    let outcomes = episodes
        .iter()
        .map(|e| episode_succeeds(e, graph, threshold))
        .collect::<Result<Vec<_>>>()?;
    success_rate(&outcomes)
}

/// Foot contact reward `exp(-lambda_c * mismatches)`.
pub fn fgr(contacts: &[bool], reference: &[bool], lambda_c: f64) -> Result<f64> {
    if contacts.len() != reference.len() {
        return Err(MetricsError::DimensionMismatch {
            expected: reference.len(),
            got: contacts.len(),
        });
    }
    let m = contacts.iter().zip(reference).filter(|(a, b)| a != b).count();
    Ok((-lambda_c * m as f64).exp())
}

/// Task reward weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub body_position: f64,
    pub body_position_feet: f64,
    pub vr_3point: f64,
    /// Kept for completeness; frames carry no body orientations, so this
    /// term never enters the normalized reward.
    pub body_rotation: f64,
    pub body_angular_velocity: f64,
    pub body_velocity: f64,
    pub dof_position: f64,
    pub dof_velocity: f64,
    pub fgr: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            body_position: 1.125,
            body_position_feet: 2.3625,
            vr_3point: 1.8,
            body_rotation: 0.5,
            body_angular_velocity: 0.5,
            body_velocity: 0.5,
            dof_position: 0.75,
            dof_velocity: 0.5,
            fgr: 1.8,
        }
    }
}

impl RewardWeights {
    /// Only the contact term.
    pub fn fgr_only() -> Self {
        Self {
            body_position: 0.0,
            body_position_feet: 0.0,
            vr_3point: 0.0,
            body_rotation: 0.0,
            body_angular_velocity: 0.0,
            body_velocity: 0.0,
            dof_position: 0.0,
            dof_velocity: 0.0,
            fgr: 1.0,
        }
    }
}

/// Kernel sharpness per term: a term with mean squared error `e` scores
/// `exp(-lambda * e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelScales {
    /// Per m².
    pub body_position: f64,
    pub body_position_feet: f64,
    pub vr_3point: f64,
    /// Per (rad/s)².
    pub body_angular_velocity: f64,
    /// Per (m/s)².
    pub body_velocity: f64,
    /// Per rad².
    pub dof_position: f64,
    /// Per (rad/s)².
    pub dof_velocity: f64,
    /// Per contact mismatch.
    pub fgr: f64,
}

impl Default for KernelScales {
    fn default() -> Self {
        Self {
            body_position: 10.0,
            body_position_feet: 10.0,
            vr_3point: 10.0,
            body_angular_velocity: 0.5,
            body_velocity: 0.5,
            dof_position: 2.0,
            dof_velocity: 0.05,
            fgr: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSpec {
    pub weights: RewardWeights,
    pub scales: KernelScales,
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let all = [
            w.body_position,
            w.body_position_feet,
            w.vr_3point,
            w.body_rotation,
            w.body_angular_velocity,
            w.body_velocity,
            w.dof_position,
            w.dof_velocity,
            w.fgr,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MetricsError::Config(
                "reward weights must be finite and nonnegative".into(),
            ));
        }
        let s = &self.scales;
        let scales = [
            s.body_position,
            s.body_position_feet,
            s.vr_3point,
            s.body_angular_velocity,
            s.body_velocity,
            s.dof_position,
            s.dof_velocity,
            s.fgr,
        ];
        if scales.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(MetricsError::Config("kernel scales must be finite and positive".into()));
        }
        Ok(())
    }
}

/// Body sets the reward terms are computed over.
#[derive(Debug, Clone, PartialEq)]
pub struct BodySets {
    pub feet: Vec<usize>,
    pub vr: Option<[usize; 3]>,
}

impl BodySets {
    pub fn of(graph: &SkillGraph) -> Self {
        BodySets {
            feet: graph.meta().feet_indices.clone(),
            vr: graph.meta().vr_bodies,
        }
    }
}

fn mean_sq_bodies(a: &[[f64; 3]], b: &[[f64; 3]], set: impl Iterator<Item = usize>) -> f64 {
    let mut n = 0usize;
    let mut sum = 0.0;
    for i in set {
        sum += norm3(a[i], b[i]).powi(2);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Normalized reward of one tick in `[0, 1]`. `prev` is the previous tick's
/// state and reference; without it the body velocity term is left out.
pub fn tick_reward(
    state: &Frame,
    reference: &Frame,
    prev: Option<(&Frame, &Frame)>,
    fps: f64,
    bodies: &BodySets,
    spec: &RewardSpec,
) -> Result<f64> {
    check_dims(state, reference)?;
    let (w, s) = (&spec.weights, &spec.scales);
    let all = 0..state.p.len();
    let mut terms: Vec<(f64, f64)> = vec![
        (
            w.body_position,
            s.body_position * mean_sq_bodies(&state.p, &reference.p, all.clone()),
        ),
        (
            w.body_position_feet,
            s.body_position_feet * mean_sq_bodies(&state.p, &reference.p, bodies.feet.iter().copied()),
        ),
        (
            w.body_angular_velocity,
            s.body_angular_velocity
                * (0..3)
                    .map(|k| (state.root_angvel[k] - reference.root_angvel[k]).powi(2))
                    .sum::<f64>(),
        ),
        (w.dof_position, s.dof_position * mean_sq(&state.q, &reference.q)),
        (w.dof_velocity, s.dof_velocity * mean_sq(&state.dq, &reference.dq)),
    ];
    if let Some(vr) = bodies.vr {
        terms.push((
            w.vr_3point,
            s.vr_3point * mean_sq_bodies(&state.p, &reference.p, vr.into_iter()),
        ));
    }
    if let Some((ps, pr)) = prev {
        check_dims(ps, pr)?;
        let v = |now: &Frame, before: &Frame| -> Vec<[f64; 3]> {
            now.p
                .iter()
                .zip(&before.p)
                .map(|(a, b)| {
                    let d = sub3(*a, *b);
                    [d[0] * fps, d[1] * fps, d[2] * fps]
                })
                .collect()
        };
        let (vs, vr) = (v(state, ps), v(reference, pr));
        terms.push((w.body_velocity, s.body_velocity * mean_sq_bodies(&vs, &vr, all)));
    }
    let contact = fgr(&state.contacts, &reference.contacts, s.fgr)?;
    let total: f64 = terms.iter().map(|(wt, _)| wt).sum::<f64>() + w.fgr;
    if total <= 0.0 {
        return Err(MetricsError::Config("all reward weights are zero".into()));
    }
    let sum: f64 = terms.iter().map(|(wt, e)| wt * (-e).exp()).sum::<f64>() + w.fgr * contact;
    Ok(sum / total)
}

/// Mean normalized reward per tick.
pub fn nr(rec: &EpisodeRecord, graph: &SkillGraph, spec: &RewardSpec) -> Result<f64> {
    spec.validate()?;
    let (first, refs) = reference_frames(rec, graph)?;
    let states: Vec<&Frame> = rec.ticks[first..].iter().map(|t| &t.state).collect();
    nr_aligned(&states, &refs, graph.meta().fps, &BodySets::of(graph), spec)
}

pub fn nr_aligned(states: &[&Frame], refs: &[Frame], fps: f64, bodies: &BodySets, spec: &RewardSpec) -> Result<f64> {
    if states.len() != refs.len() {
        return Err(MetricsError::Alignment(format!(
            "{} states against {} references",
            states.len(),
            refs.len()
        )));
    }
    if states.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum = 0.0;
    for t in 0..states.len() {
        let prev = (t > 0).then(|| (states[t - 1], &refs[t - 1]));
        sum += tick_reward(states[t], &refs[t], prev, fps, bodies, spec)?;
    }
    Ok(sum / states.len() as f64)
}

/// Scores of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub success: bool,
    pub max_error: f64,
    pub errors: TrackingErrors,
    pub nr: f64,
    pub mean_fgr: f64,
}

pub fn score_episode(
    rec: &EpisodeRecord,
    graph: &SkillGraph,
    spec: &RewardSpec,
    threshold: f64,
) -> Result<EpisodeScore> {
    let series = error_series(rec, graph)?;
    let from = rec.first_command_tick().unwrap_or(0);
    let max_error = series
        .iter()
        .filter(|(t, _)| *t >= from)
        .map(|(_, e)| *e)
        .fold(0.0, f64::max);
    let (first, refs) = reference_frames(rec, graph)?;
    let mean_fgr = rec.ticks[first..]
        .iter()
        .zip(&refs)
        .map(|(t, r)| fgr(&t.state.contacts, &r.contacts, spec.scales.fgr))
        .sum::<Result<f64>>()?
        / refs.len() as f64;
    Ok(EpisodeScore {
        success: passes(&series, threshold, from),
        max_error,
        errors: tracking_errors(rec, graph)?,
        nr: nr(rec, graph, spec)?,
        mean_fgr,
    })
}

#[cfg(test)]
mod tests;
