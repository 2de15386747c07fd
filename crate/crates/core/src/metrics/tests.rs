use std::sync::Arc;

use super::*;
use crate::motion_data::{place, synthesize_dataset, SynthConfig};
use crate::planner::ValueCache;
use crate::scheduler::SchedulerConfig;
use crate::skill_graph::{build_graph, GraphConfig};
use crate::tracker_sim::{run_episode, Script, ScriptCommand, TrackerConfig};

fn graph() -> Arc<SkillGraph> {
    let ds = synthesize_dataset(
        &SynthConfig {
            skills: 2,
            frames: 80,
            ..crate::test_fixtures::compact()
        },
        5,
    )
    .unwrap();
    Arc::new(build_graph(&ds, &GraphConfig::default()).unwrap())
}

/// Full-rate noiseless tracking, with a command to the current skill at
/// tick 10 so success is judged from there.
fn perfect(g: &Arc<SkillGraph>) -> EpisodeRecord {
    let mut script = Script::starting_at("kick", 0);
    script.commands.push(ScriptCommand {
        at_tick: 10,
        skill: "kick".into(),
    });
    let cfg = TrackerConfig {
        alpha: 1.0,
        ..TrackerConfig::default()
    };
    run_episode(
        g.clone(),
        Arc::new(ValueCache::new()),
        &SchedulerConfig::default(),
        &cfg,
        &script,
        60,
    )
    .unwrap()
}

/// Moves every non-root body by `offset` in the heading frame.
fn displace_limbs(f: &mut Frame, offset: [f64; 3]) {
    let mut p_hat = unplace(&f.p, f.root_xy, f.root_yaw);
    for b in p_hat.iter_mut().skip(1) {
        for k in 0..3 {
            b[k] += offset[k];
        }
    }
    f.p = place(&p_hat, f.root_xy, f.root_yaw);
}

#[test]
fn perfect_tracking_scores_perfectly() {
    let g = graph();
    let rec = perfect(&g);
    let e = tracking_errors(&rec, &g).unwrap();
    assert_eq!(e, TrackingErrors::default());
    assert_eq!(nr(&rec, &g, &RewardSpec::default()).unwrap(), 1.0);
    let score = score_episode(&rec, &g, &RewardSpec::default(), SSR_THRESHOLD).unwrap();
    assert!(score.success);
    assert_eq!(score.max_error, 0.0);
    assert_eq!(score.mean_fgr, 1.0);
    assert_eq!(ssr(&[rec], &g, SSR_THRESHOLD).unwrap(), 1.0);
}

#[test]
fn constant_global_offset() {
    let g = graph();
    let rec = perfect(&g);
    let (first, refs) = reference_frames(&rec, &g).unwrap();
    assert_eq!(first, 0);
    let states: Vec<Frame> = refs
        .iter()
        .map(|r| {
            let mut s = r.clone();
            for b in &mut s.p {
                b[0] += 0.1;
            }
            s
        })
        .collect();
    let e = tracking_errors_aligned(&states, &refs).unwrap();
    assert!((e.e_g_mpbpe - 0.1).abs() < 1e-12);
    assert!(e.e_mpbve < 1e-12);
    assert!(e.e_mpbae < 1e-12);
    assert_eq!(e.e_mpjpe, 0.0);
}

#[test]
fn root_translation_cancels_in_root_relative_error() {
    let g = graph();
    let rec = perfect(&g);
    let (_, refs) = reference_frames(&rec, &g).unwrap();
    let states: Vec<Frame> = refs
        .iter()
        .map(|r| {
            let mut s = r.clone();
            s.root_xy = [r.root_xy[0] + 0.3, r.root_xy[1] - 0.2];
            for b in &mut s.p {
                b[0] += 0.3;
                b[1] -= 0.2;
            }
            s
        })
        .collect();
    let e = tracking_errors_aligned(&states, &refs).unwrap();
    assert!(e.e_mpbpe < 1e-12);
    assert!(e.e_g_mpbpe > 0.3);
}

#[test]
fn velocity_errors_ignore_constant_offsets() {
    let g = graph();
    let rec = perfect(&g);
    let (_, refs) = reference_frames(&rec, &g).unwrap();
    let states: Vec<Frame> = refs
        .iter()
        .map(|r| {
            let mut s = r.clone();
            s.q.iter_mut().for_each(|q| *q += 0.25);
            s.p.iter_mut().for_each(|b| b[2] -= 0.05);
            s
        })
        .collect();
    let e = tracking_errors_aligned(&states, &refs).unwrap();
    assert!(e.e_mpjve < 1e-12 && e.e_mpbve < 1e-12 && e.e_mpbae < 1e-12);
    assert!((e.e_mpjpe - 0.25).abs() < 1e-12);
}

#[test]
fn ssr_threshold_rule() {
    let g = graph();
    let good = perfect(&g);
    let mut bad = good.clone();
    // 12 of 13 bodies off by 0.65 m gives a 0.6 m mean.
    displace_limbs(&mut bad.ticks[30].state, [0.65, 0.0, 0.0]);
    let series = error_series(&bad, &g).unwrap();
    assert!((series[30].1 - 0.6).abs() < 1e-12);
    assert_eq!(ssr(&[good.clone(), bad.clone()], &g, SSR_THRESHOLD).unwrap(), 0.5);
    // Before the first command the error does not count.
    let mut early = good.clone();
    displace_limbs(&mut early.ticks[5].state, [0.65, 0.0, 0.0]);
    assert!(episode_succeeds(&early, &g, SSR_THRESHOLD).unwrap());
    // Looser thresholds never lower the rate.
    let eps = [good, bad, early];
    let mut last = 0.0;
    for th in [0.1, 0.3, 0.5, 0.59, 0.61, 1.0] {
        let r = ssr(&eps, &g, th).unwrap();
        assert!(r >= last);
        last = r;
    }
    assert_eq!(ssr(&[], &g, 0.5), Err(MetricsError::EmptyInput));
}

#[test]
fn fgr_values() {
    assert_eq!(fgr(&[true, false], &[true, false], 1.0).unwrap(), 1.0);
    assert_eq!(fgr(&[true, false], &[false, false], 1.0).unwrap(), (-1.0f64).exp());
    assert_eq!(fgr(&[true, true], &[false, false], 1.0).unwrap(), (-2.0f64).exp());
    assert!((fgr(&[true, true], &[false, false], 1.0).unwrap() - 0.1353352832366127).abs() < 1e-15);
    assert!((fgr(&[false], &[true], 1.0).unwrap() - 0.367879).abs() < 1e-6);
    assert_eq!(
        fgr(&[true], &[true, false], 1.0),
        Err(MetricsError::DimensionMismatch { expected: 2, got: 1 })
    );
}

#[test]
fn nr_reduces_to_fgr_with_contact_weight_only() {
    let g = graph();
    let rec = perfect(&g);
    let (_, refs) = reference_frames(&rec, &g).unwrap();
    let states: Vec<Frame> = refs
        .iter()
        .map(|r| {
            let mut s = r.clone();
            s.contacts[0] = !s.contacts[0];
            s
        })
        .collect();
    let spec = RewardSpec {
        weights: RewardWeights::fgr_only(),
        ..RewardSpec::default()
    };
    let refs_s: Vec<&Frame> = states.iter().collect();
    let v = nr_aligned(&refs_s, &refs, 30.0, &BodySets::of(&g), &spec).unwrap();
    assert!((v - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn infinite_error_zeroes_its_term() {
    let g = graph();
    let rec = perfect(&g);
    let (_, refs) = reference_frames(&rec, &g).unwrap();
    let mut s = refs[3].clone();
    s.q[0] = 1e200;
    let spec = RewardSpec::default();
    let r = tick_reward(&s, &refs[3], None, 30.0, &BodySets::of(&g), &spec).unwrap();
    let w = spec.weights;
    let total = w.body_position
        + w.body_position_feet
        + w.vr_3point
        + w.body_angular_velocity
        + w.dof_position
        + w.dof_velocity
        + w.fgr;
    assert!((r - (total - w.dof_position) / total).abs() < 1e-12);
}

#[test]
fn reward_weights_match_the_table() {
    let w = RewardWeights::default();
    assert_eq!(
        [
            w.body_position,
            w.body_position_feet,
            w.vr_3point,
            w.body_rotation,
            w.body_angular_velocity,
            w.body_velocity,
            w.dof_position,
            w.dof_velocity,
            w.fgr
        ],
        [1.125, 2.3625, 1.8, 0.5, 0.5, 0.5, 0.75, 0.5, 1.8]
    );
    assert_eq!(SSR_THRESHOLD, 0.5);
}

#[test]
fn alignment_failures() {
    let g = graph();
    let rec = perfect(&g);
    let other = Arc::new(g.without_cross_edges());
    assert!(matches!(tracking_errors(&rec, &other), Err(MetricsError::Alignment(_))));
    let (_, refs) = reference_frames(&rec, &g).unwrap();
    assert!(matches!(
        tracking_errors_aligned(&refs[..3], &refs[..2]),
        Err(MetricsError::Alignment(_))
    ));
    assert_eq!(tracking_errors_aligned(&[], &[]), Err(MetricsError::EmptyInput));
    let bad = RewardSpec {
        weights: RewardWeights {
            fgr: -1.0,
            ..RewardWeights::default()
        },
        ..RewardSpec::default()
    };
    assert!(matches!(nr(&rec, &g, &bad), Err(MetricsError::Config(_))));
}
