use std::sync::Arc;

use proptest::prelude::*;
use skillgraph::scheduler::Mode;
use skillgraph::*;

fn small_dataset(seed: u64) -> Dataset {
    let cfg = SynthConfig {
        skills: 3,
        frames: 90,
        hold_frames: 3,
        ramp_frames: 12,
        ..SynthConfig::default()
    };
    synthesize_dataset(&cfg, seed).unwrap()
}

fn frame_strategy() -> impl Strategy<Value = CanonicalFrame> {
    (
        prop::collection::vec(-3.0..3.0f64, 4),
        prop::collection::vec(-5.0..5.0f64, 4),
        prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 3),
    )
        .prop_map(|(q, dq, p_hat)| CanonicalFrame {
            q,
            dq,
            p_hat,
            root_angvel: [0.0; 3],
            contacts: vec![],
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_metric(a in frame_strategy(), b in frame_strategy(), c in frame_strategy()) {
        let w = [1.0, 0.5, 2.0];
        let ab = distance(&a, &b, w).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(distance(&a, &a, w).unwrap(), 0.0);
        prop_assert!((ab - distance(&b, &a, w).unwrap()).abs() < 1e-12);
        let ac = distance(&a, &c, w).unwrap();
        let cb = distance(&c, &b, w).unwrap();
        prop_assert!(ab <= ac + cb + 1e-9);
    }

    #[test]
    fn buffer_chains_are_well_formed(seed in 0u64..1000, stride in 3usize..20, delta in 0.5..4.0f64) {
        let cfg = GraphConfig { cross_stride: stride, delta_buf: delta, ..GraphConfig::default() };
        let g = build_graph(&small_dataset(seed), &cfg).unwrap();
        for seg in g.segments() {
            prop_assert_eq!(seg.buffers.len(), buffer_count(seg.d, &cfg));
            let mut at = seg.from;
            let head = g.out_edges(at).iter().find(|e| e.kind == EdgeKind::Cross && seg.buffers.first().map_or(e.to == seg.to, |&b| e.to == b));
            prop_assert!(head.is_some());
            for (i, &b) in seg.buffers.iter().enumerate() {
                let out = g.out_edges(b);
                prop_assert_eq!(out.len(), 1);
                prop_assert_eq!(out[0].kind, EdgeKind::BufferLink);
                prop_assert_eq!(g.node(b).kappa(), seg.buffers.len() - i);
                prop_assert_eq!(g.guidance_frame(b).0, g.frame(seg.to).unwrap());
                at = out[0].to;
            }
            if !seg.buffers.is_empty() {
                prop_assert_eq!(at, seg.to);
            }
        }
        let refs: usize = g.skills().iter().map(|s| s.len()).sum();
        prop_assert_eq!(g.node_count(), refs + g.buffer_count());
    }

    #[test]
    fn estop_never_guides(seed in 0u64..500, at in 20u64..120, kick in 0.5..3.0f64, spin in 0.0..4.0f64) {
        let ds = small_dataset(seed);
        let cfg = GraphConfig { cross_stride: 5, ..GraphConfig::default() };
        let g = Arc::new(build_graph(&ds, &cfg).unwrap());
        let joints = ds.joints();
        let mut script = Script::starting_at("kick", 0);
        script.commands.push(ScriptCommand { at_tick: 10, skill: "dance".into() });
        script.disturbances.push(Disturbance {
            at_tick: at,
            delta: StateDelta {
                q: (0..joints).map(|j| if j % 2 == 0 { kick } else { -kick }).collect(),
                root_angvel: [0.0, 0.0, spin],
                ..StateDelta::default()
            },
        });
        let sched = SchedulerConfig { recovery_skill: Some("kungfu".into()), ..SchedulerConfig::default() };
        let rec = run_episode(g.clone(), Arc::new(ValueCache::new()), &sched, &TrackerConfig::default(), &script, 300).unwrap();
        let mut prev = Mode::Tracking;
        for t in &rec.ticks {
            if t.mode == Mode::EStop {
                prop_assert!(t.directive.node().is_none(), "guidance at tick {}", t.tick);
            } else {
                let node = t.directive.node();
                prop_assert!(node.is_some_and(|n| n.index() < g.node_count()));
            }
            // Leaving an e-stop goes through a recovery plan, which may reach
            // its target on the same tick.
            if prev == Mode::EStop && t.mode != Mode::EStop {
                let recovered = t.events.iter().any(|e| {
                    e.mode == Mode::Recovering && matches!(e.kind, EventKind::PlanInstalled { recovery: true, .. })
                });
                prop_assert!(recovered, "{:?} after e-stop at tick {}", t.mode, t.tick);
            }
            prev = t.mode;
            prop_assert!(t.state.is_finite());
        }
    }
}
