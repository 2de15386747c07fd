use proptest::prelude::*;

use super::*;
use crate::motion_data::{synthesize_dataset, SynthConfig};
use crate::skill_graph::{build_graph, distance, GraphConfig};
use crate::test_fixtures::line_dataset;

fn ids(v: &[u32]) -> Vec<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}

/// Cheapest simple path cost by exhaustive enumeration, summed from the
/// target end.
fn brute_force(n: usize, edges: &[(usize, usize, f64)], targets: &[usize], src: usize) -> f64 {
    fn walk(at: usize, edges: &[(usize, usize, f64)], targets: &[usize], seen: &mut Vec<bool>) -> f64 {
        if targets.contains(&at) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for &(a, b, w) in edges {
            if a == at && !seen[b] {
                seen[b] = true;
                let rest = walk(b, edges, targets, seen);
                seen[b] = false;
                if rest.is_finite() && w + rest < best {
                    best = w + rest;
                }
            }
        }
        best
    }
    let mut seen = vec![false; n];
    seen[src] = true;
    walk(src, edges, targets, &mut seen)
}

#[test]
fn hand_example_prefers_two_hops() {
    // A=0, B=1, C=2, plus two isolated nodes.
    let g = Digraph::new(5, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 4.0), (3, 4, 1.0)]);
    let t = TargetSet::new(5, ids(&[2])).unwrap();
    let vt = reverse_sssp_digraph(&g, &t);
    assert_eq!(vt.v_star[0], 3.0);
    assert_eq!(vt.next_hop[0], Some(NodeId(1)));
    assert_eq!(vt.v_star[2], 0.0);
    assert_eq!(vt.next_hop[2], None);
    assert_eq!(vt.v_star[3], f64::INFINITY);
    let path = vt.trace(NodeId(0)).unwrap();
    assert_eq!(path, ids(&[0, 1, 2]));
    assert_eq!(path_cost(&g, &path), Some(3.0));
    assert!(matches!(vt.trace(NodeId(4)), Err(PlanError::Unreachable(_))));
}

#[test]
fn equal_cost_hops_prefer_smaller_id() {
    let g = Digraph::new(4, [(0, 2, 1.0), (0, 1, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
    let vt = reverse_sssp_digraph(&g, &TargetSet::new(4, ids(&[3])).unwrap());
    assert_eq!(vt.next_hop[0], Some(NodeId(1)));
}

#[test]
fn target_set_validation() {
    assert!(matches!(TargetSet::new(3, vec![]), Err(PlanError::EmptyTargets)));
    assert!(matches!(TargetSet::new(3, ids(&[5])), Err(PlanError::InvalidNode(_))));
    let t = TargetSet::new(3, ids(&[2, 0, 2])).unwrap();
    assert_eq!(t.nodes(), &ids(&[0, 2])[..]);
}

#[test]
fn prefix_sizes() {
    let ds = line_dataset(&[("a", (0..100).map(|t| t as f64 * 0.01).collect()), ("b", vec![0.0; 30])]);
    let g = build_graph(&ds, &GraphConfig::default()).unwrap();
    assert_eq!(target_prefix(&g, "a", 1.0).unwrap().len(), 100);
    assert_eq!(target_prefix(&g, "a", 0.25).unwrap().len(), 25);
    assert_eq!(target_prefix(&g, "b", 0.1).unwrap().len(), 3);
    assert_eq!(target_prefix(&g, "b", 1e-6).unwrap().len(), 1);
    assert!(matches!(target_prefix(&g, "zzz", 0.5), Err(PlanError::UnknownSkill(_))));
    assert!(matches!(target_prefix(&g, "a", 0.0), Err(PlanError::Config(_))));
    let b = target_prefix(&g, "b", 0.5).unwrap();
    assert!(b.nodes().iter().all(|&n| g.skill_of(n) == Some("b")));
}

/// Two 15-frame skills whose only usable crossing is from the tail of `one`.
fn tail_crossing_graph() -> SkillGraph {
    let one: Vec<f64> = (0..15).map(|t| t as f64 * 0.2).collect();
    let two: Vec<f64> = (0..15).map(|t| 2.8 + t as f64 * 0.01).collect();
    let ds = line_dataset(&[("one", one), ("two", two)]);
    let cfg = GraphConfig {
        cross_stride: 14,
        d_max: Some(0.5),
        lambda_sw: Some(0.25),
        ..GraphConfig::default()
    };
    build_graph(&ds, &cfg).unwrap()
}

#[test]
fn graph_search_follows_skill_then_crosses() {
    let g = tail_crossing_graph();
    assert_eq!(g.node_count(), 30);
    let t = target_prefix(&g, "two", 0.2).unwrap();
    let vt = reverse_sssp(&g, &t);
    let state = g.frame(g.reference("one", 3).unwrap()).unwrap().clone();
    let params = EntryParams {
        a: 0.05,
        b: 10.0,
        k: 3,
        lambda_cost: 1.0,
    };
    let (plan, decision) = plan_graph_search(&g, &t, &state, &params, &vt).unwrap();
    assert!(matches!(decision, EntryDecision::Direct { .. }));
    let labels: Vec<String> = plan.path.iter().map(|&n| g.label(n)).collect();
    let expected: Vec<String> = (3..15)
        .map(|f| format!("one:{f}"))
        .chain(["two:0".to_string()])
        .collect();
    assert_eq!(labels, expected);
    let edges: Vec<(usize, usize, f64)> = g
        .edges()
        .iter()
        .map(|e| (e.from.index(), e.to.index(), e.w_deploy))
        .collect();
    let targets: Vec<usize> = t.nodes().iter().map(|n| n.index()).collect();
    let oracle = brute_force(g.node_count(), &edges, &targets, plan.entry.index());
    assert_eq!(plan.cost, oracle);
    assert_eq!(plan.cost, vt.value(plan.entry));
}

#[test]
fn graph_search_stays_on_commanded_skill() {
    let g = tail_crossing_graph();
    let t = target_prefix(&g, "two", 0.5).unwrap();
    let vt = reverse_sssp(&g, &t);
    let entry = g.reference("two", 4).unwrap();
    let state = g.frame(entry).unwrap().clone();
    let (plan, _) = plan_graph_search(&g, &t, &state, &EntryParams::default(), &vt).unwrap();
    assert_eq!(plan.path, vec![entry]);
    assert_eq!(plan.cost, 0.0);
}

#[test]
fn graph_search_requires_matching_table() {
    let g = tail_crossing_graph();
    let t = target_prefix(&g, "two", 0.5).unwrap();
    let other = target_prefix(&g, "one", 0.5).unwrap();
    let vt = reverse_sssp(&g, &other);
    let state = g.frame(NodeId(0)).unwrap().clone();
    assert!(matches!(
        plan_graph_search(&g, &t, &state, &EntryParams::default(), &vt),
        Err(PlanError::Config(_))
    ));
}

fn synth_graph() -> SkillGraph {
    let ds = synthesize_dataset(
        &SynthConfig {
            skills: 3,
            frames: 80,
            recovery_skill: true,
            ..crate::test_fixtures::compact()
        },
        21,
    )
    .unwrap();
    build_graph(&ds, &GraphConfig::default()).unwrap()
}

#[test]
fn entry_check_thresholds() {
    let g = synth_graph();
    let t = target_prefix(&g, "kick", 0.5).unwrap();
    let exact = g.frame(t.nodes()[10]).unwrap().clone();
    let params = EntryParams {
        a: 0.1,
        b: 5.0,
        k: 3,
        lambda_cost: 1.0,
    };
    match entry_check(&g, &exact, &t, &params, None).unwrap() {
        EntryDecision::Direct { entry, sim } => {
            assert_eq!(entry, t.nodes()[10]);
            assert_eq!(sim, 0.0);
        }
        other => panic!("expected direct, got {other:?}"),
    }

    // Push every joint away from all targets so the best similarity is B + 1.
    let mut far = exact.clone();
    let best = t
        .nodes()
        .iter()
        .map(|&n| similarity(&far, g.frame(n).unwrap(), g.term_weights()))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, 0.0);
    let shift = (params.b + 1.0) / far.q.len() as f64;
    for q in &mut far.q {
        *q += 10.0 + shift;
    }
    let best = t
        .nodes()
        .iter()
        .map(|&n| similarity(&far, g.frame(n).unwrap(), g.term_weights()))
        .fold(f64::INFINITY, f64::min);
    assert!(best >= params.b);
    assert!(matches!(
        entry_check(&g, &far, &t, &params, None).unwrap(),
        EntryDecision::EStop { .. }
    ));

    let bad = EntryParams {
        a: 5.0,
        b: 5.0,
        ..params
    };
    assert!(matches!(
        entry_check(&g, &exact, &t, &bad, None),
        Err(PlanError::Config(_))
    ));
}

#[test]
fn composite_top_k_matches_full_scan() {
    let g = synth_graph();
    let t = target_prefix(&g, "dance", 0.25).unwrap();
    let vt = reverse_sssp(&g, &t);
    let mut state = g.frame(g.reference("kick", 40).unwrap()).unwrap().clone();
    state.q[0] += 0.5;
    let w = g.term_weights();
    let sims: Vec<(NodeId, f64)> = g
        .skills()
        .iter()
        .flat_map(|s| s.nodes())
        .filter(|&n| vt.value(n).is_finite())
        .map(|n| (n, similarity(&state, g.frame(n).unwrap(), w)))
        .collect();
    let best = sims.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let params = EntryParams {
        a: best * 0.5,
        b: best * 3.0,
        k: 3,
        lambda_cost: 1.0,
    };
    let EntryDecision::Composite { candidates } = entry_check(&g, &state, &t, &params, Some(&vt)).unwrap() else {
        panic!("expected composite");
    };
    let mut oracle: Vec<(f64, NodeId)> = sims
        .iter()
        .filter(|s| s.1 < params.b)
        .map(|&(n, _)| {
            let d = distance(&state, g.frame(n).unwrap(), w).unwrap();
            ((d + g.lambda_sw()) + vt.value(n), n)
        })
        .collect();
    oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let got: Vec<NodeId> = candidates.iter().map(|c| c.node).collect();
    let want: Vec<NodeId> = oracle.iter().take(3).map(|o| o.1).collect();
    assert_eq!(got, want);
    assert!(candidates.windows(2).all(|w| w[0].score <= w[1].score));
    assert!(candidates.iter().all(|c| c.sim < params.b));
}

#[test]
fn nn_planner_cases() {
    let g = synth_graph();
    let t = target_prefix(&g, "dance", 0.25).unwrap();
    let rec = target_prefix(&g, "getup", 0.25).unwrap();
    let params = EntryParams {
        a: 0.5,
        b: 6.0,
        k: 3,
        lambda_cost: 1.0,
    };
    let on = g.frame(t.nodes()[12]).unwrap().clone();
    match plan_nn(&g, &t, &on, &params, None).unwrap() {
        NnPlan::Single(p) => {
            assert_eq!(p.path, vec![t.nodes()[12]]);
            assert_eq!(p.planner, PlannerKind::NearestNeighbor);
        }
        other => panic!("expected single plan, got {other:?}"),
    }

    // The fallen start of the recovery skill is far from every dance frame.
    let fallen = g.frame(g.reference("getup", 0).unwrap()).unwrap().clone();
    let best_dance = nearest_by_similarity(&g, &fallen, &t).unwrap().1;
    assert!(
        best_dance >= params.b,
        "fixture needs a distant state, got {best_dance}"
    );
    match plan_nn(&g, &t, &fallen, &params, Some(&rec)).unwrap() {
        NnPlan::TwoStage { first, then } => {
            assert_eq!(g.skill_of(first.entry), Some("getup"));
            assert_eq!(then, t);
        }
        other => panic!("expected two-stage plan, got {other:?}"),
    }
    assert!(matches!(
        plan_nn(&g, &t, &fallen, &params, None),
        Err(PlanError::EStopRequired { .. })
    ));
}

#[test]
fn cache_counts_recomputes() {
    let g = synth_graph();
    let cache = ValueCache::new();
    let t = target_prefix(&g, "kick", 0.25).unwrap();
    let a = cache.get_or_compute(&g, &t);
    let b = cache.get_or_compute(&g, &t);
    assert!(std::sync::Arc::ptr_eq(&a, &b));
    assert_eq!(cache.recomputes(), 1);
    assert_eq!(cache.hits(), 1);
    let u = target_prefix(&g, "dance", 0.25).unwrap();
    cache.get_or_compute(&g, &u);
    assert_eq!(cache.recomputes(), 2);
    assert_eq!(cache.len(), 2);
}

#[test]
fn plan_record_lists_labels_and_costs() {
    let g = tail_crossing_graph();
    let t = target_prefix(&g, "two", 0.2).unwrap();
    let vt = reverse_sssp(&g, &t);
    let plan = reconstruct_path(&g, &vt, g.reference("one", 12).unwrap(), PlannerKind::GraphSearch).unwrap();
    let rec = PlanRecord::new(&g, &plan, None, "two");
    assert_eq!(rec.path, vec!["one:12", "one:13", "one:14", "two:0"]);
    assert_eq!(rec.edge_costs.len(), 3);
    assert_eq!(rec.edge_costs.iter().rev().fold(0.0, |acc, w| w + acc), rec.cost);
    let back: PlanRecord = serde_json::from_str(&rec.to_json()).unwrap();
    assert_eq!(back, rec);
}

fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>, Vec<usize>)> {
    (2usize..=12).prop_flat_map(|n| {
        let edge = (0..n, 0..n, prop_oneof![(0u32..8).prop_map(f64::from), 0.0f64..10.0]);
        (
            Just(n),
            proptest::collection::vec(edge, 0..(n * 3)),
            proptest::collection::vec(0..n, 1..=3),
        )
    })
}

proptest! {
    #[test]
    fn value_table_matches_enumeration((n, edges, targets) in random_graph()) {
        let edges: Vec<_> = edges.into_iter().filter(|e| e.0 != e.1).collect();
        let g = Digraph::new(n, edges.iter().copied());
        let t = TargetSet::new(n, targets.iter().map(|&i| NodeId(i as u32)).collect()).unwrap();
        let vt = reverse_sssp_digraph(&g, &t);
        for u in 0..n {
            let oracle = brute_force(n, &edges, &targets, u);
            prop_assert_eq!(vt.v_star[u], oracle);
            if oracle.is_finite() && !t.contains(NodeId(u as u32)) {
                let h = vt.next_hop[u].unwrap();
                prop_assert_eq!(vt.v_star[u], g.weight(u, h.index()).unwrap() + vt.v_star[h.index()]);
                let path = vt.trace(NodeId(u as u32)).unwrap();
                prop_assert_eq!(path_cost(&g, &path).unwrap(), vt.v_star[u]);
            }
        }
    }

    #[test]
    fn scaling_weights_keeps_next_hops((n, edges, targets) in random_graph(), scale in 0.5f64..4.0) {
        let edges: Vec<_> = edges.into_iter().filter(|e| e.0 != e.1).map(|(a, b, w)| (a, b, w.round())).collect();
        let t = TargetSet::new(n, targets.iter().map(|&i| NodeId(i as u32)).collect()).unwrap();
        let base = reverse_sssp_digraph(&Digraph::new(n, edges.iter().copied()), &t);
        // Powers of two keep integer-weight sums exact, so ties stay ties.
        let s = scale.log2().round().exp2();
        let scaled = reverse_sssp_digraph(&Digraph::new(n, edges.iter().map(|&(a, b, w)| (a, b, w * s))), &t);
        prop_assert_eq!(&base.next_hop, &scaled.next_hop);
    }
}
