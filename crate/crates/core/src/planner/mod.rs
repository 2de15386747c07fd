//! Shortest-path-to-set value tables, plan reconstruction, entry checks and
//! the graph-search and nearest-neighbor planners.

mod cache;
mod record;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::fnv64;
use crate::motion_data::CanonicalFrame;
use crate::skill_graph::{distance_unchecked, l1, Digraph, GraphError, NodeId, SkillGraph};

pub use cache::ValueCache;
pub use record::PlanRecord;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("target set is empty")]
    EmptyTargets,
    #[error("node {0} is not in the graph")]
    InvalidNode(NodeId),
    #[error("no path from {0} to the target set")]
    Unreachable(NodeId),
    #[error("best similarity {best_sim} is at or above the e-stop threshold")]
    EStopRequired { best_sim: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T, E = PlanError> = std::result::Result<T, E>;

/// A non-empty, sorted set of graph nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSet {
    nodes: Vec<NodeId>,
    digest: u64,
}

impl TargetSet {
    pub fn new(node_count: usize, mut nodes: Vec<NodeId>) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(PlanError::EmptyTargets);
        }
        if let Some(bad) = nodes.iter().find(|n| n.index() >= node_count) {
            return Err(PlanError::InvalidNode(*bad));
        }
        let digest = fnv64(std::iter::once(nodes.len() as u64).chain(nodes.iter().map(|n| u64::from(n.0))));
        Ok(TargetSet { nodes, digest })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.binary_search(&id).is_ok()
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }
}

/// The first `ceil(tau * T)` reference nodes of `skill`.
pub fn target_prefix(graph: &SkillGraph, skill: &str, tau: f64) -> Result<TargetSet> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(PlanError::Config(format!("tau must be in (0, 1], got {tau}")));
    }
    let s = graph
        .skill(skill)
        .map_err(|_| PlanError::UnknownSkill(skill.to_string()))?;
    // Guard against products like 0.1 * 30 = 3.0000000000000004.
    let count = ((tau * s.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    TargetSet::new(graph.node_count(), s.nodes().take(count.min(s.len())).collect())
}

/// Minimum deployment cost to the target set and the successor achieving it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub v_star: Vec<f64>,
    pub next_hop: Vec<Option<NodeId>>,
    pub target_digest: u64,
    targets: TargetSet,
}

impl ValueTable {
    pub fn targets(&self) -> &TargetSet {
        &self.targets
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.v_star[id.index()]
    }

    pub fn is_reachable(&self, id: NodeId) -> bool {
        self.v_star[id.index()].is_finite()
    }

    /// Follows next hops from `entry` until a target node.
    pub fn trace(&self, entry: NodeId) -> Result<Vec<NodeId>> {
        if entry.index() >= self.v_star.len() {
            return Err(PlanError::InvalidNode(entry));
        }
        if !self.is_reachable(entry) {
            return Err(PlanError::Unreachable(entry));
        }
        let mut path = vec![entry];
        let mut at = entry;
        while !self.targets.contains(at) {
            at = self.next_hop[at.index()].ok_or(PlanError::Unreachable(entry))?;
            path.push(at);
        }
        Ok(path)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra over reversed edges of a plain digraph.
///
/// Among equally short hops the one with the smaller node id wins.
pub fn reverse_sssp_digraph(g: &Digraph, targets: &TargetSet) -> ValueTable {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut next: Vec<Option<NodeId>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::with_capacity(targets.len());
    for t in targets.nodes() {
        dist[t.index()] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: t.0 });
    }
    while let Some(HeapItem { dist: dv, node: v }) = heap.pop() {
        let vi = v as usize;
        if done[vi] || dv > dist[vi] {
            continue;
        }
        done[vi] = true;
        for &(u, w) in g.predecessors(vi) {
            let ui = u as usize;
            if done[ui] {
                continue;
            }
            let cand = w + dv;
            let better = cand < dist[ui] || (cand == dist[ui] && next[ui].is_some_and(|h| v < h.0));
            if better {
                let improved = cand < dist[ui];
                dist[ui] = cand;
                next[ui] = Some(NodeId(v));
                if improved {
                    heap.push(HeapItem { dist: cand, node: u });
                }
            }
        }
    }
    ValueTable {
        v_star: dist,
        next_hop: next,
        target_digest: targets.digest(),
        targets: targets.clone(),
    }
}

pub fn reverse_sssp(graph: &SkillGraph, targets: &TargetSet) -> ValueTable {
    reverse_sssp_digraph(graph.deploy_digraph(), targets)
}

/// Sum of the edge weights along `path`, accumulated from the target end
/// so it reproduces the value table's arithmetic exactly.
pub fn path_cost(g: &Digraph, path: &[NodeId]) -> Option<f64> {
    let mut cost = 0.0;
    for pair in path.windows(2).rev() {
        cost += g.weight(pair[0].index(), pair[1].index())?;
    }
    Some(cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    GraphSearch,
    NearestNeighbor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub entry: NodeId,
    pub path: Vec<NodeId>,
    pub cost: f64,
    pub planner: PlannerKind,
}

impl Plan {
    pub fn digest(&self) -> u64 {
        fnv64(self.path.iter().map(|n| u64::from(n.0)).chain([self.cost.to_bits()]))
    }
}

pub fn reconstruct_path(graph: &SkillGraph, vt: &ValueTable, entry: NodeId, planner: PlannerKind) -> Result<Plan> {
    let path = vt.trace(entry)?;
    let cost = path_cost(graph.deploy_digraph(), &path).ok_or(PlanError::Unreachable(entry))?;
    Ok(Plan {
        entry,
        path,
        cost,
        planner,
    })
}

/// Thresholds and scoring knobs of the entry check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntryParams {
    pub a: f64,
    pub b: f64,
    pub k: usize,
    pub lambda_cost: f64,
}

impl Default for EntryParams {
    fn default() -> Self {
        Self {
            a: 2.0,
            b: 40.0,
            k: 5,
            lambda_cost: 1.0,
        }
    }
}

impl EntryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < self.b) {
            return Err(PlanError::Config(format!(
                "need 0 < A < B, got A={} B={}",
                self.a, self.b
            )));
        }
        if self.k == 0 {
            return Err(PlanError::Config("k must be at least 1".into()));
        }
        if !(self.lambda_cost.is_finite() && self.lambda_cost >= 0.0) {
            return Err(PlanError::Config(format!(
                "lambda_cost must be nonnegative, got {}",
                self.lambda_cost
            )));
        }
        Ok(())
    }
}

/// Pose-velocity similarity: the joint position and velocity terms of the
/// distance, without body positions.
pub fn similarity(x: &CanonicalFrame, v: &CanonicalFrame, w: [f64; 3]) -> f64 {
    w[0] * l1(&x.q, &v.q) + w[1] * l1(&x.dq, &v.dq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node: NodeId,
    pub sim: f64,
    pub d: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntryDecision {
    Direct {
        entry: NodeId,
        sim: f64,
    },
    /// Sorted by score ascending, ties by node id.
    Composite {
        candidates: Vec<Candidate>,
    },
    EStop {
        best_sim: f64,
    },
}

impl EntryDecision {
    pub fn name(&self) -> &'static str {
        match self {
            EntryDecision::Direct { .. } => "direct",
            EntryDecision::Composite { .. } => "composite",
            EntryDecision::EStop { .. } => "estop",
        }
    }
}

/// Decides how to attach `state` to the graph on the way to `targets`.
///
/// The candidate pool is the reference nodes of the target set and, when a
/// value table is supplied, every reference node from which the target set
/// is reachable. Candidates at or above B are never proposed.
pub fn entry_check(
    graph: &SkillGraph,
    state: &CanonicalFrame,
    targets: &TargetSet,
    params: &EntryParams,
    vt: Option<&ValueTable>,
) -> Result<EntryDecision> {
    params.validate()?;
    if state.q.len() != graph.meta().joints || state.dq.len() != graph.meta().joints {
        return Err(GraphError::DimensionMismatch(format!(
            "state has {} joints, graph has {}",
            state.q.len(),
            graph.meta().joints
        ))
        .into());
    }
    let w = graph.term_weights();
    let mut pool: Vec<(NodeId, f64)> = Vec::new();
    match vt {
        Some(vt) => {
            for s in graph.skills() {
                for (t, f) in s.frames.iter().enumerate() {
                    let id = s.node(t);
                    if vt.is_reachable(id) {
                        pool.push((id, similarity(state, f, w)));
                    }
                }
            }
        }
        None => {
            for &id in targets.nodes() {
                if let Some(f) = graph.frame(id) {
                    pool.push((id, similarity(state, f, w)));
                }
            }
        }
    }
    let best = pool
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or(PlanError::EmptyTargets)?;
    if best.1 <= params.a {
        return Ok(EntryDecision::Direct {
            entry: best.0,
            sim: best.1,
        });
    }
    if best.1 >= params.b {
        return Ok(EntryDecision::EStop { best_sim: best.1 });
    }
    let lambda_sw = graph.lambda_sw();
    let mut candidates: Vec<Candidate> = pool
        .into_iter()
        .filter(|&(_, sim)| sim < params.b)
        .map(|(node, sim)| {
            let d = distance_unchecked(state, graph.frame(node).expect("pool holds reference nodes"), w);
            let v = vt.map_or(0.0, |vt| vt.value(node));
            Candidate {
                node,
                sim,
                d,
                score: params.lambda_cost * (d + lambda_sw) + v,
            }
        })
        .collect();
    candidates.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.node.cmp(&b.node)));
    candidates.truncate(params.k);
    Ok(EntryDecision::Composite { candidates })
}

/// Graph-search planner: attach via the entry check, then follow next hops.
pub fn plan_graph_search(
    graph: &SkillGraph,
    targets: &TargetSet,
    state: &CanonicalFrame,
    params: &EntryParams,
    vt: &ValueTable,
) -> Result<(Plan, EntryDecision)> {
    if vt.target_digest != targets.digest() {
        return Err(PlanError::Config(
            "value table was computed for a different target set".into(),
        ));
    }
    let decision = entry_check(graph, state, targets, params, Some(vt))?;
    let entry = match &decision {
        EntryDecision::Direct { entry, .. } => *entry,
        EntryDecision::Composite { candidates } => candidates.first().map(|c| c.node).ok_or(PlanError::EmptyTargets)?,
        EntryDecision::EStop { best_sim } => return Err(PlanError::EStopRequired { best_sim: *best_sim }),
    };
    let plan = reconstruct_path(graph, vt, entry, PlannerKind::GraphSearch)?;
    Ok((plan, decision))
}

#[derive(Debug, Clone, PartialEq)]
pub enum NnPlan {
    Single(Plan),
    /// Reach the recovery targets first, then replan toward `then`.
    TwoStage {
        first: Plan,
        then: TargetSet,
    },
}

/// Nearest target node by similarity; ties go to the smaller node id.
pub fn nearest_by_similarity(graph: &SkillGraph, state: &CanonicalFrame, targets: &TargetSet) -> Option<(NodeId, f64)> {
    let w = graph.term_weights();
    targets
        .nodes()
        .iter()
        .filter_map(|&id| graph.frame(id).map(|f| (id, similarity(state, f, w))))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

/// Nearest-neighbor planner: a single hop onto the closest target frame,
/// or a detour through the recovery targets when the state is too far.
pub fn plan_nn(
    graph: &SkillGraph,
    targets: &TargetSet,
    state: &CanonicalFrame,
    params: &EntryParams,
    recovery: Option<&TargetSet>,
) -> Result<NnPlan> {
    params.validate()?;
    let single = |id: NodeId| Plan {
        entry: id,
        path: vec![id],
        cost: 0.0,
        planner: PlannerKind::NearestNeighbor,
    };
    let (entry, sim) = nearest_by_similarity(graph, state, targets).ok_or(PlanError::EmptyTargets)?;
    if sim < params.b {
        return Ok(NnPlan::Single(single(entry)));
    }
    let Some(rec) = recovery else {
        return Err(PlanError::EStopRequired { best_sim: sim });
    };
    let (rec_entry, rec_sim) = nearest_by_similarity(graph, state, rec).ok_or(PlanError::EmptyTargets)?;
    if rec_sim >= params.b {
        return Err(PlanError::EStopRequired { best_sim: rec_sim });
    }
    Ok(NnPlan::TwoStage {
        first: single(rec_entry),
        then: targets.clone(),
    })
}

#[cfg(test)]
mod tests;
