//! Directed weighted skill graphs over reference frames and buffer nodes.
//!
//! Reference nodes are numbered skill-major (all frames of the first skill,
//! then the next skill, ...). Buffer nodes follow in segment order. Every
//! edge carries a training weight and a deployment weight.

mod digraph;
mod io;

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion_data::{canonicalize, CanonicalFrame, Dataset};

pub use digraph::Digraph;
pub use io::{load_graph, parse_graph, save_graph};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("restriction selects no reference nodes")]
    EmptyRestriction,
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Reference {
        skill: usize,
        frame: usize,
    },
    /// `position` counts from 1 at the segment head; `length` is the segment's N.
    Buffer {
        segment: usize,
        position: usize,
        length: usize,
        successor: NodeId,
    },
}

impl NodeKind {
    /// Remaining steps to the end of the buffer segment, 0 for reference nodes.
    pub fn kappa(&self) -> usize {
        match *self {
            NodeKind::Reference { .. } => 0,
            NodeKind::Buffer { position, length, .. } => length - position + 1,
        }
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, NodeKind::Reference { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Intra,
    Cross,
    BufferLink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    pub w_train: f64,
    pub w_deploy: f64,
}

/// One cross-skill connection: its head edge leaves `from`, passes through
/// `buffers` (possibly none) and lands on `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSegment {
    pub from: NodeId,
    pub to: NodeId,
    pub d: f64,
    pub buffers: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub cross_stride: usize,
    pub d_max: Option<f64>,
    pub delta_buf: f64,
    pub n_max: usize,
    /// `None` resolves to half the median cross-edge distance at build time.
    pub lambda_sw: Option<f64>,
    /// Weights of the joint position, joint velocity and body position terms.
    pub term_weights: [f64; 3],
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            cross_stride: 10,
            d_max: None,
            delta_buf: 2.0,
            n_max: 30,
            lambda_sw: None,
            term_weights: [1.0, 1.0, 1.0],
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GraphError::Config(m));
        if self.cross_stride < 1 {
            return bad("cross_stride must be at least 1".into());
        }
        if !(self.delta_buf.is_finite() && self.delta_buf > 0.0) {
            return bad(format!("delta_buf must be positive, got {}", self.delta_buf));
        }
        if let Some(l) = self.lambda_sw {
            if !(l.is_finite() && l >= 0.0) {
                return bad(format!("lambda_sw must be nonnegative, got {l}"));
            }
        }
        if let Some(d) = self.d_max {
            if d.is_nan() || d < 0.0 {
                return bad(format!("d_max must be nonnegative, got {d}"));
            }
        }
        if self.term_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad(format!("term weights must be nonnegative, got {:?}", self.term_weights));
        }
        Ok(())
    }

    pub fn lambda_sw(&self) -> f64 {
        self.lambda_sw.unwrap_or(0.0)
    }
}

/// Dataset facts the graph keeps so it can be used without the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub dataset_digest: String,
    pub fps: f64,
    pub joints: usize,
    pub bodies: usize,
    pub feet_indices: Vec<usize>,
    pub vr_bodies: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillNodes {
    pub id: String,
    pub first: NodeId,
    pub frames: Vec<CanonicalFrame>,
}

impl SkillNodes {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn node(&self, frame: usize) -> NodeId {
        NodeId(self.first.0 + frame as u32)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).map(|f| self.node(f))
    }
}

#[derive(Debug)]
pub struct SkillGraph {
    meta: GraphMeta,
    config: GraphConfig,
    skills: Vec<SkillNodes>,
    nodes: Vec<NodeKind>,
    /// Sorted by `from`, stable in insertion order.
    edges: Vec<Edge>,
    out_offsets: Vec<usize>,
    segments: Vec<CrossSegment>,
    deploy: Digraph,
    skill_index: HashMap<String, usize>,
    digest: OnceLock<String>,
}

/// Weighted L1 distance between two canonical frames.
pub fn distance(a: &CanonicalFrame, b: &CanonicalFrame, w: [f64; 3]) -> Result<f64> {
    if a.q.len() != b.q.len() || a.dq.len() != b.dq.len() || a.p_hat.len() != b.p_hat.len() {
        return Err(GraphError::DimensionMismatch(format!(
            "q {}/{}, dq {}/{}, bodies {}/{}",
            a.q.len(),
            b.q.len(),
            a.dq.len(),
            b.dq.len(),
            a.p_hat.len(),
            b.p_hat.len()
        )));
    }
    Ok(distance_unchecked(a, b, w))
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub(crate) fn distance_unchecked(a: &CanonicalFrame, b: &CanonicalFrame, w: [f64; 3]) -> f64 {
    let p: f64 = a
        .p_hat
        .iter()
        .zip(&b.p_hat)
        .map(|(x, y)| (x[0] - y[0]).abs() + (x[1] - y[1]).abs() + (x[2] - y[2]).abs())
        .sum();
    w[0] * l1(&a.q, &b.q) + w[1] * l1(&a.dq, &b.dq) + w[2] * p
}

/// Number of buffer nodes for a gap of size `d`.
pub fn buffer_count(d: f64, cfg: &GraphConfig) -> usize {
    let n = (d / cfg.delta_buf).round();
    if n.is_nan() || n <= 0.0 {
        0
    } else {
        (n as usize).min(cfg.n_max)
    }
}

/// Nearest frame of `frames` to `x`; ties go to the smallest index.
fn argmin_frame(x: &CanonicalFrame, frames: &[CanonicalFrame], w: [f64; 3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (t, f) in frames.iter().enumerate() {
        let d = distance_unchecked(x, f, w);
        if d < best.1 {
            best = (t, d);
        }
    }
    best
}

pub fn build_graph(dataset: &Dataset, cfg: &GraphConfig) -> Result<SkillGraph> {
    cfg.validate()?;
    dataset
        .validate()
        .map_err(|e| GraphError::Config(format!("invalid dataset: {e}")))?;
    let w = cfg.term_weights;
    let mut skills = Vec::with_capacity(dataset.skills.len());
    let mut next = 0u32;
    for s in &dataset.skills {
        skills.push(SkillNodes {
            id: s.skill_id.clone(),
            first: NodeId(next),
            frames: s.frames.iter().map(canonicalize).collect(),
        });
        next += s.frames.len() as u32;
    }

    // (from skill, from frame, to skill) for every ordered pair and stride sample.
    let mut jobs = Vec::new();
    for (p, sp) in skills.iter().enumerate() {
        for (q, _) in skills.iter().enumerate() {
            if p == q {
                continue;
            }
            for i in (0..sp.len()).step_by(cfg.cross_stride) {
                jobs.push((p, i, q));
            }
        }
    }
    let found: Vec<(NodeId, NodeId, f64)> = jobs
        .par_iter()
        .map(|&(p, i, q)| {
            let (j, d) = argmin_frame(&skills[p].frames[i], &skills[q].frames, w);
            (skills[p].node(i), skills[q].node(j), d)
        })
        .collect();
    let kept: Vec<(NodeId, NodeId, f64)> = found
        .into_iter()
        .filter(|&(_, _, d)| cfg.d_max.is_none_or(|m| d <= m))
        .collect();

    let mut resolved = cfg.clone();
    if resolved.lambda_sw.is_none() {
        resolved.lambda_sw = Some(0.5 * median(kept.iter().map(|k| k.2).collect()));
    }
    let lambda = resolved.lambda_sw();

    let mut nodes: Vec<NodeKind> = skills
        .iter()
        .enumerate()
        .flat_map(|(k, s)| (0..s.len()).map(move |frame| NodeKind::Reference { skill: k, frame }))
        .collect();
    let mut edges = Vec::new();
    for s in &skills {
        for t in 0..s.len() - 1 {
            edges.push(Edge {
                from: s.node(t),
                to: s.node(t + 1),
                kind: EdgeKind::Intra,
                w_train: 1.0,
                w_deploy: 1.0,
            });
        }
    }
    let mut segments = Vec::with_capacity(kept.len());
    for (seg, &(from, to, d)) in kept.iter().enumerate() {
        let n = buffer_count(d, &resolved);
        let buffers: Vec<NodeId> = (1..=n)
            .map(|position| {
                nodes.push(NodeKind::Buffer {
                    segment: seg,
                    position,
                    length: n,
                    successor: to,
                });
                NodeId(nodes.len() as u32 - 1)
            })
            .collect();
        let chain: Vec<NodeId> = std::iter::once(from)
            .chain(buffers.iter().copied())
            .chain([to])
            .collect();
        for (k, pair) in chain.windows(2).enumerate() {
            let (kind, w_train, w_deploy) = if k == 0 {
                (EdgeKind::Cross, d, d + lambda)
            } else {
                (EdgeKind::BufferLink, 1.0, 1.0)
            };
            edges.push(Edge {
                from: pair[0],
                to: pair[1],
                kind,
                w_train,
                w_deploy,
            });
        }
        segments.push(CrossSegment { from, to, d, buffers });
    }
    let meta = GraphMeta {
        dataset_digest: dataset.digest(),
        fps: dataset.fps(),
        joints: dataset.joints(),
        bodies: dataset.bodies(),
        feet_indices: dataset.feet_indices.clone(),
        vr_bodies: dataset.vr_bodies,
    };
    Ok(SkillGraph::assemble(meta, resolved, skills, nodes, edges, segments))
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

impl SkillGraph {
    fn assemble(
        meta: GraphMeta,
        config: GraphConfig,
        skills: Vec<SkillNodes>,
        nodes: Vec<NodeKind>,
        mut edges: Vec<Edge>,
        segments: Vec<CrossSegment>,
    ) -> SkillGraph {
        edges.sort_by_key(|e| e.from);
        let mut out_offsets = vec![0usize; nodes.len() + 1];
        for e in &edges {
            out_offsets[e.from.index() + 1] += 1;
        }
        for i in 0..nodes.len() {
            out_offsets[i + 1] += out_offsets[i];
        }
        let deploy = Digraph::new(
            nodes.len(),
            edges.iter().map(|e| (e.from.index(), e.to.index(), e.w_deploy)),
        );
        let skill_index = skills.iter().enumerate().map(|(k, s)| (s.id.clone(), k)).collect();
        SkillGraph {
            meta,
            config,
            skills,
            nodes,
            edges,
            out_offsets,
            segments,
            deploy,
            skill_index,
            digest: OnceLock::new(),
        }
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    /// Build configuration with `lambda_sw` resolved.
    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn lambda_sw(&self) -> f64 {
        self.config.lambda_sw()
    }

    pub fn term_weights(&self) -> [f64; 3] {
        self.config.term_weights
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn buffer_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_reference()).count()
    }

    pub fn node(&self, id: NodeId) -> NodeKind {
        self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, id: NodeId) -> &[Edge] {
        &self.edges[self.out_offsets[id.index()]..self.out_offsets[id.index() + 1]]
    }

    /// Smallest deployment weight over edges `from -> to`, if any.
    pub fn edge_weight(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.deploy.weight(from.index(), to.index())
    }

    pub fn segments(&self) -> &[CrossSegment] {
        &self.segments
    }

    pub fn deploy_digraph(&self) -> &Digraph {
        &self.deploy
    }

    pub fn skills(&self) -> &[SkillNodes] {
        &self.skills
    }

    pub fn skill_index(&self, id: &str) -> Result<usize> {
        self.skill_index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownSkill(id.to_string()))
    }

    pub fn skill(&self, id: &str) -> Result<&SkillNodes> {
        Ok(&self.skills[self.skill_index(id)?])
    }

    /// Reference node for `(skill, frame)`, if it exists.
    pub fn reference(&self, skill: &str, frame: usize) -> Option<NodeId> {
        let s = self.skill(skill).ok()?;
        (frame < s.len()).then(|| s.node(frame))
    }

    /// Canonical frame of a reference node.
    pub fn frame(&self, id: NodeId) -> Option<&CanonicalFrame> {
        match self.node(id) {
            NodeKind::Reference { skill, frame } => Some(&self.skills[skill].frames[frame]),
            NodeKind::Buffer { .. } => None,
        }
    }

    /// Tracking target for a node: its own frame, or for a buffer node the
    /// segment successor's frame, together with the countdown κ.
    pub fn guidance_frame(&self, id: NodeId) -> (&CanonicalFrame, usize) {
        let kind = self.node(id);
        match kind {
            NodeKind::Reference { skill, frame } => (&self.skills[skill].frames[frame], 0),
            NodeKind::Buffer { successor, .. } => {
                (self.frame(successor).expect("successor is a reference"), kind.kappa())
            }
        }
    }

    /// Reference node standing in for `id`: itself or the buffer successor.
    pub fn anchor_reference(&self, id: NodeId) -> NodeId {
        match self.node(id) {
            NodeKind::Reference { .. } => id,
            NodeKind::Buffer { successor, .. } => successor,
        }
    }

    /// Next node along the skill chain, `None` at the skill end or for buffers.
    pub fn intra_next(&self, id: NodeId) -> Option<NodeId> {
        match self.node(id) {
            NodeKind::Reference { skill, frame } if frame + 1 < self.skills[skill].len() => Some(NodeId(id.0 + 1)),
            _ => None,
        }
    }

    /// `skill:frame` for reference nodes, `buf<segment>.<position>` for buffers.
    pub fn label(&self, id: NodeId) -> String {
        match self.node(id) {
            NodeKind::Reference { skill, frame } => format!("{}:{}", self.skills[skill].id, frame),
            NodeKind::Buffer { segment, position, .. } => format!("buf{segment}.{position}"),
        }
    }

    pub fn skill_of(&self, id: NodeId) -> Option<&str> {
        match self.node(id) {
            NodeKind::Reference { skill, .. } => Some(&self.skills[skill].id),
            NodeKind::Buffer { .. } => None,
        }
    }

    /// Nearest reference node to `state` under the full distance, optionally
    /// restricted to some skills. Ties go to the smallest `(skill_id, frame)`.
    pub fn nearest_reference(&self, state: &CanonicalFrame, restrict: Option<&[&str]>) -> Result<(NodeId, f64)> {
        let chosen: Vec<usize> = match restrict {
            None => (0..self.skills.len()).collect(),
            Some(ids) => ids.iter().map(|id| self.skill_index(id)).collect::<Result<_>>()?,
        };
        let mut best: Option<(f64, &str, usize, NodeId)> = None;
        for k in chosen {
            let s = &self.skills[k];
            for (t, f) in s.frames.iter().enumerate() {
                let d = distance(state, f, self.config.term_weights)?;
                let better = match best {
                    None => true,
                    Some((bd, bs, bt, _)) => d < bd || (d == bd && (s.id.as_str(), t) < (bs, bt)),
                };
                if better {
                    best = Some((d, &s.id, t, s.node(t)));
                }
            }
        }
        best.map(|(d, _, _, id)| (id, d)).ok_or(GraphError::EmptyRestriction)
    }

    /// Same reference nodes and intra edges with every cross segment removed.
    pub fn without_cross_edges(&self) -> SkillGraph {
        let reference_count: usize = self.skills.iter().map(|s| s.len()).sum();
        let nodes = self.nodes[..reference_count].to_vec();
        let edges = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Intra)
            .copied()
            .collect();
        SkillGraph::assemble(
            self.meta.clone(),
            self.config.clone(),
            self.skills.clone(),
            nodes,
            edges,
            Vec::new(),
        )
    }

    /// Content digest of the structured export.
    pub fn digest(&self) -> &str {
        self.digest
            .get_or_init(|| crate::formats::digest_bytes(self.to_structured().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_data::{synthesize_dataset, Frame, SkillSequence, SynthConfig};

    fn cf(q: Vec<f64>, dq: Vec<f64>, p: Vec<[f64; 3]>) -> CanonicalFrame {
        CanonicalFrame {
            q,
            dq,
            p_hat: p,
            root_angvel: [0.0; 3],
            contacts: vec![],
        }
    }

    fn small_dataset(skills: usize, frames: usize) -> Dataset {
        let cfg = SynthConfig {
            skills,
            frames,
            ..crate::test_fixtures::compact()
        };
        synthesize_dataset(&cfg, 11).unwrap()
    }

    #[test]
    fn distance_hand_sum() {
        let a = cf(vec![0.0, 0.0], vec![1.0, 1.0], vec![[0.0; 3]]);
        let b = cf(vec![0.1, -0.2], vec![1.0, 1.0], vec![[0.0; 3]]);
        let d = distance(&a, &b, [1.0; 3]).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
        assert_eq!(distance(&a, &a, [1.0; 3]).unwrap(), 0.0);
        assert_eq!(d, distance(&b, &a, [1.0; 3]).unwrap());
        let c = cf(vec![0.0], vec![1.0, 1.0], vec![[0.0; 3]]);
        assert!(matches!(
            distance(&a, &c, [1.0; 3]),
            Err(GraphError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn buffer_count_rule() {
        let cfg = GraphConfig {
            delta_buf: 0.2,
            n_max: 30,
            ..GraphConfig::default()
        };
        assert_eq!(buffer_count(0.0, &cfg), 0);
        assert_eq!(buffer_count(1.0, &cfg), 5);
        assert_eq!(buffer_count(100.0, &cfg), 30);
        let mut last = 0;
        for k in 0..500 {
            let n = buffer_count(k as f64 * 0.013, &cfg);
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn single_skill_is_a_chain() {
        let ds = small_dataset(1, 60);
        let g = build_graph(&ds, &GraphConfig::default()).unwrap();
        assert_eq!(g.node_count(), 60);
        assert_eq!(g.edge_count(), 59);
        assert!(g.edges().iter().all(|e| e.kind == EdgeKind::Intra));
        assert!(g.segments().is_empty());
        assert_eq!(g.lambda_sw(), 0.0);
    }

    #[test]
    fn identical_copies_connect_with_zero_distance() {
        let ds = small_dataset(1, 50);
        let mut copy = ds.skills[0].clone();
        copy.skill_id = "copy".into();
        let ds = Dataset::new(vec![ds.skills[0].clone(), copy], ds.feet_indices.clone(), ds.vr_bodies).unwrap();
        let g = build_graph(&ds, &GraphConfig::default()).unwrap();
        for seg in g.segments() {
            assert_eq!(seg.d, 0.0);
            assert!(seg.buffers.is_empty());
            let (NodeKind::Reference { frame: i, .. }, NodeKind::Reference { frame: j, .. }) =
                (g.node(seg.from), g.node(seg.to))
            else {
                panic!("segment endpoints must be reference nodes");
            };
            // Exhaustive scan: the first frame at distance zero.
            let src = g.frame(seg.from).unwrap();
            let target = g.skill_of(seg.to).unwrap();
            let oracle = g
                .skill(target)
                .unwrap()
                .frames
                .iter()
                .position(|f| distance(src, f, [1.0; 3]).unwrap() == 0.0)
                .unwrap();
            assert_eq!(j, oracle);
            assert!(j <= i);
        }
    }

    #[test]
    fn cross_segment_count_follows_stride() {
        let ds = small_dataset(2, 100);
        let cfg = GraphConfig {
            cross_stride: 10,
            ..GraphConfig::default()
        };
        let g = build_graph(&ds, &cfg).unwrap();
        assert_eq!(g.segments().len(), 2 * 10);
        let heads = g.edges().iter().filter(|e| e.kind == EdgeKind::Cross).count();
        assert_eq!(heads, 20);
    }

    #[test]
    fn d_max_prunes_segments() {
        let ds = small_dataset(2, 100);
        let cfg = GraphConfig {
            d_max: Some(0.0),
            ..GraphConfig::default()
        };
        let g = build_graph(&ds, &cfg).unwrap();
        assert!(g.segments().iter().all(|s| s.d <= 0.0));
    }

    #[test]
    fn buffer_kappa_counts_down() {
        let ds = small_dataset(2, 100);
        let cfg = GraphConfig {
            delta_buf: 1.0,
            ..GraphConfig::default()
        };
        let g = build_graph(&ds, &cfg).unwrap();
        let seg = g
            .segments()
            .iter()
            .find(|s| s.buffers.len() >= 2)
            .expect("a buffered segment");
        let n = seg.buffers.len();
        for (k, b) in seg.buffers.iter().enumerate() {
            assert_eq!(g.node(*b).kappa(), n - k);
            let (frame, kappa) = g.guidance_frame(*b);
            assert_eq!(kappa, n - k);
            assert_eq!(frame, g.frame(seg.to).unwrap());
        }
    }

    #[test]
    fn nearest_reference_exact_and_restricted() {
        let ds = small_dataset(3, 60);
        let g = build_graph(&ds, &GraphConfig::default()).unwrap();
        let s1 = &g.skills()[1];
        let (id, d) = g.nearest_reference(&s1.frames[17], None).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(id, s1.node(17));
        let other = g.skills()[2].id.clone();
        let (id, _) = g.nearest_reference(&s1.frames[17], Some(&[other.as_str()])).unwrap();
        assert_eq!(g.skill_of(id), Some(other.as_str()));
        assert!(matches!(
            g.nearest_reference(&s1.frames[0], Some(&[])),
            Err(GraphError::EmptyRestriction)
        ));
        assert!(matches!(
            g.nearest_reference(&s1.frames[0], Some(&["nope"])),
            Err(GraphError::UnknownSkill(_))
        ));
    }

    #[test]
    fn strip_cross_edges_keeps_chains() {
        let ds = small_dataset(2, 60);
        let g = build_graph(&ds, &GraphConfig::default()).unwrap();
        let h = g.without_cross_edges();
        assert_eq!(h.node_count(), 120);
        assert_eq!(h.edge_count(), 118);
        assert!(h.segments().is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        let ds = small_dataset(1, 40);
        for cfg in [
            GraphConfig {
                cross_stride: 0,
                ..GraphConfig::default()
            },
            GraphConfig {
                delta_buf: 0.0,
                ..GraphConfig::default()
            },
            GraphConfig {
                lambda_sw: Some(-1.0),
                ..GraphConfig::default()
            },
        ] {
            assert!(matches!(build_graph(&ds, &cfg), Err(GraphError::Config(_))));
        }
    }

    #[test]
    fn tie_break_prefers_smaller_skill_id() {
        let frame = Frame {
            q: vec![0.0],
            dq: vec![0.0],
            p: vec![[0.0, 0.0, 1.0]],
            root_xy: [0.0, 0.0],
            root_yaw: 0.0,
            root_angvel: [0.0; 3],
            contacts: vec![false],
        };
        let seq = |id: &str| SkillSequence {
            skill_id: id.into(),
            fps: 30.0,
            frames: vec![frame.clone(); 3],
        };
        let ds = Dataset::new(vec![seq("zeta"), seq("alpha")], vec![0], None).unwrap();
        let g = build_graph(&ds, &GraphConfig::default()).unwrap();
        let (id, d) = g.nearest_reference(&canonicalize(&frame), None).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(g.label(id), "alpha:0");
    }
}
