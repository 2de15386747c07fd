//! `sggraph/1` structured export/import and DOT rendering.
//!
//! The structured format is JSON Lines: a header, one line per reference
//! frame (canonical state included, so the file is self-contained), one per
//! buffer node, one per edge and one per cross segment.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    CrossSegment, Edge, EdgeKind, GraphConfig, GraphError, GraphMeta, NodeId, NodeKind, Result, SkillGraph, SkillNodes,
};
use crate::formats::GRAPH_SCHEMA;
use crate::motion_data::CanonicalFrame;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
];

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    meta: GraphMeta,
    config: GraphConfig,
    skills: Vec<SkillHeader>,
    nodes: usize,
    edges: usize,
    segments: usize,
}

#[derive(Serialize, Deserialize)]
struct SkillHeader {
    id: String,
    frames: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum Line {
    Frame {
        node: NodeId,
        skill: String,
        frame: usize,
        state: CanonicalFrame,
    },
    Buffer {
        node: NodeId,
        segment: usize,
        position: usize,
        length: usize,
        successor: NodeId,
    },
    Edge {
        from: NodeId,
        to: NodeId,
        kind: EdgeKind,
        w_train: f64,
        w_deploy: f64,
    },
    Segment {
        from: NodeId,
        to: NodeId,
        d: f64,
        buffers: Vec<NodeId>,
    },
}

impl SkillGraph {
    /// `sggraph/1` text. Loading it back and exporting again is byte-identical.
    pub fn to_structured(&self) -> String {
        let mut out = String::new();
        let header = Header {
            schema: GRAPH_SCHEMA.to_string(),
            meta: self.meta.clone(),
            config: self.config.clone(),
            skills: self
                .skills
                .iter()
                .map(|s| SkillHeader {
                    id: s.id.clone(),
                    frames: s.len(),
                })
                .collect(),
            nodes: self.nodes.len(),
            edges: self.edges.len(),
            segments: self.segments.len(),
        };
        push_line(&mut out, &header);
        for (i, kind) in self.nodes.iter().enumerate() {
            let node = NodeId(i as u32);
            let line = match *kind {
                NodeKind::Reference { skill, frame } => Line::Frame {
                    node,
                    skill: self.skills[skill].id.clone(),
                    frame,
                    state: self.skills[skill].frames[frame].clone(),
                },
                NodeKind::Buffer {
                    segment,
                    position,
                    length,
                    successor,
                } => Line::Buffer {
                    node,
                    segment,
                    position,
                    length,
                    successor,
                },
            };
            push_line(&mut out, &line);
        }
        for e in &self.edges {
            push_line(
                &mut out,
                &Line::Edge {
                    from: e.from,
                    to: e.to,
                    kind: e.kind,
                    w_train: e.w_train,
                    w_deploy: e.w_deploy,
                },
            );
        }
        for s in &self.segments {
            push_line(
                &mut out,
                &Line::Segment {
                    from: s.from,
                    to: s.to,
                    d: s.d,
                    buffers: s.buffers.clone(),
                },
            );
        }
        out
    }

    /// Graphviz DOT text. Reference nodes are colored by skill, buffer
    /// nodes are dashed boxes and cross-segment heads are red.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph skillgraph {\n  rankdir=LR;\n  node [shape=circle, style=filled];\n");
        for (i, kind) in self.nodes.iter().enumerate() {
            let id = NodeId(i as u32);
            match *kind {
                NodeKind::Reference { skill, .. } => {
                    let _ = writeln!(
                        out,
                        "  n{i} [label=\"{}\", fillcolor=\"{}\"];",
                        self.label(id),
                        PALETTE[skill % PALETTE.len()]
                    );
                }
                NodeKind::Buffer { .. } => {
                    let _ = writeln!(
                        out,
                        "  n{i} [label=\"{} k={}\", shape=box, style=\"filled,dashed\", fillcolor=\"#dddddd\"];",
                        self.label(id),
                        kind.kappa()
                    );
                }
            }
        }
        for e in &self.edges {
            let attrs = match e.kind {
                EdgeKind::Intra => format!("label=\"{}\"", e.w_deploy),
                EdgeKind::Cross => format!("label=\"{:.3}\", color=\"#d62728\"", e.w_deploy),
                EdgeKind::BufferLink => "style=dashed".to_string(),
            };
            let _ = writeln!(out, "  n{} -> n{} [{attrs}];", e.from.0, e.to.0);
        }
        out.push_str("}\n");
        out
    }
}

fn push_line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("graph lines serialize"));
    out.push('\n');
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> GraphError {
    GraphError::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn parse_graph<R: BufRead>(reader: R) -> Result<SkillGraph> {
    let mut lines = reader
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let header: Header = serde_json::from_str(&first.map_err(|e| parse_err(1, e))?).map_err(|e| parse_err(1, e))?;
    if header.schema != GRAPH_SCHEMA {
        return Err(GraphError::Schema(format!(
            "unsupported schema `{}`, expected `{GRAPH_SCHEMA}`",
            header.schema
        )));
    }
    header.config.validate()?;
    let mut skills: Vec<SkillNodes> = Vec::with_capacity(header.skills.len());
    let mut first_id = 0u32;
    for s in &header.skills {
        if s.frames < 2 {
            return Err(GraphError::Schema(format!(
                "skill `{}` has fewer than two frames",
                s.id
            )));
        }
        skills.push(SkillNodes {
            id: s.id.clone(),
            first: NodeId(first_id),
            frames: Vec::with_capacity(s.frames),
        });
        first_id += s.frames as u32;
    }
    let reference_count = first_id as usize;
    let mut nodes: Vec<NodeKind> = Vec::with_capacity(header.nodes);
    let mut edges = Vec::with_capacity(header.edges);
    let mut segments = Vec::with_capacity(header.segments);
    for (i, line) in lines {
        let ln = i + 1;
        let text = line.map_err(|e| parse_err(ln, e))?;
        let parsed: Line = serde_json::from_str(&text).map_err(|e| parse_err(ln, e))?;
        match parsed {
            Line::Frame {
                node,
                skill,
                frame,
                state,
            } => {
                let k = skills
                    .iter()
                    .position(|s| s.id == skill)
                    .ok_or_else(|| GraphError::Schema(format!("line {ln}: unknown skill `{skill}`")))?;
                let s = &mut skills[k];
                if node.index() != nodes.len() || frame != s.frames.len() || s.node(frame) != node {
                    return Err(GraphError::Schema(format!("line {ln}: frame node out of order")));
                }
                if state.q.len() != header.meta.joints
                    || state.dq.len() != header.meta.joints
                    || state.p_hat.len() != header.meta.bodies
                {
                    return Err(GraphError::Schema(format!(
                        "line {ln}: frame dimensions do not match header"
                    )));
                }
                s.frames.push(state);
                nodes.push(NodeKind::Reference { skill: k, frame });
            }
            Line::Buffer {
                node,
                segment,
                position,
                length,
                successor,
            } => {
                if node.index() != nodes.len() || nodes.len() < reference_count {
                    return Err(GraphError::Schema(format!("line {ln}: buffer node out of order")));
                }
                if successor.index() >= reference_count || position == 0 || position > length {
                    return Err(GraphError::Schema(format!("line {ln}: malformed buffer node")));
                }
                nodes.push(NodeKind::Buffer {
                    segment,
                    position,
                    length,
                    successor,
                });
            }
            Line::Edge {
                from,
                to,
                kind,
                w_train,
                w_deploy,
            } => {
                if from.index() >= header.nodes || to.index() >= header.nodes {
                    return Err(GraphError::Schema(format!("line {ln}: edge endpoint out of range")));
                }
                if !(w_train.is_finite() && w_train >= 0.0 && w_deploy.is_finite() && w_deploy >= 0.0) {
                    return Err(GraphError::Schema(format!(
                        "line {ln}: edge weights must be finite and nonnegative"
                    )));
                }
                edges.push(Edge {
                    from,
                    to,
                    kind,
                    w_train,
                    w_deploy,
                });
            }
            Line::Segment { from, to, d, buffers } => segments.push(CrossSegment { from, to, d, buffers }),
        }
    }
    if nodes.len() != header.nodes || edges.len() != header.edges || segments.len() != header.segments {
        return Err(GraphError::Schema(format!(
            "counts nodes={} edges={} segments={} do not match header {}/{}/{}",
            nodes.len(),
            edges.len(),
            segments.len(),
            header.nodes,
            header.edges,
            header.segments
        )));
    }
    if skills
        .iter()
        .zip(&header.skills)
        .any(|(s, h)| s.frames.len() != h.frames)
    {
        return Err(GraphError::Schema("frame counts do not match header".into()));
    }
    if edges.windows(2).any(|w| w[0].from > w[1].from) {
        return Err(GraphError::Schema("edges must be sorted by source node".into()));
    }
    Ok(SkillGraph::assemble(
        header.meta,
        header.config,
        skills,
        nodes,
        edges,
        segments,
    ))
}

pub fn load_graph(path: &Path) -> Result<SkillGraph> {
    let file = fs::File::open(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_graph(BufReader::new(file))
}

pub fn save_graph(graph: &SkillGraph, path: &Path) -> Result<()> {
    fs::write(path, graph.to_structured()).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}
