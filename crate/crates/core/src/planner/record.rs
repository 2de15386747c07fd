use serde::{Deserialize, Serialize};

use super::{EntryDecision, Plan, PlannerKind};
use crate::formats::PLAN_SCHEMA;
use crate::skill_graph::SkillGraph;

/// `sgplan/1` dump of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub schema: String,
    pub graph_digest: String,
    pub planner: PlannerKind,
    pub decision: String,
    pub target_skill: String,
    pub entry: String,
    /// `skill:frame` for reference nodes, `buf<segment>.<position>` for buffers.
    pub path: Vec<String>,
    pub edge_costs: Vec<f64>,
    pub cost: f64,
}

impl PlanRecord {
    pub fn new(graph: &SkillGraph, plan: &Plan, decision: Option<&EntryDecision>, target_skill: &str) -> Self {
        PlanRecord {
            schema: PLAN_SCHEMA.to_string(),
            graph_digest: graph.digest().to_string(),
            planner: plan.planner,
            decision: decision.map_or("nearest", |d| d.name()).to_string(),
            target_skill: target_skill.to_string(),
            entry: graph.label(plan.entry),
            path: plan.path.iter().map(|&n| graph.label(n)).collect(),
            edge_costs: plan
                .path
                .windows(2)
                .map(|p| graph.edge_weight(p[0], p[1]).unwrap_or(f64::NAN))
                .collect(),
            cost: plan.cost,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan record serializes")
    }
}
