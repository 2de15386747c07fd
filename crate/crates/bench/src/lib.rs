//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use skillgraph::{build_graph, synthesize_dataset, Dataset, RunConfig, SkillGraph};

/// The switching run configuration with `frames` per skill.
pub fn config(frames: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.synth.skills = 4;
    cfg.synth.frames = frames;
    cfg.graph.cross_stride = 5;
    cfg.graph.d_max = Some(3.0);
    cfg
}

pub fn dataset(cfg: &RunConfig) -> Dataset {
    synthesize_dataset(&cfg.synth, cfg.seed).expect("synthetic dataset")
}

pub fn graph(cfg: &RunConfig) -> Arc<SkillGraph> {
    Arc::new(build_graph(&dataset(cfg), &cfg.graph).expect("graph"))
}

/// Skill ids in graph order.
pub fn skills(g: &SkillGraph) -> Vec<String> {
    g.skills().iter().map(|k| k.id.clone()).collect()
}
