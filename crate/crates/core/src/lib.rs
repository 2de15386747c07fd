//! Skill graphs over multi-skill motion data.
//!
//! The crate builds a frame-level directed graph from reference motions,
//! plans skill switches over it with a reverse shortest-path value table,
//! schedules per-tick tracking guidance with emergency stop and recovery,
//! and scores simulated episodes with imitation metrics.

pub mod config;
pub mod eval;
pub mod formats;
pub mod metrics;
pub mod motion_data;
pub mod planner;
pub mod scheduler;
pub mod skill_graph;
pub mod tracker_sim;

#[cfg(test)]
mod test_fixtures;

pub use config::{ConfigError, EvalConfig, RunConfig};
pub use eval::{run_eval, EvalError, EvalReport};
pub use metrics::{
    fgr, nr, score_episode, ssr, tracking_errors, EpisodeScore, KernelScales, MetricsError, RewardSpec, RewardWeights,
    TrackingErrors, SSR_THRESHOLD,
};
pub use motion_data::{
    canonicalize, label_contacts, load_dataset, save_dataset, synthesize_dataset, CanonicalFrame, ContactThresholds,
    DataError, Dataset, Frame, SkillSequence, SynthConfig,
};
pub use planner::{
    entry_check, plan_graph_search, plan_nn, reconstruct_path, reverse_sssp, target_prefix, EntryDecision, EntryParams,
    NnPlan, Plan, PlanError, PlannerKind, TargetSet, ValueCache, ValueTable,
};
pub use scheduler::{
    sample_initial_state, Directive, Event, EventKind, Guidance, Mode, SchedError, Scheduler, SchedulerConfig,
    StepOutput, Trigger,
};
pub use skill_graph::{
    buffer_count, build_graph, distance, load_graph, save_graph, EdgeKind, GraphConfig, GraphError, NodeId, NodeKind,
    SkillGraph,
};
pub use tracker_sim::{
    make_difficulty_script, run_episode, step_tracker, Difficulty, Disturbance, EpisodeRecord, EpisodeRunner,
    RobotState, Script, ScriptCommand, ScriptParams, SimError, StartPoint, StateDelta, TrackerConfig,
};
