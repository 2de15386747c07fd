//! Small hand-built datasets shared by unit tests.

use crate::motion_data::{Dataset, Frame, SkillSequence, SynthConfig};

/// One-joint, one-body skills from explicit joint trajectories at 1 fps.
/// Velocities are central differences.
pub fn line_dataset(skills: &[(&str, Vec<f64>)]) -> Dataset {
    let seqs = skills
        .iter()
        .map(|(id, qs)| SkillSequence {
            skill_id: id.to_string(),
            fps: 1.0,
            frames: qs
                .iter()
                .enumerate()
                .map(|(t, &q)| {
                    let (a, b) = (t.saturating_sub(1), (t + 1).min(qs.len() - 1));
                    Frame {
                        q: vec![q],
                        dq: vec![(qs[b] - qs[a]) / (b - a) as f64],
                        p: vec![[0.0, 0.0, 1.0]],
                        root_xy: [0.0, 0.0],
                        root_yaw: 0.0,
                        root_angvel: [0.0; 3],
                        contacts: vec![false],
                    }
                })
                .collect(),
        })
        .collect();
    Dataset::new(seqs, vec![0], None).expect("fixture dataset is valid")
}

/// Synthetic generator settings sized for short test sequences.
pub fn compact() -> SynthConfig {
    SynthConfig {
        hold_frames: 3,
        ramp_frames: 12,
        body_scale: 0.12,
        ..SynthConfig::default()
    }
}
