use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{label_contacts, place, ContactThresholds, DataError, Dataset, Frame, Result, SkillSequence};

const NAMES: [&str; 8] = ["kick", "dance", "kungfu", "squat", "wave", "lunge", "spin", "bow"];

/// Rest layout of the first bodies in the heading frame. Index 0 is the root.
const REST: [[f64; 3]; 13] = [
    [0.0, 0.0, 0.9],   // pelvis
    [0.0, 0.0, 1.15],  // torso
    [0.0, 0.0, 1.5],   // head
    [0.1, 0.35, 1.0],  // left wrist
    [0.1, -0.35, 1.0], // right wrist
    [0.0, 0.1, 0.04],  // left foot
    [0.0, -0.1, 0.04], // right foot
    [0.0, 0.3, 1.15],  // left elbow
    [0.0, -0.3, 1.15], // right elbow
    [0.02, 0.1, 0.5],  // left knee
    [0.02, -0.1, 0.5], // right knee
    [0.0, 0.2, 1.35],  // left shoulder
    [0.0, -0.2, 1.35], // right shoulder
];
const FEET: [usize; 2] = [5, 6];
const VR: [usize; 3] = [2, 3, 4];

/// Generator settings for synthetic multi-skill datasets.
///
/// Every regular skill holds a shared neutral pose, ramps out to a
/// skill-specific extreme posture with an oscillation on top, and ramps back
/// to the neutral pose plus a small skill-specific offset. The optional
/// recovery skill (`getup`) starts from a far "fallen" posture and ends near
/// the neutral pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub skills: usize,
    pub frames: usize,
    pub joints: usize,
    pub bodies: usize,
    pub fps: f64,
    pub hold_frames: usize,
    pub ramp_frames: usize,
    /// Neutral-to-extreme joint excursion, radians.
    pub amplitude: f64,
    /// Standard deviation of the joint-to-body coupling, meters.
    pub body_scale: f64,
    pub recovery_skill: bool,
    pub contacts: ContactThresholds,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            skills: 4,
            frames: 300,
            joints: 23,
            bodies: 13,
            fps: 30.0,
            hold_frames: 6,
            ramp_frames: 30,
            amplitude: 1.0,
            body_scale: 0.3,
            recovery_skill: false,
            contacts: ContactThresholds::default(),
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(DataError::Config(m));
        if self.skills == 0 && !self.recovery_skill {
            return bad("at least one skill required".into());
        }
        if self.joints < 3 {
            return bad(format!("need at least 3 joints, got {}", self.joints));
        }
        if self.bodies < 7 {
            return bad(format!("need at least 7 bodies, got {}", self.bodies));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.ramp_frames == 0 {
            return bad("ramp_frames must be at least 1".into());
        }
        if self.frames < 2 * (self.hold_frames + self.ramp_frames) + 2 {
            return bad(format!(
                "{} frames cannot hold two ramps of {} and holds of {}",
                self.frames, self.ramp_frames, self.hold_frames
            ));
        }
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        (0..self.skills)
            .map(|k| NAMES.get(k).map_or_else(|| format!("skill{k}"), |s| s.to_string()))
            .collect()
    }
}

struct Body {
    rest: Vec<[f64; 3]>,
    /// coupling[b][axis][j]
    coupling: Vec<[Vec<f64>; 3]>,
    neutral_sin: Vec<f64>,
}

impl Body {
    fn pose(&self, q: &[f64]) -> Vec<[f64; 3]> {
        let ds: Vec<f64> = q.iter().zip(&self.neutral_sin).map(|(x, s0)| x.sin() - s0).collect();
        self.rest
            .iter()
            .zip(&self.coupling)
            .enumerate()
            .map(|(b, (rest, m))| {
                let mut out = *rest;
                for axis in 0..3 {
                    let v: f64 = m[axis].iter().zip(&ds).map(|(c, d)| c * d).sum();
                    out[axis] += v;
                }
                if FEET.contains(&b) {
                    // Feet never go below their rest height.
                    let lift: f64 = m[2].iter().zip(&ds).map(|(c, d)| c * d).sum();
                    out[2] = rest[2] + 0.5 * lift.abs();
                }
                out
            })
            .collect()
    }
}

fn ramp(x: f64) -> f64 {
    0.5 * (1.0 - (PI * x.clamp(0.0, 1.0)).cos())
}

/// Builds a deterministic synthetic dataset for `seed`.
///
/// `dq` is the central finite difference of `q` at the dataset fps
/// (one-sided at the sequence ends).
pub fn synthesize_dataset(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nj, nb) = (cfg.joints, cfg.bodies);
    let neutral: Vec<f64> = (0..nj).map(|_| rng.random_range(-0.1..0.1)).collect();
    let normal = Normal::new(0.0, cfg.body_scale).map_err(|e| DataError::Config(e.to_string()))?;
    let rest: Vec<[f64; 3]> = (0..nb)
        .map(|b| {
            REST.get(b)
                .copied()
                .unwrap_or([0.05 * b as f64, 0.0, 0.2 + 0.05 * b as f64])
        })
        .collect();
    let coupling: Vec<[Vec<f64>; 3]> = (0..nb)
        .map(|b| {
            let mut row = || (0..nj).map(|_| normal.sample(&mut rng)).collect::<Vec<f64>>();
            let (x, y, z) = (row(), row(), row());
            if b == 0 {
                // The root stays on the vertical axis of the heading frame.
                [vec![0.0; nj], vec![0.0; nj], z]
            } else {
                [x, y, z]
            }
        })
        .collect();
    let body = Body {
        rest,
        coupling,
        neutral_sin: neutral.iter().map(|x| x.sin()).collect(),
    };

    let offset_for = |slot: usize| -> Vec<f64> {
        let mut d = vec![0.0; nj];
        for k in 0..3 {
            d[(3 * slot + k) % nj] = 0.06;
        }
        d
    };

    let mut skills = Vec::new();
    for (k, name) in cfg.names().into_iter().enumerate() {
        let dir: Vec<f64> = (0..nj).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let freq = rng.random_range(0.6..1.2);
        let phase: Vec<f64> = (0..nj).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let end_offset = offset_for(k);
        let (h, r, n) = (cfg.hold_frames, cfg.ramp_frames, cfg.frames);
        let q: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                let tau = t as f64 / cfg.fps;
                let down_start = n - h - r;
                let s = if t < h + r {
                    ramp((t as f64 - h as f64) / r as f64)
                } else if t < down_start {
                    1.0
                } else {
                    1.0 - ramp((t - down_start) as f64 / r as f64)
                };
                let e = if t < down_start {
                    0.0
                } else {
                    ramp((t - down_start) as f64 / r as f64)
                };
                (0..nj)
                    .map(|j| {
                        let osc = 0.25 * (2.0 * PI * freq * tau + phase[j]).sin();
                        neutral[j] + s * (cfg.amplitude * dir[j] + osc) + e * end_offset[j]
                    })
                    .collect()
            })
            .collect();
        skills.push(build_sequence(name, q, cfg, &body, &mut rng));
    }

    if cfg.recovery_skill {
        let dir: Vec<f64> = (0..nj).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let fallen: Vec<f64> = neutral.iter().zip(&dir).map(|(n0, d)| n0 + 2.0 * d).collect();
        let end_offset = offset_for(cfg.skills);
        let (h, n) = (cfg.hold_frames, cfg.frames);
        let span = (n - 2 * h) as f64;
        let q: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                let b = ramp((t as f64 - h as f64) / span);
                (0..nj)
                    .map(|j| fallen[j] + b * (neutral[j] + end_offset[j] - fallen[j]))
                    .collect()
            })
            .collect();
        skills.push(build_sequence("getup".into(), q, cfg, &body, &mut rng));
    }

    let feet = FEET.to_vec();
    let skills = skills
        .into_iter()
        .map(|s| label_contacts(&s, &feet, cfg.contacts))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(skills, feet, Some(VR))
}

fn build_sequence(
    name: String,
    q: Vec<Vec<f64>>,
    cfg: &SynthConfig,
    body: &Body,
    rng: &mut ChaCha8Rng,
) -> SkillSequence {
    let n = q.len();
    let fps = cfg.fps;
    let dq = central_differences(&q, fps);
    let yaw0 = rng.random_range(-PI..PI);
    let yaw_rate = rng.random_range(-0.3..0.3);
    let speed = rng.random_range(0.0..0.5);
    let mut xy = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let tau = t as f64 / fps;
        let yaw = yaw0 + yaw_rate * tau;
        let p_hat = body.pose(&q[t]);
        frames.push(Frame {
            q: q[t].clone(),
            dq: dq[t].clone(),
            p: place(&p_hat, xy, yaw),
            root_xy: xy,
            root_yaw: yaw,
            root_angvel: [0.2 * (2.0 * PI * tau).sin(), 0.1 * (2.0 * PI * tau).cos(), yaw_rate],
            contacts: vec![false; FEET.len()],
        });
        xy[0] += speed * yaw.cos() / fps;
        xy[1] += speed * yaw.sin() / fps;
    }
    SkillSequence {
        skill_id: name,
        fps,
        frames,
    }
}

/// Central differences scaled by `fps`; forward/backward at the ends.
pub(crate) fn central_differences(q: &[Vec<f64>], fps: f64) -> Vec<Vec<f64>> {
    let n = q.len();
    (0..n)
        .map(|t| {
            let (a, b) = match (t, t + 1 == n) {
                (0, _) => (0, 1.min(n - 1)),
                (_, true) => (t - 1, t),
                _ => (t - 1, t + 1),
            };
            let span = (b - a) as f64;
            q[a].iter()
                .zip(&q[b])
                .map(|(x0, x1)| if span > 0.0 { (x1 - x0) * fps / span } else { 0.0 })
                .collect()
        })
        .collect()
}
