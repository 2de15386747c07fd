//! Multi-skill motion datasets: frames, validation, the `sgdata/1` file
//! format, heading canonicalization and foot-contact labeling.
//!
//! Frames on disk are in the world frame. Body 0 is the root body; its
//! planar position is expected to coincide with `root_xy`.

mod synth;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, LenientF64, DATASET_SCHEMA};

pub use synth::{synthesize_dataset, SynthConfig};

#[derive(Debug, Error)]
pub enum DataError {
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
    #[error("skill `{0}` has fewer than two frames")]
    EmptySkill(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// One reference or robot state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Joint positions, radians.
    pub q: Vec<f64>,
    /// Joint velocities, rad/s.
    pub dq: Vec<f64>,
    /// Body positions in the world frame, meters.
    pub p: Vec<[f64; 3]>,
    pub root_xy: [f64; 2],
    pub root_yaw: f64,
    /// Root angular velocity, rad/s.
    pub root_angvel: [f64; 3],
    /// One flag per foot in the dataset's feet set.
    pub contacts: Vec<bool>,
}

impl Frame {
    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.dq).all(|v| v.is_finite())
            && self.p.iter().flatten().all(|v| v.is_finite())
            && self.root_xy.iter().all(|v| v.is_finite())
            && self.root_yaw.is_finite()
            && self.root_angvel.iter().all(|v| v.is_finite())
    }
}

/// A frame with global planar translation and heading removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFrame {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    /// Body positions in the root heading frame, meters.
    pub p_hat: Vec<[f64; 3]>,
    pub root_angvel: [f64; 3],
    pub contacts: Vec<bool>,
}

impl CanonicalFrame {
    /// Places the canonical pose back into the world at the given root pose.
    pub fn to_world(&self, root_xy: [f64; 2], root_yaw: f64) -> Frame {
        Frame {
            q: self.q.clone(),
            dq: self.dq.clone(),
            p: place(&self.p_hat, root_xy, root_yaw),
            root_xy,
            root_yaw,
            root_angvel: self.root_angvel,
            contacts: self.contacts.clone(),
        }
    }
}

/// Rotates heading-frame positions by `yaw` about z and translates by `xy`.
pub fn place(p_hat: &[[f64; 3]], xy: [f64; 2], yaw: f64) -> Vec<[f64; 3]> {
    let (s, c) = yaw.sin_cos();
    p_hat
        .iter()
        .map(|b| [c * b[0] - s * b[1] + xy[0], s * b[0] + c * b[1] + xy[1], b[2]])
        .collect()
}

/// Inverse of [`place`].
pub fn unplace(p: &[[f64; 3]], xy: [f64; 2], yaw: f64) -> Vec<[f64; 3]> {
    let (s, c) = yaw.sin_cos();
    p.iter()
        .map(|b| {
            let dx = b[0] - xy[0];
            let dy = b[1] - xy[1];
            [c * dx + s * dy, -s * dx + c * dy, b[2]]
        })
        .collect()
}

/// Removes root planar translation and heading: `p_hat = R(-yaw) (p - root_xy)`.
pub fn canonicalize(frame: &Frame) -> CanonicalFrame {
    CanonicalFrame {
        q: frame.q.clone(),
        dq: frame.dq.clone(),
        p_hat: unplace(&frame.p, frame.root_xy, frame.root_yaw),
        root_angvel: frame.root_angvel,
        contacts: frame.contacts.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSequence {
    pub skill_id: String,
    pub fps: f64,
    pub frames: Vec<Frame>,
}

impl SkillSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub skills: Vec<SkillSequence>,
    /// Body indices of the feet within `Frame::p`.
    pub feet_indices: Vec<usize>,
    /// Head, left wrist, right wrist body indices, when the dataset declares them.
    pub vr_bodies: Option<[usize; 3]>,
}

impl Dataset {
    /// Builds a dataset and checks every structural invariant.
    pub fn new(skills: Vec<SkillSequence>, feet_indices: Vec<usize>, vr_bodies: Option<[usize; 3]>) -> Result<Self> {
        let ds = Dataset {
            skills,
            feet_indices,
            vr_bodies,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn joints(&self) -> usize {
        self.skills[0].frames[0].q.len()
    }

    pub fn bodies(&self) -> usize {
        self.skills[0].frames[0].p.len()
    }

    pub fn fps(&self) -> f64 {
        self.skills[0].fps
    }

    pub fn skill(&self, id: &str) -> Option<&SkillSequence> {
        self.skills.iter().find(|s| s.skill_id == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.skills.is_empty() {
            return Err(DataError::Schema("dataset has no skills".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.skills {
            if !seen.insert(s.skill_id.as_str()) {
                return Err(DataError::Schema(format!("duplicate skill id `{}`", s.skill_id)));
            }
            if s.frames.len() < 2 {
                return Err(DataError::EmptySkill(s.skill_id.clone()));
            }
        }
        let first = &self.skills[0];
        let (j, b, fps) = (first.frames[0].q.len(), first.frames[0].p.len(), first.fps);
        if !(fps.is_finite() && fps > 0.0) {
            return Err(DataError::Schema(format!("fps must be positive, got {fps}")));
        }
        for &f in &self.feet_indices {
            if f >= b {
                return Err(DataError::Schema(format!("foot index {f} out of range for {b} bodies")));
            }
        }
        if let Some(vr) = self.vr_bodies {
            if vr.iter().any(|&i| i >= b) {
                return Err(DataError::Schema(format!("vr body out of range for {b} bodies")));
            }
        }
        for s in &self.skills {
            if s.fps != fps {
                return Err(DataError::Schema(format!(
                    "skill `{}` has fps {} but dataset uses {fps}",
                    s.skill_id, s.fps
                )));
            }
            for (t, fr) in s.frames.iter().enumerate() {
                let at = || format!("skill `{}` frame {t}", s.skill_id);
                if fr.q.len() != j || fr.dq.len() != j {
                    return Err(DataError::Schema(format!(
                        "{}: expected {j} joints, got q={} dq={}",
                        at(),
                        fr.q.len(),
                        fr.dq.len()
                    )));
                }
                if fr.p.len() != b {
                    return Err(DataError::Schema(format!(
                        "{}: expected {b} bodies, got {}",
                        at(),
                        fr.p.len()
                    )));
                }
                if fr.contacts.len() != self.feet_indices.len() {
                    return Err(DataError::Schema(format!(
                        "{}: expected {} contact flags, got {}",
                        at(),
                        self.feet_indices.len(),
                        fr.contacts.len()
                    )));
                }
                if !fr.is_finite() {
                    return Err(DataError::Schema(format!("{}: non-finite value", at())));
                }
            }
        }
        Ok(())
    }

    /// Serializes to `sgdata/1` text.
    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("in-memory write");
        String::from_utf8(out).expect("utf-8 json")
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = Header {
            schema: DATASET_SCHEMA.to_string(),
            joints: self.joints(),
            bodies: self.bodies(),
            feet_indices: self.feet_indices.clone(),
            vr_bodies: self.vr_bodies,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for s in &self.skills {
            for f in &s.frames {
                let line = FrameLineOut {
                    skill: &s.skill_id,
                    fps: s.fps,
                    q: &f.q,
                    dq: &f.dq,
                    p: &f.p,
                    root_xy: f.root_xy,
                    root_yaw: f.root_yaw,
                    root_angvel: f.root_angvel,
                    contacts: &f.contacts,
                };
                serde_json::to_writer(&mut w, &line)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Content digest of the serialized dataset.
    pub fn digest(&self) -> String {
        formats::digest_bytes(self.to_text().as_bytes())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    joints: usize,
    bodies: usize,
    feet_indices: Vec<usize>,
    #[serde(default)]
    vr_bodies: Option<[usize; 3]>,
}

#[derive(Serialize)]
struct FrameLineOut<'a> {
    skill: &'a str,
    fps: f64,
    q: &'a [f64],
    dq: &'a [f64],
    p: &'a [[f64; 3]],
    root_xy: [f64; 2],
    root_yaw: f64,
    root_angvel: [f64; 3],
    contacts: &'a [bool],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLineIn {
    skill: String,
    fps: LenientF64,
    q: Vec<LenientF64>,
    dq: Vec<LenientF64>,
    p: Vec<[LenientF64; 3]>,
    root_xy: [LenientF64; 2],
    root_yaw: LenientF64,
    root_angvel: [LenientF64; 3],
    contacts: Vec<bool>,
}

/// Parses `sgdata/1` text. Frames are grouped by skill in order of first
/// appearance.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            None => {
                return Err(DataError::Parse {
                    line: 1,
                    message: "missing header".into(),
                })
            }
            Some((i, line)) => {
                let line = line.map_err(|e| DataError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| DataError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            }
        }
    };
    if header.schema != DATASET_SCHEMA {
        return Err(DataError::Schema(format!(
            "unsupported schema `{}`, expected `{DATASET_SCHEMA}`",
            header.schema
        )));
    }
    let mut skills: Vec<SkillSequence> = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| DataError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fl: FrameLineIn = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let frame = Frame {
            q: formats::unwrap_floats(&fl.q),
            dq: formats::unwrap_floats(&fl.dq),
            p: formats::unwrap_triples(&fl.p),
            root_xy: [fl.root_xy[0].0, fl.root_xy[1].0],
            root_yaw: fl.root_yaw.0,
            root_angvel: [fl.root_angvel[0].0, fl.root_angvel[1].0, fl.root_angvel[2].0],
            contacts: fl.contacts,
        };
        if frame.q.len() != header.joints || frame.p.len() != header.bodies {
            return Err(DataError::Schema(format!(
                "line {}: dimensions q={} p={} do not match header joints={} bodies={}",
                i + 1,
                frame.q.len(),
                frame.p.len(),
                header.joints,
                header.bodies
            )));
        }
        match skills.iter_mut().find(|s| s.skill_id == fl.skill) {
            Some(s) => {
                if s.fps != fl.fps.0 {
                    return Err(DataError::Schema(format!(
                        "line {}: fps changes within skill `{}`",
                        i + 1,
                        fl.skill
                    )));
                }
                s.frames.push(frame)
            }
            None => skills.push(SkillSequence {
                skill_id: fl.skill,
                fps: fl.fps.0,
                frames: vec![frame],
            }),
        }
    }
    Dataset::new(skills, header.feet_indices, header.vr_bodies)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(BufReader::new(file))
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, ds.to_text()).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Height and speed thresholds for contact self-labeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactThresholds {
    /// Meters.
    pub height: f64,
    /// Meters per second.
    pub speed: f64,
}

impl Default for ContactThresholds {
    fn default() -> Self {
        Self {
            height: 0.05,
            speed: 0.3,
        }
    }
}

/// Labels a foot as in contact when its height is below `height` and its
/// world-frame speed (finite differences at the sequence fps) is below `speed`.
pub fn label_contacts(seq: &SkillSequence, feet: &[usize], th: ContactThresholds) -> Result<SkillSequence> {
    if feet.is_empty() {
        return Err(DataError::Config("no feet indices configured".into()));
    }
    let n = seq.frames.len();
    let mut out = seq.clone();
    for t in 0..n {
        let (a, b) = match (t.checked_sub(1), t + 1 < n) {
            (Some(prev), true) => (prev, t + 1),
            (None, true) => (t, t + 1),
            (Some(prev), false) => (prev, t),
            (None, false) => (t, t),
        };
        let span = (b - a) as f64 / seq.fps;
        out.frames[t].contacts = feet
            .iter()
            .map(|&f| {
                let pos = seq.frames[t].p[f];
                let speed = if span > 0.0 {
                    let (pa, pb) = (seq.frames[a].p[f], seq.frames[b].p[f]);
                    let d = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
                    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() / span
                } else {
                    0.0
                };
                pos[2] < th.height && speed < th.speed
            })
            .collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(j: usize, b: usize, feet: usize) -> Frame {
        Frame {
            q: vec![0.1; j],
            dq: vec![0.0; j],
            p: (0..b).map(|i| [i as f64 * 0.1, 0.2, 0.5]).collect(),
            root_xy: [0.0, 0.2],
            root_yaw: 0.0,
            root_angvel: [0.0; 3],
            contacts: vec![false; feet],
        }
    }

    fn two_skill() -> Dataset {
        let seq = |id: &str| SkillSequence {
            skill_id: id.into(),
            fps: 30.0,
            frames: vec![frame(3, 4, 2), frame(3, 4, 2), frame(3, 4, 2)],
        };
        Dataset::new(vec![seq("a"), seq("b")], vec![2, 3], None).unwrap()
    }

    #[test]
    fn round_trip_two_skills() {
        let ds = two_skill();
        let back = parse_dataset(ds.to_text().as_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.skills.len(), 2);
    }

    #[test]
    fn nan_in_q_is_a_schema_error() {
        let ds = two_skill();
        let text = ds.to_text().replacen("\"q\":[0.1,", "\"q\":[\"NaN\",", 1);
        assert!(matches!(parse_dataset(text.as_bytes()), Err(DataError::Schema(_))));
    }

    #[test]
    fn single_frame_skill_is_rejected() {
        let mut ds = two_skill();
        ds.skills[1].frames.truncate(1);
        let text = ds.to_text();
        assert!(matches!(parse_dataset(text.as_bytes()), Err(DataError::EmptySkill(s)) if s == "b"));
    }

    #[test]
    fn malformed_lines_and_dimension_mismatch() {
        let ds = two_skill();
        let text = ds.to_text();
        let broken = format!("{}{{not json\n", text);
        assert!(matches!(parse_dataset(broken.as_bytes()), Err(DataError::Parse { .. })));
        let mut bad = ds.clone();
        bad.skills[0].frames[1].dq.pop();
        assert!(matches!(bad.validate(), Err(DataError::Schema(_))));
        assert!(matches!(parse_dataset("".as_bytes()), Err(DataError::Parse { .. })));
    }

    #[test]
    fn canonicalize_identity_at_origin() {
        let mut f = frame(2, 3, 0);
        f.root_xy = [0.0, 0.0];
        let c = canonicalize(&f);
        assert_eq!(c.p_hat, f.p);
        assert_eq!(c.q, f.q);
    }

    #[test]
    fn canonicalize_ignores_translation() {
        let f = frame(2, 3, 0);
        let mut g = f.clone();
        for b in &mut g.p {
            b[0] += 5.0;
            b[1] += 3.0;
        }
        g.root_xy = [f.root_xy[0] + 5.0, f.root_xy[1] + 3.0];
        let (a, b) = (canonicalize(&f), canonicalize(&g));
        for (x, y) in a.p_hat.iter().zip(&b.p_hat) {
            for k in 0..3 {
                assert!((x[k] - y[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn canonicalize_ignores_quarter_turn() {
        let f = frame(2, 3, 0);
        let rot = std::f64::consts::FRAC_PI_2;
        // Rotate every position and the root about the world origin by hand.
        let turn = |x: f64, y: f64| (x * rot.cos() - y * rot.sin(), x * rot.sin() + y * rot.cos());
        let mut g = f.clone();
        for b in &mut g.p {
            let (x, y) = turn(b[0], b[1]);
            b[0] = x;
            b[1] = y;
        }
        let (rx, ry) = turn(f.root_xy[0], f.root_xy[1]);
        g.root_xy = [rx, ry];
        g.root_yaw = f.root_yaw + rot;
        let (a, b) = (canonicalize(&f), canonicalize(&g));
        for (x, y) in a.p_hat.iter().zip(&b.p_hat) {
            for k in 0..3 {
                assert!((x[k] - y[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn contact_thresholds() {
        let mut seq = SkillSequence {
            skill_id: "s".into(),
            fps: 30.0,
            frames: vec![frame(1, 3, 2); 3],
        };
        for f in &mut seq.frames {
            f.p[1] = [0.0, 0.0, 0.01];
            f.p[2] = [0.0, 0.0, 0.30];
        }
        let th = ContactThresholds {
            height: 0.05,
            speed: 0.2,
        };
        let out = label_contacts(&seq, &[1, 2], th).unwrap();
        assert!(out.frames.iter().all(|f| f.contacts == vec![true, false]));

        let zero = ContactThresholds {
            height: 0.0,
            speed: 0.2,
        };
        let out = label_contacts(&seq, &[1, 2], zero).unwrap();
        assert!(out.frames.iter().all(|f| f.contacts == vec![false, false]));

        assert!(matches!(label_contacts(&seq, &[], th), Err(DataError::Config(_))));
    }

    #[test]
    fn fast_foot_is_not_in_contact() {
        let mut seq = SkillSequence {
            skill_id: "s".into(),
            fps: 30.0,
            frames: vec![frame(1, 2, 1); 3],
        };
        for (t, f) in seq.frames.iter_mut().enumerate() {
            // 0.1 m per frame at 30 fps = 3 m/s
            f.p[1] = [0.1 * t as f64, 0.0, 0.01];
        }
        let out = label_contacts(&seq, &[1], ContactThresholds::default()).unwrap();
        assert!(out.frames.iter().all(|f| !f.contacts[0]));
    }
}
