use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Script, ScriptCommand, SimError, StartPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Number of commanded skill switches.
    pub fn switches(self) -> usize {
        match self {
            Difficulty::Easy => 1,
            Difficulty::Medium => 2,
            Difficulty::Hard => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown level `{other}` (expected easy, medium or hard)")),
        }
    }
}

/// Command timing. Switch `i` lands at `first_tick + i * spacing` plus a
/// uniform jitter in `0..=jitter`; the episode ends `tail` ticks after the
/// last switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptParams {
    pub first_tick: u64,
    pub spacing: u64,
    pub jitter: u64,
    pub tail: u64,
}

impl Default for ScriptParams {
    fn default() -> Self {
        Self {
            first_tick: 60,
            spacing: 300,
            jitter: 60,
            tail: 300,
        }
    }
}

/// Random start skill at frame 0, then `level.switches()` commands, each to a
/// skill different from the one before it.
pub fn make_difficulty_script(
    level: Difficulty,
    skills: &[String],
    params: &ScriptParams,
    seed: u64,
) -> Result<Script, SimError> {
    if skills.len() < 2 {
        return Err(SimError::Config(format!(
            "need at least 2 skills, got {}",
            skills.len()
        )));
    }
    if params.jitter >= params.spacing {
        return Err(SimError::Config(format!(
            "jitter {} must be below spacing {}",
            params.jitter, params.spacing
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = rng.random_range(0..skills.len());
    let start = StartPoint {
        skill: skills[current].clone(),
        frame: 0,
    };
    let mut commands = Vec::new();
    for i in 0..level.switches() {
        let mut next = rng.random_range(0..skills.len() - 1);
        if next >= current {
            next += 1;
        }
        current = next;
        let at_tick = params.first_tick + i as u64 * params.spacing + rng.random_range(0..=params.jitter);
        commands.push(ScriptCommand {
            at_tick,
            skill: skills[current].clone(),
        });
    }
    let last = commands.last().map_or(0, |c| c.at_tick);
    Ok(Script {
        start,
        commands,
        disturbances: Vec::new(),
        estops: Vec::new(),
        end_tick: Some(last + params.tail),
    })
}
