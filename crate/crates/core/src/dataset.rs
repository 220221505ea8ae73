//! Revealed trial observations.

use serde::{Deserialize, Serialize};

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Arm {
    Control = 0,
    Treated = 1,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_treated(treated: bool) -> Self {
        if treated {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

impl From<Arm> for u8 {
    fn from(arm: Arm) -> u8 {
        arm as u8
    }
}

impl TryFrom<u8> for Arm {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treated),
            _ => Err(format!("arm must be 0 or 1, got {v}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Randomized,
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

/// One acquired patient with the arm they received and the revealed outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub patient_id: u64,
    pub covariates: Vec<f64>,
    pub arm: Arm,
    pub outcome: f64,
    /// 1-based acquisition step.
    pub step: usize,
    pub stage: Stage,
    pub split: Split,
}

/// Observations in acquisition order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    observations: Vec<Observation>,
}

impl TrialDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_observations(observations: Vec<Observation>) -> Self {
        Self { observations }
    }

    pub fn push(&mut self, obs: Observation) {
        self.observations.push(obs);
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn observations_mut(&mut self) -> &mut [Observation] {
        &mut self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&Observation> {
        self.observations.iter().filter(|o| o.split == split).collect()
    }

    pub fn stage(&self, stage: Stage) -> Vec<&Observation> {
        self.observations.iter().filter(|o| o.stage == stage).collect()
    }

    /// Training-split observations per arm.
    pub fn train_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for o in self.observations.iter().filter(|o| o.split == Split::Train) {
            counts[o.arm.index()] += 1;
        }
        counts
    }
}
