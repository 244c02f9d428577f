//! Per-student progress.
//!
//! Every enrollment owns a private copy of the compiled network. Passing a
//! milestone enables its `passed` assumption; the network then decides which
//! downstream milestones unlock. Statuses are cached per milestone and are
//! always recomputable from the network alone.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{self, StrugglePolicy};
use crate::assessment::{self, big, decimal, AssessmentError};
use crate::curriculum::{Curriculum, CurriculumError, MilestoneNodes, Mode};
use crate::jtms::Network;

pub const ENROLLMENT_SCHEMA: &str = "enrollment/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Locked,
    Exploring,
    Passed,
}

impl Status {
    pub fn color(self) -> &'static str {
        match self {
            Status::Locked => "red",
            Status::Exploring => "yellow",
            Status::Passed => "green",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Locked => "locked",
            Status::Exploring => "exploring",
            Status::Passed => "passed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mastering level of a passed milestone: 1 Minimum, 2 Average, 3 High,
/// 4 Excellent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct MasteryLevel(u8);

impl MasteryLevel {
    pub const MINIMUM: MasteryLevel = MasteryLevel(1);
    pub const AVERAGE: MasteryLevel = MasteryLevel(2);
    pub const HIGH: MasteryLevel = MasteryLevel(3);
    pub const EXCELLENT: MasteryLevel = MasteryLevel(4);

    pub fn new(level: u8) -> Option<Self> {
        (1..=4).contains(&level).then_some(MasteryLevel(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            1 => "Minimum",
            2 => "Average",
            3 => "High",
            _ => "Excellent",
        }
    }
}

impl TryFrom<u8> for MasteryLevel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        MasteryLevel::new(value).ok_or_else(|| format!("mastering level {value} outside 1..=4"))
    }
}

impl From<MasteryLevel> for u8 {
    fn from(level: MasteryLevel) -> u8 {
        level.0
    }
}

impl fmt::Display for MasteryLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.0, self.name())
    }
}

/// Maps a passing percentage to a mastering level.
///
/// With threshold `t` the band edges sit at `t + 0.30·(100−t)`,
/// `t + 0.60·(100−t)` and `t + 0.86·(100−t)`; at the default `t = 50` that is
/// 65, 80 and 93.
pub fn mastery_from_score(
    score_pct: f64,
    threshold_pct: f64,
) -> Result<MasteryLevel, StudentError> {
    let below = || StudentError::BelowPassThreshold {
        score_pct,
        threshold_pct,
    };
    let score = decimal(score_pct).ok_or_else(below)?;
    let t = decimal(threshold_pct).ok_or_else(below)?;
    if score < t || score > big(100) {
        return Err(below());
    }
    let span = big(100) - &t;
    let edge = |num: i64, den: i64| &t + &span * big(num) / big(den);
    let level = if score >= edge(86, 100) {
        4
    } else if score >= edge(6, 10) {
        3
    } else if score >= edge(3, 10) {
        2
    } else {
        1
    };
    Ok(MasteryLevel(level))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub id: String,
    pub display_name: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub assessment_id: String,
    pub score: f64,
    pub score_pct: f64,
    pub passed: bool,
    pub timestamp: DateTime<Utc>,
}

/// Where a struggling milestone is in its revision plan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionProgress {
    /// Prerequisites already revised and followed by another failure.
    pub completed: Vec<String>,
    /// Current plan head once it has been revised, until the next attempt on
    /// the struggling milestone.
    pub revised_head: Option<String>,
}

impl RevisionProgress {
    pub fn is_idle(&self) -> bool {
        self.completed.is_empty() && self.revised_head.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub status: Status,
    pub mastering_level: Option<MasteryLevel>,
    pub attempts: Vec<AttemptRecord>,
    pub consecutive_failures: u32,
    #[serde(default, skip_serializing_if = "RevisionProgress::is_idle")]
    pub revision: RevisionProgress,
}

impl NodeState {
    fn fresh(status: Status) -> Self {
        NodeState {
            status,
            mastering_level: None,
            attempts: Vec::new(),
            consecutive_failures: 0,
            revision: RevisionProgress::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusChange {
    pub milestone_id: String,
    pub from: Status,
    pub to: Status,
}

/// Result of a mutation on an enrollment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDelta {
    pub enrollment_id: String,
    pub milestone_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attempt: Option<AttemptRecord>,
    /// Level of `milestone_id` after the mutation.
    pub mastering_level: Option<MasteryLevel>,
    pub consecutive_failures: u32,
    /// Every milestone whose status changed, ascending by id.
    pub changes: Vec<StatusChange>,
}

#[derive(Debug, Error)]
pub enum StudentError {
    #[error("unknown milestone {0:?}")]
    UnknownMilestone(String),
    #[error("assessment {assessment:?} does not belong to milestone {milestone:?}")]
    UnknownAssessment {
        milestone: String,
        assessment: String,
    },
    #[error("milestone {0:?} is locked")]
    MilestoneLocked(String),
    #[error("milestone {0:?} is not passed")]
    NotPassed(String),
    #[error("score {score_pct}% is below the pass threshold {threshold_pct}%")]
    BelowPassThreshold { score_pct: f64, threshold_pct: f64 },
    #[error(transparent)]
    Score(#[from] AssessmentError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enrollment {
    pub schema: String,
    pub id: String,
    pub student_id: String,
    pub curriculum_id: String,
    pub mode: Mode,
    pub network: Network,
    pub nodes: BTreeMap<String, MilestoneNodes>,
    /// Topological order of milestone ids.
    pub order: Vec<String>,
    pub states: BTreeMap<String, NodeState>,
}

impl Enrollment {
    pub fn new(
        id: impl Into<String>,
        student_id: impl Into<String>,
        curriculum: &Curriculum,
        mode: Mode,
    ) -> Result<Self, StudentError> {
        let template = curriculum.compile(mode)?;
        let mut enrollment = Enrollment {
            schema: ENROLLMENT_SCHEMA.to_owned(),
            id: id.into(),
            student_id: student_id.into(),
            curriculum_id: curriculum.id.clone(),
            mode,
            network: template.network,
            nodes: template.nodes,
            order: template.order,
            states: BTreeMap::new(),
        };
        let states = enrollment
            .order
            .iter()
            .map(|m| (m.clone(), NodeState::fresh(enrollment.computed_status(m))))
            .collect();
        enrollment.states = states;
        Ok(enrollment)
    }

    pub fn state(&self, milestone: &str) -> Result<&NodeState, StudentError> {
        self.states
            .get(milestone)
            .ok_or_else(|| StudentError::UnknownMilestone(milestone.to_owned()))
    }

    /// Status recomputed from the network.
    pub fn status_of(&self, milestone: &str) -> Result<Status, StudentError> {
        self.state(milestone)?;
        Ok(self.computed_status(milestone))
    }

    pub fn statuses(&self) -> BTreeMap<String, Status> {
        self.states
            .iter()
            .map(|(id, s)| (id.clone(), s.status))
            .collect()
    }

    pub fn levels(&self) -> BTreeMap<String, Option<MasteryLevel>> {
        self.states
            .iter()
            .map(|(id, s)| (id.clone(), s.mastering_level))
            .collect()
    }

    pub fn milestone_of(&self, node: crate::jtms::NodeId) -> Option<&str> {
        self.nodes
            .iter()
            .find(|(_, n)| n.passed == node || n.unlocked == node)
            .map(|(id, _)| id.as_str())
    }

    /// Position of each milestone in the topological order.
    pub fn order_index(&self) -> BTreeMap<&str, usize> {
        self.order
            .iter()
            .enumerate()
            .map(|(i, m)| (m.as_str(), i))
            .collect()
    }

    fn computed_status(&self, milestone: &str) -> Status {
        let nodes = self.nodes[milestone];
        let label = |n| self.network.is_in(n).expect("compiled node exists");
        if label(nodes.passed) {
            Status::Passed
        } else if label(nodes.unlocked) {
            Status::Exploring
        } else {
            Status::Locked
        }
    }

    /// Cached statuses and levels agree with the network; the network is
    /// internally sound.
    pub fn check_consistency(&self) -> Result<(), String> {
        if self.states.len() != self.nodes.len() {
            return Err("state map does not cover the milestone set".into());
        }
        for (id, state) in &self.states {
            let computed = self.computed_status(id);
            if state.status != computed {
                return Err(format!(
                    "milestone {id}: cached {} but network says {computed}",
                    state.status
                ));
            }
            if state.mastering_level.is_some() != (state.status == Status::Passed) {
                return Err(format!(
                    "milestone {id}: level present iff passed is violated"
                ));
            }
        }
        self.network
            .check_well_founded()
            .map_err(|e| e.to_string())?;
        self.network
            .check_dependents_index()
            .map_err(|e| e.to_string())
    }

    fn refresh_statuses(&mut self) -> Vec<StatusChange> {
        let mut changes = Vec::new();
        let ids: Vec<String> = self.states.keys().cloned().collect();
        for id in ids {
            let to = self.computed_status(&id);
            let state = self.states.get_mut(&id).expect("listed id");
            if state.status != to {
                changes.push(StatusChange {
                    milestone_id: id.clone(),
                    from: state.status,
                    to,
                });
                state.status = to;
            }
        }
        changes
    }

    fn delta(
        &self,
        milestone: &str,
        attempt: Option<AttemptRecord>,
        changes: Vec<StatusChange>,
    ) -> StateDelta {
        let state = &self.states[milestone];
        StateDelta {
            enrollment_id: self.id.clone(),
            milestone_id: milestone.to_owned(),
            attempt,
            mastering_level: state.mastering_level,
            consecutive_failures: state.consecutive_failures,
            changes,
        }
    }

    /// Records an assessment attempt.
    ///
    /// Attempts on passed milestones count as revision: a better pass raises
    /// the level, nothing lowers it.
    pub fn record_attempt(
        &mut self,
        curriculum: &Curriculum,
        milestone_id: &str,
        assessment_id: &str,
        score: f64,
        at: DateTime<Utc>,
        policy: &StrugglePolicy,
    ) -> Result<StateDelta, StudentError> {
        let status = self.state(milestone_id)?.status;
        let milestone = curriculum
            .milestone(milestone_id)
            .ok_or_else(|| StudentError::UnknownMilestone(milestone_id.to_owned()))?;
        let assessment = milestone
            .assessments
            .iter()
            .find(|a| a.id == assessment_id)
            .ok_or_else(|| StudentError::UnknownAssessment {
                milestone: milestone_id.to_owned(),
                assessment: assessment_id.to_owned(),
            })?;
        if status == Status::Locked {
            return Err(StudentError::MilestoneLocked(milestone_id.to_owned()));
        }
        let scored = assessment::score(assessment, score)?;
        let level = if scored.passed {
            Some(mastery_from_score(
                scored.score_pct,
                assessment.pass_threshold_pct,
            )?)
        } else {
            None
        };

        // A new attempt on a milestone counts as revising it for every
        // struggling milestone whose plan currently points at it.
        let marks: Vec<String> = self
            .order
            .iter()
            .filter(|m| m.as_str() != milestone_id)
            .filter(|m| {
                let s = &self.states[m.as_str()];
                s.status == Status::Exploring && adaptation::detect_struggle(s, policy)
            })
            .filter(|m| {
                adaptation::revision_head(self, curriculum, m).as_deref() == Some(milestone_id)
            })
            .cloned()
            .collect();
        for m in marks {
            self.states
                .get_mut(&m)
                .expect("listed")
                .revision
                .revised_head = Some(milestone_id.to_owned());
        }

        let record = AttemptRecord {
            assessment_id: assessment_id.to_owned(),
            score,
            score_pct: scored.score_pct,
            passed: scored.passed,
            timestamp: at,
        };
        let nodes = self.nodes[milestone_id];
        let state = self.states.get_mut(milestone_id).expect("checked above");
        state.attempts.push(record.clone());
        match level {
            Some(level) => {
                state.consecutive_failures = 0;
                state.revision = RevisionProgress::default();
                state.mastering_level = Some(state.mastering_level.map_or(level, |l| l.max(level)));
                self.network
                    .enable_assumption(nodes.passed)
                    .expect("compiled passed node is an assumption");
            }
            None => {
                state.consecutive_failures += 1;
                if let Some(head) = state.revision.revised_head.take() {
                    state.revision.completed.push(head);
                }
            }
        }
        let changes = self.refresh_statuses();
        Ok(self.delta(milestone_id, Some(record), changes))
    }

    /// Withdraws a pass; downstream milestones re-lock through the network.
    pub fn revoke_pass(&mut self, milestone_id: &str) -> Result<StateDelta, StudentError> {
        if self.state(milestone_id)?.status != Status::Passed {
            return Err(StudentError::NotPassed(milestone_id.to_owned()));
        }
        let nodes = self.nodes[milestone_id];
        self.network
            .retract_assumption(nodes.passed)
            .expect("compiled passed node is an assumption");
        self.states
            .get_mut(milestone_id)
            .expect("checked above")
            .mastering_level = None;
        let changes = self.refresh_statuses();
        Ok(self.delta(milestone_id, None, changes))
    }

    /// Recompiles under another setup mode, keeping passes and history.
    pub fn set_mode(
        &mut self,
        curriculum: &Curriculum,
        mode: Mode,
    ) -> Result<Vec<StatusChange>, StudentError> {
        let template = curriculum.compile(mode)?;
        let mut network = template.network;
        for (id, state) in &self.states {
            if state.status == Status::Passed {
                network
                    .enable_assumption(template.nodes[id].passed)
                    .expect("compiled passed node is an assumption");
            }
        }
        self.mode = mode;
        self.network = network;
        self.nodes = template.nodes;
        self.order = template.order;
        Ok(self.refresh_statuses())
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("enrollment serializes")
    }
}
