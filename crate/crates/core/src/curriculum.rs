//! Course authoring model: milestones, prerequisites, assets and assessments.
//!
//! A curriculum is validated as a document, then compiled into a per-student
//! JTMS template. Each milestone `m` becomes an assumption `passed(m)` and a
//! derived node `unlocked(m)`. In locked mode `unlocked(m)` is justified by the
//! `passed` nodes of all its prerequisites; in open mode it is unconditional.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jtms::{Network, NodeId, NodeKind};
use crate::student::Status;

pub const CURRICULUM_SCHEMA: &str = "curriculum/1";

const SAMPLE_COURSE: &str = include_str!("../data/database_course.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every milestone can be explored in any order.
    Open,
    /// A milestone opens once all of its prerequisites are passed.
    Locked,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Open => "open",
            Mode::Locked => "locked",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = CurriculumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Mode::Open),
            "locked" => Ok(Mode::Locked),
            other => Err(CurriculumError::InvalidMode(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetKind {
    Core,
    Support,
    Challenge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub id: String,
    pub kind: AssetKind,
    pub difficulty: u8,
    pub uri: String,
    pub title: String,
}

fn default_threshold() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub id: String,
    pub title: String,
    pub max_score: f64,
    #[serde(default = "default_threshold")]
    pub pass_threshold_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub prerequisites: Vec<String>,
    #[serde(default)]
    pub assets: Vec<Asset>,
    #[serde(default)]
    pub assessments: Vec<Assessment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub schema: String,
    pub id: String,
    pub title: String,
    pub mode_default: Mode,
    pub milestones: Vec<Milestone>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Violation {
    UnsupportedSchema {
        found: String,
    },
    EmptyId {
        context: String,
    },
    NoEntryPoint,
    DuplicateMilestone {
        milestone: String,
    },
    DuplicateAsset {
        asset: String,
    },
    DuplicateAssessment {
        assessment: String,
    },
    DanglingPrerequisite {
        milestone: String,
        prerequisite: String,
    },
    DuplicatePrerequisite {
        milestone: String,
        prerequisite: String,
    },
    Cycle {
        milestones: Vec<String>,
    },
    NoAssets {
        milestone: String,
    },
    NoAssessments {
        milestone: String,
    },
    DifficultyOutOfRange {
        asset: String,
        difficulty: u8,
    },
    NonPositiveMaxScore {
        assessment: String,
    },
    ThresholdOutOfRange {
        assessment: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnsupportedSchema { found } => {
                write!(
                    f,
                    "unsupported schema {found:?}, expected {CURRICULUM_SCHEMA:?}"
                )
            }
            Violation::EmptyId { context } => write!(f, "empty id in {context}"),
            Violation::NoEntryPoint => {
                f.write_str("no entry point: every milestone has prerequisites")
            }
            Violation::DuplicateMilestone { milestone } => {
                write!(f, "duplicate milestone id {milestone:?}")
            }
            Violation::DuplicateAsset { asset } => write!(f, "duplicate asset id {asset:?}"),
            Violation::DuplicateAssessment { assessment } => {
                write!(f, "duplicate assessment id {assessment:?}")
            }
            Violation::DanglingPrerequisite {
                milestone,
                prerequisite,
            } => write!(
                f,
                "dangling prerequisite {prerequisite:?} on milestone {milestone:?}"
            ),
            Violation::DuplicatePrerequisite {
                milestone,
                prerequisite,
            } => write!(
                f,
                "prerequisite {prerequisite:?} listed twice on milestone {milestone:?}"
            ),
            Violation::Cycle { milestones } => {
                write!(f, "cycle in prerequisites among {}", milestones.join(", "))
            }
            Violation::NoAssets { milestone } => write!(f, "milestone {milestone:?} has no assets"),
            Violation::NoAssessments { milestone } => {
                write!(f, "milestone {milestone:?} has no assessments")
            }
            Violation::DifficultyOutOfRange { asset, difficulty } => {
                write!(
                    f,
                    "asset {asset:?} difficulty {difficulty} is outside 1..=4"
                )
            }
            Violation::NonPositiveMaxScore { assessment } => {
                write!(f, "assessment {assessment:?} max_score must be positive")
            }
            Violation::ThresholdOutOfRange { assessment } => write!(
                f,
                "assessment {assessment:?} pass_threshold_pct must be in (0, 100]"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("malformed curriculum document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("invalid curriculum ({} violations)", .0.violations.len())]
    Invalid(ValidationReport),
    #[error("prerequisite graph has a cycle")]
    CycleDetected,
    #[error("invalid mode {0:?}, expected open or locked")]
    InvalidMode(String),
    #[error("no status given for milestone {0:?}")]
    MissingStatus(String),
}

impl Curriculum {
    pub fn from_json(text: &str) -> Result<Self, CurriculumError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("curriculum serializes")
    }

    /// The shipped database course: Relational Algebra and SQL feed into
    /// "ODB, ORDB, XML".
    pub fn sample() -> Self {
        Self::from_json(SAMPLE_COURSE).expect("bundled sample course parses")
    }

    pub fn milestone(&self, id: &str) -> Option<&Milestone> {
        self.milestones.iter().find(|m| m.id == id)
    }

    pub fn milestone_ids(&self) -> BTreeSet<&str> {
        self.milestones.iter().map(|m| m.id.as_str()).collect()
    }

    /// Milestones that list `id` as a prerequisite, ascending.
    pub fn dependents_of(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .milestones
            .iter()
            .filter(|m| m.prerequisites.iter().any(|p| p == id))
            .map(|m| m.id.as_str())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.schema != CURRICULUM_SCHEMA {
            violations.push(Violation::UnsupportedSchema {
                found: self.schema.clone(),
            });
        }
        if self.id.is_empty() {
            violations.push(Violation::EmptyId {
                context: "curriculum".into(),
            });
        }

        let mut milestone_ids = BTreeSet::new();
        let mut asset_ids = BTreeSet::new();
        let mut assessment_ids = BTreeSet::new();
        for m in &self.milestones {
            if m.id.is_empty() {
                violations.push(Violation::EmptyId {
                    context: format!("milestone {:?}", m.title),
                });
            }
            if !milestone_ids.insert(m.id.as_str()) {
                violations.push(Violation::DuplicateMilestone {
                    milestone: m.id.clone(),
                });
            }
            if m.assets.is_empty() {
                violations.push(Violation::NoAssets {
                    milestone: m.id.clone(),
                });
            }
            if m.assessments.is_empty() {
                violations.push(Violation::NoAssessments {
                    milestone: m.id.clone(),
                });
            }
            for a in &m.assets {
                if a.id.is_empty() {
                    violations.push(Violation::EmptyId {
                        context: format!("asset of milestone {:?}", m.id),
                    });
                }
                if !asset_ids.insert(a.id.as_str()) {
                    violations.push(Violation::DuplicateAsset {
                        asset: a.id.clone(),
                    });
                }
                if !(1..=4).contains(&a.difficulty) {
                    violations.push(Violation::DifficultyOutOfRange {
                        asset: a.id.clone(),
                        difficulty: a.difficulty,
                    });
                }
            }
            for a in &m.assessments {
                if a.id.is_empty() {
                    violations.push(Violation::EmptyId {
                        context: format!("assessment of milestone {:?}", m.id),
                    });
                }
                if !assessment_ids.insert(a.id.as_str()) {
                    violations.push(Violation::DuplicateAssessment {
                        assessment: a.id.clone(),
                    });
                }
                if !(a.max_score.is_finite() && a.max_score > 0.0) {
                    violations.push(Violation::NonPositiveMaxScore {
                        assessment: a.id.clone(),
                    });
                }
                if !(a.pass_threshold_pct > 0.0 && a.pass_threshold_pct <= 100.0) {
                    violations.push(Violation::ThresholdOutOfRange {
                        assessment: a.id.clone(),
                    });
                }
            }
        }

        for m in &self.milestones {
            let mut seen = BTreeSet::new();
            for p in &m.prerequisites {
                if !seen.insert(p.as_str()) {
                    violations.push(Violation::DuplicatePrerequisite {
                        milestone: m.id.clone(),
                        prerequisite: p.clone(),
                    });
                }
                if !milestone_ids.contains(p.as_str()) {
                    violations.push(Violation::DanglingPrerequisite {
                        milestone: m.id.clone(),
                        prerequisite: p.clone(),
                    });
                }
            }
        }

        let on_cycles = self.milestones_on_cycles();
        if !on_cycles.is_empty() {
            violations.push(Violation::Cycle {
                milestones: on_cycles,
            });
        }
        if !self.milestones.iter().any(|m| m.prerequisites.is_empty()) {
            violations.push(Violation::NoEntryPoint);
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<(), CurriculumError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(CurriculumError::Invalid(report))
        }
    }

    /// Prerequisite order, ties broken by ascending milestone id.
    pub fn topological_order(&self) -> Result<Vec<String>, CurriculumError> {
        let known = self.milestone_ids();
        let mut pending: BTreeMap<&str, usize> = BTreeMap::new();
        for m in &self.milestones {
            let count = m
                .prerequisites
                .iter()
                .filter(|p| known.contains(p.as_str()))
                .collect::<BTreeSet<_>>()
                .len();
            pending.insert(m.id.as_str(), count);
        }
        let mut ready: BTreeSet<&str> = pending
            .iter()
            .filter(|(_, &n)| n == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(pending.len());
        while let Some(id) = ready.pop_first() {
            order.push(id.to_owned());
            for dependent in self.dependents_of(id) {
                let n = pending.get_mut(dependent).expect("dependent is known");
                *n -= 1;
                if *n == 0 {
                    ready.insert(dependent);
                }
            }
        }
        if order.len() == pending.len() {
            Ok(order)
        } else {
            Err(CurriculumError::CycleDetected)
        }
    }

    /// Milestones lying on at least one prerequisite cycle, ascending.
    fn milestones_on_cycles(&self) -> Vec<String> {
        let known = self.milestone_ids();
        let prereqs: BTreeMap<&str, BTreeSet<&str>> = self
            .milestones
            .iter()
            .map(|m| {
                let ps = m
                    .prerequisites
                    .iter()
                    .map(String::as_str)
                    .filter(|p| known.contains(p))
                    .collect();
                (m.id.as_str(), ps)
            })
            .collect();
        // m is on a cycle iff m can reach itself through prerequisites.
        let mut out = Vec::new();
        for &start in prereqs.keys() {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<&str> = prereqs[start].iter().copied().collect();
            let mut cyclic = false;
            while let Some(n) = stack.pop() {
                if n == start {
                    cyclic = true;
                    break;
                }
                if seen.insert(n) {
                    stack.extend(prereqs[n].iter().copied());
                }
            }
            if cyclic {
                out.push(start.to_owned());
            }
        }
        out
    }

    pub fn compile(&self, mode: Mode) -> Result<NetworkTemplate, CurriculumError> {
        self.ensure_valid()?;
        let order = self.topological_order()?;
        let mut network = Network::new();
        let mut nodes = BTreeMap::new();
        for id in &order {
            let passed = network.add_node(NodeKind::Assumption);
            let unlocked = network.add_node(NodeKind::Derived);
            nodes.insert(id.clone(), MilestoneNodes { passed, unlocked });
        }
        for id in &order {
            let m = self.milestone(id).expect("ordered milestone exists");
            let in_list: Vec<NodeId> = match mode {
                Mode::Open => Vec::new(),
                Mode::Locked => m.prerequisites.iter().map(|p| nodes[p].passed).collect(),
            };
            network
                .add_justification(nodes[id].unlocked, in_list, [])
                .expect("acyclic prerequisite justifications are monotone");
        }
        Ok(NetworkTemplate {
            mode,
            network,
            nodes,
            order,
        })
    }

    /// Graphviz rendering colored by status: red locked, yellow exploring,
    /// green passed.
    pub fn export_dot(
        &self,
        statuses: &BTreeMap<String, Status>,
    ) -> Result<String, CurriculumError> {
        let mut milestones: Vec<&Milestone> = self.milestones.iter().collect();
        milestones.sort_by(|a, b| a.id.cmp(&b.id));
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", escape(&self.id));
        let _ = writeln!(out, "  node [shape=box, style=filled];");
        for m in &milestones {
            let status = statuses
                .get(&m.id)
                .ok_or_else(|| CurriculumError::MissingStatus(m.id.clone()))?;
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}\", fillcolor=\"{}\"];",
                escape(&m.id),
                escape(&m.title),
                status.color()
            );
        }
        let mut edges: Vec<(&str, &str)> = milestones
            .iter()
            .flat_map(|m| {
                m.prerequisites
                    .iter()
                    .map(move |p| (p.as_str(), m.id.as_str()))
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        for (from, to) in edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", escape(from), escape(to));
        }
        out.push_str("}\n");
        Ok(out)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestoneNodes {
    pub passed: NodeId,
    pub unlocked: NodeId,
}

/// A compiled curriculum: the network each enrollment starts from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkTemplate {
    pub mode: Mode,
    pub network: Network,
    pub nodes: BTreeMap<String, MilestoneNodes>,
    /// Topological order of milestone ids.
    pub order: Vec<String>,
}

impl NetworkTemplate {
    /// The milestone a node was compiled for.
    pub fn milestone_of(&self, node: NodeId) -> Option<&str> {
        self.nodes
            .iter()
            .find(|(_, n)| n.passed == node || n.unlocked == node)
            .map(|(id, _)| id.as_str())
    }
}
