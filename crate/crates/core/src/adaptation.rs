//! Turns an enrollment's network, mastery map and attempt history into
//! ordered, explained recommendations.
//!
//! Composition order of [`recommend`]:
//! 1. every struggling, exploring milestone gets one `revise_prerequisite`
//!    for the head of its revision plan, or `extra_support` once the plan is
//!    empty or exhausted;
//! 2. every other exploring milestone gets one `study_next`;
//! 3. every milestone passed at level 4 with challenge assets gets one
//!    `challenge`.
//!
//! Within each group milestones follow the curriculum's topological order.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{AssetKind, Curriculum, Milestone};
use crate::student::{Enrollment, MasteryLevel, NodeState, Status};

pub const RECOMMENDATION_SCHEMA: &str = "recommendation/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrugglePolicy {
    /// Consecutive failures on a milestone that count as being stuck.
    pub k_failures: u32,
}

impl Default for StrugglePolicy {
    fn default() -> Self {
        StrugglePolicy { k_failures: 2 }
    }
}

impl StrugglePolicy {
    pub fn new(k_failures: u32) -> Result<Self, AdaptationError> {
        if k_failures == 0 {
            return Err(AdaptationError::InvalidPolicy);
        }
        Ok(StrugglePolicy { k_failures })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdaptationError {
    #[error("unknown milestone {0:?}")]
    UnknownMilestone(String),
    #[error("milestone {0:?} is not struggling")]
    NotStruggling(String),
    #[error("milestone {0:?} has no passed prerequisites to revise")]
    NoPrerequisites(String),
    #[error("k_failures must be at least 1")]
    InvalidPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationKind {
    StudyNext,
    RevisePrerequisite,
    ExtraSupport,
    Challenge,
}

impl RecommendationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecommendationKind::StudyNext => "study_next",
            RecommendationKind::RevisePrerequisite => "revise_prerequisite",
            RecommendationKind::ExtraSupport => "extra_support",
            RecommendationKind::Challenge => "challenge",
        }
    }
}

impl fmt::Display for RecommendationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub kind: RecommendationKind,
    pub milestone: String,
    pub assets: Vec<String>,
    pub rationale: String,
    /// 1-based position in the list.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub schema: String,
    pub enrollment_id: String,
    pub items: Vec<Recommendation>,
}

pub fn detect_struggle(state: &NodeState, policy: &StrugglePolicy) -> bool {
    state.consecutive_failures >= policy.k_failures
}

/// Passed direct prerequisites, weakest first; ties by topological position,
/// then id.
fn plan_order(enrollment: &Enrollment, curriculum: &Curriculum, milestone: &str) -> Vec<String> {
    let Some(m) = curriculum.milestone(milestone) else {
        return Vec::new();
    };
    let position = enrollment.order_index();
    let mut plan: Vec<(MasteryLevel, usize, &str)> = m
        .prerequisites
        .iter()
        .filter_map(|p| {
            let state = enrollment.states.get(p)?;
            let level = state
                .mastering_level
                .filter(|_| state.status == Status::Passed)?;
            Some((
                level,
                position.get(p.as_str()).copied().unwrap_or(usize::MAX),
                p.as_str(),
            ))
        })
        .collect();
    plan.sort_unstable();
    plan.dedup();
    plan.into_iter().map(|(_, _, p)| p.to_owned()).collect()
}

/// The prerequisites a struggling student is asked to revisit, in order.
pub fn revision_plan(
    enrollment: &Enrollment,
    curriculum: &Curriculum,
    milestone: &str,
    policy: &StrugglePolicy,
) -> Result<Vec<String>, AdaptationError> {
    let state = enrollment
        .states
        .get(milestone)
        .ok_or_else(|| AdaptationError::UnknownMilestone(milestone.to_owned()))?;
    if state.status != Status::Exploring || !detect_struggle(state, policy) {
        return Err(AdaptationError::NotStruggling(milestone.to_owned()));
    }
    let plan = plan_order(enrollment, curriculum, milestone);
    if plan.is_empty() {
        return Err(AdaptationError::NoPrerequisites(milestone.to_owned()));
    }
    Ok(plan)
}

/// First plan entry not yet revised-and-retried.
pub(crate) fn revision_head(
    enrollment: &Enrollment,
    curriculum: &Curriculum,
    milestone: &str,
) -> Option<String> {
    let completed = &enrollment.states.get(milestone)?.revision.completed;
    plan_order(enrollment, curriculum, milestone)
        .into_iter()
        .find(|p| !completed.contains(p))
}

/// Sum and count of the levels of a milestone's passed prerequisites.
fn prerequisite_mastery(enrollment: &Enrollment, milestone: &Milestone) -> (u32, u32) {
    milestone
        .prerequisites
        .iter()
        .filter_map(|p| enrollment.states.get(p)?.mastering_level)
        .fold((0, 0), |(sum, n), l| (sum + u32::from(l.get()), n + 1))
}

/// Core assets, then support material for weak or struggling students, then
/// challenge material for strong ones.
pub fn select_assets(
    enrollment: &Enrollment,
    curriculum: &Curriculum,
    milestone: &str,
    policy: &StrugglePolicy,
) -> Result<Vec<String>, AdaptationError> {
    let unknown = || AdaptationError::UnknownMilestone(milestone.to_owned());
    let m = curriculum.milestone(milestone).ok_or_else(unknown)?;
    let state = enrollment.states.get(milestone).ok_or_else(unknown)?;

    // Mean level L compared without division: L >= 3 <=> sum >= 3n.
    // No prerequisites at all counts as L = 4; prerequisites none of which
    // are passed count as L = 0.
    let (sum, n) = prerequisite_mastery(enrollment, m);
    let (strong, weak) = if m.prerequisites.is_empty() {
        (true, false)
    } else if n == 0 {
        (false, true)
    } else {
        (sum >= 3 * n, sum <= n)
    };
    let flagged = detect_struggle(state, policy);

    let of_kind = |kind| {
        m.assets
            .iter()
            .filter(move |a| a.kind == kind)
            .map(|a| a.id.clone())
    };
    let mut assets: Vec<String> = of_kind(AssetKind::Core).collect();
    if weak || flagged {
        assets.extend(of_kind(AssetKind::Support));
    }
    if strong {
        assets.extend(of_kind(AssetKind::Challenge));
    }
    Ok(assets)
}

fn title<'a>(curriculum: &'a Curriculum, milestone: &'a str) -> &'a str {
    curriculum
        .milestone(milestone)
        .map(|m| m.title.as_str())
        .unwrap_or(milestone)
}

fn describe_level(enrollment: &Enrollment, milestone: &str) -> String {
    match enrollment
        .states
        .get(milestone)
        .and_then(|s| s.mastering_level)
    {
        Some(level) => format!("level {level}"),
        None => "not passed".to_owned(),
    }
}

fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Why a milestone is open, read off the support of its unlocked node.
fn unlock_rationale(enrollment: &Enrollment, curriculum: &Curriculum, milestone: &str) -> String {
    let name = title(curriculum, milestone);
    let unlocked = enrollment.nodes[milestone].unlocked;
    let grounds: BTreeSet<String> = enrollment
        .network
        .explain(unlocked)
        .map(|tree| {
            tree.grounds()
                .into_iter()
                .filter_map(|n| enrollment.milestone_of(n).map(str::to_owned))
                .collect()
        })
        .unwrap_or_default();
    if grounds.is_empty() {
        let has_prereqs = curriculum
            .milestone(milestone)
            .is_some_and(|m| !m.prerequisites.is_empty());
        if has_prereqs {
            format!("\"{name}\" is open for exploration in open mode.")
        } else {
            format!("\"{name}\" has no prerequisites and is unlocked.")
        }
    } else {
        let order = enrollment.order_index();
        let mut grounds: Vec<String> = grounds.into_iter().collect();
        grounds.sort_by_key(|g| order.get(g.as_str()).copied());
        let described: Vec<String> = grounds
            .iter()
            .map(|g| {
                format!(
                    "\"{}\" ({})",
                    title(curriculum, g),
                    describe_level(enrollment, g)
                )
            })
            .collect();
        format!(
            "\"{name}\" is unlocked by passed prerequisites {}.",
            join_names(&described)
        )
    }
}

/// Ordered recommendations for an enrollment. Read-only.
pub fn recommend(
    enrollment: &Enrollment,
    curriculum: &Curriculum,
    policy: &StrugglePolicy,
) -> RecommendationList {
    let mut items: Vec<Recommendation> = Vec::new();
    fn push(
        items: &mut Vec<Recommendation>,
        kind: RecommendationKind,
        milestone: &str,
        assets: Vec<String>,
        rationale: String,
    ) {
        let rank = items.len() + 1;
        items.push(Recommendation {
            kind,
            milestone: milestone.to_owned(),
            assets,
            rationale,
            rank,
        });
    }
    let assets_for = |m: &str| select_assets(enrollment, curriculum, m, policy).unwrap_or_default();

    let exploring: Vec<(&str, &NodeState)> = enrollment
        .order
        .iter()
        .map(|m| (m.as_str(), &enrollment.states[m]))
        .filter(|(_, s)| s.status == Status::Exploring)
        .collect();

    for &(m, state) in exploring.iter().filter(|(_, s)| detect_struggle(s, policy)) {
        let name = title(curriculum, m);
        let failures = state.consecutive_failures;
        match revision_head(enrollment, curriculum, m) {
            Some(head) => {
                let head_name = title(curriculum, &head);
                let mut rationale = if state.revision.completed.is_empty() {
                    format!(
                        "Struggling on \"{name}\" after {failures} consecutive failures; revise prerequisite \"{head_name}\" first, its {} is the weakest among the prerequisites.",
                        describe_level(enrollment, &head)
                    )
                } else {
                    let done: Vec<String> = state
                        .revision
                        .completed
                        .iter()
                        .map(|p| format!("\"{}\"", title(curriculum, p)))
                        .collect();
                    format!(
                        "Still struggling on \"{name}\" after revising {}; revise prerequisite \"{head_name}\" ({}) next.",
                        join_names(&done),
                        describe_level(enrollment, &head)
                    )
                };
                if state.revision.revised_head.as_deref() == Some(head.as_str()) {
                    rationale.push_str(&format!(" Revision recorded; retry \"{name}\"."));
                }
                push(
                    &mut items,
                    RecommendationKind::RevisePrerequisite,
                    &head,
                    assets_for(&head),
                    rationale,
                );
            }
            None => {
                let rationale = if state.revision.completed.is_empty() {
                    format!(
                        "Struggling on \"{name}\" after {failures} consecutive failures and there is no passed prerequisite to revise; extra support material added."
                    )
                } else {
                    format!(
                        "Still struggling on \"{name}\" after revising every prerequisite; extra support material added."
                    )
                };
                push(
                    &mut items,
                    RecommendationKind::ExtraSupport,
                    m,
                    assets_for(m),
                    rationale,
                );
            }
        }
    }

    for &(m, _) in exploring
        .iter()
        .filter(|(_, s)| !detect_struggle(s, policy))
    {
        push(
            &mut items,
            RecommendationKind::StudyNext,
            m,
            assets_for(m),
            unlock_rationale(enrollment, curriculum, m),
        );
    }

    let mut already: BTreeSet<String> = items
        .iter()
        .flat_map(|r| r.assets.iter().cloned())
        .collect();
    for m in &enrollment.order {
        let state = &enrollment.states[m];
        if state.status != Status::Passed || state.mastering_level != Some(MasteryLevel::EXCELLENT)
        {
            continue;
        }
        let Some(milestone) = curriculum.milestone(m) else {
            continue;
        };
        let challenge: Vec<String> = milestone
            .assets
            .iter()
            .filter(|a| a.kind == AssetKind::Challenge && !already.contains(&a.id))
            .map(|a| a.id.clone())
            .collect();
        if challenge.is_empty() {
            continue;
        }
        already.extend(challenge.iter().cloned());
        let rationale = format!(
            "Passed \"{}\" at level 4 (Excellent); challenge material available.",
            milestone.title
        );
        push(
            &mut items,
            RecommendationKind::Challenge,
            m,
            challenge,
            rationale,
        );
    }

    RecommendationList {
        schema: RECOMMENDATION_SCHEMA.to_owned(),
        enrollment_id: enrollment.id.clone(),
        items,
    }
}
