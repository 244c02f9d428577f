//! Application state and the write path.
//!
//! Every mutation is expressed as an [`EventBody`]. The live path validates
//! it against the current state, appends it to the log, then commits; replay
//! re-applies the same bodies through the same code, so live state and
//! replayed state cannot diverge.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{self, AdaptationError, RecommendationList, StrugglePolicy};
use crate::batch::Exec;
use crate::curriculum::{Curriculum, CurriculumError, Mode, ValidationReport};
use crate::persistence::{read_events, Event, EventBody, Store, StoreError};
use crate::student::{
    Enrollment, MasteryLevel, StateDelta, Status, StatusChange, StudentError, StudentProfile,
};

pub const SNAPSHOT_SCHEMA: &str = "snapshot/1";

#[derive(Debug, Error)]
pub enum AppError {
    #[error("unknown student {0:?}")]
    UnknownStudent(String),
    #[error("unknown curriculum {0:?}")]
    UnknownCurriculum(String),
    #[error("unknown enrollment {0:?}")]
    UnknownEnrollment(String),
    #[error("student {0:?} already exists")]
    DuplicateStudent(String),
    #[error("curriculum {0:?} is already registered")]
    DuplicateCurriculum(String),
    #[error("student {student_id:?} is already enrolled in {curriculum_id:?}")]
    DuplicateEnrollment {
        student_id: String,
        curriculum_id: String,
    },
    #[error("enrollment id {0:?} is already taken")]
    DuplicateEnrollmentId(String),
    #[error("invalid curriculum:\n{0}")]
    InvalidCurriculum(ValidationReport),
    #[error(transparent)]
    Student(#[from] StudentError),
    #[error(transparent)]
    Adaptation(#[from] AdaptationError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("replay failed at seq {seq}: {source}")]
    Replay {
        seq: u64,
        #[source]
        source: Box<AppError>,
    },
}

impl From<CurriculumError> for AppError {
    fn from(e: CurriculumError) -> Self {
        match e {
            CurriculumError::Invalid(report) => AppError::InvalidCurriculum(report),
            other => AppError::Student(StudentError::Curriculum(other)),
        }
    }
}

/// What a successful mutation produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    StudentCreated(StudentProfile),
    CurriculumRegistered {
        curriculum_id: String,
        milestones: usize,
    },
    Enrolled(EnrollmentSummary),
    Attempt(StateDelta),
    Revoked(StateDelta),
    ModeSet {
        enrollment_id: String,
        mode: Mode,
        changes: Vec<StatusChange>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentSummary {
    pub enrollment_id: String,
    pub student_id: String,
    pub curriculum_id: String,
    pub mode: Mode,
    pub statuses: BTreeMap<String, Status>,
}

impl EnrollmentSummary {
    fn of(e: &Enrollment) -> Self {
        EnrollmentSummary {
            enrollment_id: e.id.clone(),
            student_id: e.student_id.clone(),
            curriculum_id: e.curriculum_id.clone(),
            mode: e.mode,
            statuses: e.statuses(),
        }
    }
}

/// A validated change, ready to commit once its event is durable.
#[derive(Debug)]
enum Commit {
    Student(StudentProfile),
    Curriculum(Curriculum),
    Enrollment(Box<Enrollment>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapEntry {
    pub milestone_id: String,
    pub title: String,
    pub status: Status,
    pub color: &'static str,
    pub mastering_level: Option<MasteryLevel>,
    pub consecutive_failures: u32,
    pub struggling: bool,
    pub prerequisites: Vec<String>,
}

/// Per-milestone view of an enrollment, in topological order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapView {
    pub enrollment_id: String,
    pub student_id: String,
    pub curriculum_id: String,
    pub mode: Mode,
    pub milestones: Vec<MapEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AppState {
    pub last_seq: u64,
    pub students: BTreeMap<String, StudentProfile>,
    pub curricula: BTreeMap<String, Curriculum>,
    pub enrollments: BTreeMap<String, Enrollment>,
}

#[derive(Serialize)]
struct SnapshotOut<'a> {
    schema: &'static str,
    #[serde(flatten)]
    state: &'a AppState,
}

#[derive(Deserialize)]
struct SnapshotIn {
    schema: String,
    #[serde(flatten)]
    state: AppState,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(&SnapshotOut {
            schema: SNAPSHOT_SCHEMA,
            state: self,
        })
        .expect("state serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self, String> {
        let snap: SnapshotIn = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        if snap.schema != SNAPSHOT_SCHEMA {
            return Err(format!("unsupported snapshot schema {:?}", snap.schema));
        }
        Ok(snap.state)
    }

    pub fn enrollment(&self, id: &str) -> Result<&Enrollment, AppError> {
        self.enrollments
            .get(id)
            .ok_or_else(|| AppError::UnknownEnrollment(id.to_owned()))
    }

    pub fn curriculum(&self, id: &str) -> Result<&Curriculum, AppError> {
        self.curricula
            .get(id)
            .ok_or_else(|| AppError::UnknownCurriculum(id.to_owned()))
    }

    fn enrollment_with_curriculum(&self, id: &str) -> Result<(&Enrollment, &Curriculum), AppError> {
        let e = self.enrollment(id)?;
        Ok((e, self.curriculum(&e.curriculum_id)?))
    }

    pub fn recommend(
        &self,
        enrollment_id: &str,
        policy: &StrugglePolicy,
    ) -> Result<RecommendationList, AppError> {
        let (e, c) = self.enrollment_with_curriculum(enrollment_id)?;
        Ok(adaptation::recommend(e, c, policy))
    }

    /// Recommendations for every enrollment, ascending by enrollment id.
    pub fn recommend_all(&self, policy: &StrugglePolicy, exec: Exec) -> Vec<RecommendationList> {
        let enrollments: Vec<&Enrollment> = self.enrollments.values().collect();
        exec.map(&enrollments, |e| {
            adaptation::recommend(e, &self.curricula[&e.curriculum_id], policy)
        })
    }

    /// Consistency of every enrollment; the first failing id and reason.
    pub fn check_all(&self, exec: Exec) -> Result<(), (String, String)> {
        let enrollments: Vec<&Enrollment> = self.enrollments.values().collect();
        exec.map(&enrollments, |e| {
            e.check_consistency().map_err(|r| (e.id.clone(), r))
        })
        .into_iter()
        .collect()
    }

    pub fn map(&self, enrollment_id: &str, policy: &StrugglePolicy) -> Result<MapView, AppError> {
        let (e, c) = self.enrollment_with_curriculum(enrollment_id)?;
        let milestones = e
            .order
            .iter()
            .map(|id| {
                let state = &e.states[id];
                let m = c.milestone(id);
                MapEntry {
                    milestone_id: id.clone(),
                    title: m.map(|m| m.title.clone()).unwrap_or_default(),
                    status: state.status,
                    color: state.status.color(),
                    mastering_level: state.mastering_level,
                    consecutive_failures: state.consecutive_failures,
                    struggling: state.status == Status::Exploring
                        && adaptation::detect_struggle(state, policy),
                    prerequisites: m.map(|m| m.prerequisites.clone()).unwrap_or_default(),
                }
            })
            .collect();
        Ok(MapView {
            enrollment_id: e.id.clone(),
            student_id: e.student_id.clone(),
            curriculum_id: e.curriculum_id.clone(),
            mode: e.mode,
            milestones,
        })
    }

    pub fn export_dot(&self, enrollment_id: &str) -> Result<String, AppError> {
        let (e, c) = self.enrollment_with_curriculum(enrollment_id)?;
        Ok(c.export_dot(&e.statuses())?)
    }

    /// Validates `body` against the current state without changing it.
    fn prepare(
        &self,
        body: &EventBody,
        at: DateTime<Utc>,
        policy: &StrugglePolicy,
    ) -> Result<(Outcome, Commit), AppError> {
        match body {
            EventBody::StudentCreated {
                student_id,
                display_name,
            } => {
                if self.students.contains_key(student_id) {
                    return Err(AppError::DuplicateStudent(student_id.clone()));
                }
                let profile = StudentProfile {
                    id: student_id.clone(),
                    display_name: display_name.clone(),
                    created_at: at,
                };
                Ok((
                    Outcome::StudentCreated(profile.clone()),
                    Commit::Student(profile),
                ))
            }
            EventBody::CurriculumRegistered { curriculum } => {
                let report = curriculum.validate();
                if !report.is_valid() {
                    return Err(AppError::InvalidCurriculum(report));
                }
                if self.curricula.contains_key(&curriculum.id) {
                    return Err(AppError::DuplicateCurriculum(curriculum.id.clone()));
                }
                Ok((
                    Outcome::CurriculumRegistered {
                        curriculum_id: curriculum.id.clone(),
                        milestones: curriculum.milestones.len(),
                    },
                    Commit::Curriculum(curriculum.clone()),
                ))
            }
            EventBody::Enrolled {
                enrollment_id,
                student_id,
                curriculum_id,
                mode,
            } => {
                if !self.students.contains_key(student_id) {
                    return Err(AppError::UnknownStudent(student_id.clone()));
                }
                let curriculum = self.curriculum(curriculum_id)?;
                if self.enrollments.contains_key(enrollment_id) {
                    return Err(AppError::DuplicateEnrollmentId(enrollment_id.clone()));
                }
                if self
                    .enrollments
                    .values()
                    .any(|e| &e.student_id == student_id && &e.curriculum_id == curriculum_id)
                {
                    return Err(AppError::DuplicateEnrollment {
                        student_id: student_id.clone(),
                        curriculum_id: curriculum_id.clone(),
                    });
                }
                let enrollment =
                    Enrollment::new(enrollment_id.clone(), student_id.clone(), curriculum, *mode)?;
                Ok((
                    Outcome::Enrolled(EnrollmentSummary::of(&enrollment)),
                    Commit::Enrollment(Box::new(enrollment)),
                ))
            }
            EventBody::AttemptRecorded { enrollment_id, .. }
            | EventBody::PassRevoked { enrollment_id, .. }
            | EventBody::ModeSet { enrollment_id, .. } => {
                let (e, c) = self.enrollment_with_curriculum(enrollment_id)?;
                let mut next = e.clone();
                let outcome = apply_to_enrollment(&mut next, c, body, at, policy)?;
                Ok((outcome, Commit::Enrollment(Box::new(next))))
            }
        }
    }

    fn commit(&mut self, commit: Commit, seq: u64) {
        match commit {
            Commit::Student(p) => {
                self.students.insert(p.id.clone(), p);
            }
            Commit::Curriculum(c) => {
                self.curricula.insert(c.id.clone(), c);
            }
            Commit::Enrollment(e) => {
                self.enrollments.insert(e.id.clone(), *e);
            }
        }
        self.last_seq = seq;
    }

    /// Applies one logged event.
    pub fn apply(&mut self, event: &Event, policy: &StrugglePolicy) -> Result<Outcome, AppError> {
        let (outcome, commit) = self.prepare(&event.body, event.timestamp, policy)?;
        self.commit(commit, event.seq);
        Ok(outcome)
    }
}

/// Applies an enrollment-scoped event in place.
fn apply_to_enrollment(
    enrollment: &mut Enrollment,
    curriculum: &Curriculum,
    body: &EventBody,
    at: DateTime<Utc>,
    policy: &StrugglePolicy,
) -> Result<Outcome, AppError> {
    match body {
        EventBody::AttemptRecorded {
            milestone_id,
            assessment_id,
            score,
            ..
        } => Ok(Outcome::Attempt(enrollment.record_attempt(
            curriculum,
            milestone_id,
            assessment_id,
            *score,
            at,
            policy,
        )?)),
        EventBody::PassRevoked { milestone_id, .. } => {
            Ok(Outcome::Revoked(enrollment.revoke_pass(milestone_id)?))
        }
        EventBody::ModeSet { mode, .. } => {
            let changes = enrollment.set_mode(curriculum, *mode)?;
            Ok(Outcome::ModeSet {
                enrollment_id: enrollment.id.clone(),
                mode: *mode,
                changes,
            })
        }
        other => unreachable!("{} is not enrollment-scoped", other.kind()),
    }
}

/// One event at a time, in log order.
pub fn replay_sequential(events: &[Event], policy: &StrugglePolicy) -> Result<AppState, AppError> {
    let mut state = AppState::new();
    for event in events {
        state
            .apply(event, policy)
            .map_err(|source| AppError::Replay {
                seq: event.seq,
                source: Box::new(source),
            })?;
    }
    Ok(state)
}

/// Rebuilds the state from a log.
///
/// Global events (students, curricula, enrollments) are applied in log order;
/// each enrollment's own events are then applied in log order, with distinct
/// enrollments processed independently under `exec`. On failure the error
/// names the lowest failing seq, exactly as a sequential replay would.
pub fn replay(events: &[Event], policy: &StrugglePolicy, exec: Exec) -> Result<AppState, AppError> {
    let mut state = AppState::new();
    let mut groups: BTreeMap<String, Vec<&Event>> = BTreeMap::new();
    let mut first_error: Option<(u64, AppError)> = None;

    for event in events {
        let result = match event.body.enrollment_id() {
            Some(id) if state.enrollments.contains_key(id) => {
                groups.entry(id.to_owned()).or_default().push(event);
                Ok(())
            }
            Some(id) => Err(AppError::UnknownEnrollment(id.to_owned())),
            None => state.apply(event, policy).map(|_| ()),
        };
        if let Err(e) = result {
            first_error = Some((event.seq, e));
            break;
        }
    }

    let mut work: Vec<(Enrollment, Vec<&Event>)> = groups
        .into_iter()
        .map(|(id, evs)| {
            (
                state
                    .enrollments
                    .remove(&id)
                    .expect("grouped enrollment exists"),
                evs,
            )
        })
        .collect();
    let curricula = &state.curricula;
    let failures = exec.map_mut(&mut work, |(enrollment, evs)| {
        let curriculum = &curricula[&enrollment.curriculum_id];
        for event in evs.iter() {
            if let Err(e) =
                apply_to_enrollment(enrollment, curriculum, &event.body, event.timestamp, policy)
            {
                return Some((event.seq, e));
            }
        }
        None
    });
    for (enrollment, _) in work {
        state.enrollments.insert(enrollment.id.clone(), enrollment);
    }

    let earliest = failures
        .into_iter()
        .flatten()
        .chain(first_error)
        .min_by_key(|(seq, _)| *seq);
    if let Some((seq, source)) = earliest {
        return Err(AppError::Replay {
            seq,
            source: Box::new(source),
        });
    }
    state.last_seq = events.last().map_or(0, |e| e.seq);
    Ok(state)
}

/// Outcome of comparing the stored snapshot with a fresh replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayCheck {
    pub snapshot_seq: u64,
    pub log_seq: u64,
    /// Snapshot bytes equal the replay of the log prefix it claims to cover.
    pub snapshot_matches: bool,
    /// In-memory state equals the replay of the whole log.
    pub live_matches: bool,
}

impl ReplayCheck {
    pub fn ok(&self) -> bool {
        self.snapshot_matches && self.live_matches
    }
}

type Clock = Box<dyn FnMut() -> DateTime<Utc> + Send + Sync>;

/// A store plus the state it replays to; the single writer.
pub struct Engine {
    store: Store,
    state: AppState,
    policy: StrugglePolicy,
    clock: Clock,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("root", &self.store.root())
            .field("last_seq", &self.state.last_seq)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, AppError> {
        Self::open_with(root, StrugglePolicy::default())
    }

    /// Opens a store, resuming from its snapshot when the snapshot is usable
    /// and replaying the log tail after it.
    pub fn open_with(root: impl AsRef<Path>, policy: StrugglePolicy) -> Result<Self, AppError> {
        let (store, events) = Store::open(root)?;
        let cached = match store.read_snapshot()? {
            Some(bytes) => match AppState::from_snapshot(&bytes) {
                Ok(s) if s.last_seq <= events.len() as u64 => Some(s),
                Ok(s) => {
                    warn!(
                        "snapshot covers seq {} but the log ends at {}; replaying from scratch",
                        s.last_seq,
                        events.len()
                    );
                    None
                }
                Err(e) => {
                    warn!("unreadable snapshot ({e}); replaying from scratch");
                    None
                }
            },
            None => None,
        };
        let state = match cached {
            Some(mut state) => {
                let tail = &events[state.last_seq as usize..];
                for event in tail {
                    state
                        .apply(event, &policy)
                        .map_err(|source| AppError::Replay {
                            seq: event.seq,
                            source: Box::new(source),
                        })?;
                }
                state
            }
            None => replay(&events, &policy, Exec::default())?,
        };
        Ok(Engine {
            store,
            state,
            policy,
            clock: Box::new(Utc::now),
        })
    }

    pub fn with_clock(
        mut self,
        clock: impl FnMut() -> DateTime<Utc> + Send + Sync + 'static,
    ) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    pub fn policy(&self) -> &StrugglePolicy {
        &self.policy
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Validate, append, commit, refresh caches. Failed commands append
    /// nothing and leave the state untouched.
    pub fn execute(&mut self, body: EventBody) -> Result<(Event, Outcome), AppError> {
        body.check_schema().map_err(StoreError::SchemaViolation)?;
        let at = (self.clock)();
        let (outcome, commit) = self.state.prepare(&body, at, &self.policy)?;
        let event = self.store.append(at, body)?;
        self.state.commit(commit, event.seq);
        match &event.body {
            EventBody::StudentCreated { .. } => self.store.write_students(&self.state.students)?,
            EventBody::CurriculumRegistered { curriculum } => {
                self.store.write_curriculum(curriculum)?
            }
            _ => {}
        }
        self.store.write_snapshot(&self.state.snapshot_bytes())?;
        Ok((event, outcome))
    }

    pub fn create_student(
        &mut self,
        student_id: &str,
        display_name: &str,
    ) -> Result<StudentProfile, AppError> {
        match self.execute(EventBody::StudentCreated {
            student_id: student_id.to_owned(),
            display_name: display_name.to_owned(),
        })? {
            (_, Outcome::StudentCreated(p)) => Ok(p),
            _ => unreachable!(),
        }
    }

    pub fn register_curriculum(&mut self, curriculum: Curriculum) -> Result<(), AppError> {
        self.execute(EventBody::CurriculumRegistered { curriculum })
            .map(|_| ())
    }

    pub fn enroll(
        &mut self,
        student_id: &str,
        curriculum_id: &str,
        mode: Mode,
    ) -> Result<EnrollmentSummary, AppError> {
        let enrollment_id = format!("enr-{}", self.store.last_seq() + 1);
        match self.execute(EventBody::Enrolled {
            enrollment_id,
            student_id: student_id.to_owned(),
            curriculum_id: curriculum_id.to_owned(),
            mode,
        })? {
            (_, Outcome::Enrolled(s)) => Ok(s),
            _ => unreachable!(),
        }
    }

    pub fn record_attempt(
        &mut self,
        enrollment_id: &str,
        milestone_id: &str,
        assessment_id: &str,
        score: f64,
    ) -> Result<StateDelta, AppError> {
        match self.execute(EventBody::AttemptRecorded {
            enrollment_id: enrollment_id.to_owned(),
            milestone_id: milestone_id.to_owned(),
            assessment_id: assessment_id.to_owned(),
            score,
        })? {
            (_, Outcome::Attempt(d)) => Ok(d),
            _ => unreachable!(),
        }
    }

    pub fn revoke_pass(
        &mut self,
        enrollment_id: &str,
        milestone_id: &str,
        reason: &str,
    ) -> Result<StateDelta, AppError> {
        match self.execute(EventBody::PassRevoked {
            enrollment_id: enrollment_id.to_owned(),
            milestone_id: milestone_id.to_owned(),
            reason: reason.to_owned(),
        })? {
            (_, Outcome::Revoked(d)) => Ok(d),
            _ => unreachable!(),
        }
    }

    pub fn set_mode(
        &mut self,
        enrollment_id: &str,
        mode: Mode,
    ) -> Result<Vec<StatusChange>, AppError> {
        match self.execute(EventBody::ModeSet {
            enrollment_id: enrollment_id.to_owned(),
            mode,
        })? {
            (_, Outcome::ModeSet { changes, .. }) => Ok(changes),
            _ => unreachable!(),
        }
    }

    pub fn recommend(&self, enrollment_id: &str) -> Result<RecommendationList, AppError> {
        self.state.recommend(enrollment_id, &self.policy)
    }

    /// Replays the log from scratch and compares it with the stored snapshot
    /// and with the in-memory state.
    pub fn replay_check(&self) -> Result<ReplayCheck, AppError> {
        let events = read_events(self.store.root())?;
        let full = replay(&events, &self.policy, Exec::default())?;
        let live_matches = full.snapshot_bytes() == self.state.snapshot_bytes();
        let (snapshot_seq, snapshot_matches) = match self.store.read_snapshot()? {
            None => (0, events.is_empty()),
            Some(bytes) => {
                let seq = AppState::from_snapshot(&bytes)
                    .map(|s| s.last_seq)
                    .unwrap_or(u64::MAX);
                let matches = seq <= events.len() as u64
                    && replay(&events[..seq as usize], &self.policy, Exec::default())?
                        .snapshot_bytes()
                        == bytes;
                (seq, matches)
            }
        };
        Ok(ReplayCheck {
            snapshot_seq,
            log_seq: events.last().map_or(0, |e| e.seq),
            snapshot_matches,
            live_matches,
        })
    }
}
