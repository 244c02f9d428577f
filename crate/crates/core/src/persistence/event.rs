use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::curriculum::{Curriculum, Mode};

pub const EVENT_VERSION: u32 = 1;

/// State-changing action, as stored in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    StudentCreated {
        student_id: String,
        display_name: String,
    },
    CurriculumRegistered {
        curriculum: Curriculum,
    },
    Enrolled {
        enrollment_id: String,
        student_id: String,
        curriculum_id: String,
        mode: Mode,
    },
    AttemptRecorded {
        enrollment_id: String,
        milestone_id: String,
        assessment_id: String,
        score: f64,
    },
    PassRevoked {
        enrollment_id: String,
        milestone_id: String,
        reason: String,
    },
    ModeSet {
        enrollment_id: String,
        mode: Mode,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::StudentCreated { .. } => "student_created",
            EventBody::CurriculumRegistered { .. } => "curriculum_registered",
            EventBody::Enrolled { .. } => "enrolled",
            EventBody::AttemptRecorded { .. } => "attempt_recorded",
            EventBody::PassRevoked { .. } => "pass_revoked",
            EventBody::ModeSet { .. } => "mode_set",
        }
    }

    /// The enrollment this event mutates, if any.
    pub fn enrollment_id(&self) -> Option<&str> {
        match self {
            EventBody::AttemptRecorded { enrollment_id, .. }
            | EventBody::PassRevoked { enrollment_id, .. }
            | EventBody::ModeSet { enrollment_id, .. } => Some(enrollment_id),
            _ => None,
        }
    }

    /// Payload-level checks beyond what the types already guarantee.
    pub fn check_schema(&self) -> Result<(), String> {
        let non_empty = |field: &str, value: &str| {
            if value.trim().is_empty() {
                Err(format!(
                    "{} payload: {field} must be non-empty",
                    self.kind()
                ))
            } else {
                Ok(())
            }
        };
        match self {
            EventBody::StudentCreated { student_id, .. } => non_empty("student_id", student_id),
            EventBody::CurriculumRegistered { curriculum } => {
                non_empty("curriculum.id", &curriculum.id)
            }
            EventBody::Enrolled {
                enrollment_id,
                student_id,
                curriculum_id,
                ..
            } => {
                non_empty("enrollment_id", enrollment_id)?;
                non_empty("student_id", student_id)?;
                non_empty("curriculum_id", curriculum_id)
            }
            EventBody::AttemptRecorded {
                enrollment_id,
                milestone_id,
                assessment_id,
                score,
            } => {
                non_empty("enrollment_id", enrollment_id)?;
                non_empty("milestone_id", milestone_id)?;
                non_empty("assessment_id", assessment_id)?;
                if score.is_finite() {
                    Ok(())
                } else {
                    Err("attempt_recorded payload: score must be a finite number".into())
                }
            }
            EventBody::PassRevoked {
                enrollment_id,
                milestone_id,
                ..
            } => {
                non_empty("enrollment_id", enrollment_id)?;
                non_empty("milestone_id", milestone_id)
            }
            EventBody::ModeSet { enrollment_id, .. } => non_empty("enrollment_id", enrollment_id),
        }
    }
}

/// One line of `events.log`.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub body: EventBody,
}

#[derive(Serialize, Deserialize)]
struct Line {
    v: u32,
    seq: u64,
    timestamp: DateTime<Utc>,
    kind: String,
    payload: Value,
}

impl Event {
    pub fn to_line(&self) -> String {
        let tagged = serde_json::to_value(&self.body).expect("event body serializes");
        let line = Line {
            v: EVENT_VERSION,
            seq: self.seq,
            timestamp: self.timestamp,
            kind: self.body.kind().to_owned(),
            payload: tagged["payload"].clone(),
        };
        serde_json::to_string(&line).expect("event line serializes")
    }

    /// Parses one log line. Errors are descriptions, not positions.
    pub fn from_line(text: &str) -> Result<Event, String> {
        let line: Line =
            serde_json::from_str(text).map_err(|e| format!("not an event line: {e}"))?;
        if line.v != EVENT_VERSION {
            return Err(format!("unsupported event version {}", line.v));
        }
        let body: EventBody = serde_json::from_value(serde_json::json!({
            "kind": line.kind,
            "payload": line.payload,
        }))
        .map_err(|e| format!("bad {} payload: {e}", line.kind))?;
        body.check_schema()?;
        Ok(Event {
            seq: line.seq,
            timestamp: line.timestamp,
            body,
        })
    }
}
