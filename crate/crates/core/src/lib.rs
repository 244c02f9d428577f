//! Adaptive learning paths on top of a justification-based truth
//! maintenance network.
//!
//! A [`Curriculum`] compiles into a [`Network`] per enrollment: each
//! milestone gets a "passed" assumption and an "unlocked" derived node whose
//! justification requires every prerequisite to be passed. Assessment
//! attempts enable or retract assumptions, and the network relabels only the
//! affected part of the graph. All mutations flow through an append-only
//! event log so that state can be rebuilt exactly.

pub mod adaptation;
pub mod assessment;
pub mod batch;
pub mod curriculum;
pub mod engine;
pub mod jtms;
pub mod persistence;
pub mod student;

pub use adaptation::{
    recommend, AdaptationError, Recommendation, RecommendationKind, RecommendationList,
    StrugglePolicy,
};
pub use batch::Exec;
pub use curriculum::{Curriculum, CurriculumError, Mode, ValidationReport, Violation};
pub use engine::{AppError, AppState, Engine, MapView, Outcome, ReplayCheck};
pub use jtms::{Explanation, Label, LabelDelta, Network, NodeId, NodeKind};
pub use persistence::{Event, EventBody, Store, StoreError};
pub use student::{Enrollment, MasteryLevel, Status, StudentProfile};
