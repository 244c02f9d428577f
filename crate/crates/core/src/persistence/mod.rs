//! Event-sourced storage: an append-only JSON-Lines log is the source of
//! truth; snapshots and materialized documents are caches.

mod event;
mod store;

pub use event::{Event, EventBody, EVENT_VERSION};
pub use store::{read_events, Store, StoreError, StoreLock};
