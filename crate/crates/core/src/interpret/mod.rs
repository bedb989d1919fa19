//! Weight trajectories, change detection and member personas.

mod changes;
mod explain;
mod payload;
mod trajectory;

pub use changes::{detect_changes, ChangeConfig, ChangeEvent, Direction};
pub use explain::{explain, ExplainError, HttpClient, MockClient, PersonaClient};
pub use payload::{
    build_payload, render_prompt, CategoryInsight, ExplanationPayload, NamedValue, PayloadConfig, PROMPT_TEMPLATE,
    PROMPT_TEMPLATE_VERSION,
};
pub use trajectory::{TrajectoryStore, WeightSnapshot};

use crate::{CategoryId, MemberId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("snapshot for ({member}, {category}) at round {round} does not follow round {last}")]
    TimeRegression {
        member: MemberId,
        category: CategoryId,
        last: u64,
        round: u64,
    },
    #[error("no weight snapshots for member {0} at or before round {1}")]
    UnknownMember(MemberId, u64),
    #[error("trajectory file: {0}")]
    Io(String),
}
