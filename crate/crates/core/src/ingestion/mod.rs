//! Record files in, labeled post sets out.

pub mod corpus;
pub mod postset;
pub mod records;

use std::path::PathBuf;

use thiserror::Error;

pub use corpus::{load_corpus, CorpusPaths, CorpusSummary, FactCheck, LoadedCorpus, QuarantineEntry, RawCorpus, RecordKind};
pub use postset::{join_post_sets, label_post_sets, JoinOutcome, LabelOutcome, LabeledPostSet, Member, NodeKind, PostSet, Rejection};
pub use records::{CommentRecord, FactCheckRecord, Id, RepostRecord, Timestamp, TweetRecord, UserRecord};

/// JSONL of [`LabeledPostSet`]s.
pub const POST_SETS_FORMAT: &str = "rumorsage.post_sets";
/// JSONL of [`QuarantineEntry`]s.
pub const QUARANTINE_FORMAT: &str = "rumorsage.quarantine";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing record file {0}")]
    Missing(PathBuf),
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("read error in {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}
