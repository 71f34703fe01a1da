//! Loading the five record files into an indexed corpus.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::records::{tweet_id_from_url, CommentRecord, FactCheckRecord, Id, RepostRecord, TweetRecord, UserRecord};
use super::IngestError;
use crate::classes::Verdict;

/// Which record file a line came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Factchecks,
    Tweets,
    Comments,
    Reposts,
    Users,
}

impl RecordKind {
    pub const ALL: [RecordKind; 5] = [
        RecordKind::Factchecks,
        RecordKind::Tweets,
        RecordKind::Comments,
        RecordKind::Reposts,
        RecordKind::Users,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            RecordKind::Factchecks => "factchecks.jsonl",
            RecordKind::Tweets => "tweets.jsonl",
            RecordKind::Comments => "comments.jsonl",
            RecordKind::Reposts => "reposts.jsonl",
            RecordKind::Users => "users.jsonl",
        }
    }
}

/// A rejected input line. `line_no` is 1-based; join-time rejections that
/// are not tied to a line use 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub file: RecordKind,
    pub line_no: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct CorpusPaths {
    pub factchecks: PathBuf,
    pub tweets: PathBuf,
    pub comments: PathBuf,
    pub reposts: PathBuf,
    pub users: PathBuf,
}

impl CorpusPaths {
    /// The conventional file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            factchecks: dir.join(RecordKind::Factchecks.file_name()),
            tweets: dir.join(RecordKind::Tweets.file_name()),
            comments: dir.join(RecordKind::Comments.file_name()),
            reposts: dir.join(RecordKind::Reposts.file_name()),
            users: dir.join(RecordKind::Users.file_name()),
        }
    }

    fn path(&self, kind: RecordKind) -> &Path {
        match kind {
            RecordKind::Factchecks => &self.factchecks,
            RecordKind::Tweets => &self.tweets,
            RecordKind::Comments => &self.comments,
            RecordKind::Reposts => &self.reposts,
            RecordKind::Users => &self.users,
        }
    }
}

/// A fact check whose verdict maps to a model class and whose tweet links
/// all carry a status id.
#[derive(Clone, Debug, PartialEq)]
pub struct FactCheck {
    pub record: FactCheckRecord,
    pub verdict: Verdict,
    pub tweet_ids: Vec<Id>,
}

#[derive(Clone, Debug, Default)]
pub struct RawCorpus {
    pub factchecks: Vec<FactCheck>,
    pub tweets: BTreeMap<Id, TweetRecord>,
    pub comments: BTreeMap<Id, CommentRecord>,
    /// Keyed by `(post_id, user_id)`.
    pub reposts: BTreeMap<(Id, Id), RepostRecord>,
    pub users: BTreeMap<Id, UserRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub factchecks: usize,
    pub tweets: usize,
    pub comments: usize,
    pub reposts: usize,
    pub users: usize,
    pub quarantined: usize,
}

#[derive(Debug)]
pub struct LoadedCorpus {
    pub corpus: RawCorpus,
    pub quarantine: Vec<QuarantineEntry>,
    /// Non-blank lines read per file.
    pub lines_read: BTreeMap<RecordKind, usize>,
}

impl LoadedCorpus {
    pub fn summary(&self) -> CorpusSummary {
        let c = &self.corpus;
        CorpusSummary {
            factchecks: c.factchecks.len(),
            tweets: c.tweets.len(),
            comments: c.comments.len(),
            reposts: c.reposts.len(),
            users: c.users.len(),
            quarantined: self.quarantine.len(),
        }
    }
}

struct Reader<'a> {
    kind: RecordKind,
    quarantine: &'a mut Vec<QuarantineEntry>,
    lines: usize,
}

impl Reader<'_> {
    fn reject(&mut self, line_no: usize, reason: impl Into<String>) {
        let reason = reason.into();
        log::warn!("{:?} line {line_no}: {reason}", self.kind);
        self.quarantine.push(QuarantineEntry {
            file: self.kind,
            line_no,
            reason,
        });
    }

    /// Calls `accept` for every line that parses; `accept` may itself
    /// reject a parsed record by returning the reason.
    fn read<T: DeserializeOwned>(
        &mut self,
        path: &Path,
        mut accept: impl FnMut(T) -> Result<(), String>,
    ) -> Result<(), IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| IngestError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            self.lines += 1;
            match serde_json::from_str::<T>(&line) {
                Ok(record) => {
                    if let Err(reason) = accept(record) {
                        self.reject(i + 1, reason);
                    }
                }
                Err(e) => self.reject(i + 1, format!("schema violation: {e}")),
            }
        }
        Ok(())
    }
}

fn validate_factcheck(record: FactCheckRecord) -> Result<FactCheck, String> {
    let verdict = Verdict::parse(&record.verdict).map_err(|e| e.to_string())?;
    let mut tweet_ids = Vec::with_capacity(record.translate_twitter_links.len());
    for link in &record.translate_twitter_links {
        match tweet_id_from_url(link) {
            Some(id) => tweet_ids.push(id),
            None => return Err(format!("translate_twitter_links entry without a tweet id: {link:?}")),
        }
    }
    Ok(FactCheck {
        record,
        verdict,
        tweet_ids,
    })
}

fn insert_unique<K: Ord + std::fmt::Debug, V>(map: &mut BTreeMap<K, V>, key: K, value: V) -> Result<(), String> {
    match map.entry(key) {
        Entry::Occupied(e) => Err(format!("duplicate id {:?}; first occurrence kept", e.key())),
        Entry::Vacant(e) => {
            e.insert(value);
            Ok(())
        }
    }
}

/// Reads all five files. Lines that do not parse, violate a record
/// invariant, or repeat an id are quarantined with a reason; the first
/// occurrence of a duplicated id wins.
pub fn load_corpus(paths: &CorpusPaths) -> Result<LoadedCorpus, IngestError> {
    for kind in RecordKind::ALL {
        let p = paths.path(kind);
        if !p.is_file() {
            return Err(IngestError::Missing(p.to_path_buf()));
        }
    }

    let mut corpus = RawCorpus::default();
    let mut quarantine = Vec::new();
    let mut lines_read = BTreeMap::new();

    for kind in RecordKind::ALL {
        let mut reader = Reader {
            kind,
            quarantine: &mut quarantine,
            lines: 0,
        };
        let path = paths.path(kind);
        match kind {
            RecordKind::Factchecks => reader.read(path, |r: FactCheckRecord| {
                corpus.factchecks.push(validate_factcheck(r)?);
                Ok(())
            })?,
            RecordKind::Tweets => {
                reader.read(path, |r: TweetRecord| insert_unique(&mut corpus.tweets, r.id.clone(), r))?
            }
            RecordKind::Comments => reader.read(path, |r: CommentRecord| {
                insert_unique(&mut corpus.comments, r.comment_id.clone(), r)
            })?,
            RecordKind::Reposts => reader.read(path, |r: RepostRecord| {
                insert_unique(&mut corpus.reposts, (r.post_id.clone(), r.user_id.clone()), r)
            })?,
            RecordKind::Users => {
                reader.read(path, |r: UserRecord| insert_unique(&mut corpus.users, r.id.clone(), r))?
            }
        }
        lines_read.insert(kind, reader.lines);
    }

    Ok(LoadedCorpus {
        corpus,
        quarantine,
        lines_read,
    })
}

/// Ids that appear as both a tweet and a comment.
pub(crate) fn colliding_ids(corpus: &RawCorpus) -> BTreeSet<Id> {
    corpus
        .comments
        .keys()
        .filter(|id| corpus.tweets.contains_key(*id))
        .cloned()
        .collect()
}
