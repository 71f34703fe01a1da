//! Joining tweets, comments and reposts into post sets (a source tweet plus
//! all of its responsive tweets) and attaching fact-check labels.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::corpus::{colliding_ids, FactCheck, QuarantineEntry, RawCorpus, RecordKind};
use super::records::{tweet_id_from_url, Id};
use crate::classes::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Source,
    Reply,
    Retweet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub id: Id,
    /// The tweet or comment this member responds to; `None` for the source.
    pub parent: Option<Id>,
    pub kind: NodeKind,
    pub ts: i64,
    #[serde(default)]
    pub text: String,
}

/// A source tweet and its responsive tweets ordered by `(ts, id)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostSet {
    pub source: Member,
    pub responses: Vec<Member>,
}

impl PostSet {
    pub fn members(&self) -> impl Iterator<Item = &Member> {
        std::iter::once(&self.source).chain(self.responses.iter())
    }

    pub fn len(&self) -> usize {
        1 + self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Wire form of a post set: the source is the first member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPostSet {
    pub source_id: Id,
    /// Class index, or `None` when no fact check covers the source tweet.
    pub label: Option<usize>,
    pub members: Vec<Member>,
}

impl LabeledPostSet {
    pub fn new(set: &PostSet, label: Option<Verdict>) -> Self {
        Self {
            source_id: set.source.id.clone(),
            label: label.map(Verdict::index),
            members: set.members().cloned().collect(),
        }
    }

    pub fn post_set(&self) -> Option<PostSet> {
        let (source, rest) = self.members.split_first()?;
        if source.kind != NodeKind::Source || source.id != self.source_id {
            return None;
        }
        Some(PostSet {
            source: source.clone(),
            responses: rest.to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rejection {
    /// Responses whose reply chain loops back on itself.
    Cycle { ids: Vec<Id> },
    /// A source tweet claimed by fact checks with different verdicts.
    LabelConflict { source_id: Id, verdicts: Vec<String> },
}

#[derive(Debug, Default)]
pub struct JoinOutcome {
    pub post_sets: Vec<PostSet>,
    pub quarantine: Vec<QuarantineEntry>,
    pub rejected: Vec<Rejection>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Resolution {
    Root(Id),
    Orphan(Id),
    Cycle(usize),
}

fn quarantine(out: &mut Vec<QuarantineEntry>, file: RecordKind, reason: String) {
    log::warn!("{file:?}: {reason}");
    out.push(QuarantineEntry {
        file,
        line_no: 0,
        reason,
    });
}

/// Builds one post set per source tweet.
///
/// A tweet is a source iff neither its `reply_url` nor its `quote_url`
/// points at a tweet in the corpus. Comments hang off `reply_post_id`,
/// which must be the thread's root tweet or a comment of the same thread.
/// Reposts and quote tweets attach to the source tweet directly.
pub fn join_post_sets(corpus: &RawCorpus) -> JoinOutcome {
    let mut out = JoinOutcome::default();
    // member id -> (parent id, kind)
    let mut parent: HashMap<Id, (Id, NodeKind)> = HashMap::new();
    let mut ts: HashMap<Id, i64> = HashMap::new();

    for (id, t) in &corpus.tweets {
        ts.insert(id.clone(), t.date.0);
        let link = |url: &Option<String>| {
            url.as_deref()
                .and_then(tweet_id_from_url)
                .filter(|p| p != id && corpus.tweets.contains_key(p))
        };
        if let Some(p) = link(&t.reply_url) {
            parent.insert(id.clone(), (p, NodeKind::Reply));
        } else if let Some(p) = link(&t.quote_url) {
            parent.insert(id.clone(), (p, NodeKind::Retweet));
        }
    }

    let collisions = colliding_ids(corpus);
    for (id, c) in &corpus.comments {
        if collisions.contains(id) {
            quarantine(
                &mut out.quarantine,
                RecordKind::Comments,
                format!("comment id {id} collides with a tweet id"),
            );
            continue;
        }
        if !corpus.tweets.contains_key(&c.post_id) {
            quarantine(
                &mut out.quarantine,
                RecordKind::Comments,
                format!("comment {id}: post_id {} is not a known tweet", c.post_id),
            );
            continue;
        }
        let target = &c.reply_post_id;
        let same_thread = *target == c.post_id
            || corpus
                .comments
                .get(target)
                .is_some_and(|t| t.post_id == c.post_id && !collisions.contains(target));
        if !same_thread {
            quarantine(
                &mut out.quarantine,
                RecordKind::Comments,
                format!("comment {id}: reply_post_id {target} is not in thread {}", c.post_id),
            );
            continue;
        }
        ts.insert(id.clone(), c.date.0);
        parent.insert(id.clone(), (target.clone(), NodeKind::Reply));
    }

    // Walk every tweet/comment to its root.
    let mut memo: HashMap<Id, Resolution> = HashMap::new();
    let mut cycles = 0usize;
    let nodes: Vec<Id> = ts.keys().cloned().collect();
    for start in &nodes {
        if memo.contains_key(start) {
            continue;
        }
        let mut path: Vec<Id> = Vec::new();
        let mut on_path: HashMap<Id, usize> = HashMap::new();
        let mut cur = start.clone();
        let resolution = loop {
            if let Some(r) = memo.get(&cur) {
                break r.clone();
            }
            if !ts.contains_key(&cur) {
                break Resolution::Orphan(cur);
            }
            if let Some(&at) = on_path.get(&cur) {
                let cid = cycles;
                cycles += 1;
                for id in &path[at..] {
                    memo.insert(id.clone(), Resolution::Cycle(cid));
                }
                path.truncate(at);
                break Resolution::Cycle(cid);
            }
            on_path.insert(cur.clone(), path.len());
            path.push(cur.clone());
            match parent.get(&cur) {
                Some((p, _)) => cur = p.clone(),
                None => break Resolution::Root(cur),
            }
        };
        for id in path {
            memo.insert(id, resolution.clone());
        }
    }

    let mut cycle_members: BTreeMap<usize, BTreeSet<Id>> = BTreeMap::new();
    let mut by_root: BTreeMap<Id, Vec<Member>> = BTreeMap::new();
    for id in &nodes {
        match &memo[id] {
            Resolution::Root(root) if root == id => {}
            Resolution::Root(root) => {
                let (p, kind) = &parent[id];
                let (text, file_parent) = match corpus.tweets.get(id) {
                    Some(t) => (t.tweet.clone(), p.clone()),
                    None => (corpus.comments[id].comment.clone(), p.clone()),
                };
                let parent_id = if *kind == NodeKind::Retweet { root.clone() } else { file_parent };
                by_root.entry(root.clone()).or_default().push(Member {
                    id: id.clone(),
                    parent: Some(parent_id),
                    kind: *kind,
                    ts: ts[id],
                    text,
                });
            }
            Resolution::Orphan(missing) => {
                let file = if corpus.tweets.contains_key(id) {
                    RecordKind::Tweets
                } else {
                    RecordKind::Comments
                };
                quarantine(
                    &mut out.quarantine,
                    file,
                    format!("{id}: unresolvable parent {missing}"),
                );
            }
            Resolution::Cycle(cid) => {
                cycle_members.entry(*cid).or_default().insert(id.clone());
            }
        }
    }

    for ((post_id, user_id), r) in &corpus.reposts {
        let Some(tweet) = corpus.tweets.get(post_id) else {
            quarantine(
                &mut out.quarantine,
                RecordKind::Reposts,
                format!("repost by {user_id}: post_id {post_id} is not a known tweet"),
            );
            continue;
        };
        let id = Id(format!("rt:{post_id}:{user_id}"));
        match &memo[post_id] {
            Resolution::Root(root) => {
                let ts = r.date.map(|d| d.0).unwrap_or(corpus.tweets[root].date.0);
                by_root.entry(root.clone()).or_default().push(Member {
                    id,
                    parent: Some(root.clone()),
                    kind: NodeKind::Retweet,
                    ts,
                    text: tweet.tweet.clone(),
                });
            }
            Resolution::Cycle(cid) => {
                cycle_members.entry(*cid).or_default().insert(id);
            }
            Resolution::Orphan(missing) => quarantine(
                &mut out.quarantine,
                RecordKind::Reposts,
                format!("{id}: unresolvable parent {missing}"),
            ),
        }
    }

    for (id, t) in &corpus.tweets {
        if memo.get(id) != Some(&Resolution::Root(id.clone())) {
            continue;
        }
        let mut responses = by_root.remove(id).unwrap_or_default();
        responses.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.id.cmp(&b.id)));
        out.post_sets.push(PostSet {
            source: Member {
                id: id.clone(),
                parent: None,
                kind: NodeKind::Source,
                ts: t.date.0,
                text: t.tweet.clone(),
            },
            responses,
        });
    }

    for (_, ids) in cycle_members {
        let ids: Vec<Id> = ids.into_iter().collect();
        log::warn!("rejecting cyclic reply chain {ids:?}");
        out.rejected.push(Rejection::Cycle { ids });
    }
    out
}

#[derive(Debug, Default)]
pub struct LabelOutcome {
    pub sets: Vec<LabeledPostSet>,
    pub rejected: Vec<Rejection>,
}

impl LabelOutcome {
    pub fn labeled(&self) -> impl Iterator<Item = &LabeledPostSet> {
        self.sets.iter().filter(|s| s.label.is_some())
    }
}

/// Labels every post set whose source tweet id appears in some fact check's
/// tweet links. Sets claimed by conflicting verdicts are rejected; sets with
/// no match stay unlabeled.
pub fn label_post_sets(sets: &[PostSet], factchecks: &[FactCheck]) -> LabelOutcome {
    let mut verdicts: HashMap<&Id, BTreeSet<Verdict>> = HashMap::new();
    for fc in factchecks {
        for id in &fc.tweet_ids {
            verdicts.entry(id).or_default().insert(fc.verdict);
        }
    }
    let mut out = LabelOutcome::default();
    for set in sets {
        match verdicts.get(&set.source.id) {
            None => out.sets.push(LabeledPostSet::new(set, None)),
            Some(v) if v.len() == 1 => {
                out.sets.push(LabeledPostSet::new(set, v.iter().next().copied()));
            }
            Some(v) => out.rejected.push(Rejection::LabelConflict {
                source_id: set.source.id.clone(),
                verdicts: v.iter().map(|v| v.name().to_string()).collect(),
            }),
        }
    }
    out
}
