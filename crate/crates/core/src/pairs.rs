//! Sentence pairs for next-sentence fine-tuning of the text encoder.
//!
//! Two generators walk each reply tree below a source tweet. The first
//! pairs every leaf with the source joined to the leaf's parent; the second
//! pairs every leaf with the whole chain of texts from the source down to
//! its parent. A top-level leaf is paired with the source alone. Retweets
//! carry no text of their own and are left out, together with anything
//! replying to them.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{Id, Member, NodeKind, PostSet};

pub const PAIRS_FORMAT: &str = "rumorsage.pairs";
pub const DEFAULT_NEG_PER_POS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrigin {
    Method1,
    Method2,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub prev: String,
    pub next: String,
    /// 1 for a genuine continuation, 0 for a sampled one.
    pub label: u8,
    pub origin: PairOrigin,
    /// Source tweet of the post set `prev` came from.
    pub prev_source: Id,
    /// Source tweet of the post set `next` came from.
    pub next_source: Id,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PairError {
    #[error("negatives require >=2 post sets")]
    TooFewPostSets,
    #[error("negatives require positives from >=2 post sets")]
    SinglePositiveSet,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairCorpus {
    pub pairs: Vec<SentencePair>,
    pub positives: usize,
    pub negatives: usize,
    /// Pairs dropped because one side was empty after cleaning.
    pub skipped_empty: usize,
    /// Positives dropped as exact repeats of an earlier pair.
    pub duplicates: usize,
}

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").unwrap());

/// Removes links and user mentions and collapses whitespace.
pub fn clean_text(text: &str) -> String {
    let no_urls = URL.replace_all(text, " ");
    let no_mentions = MENTION.replace_all(&no_urls, " ");
    no_mentions.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn join(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_string(),
        (_, true) => a.to_string(),
        _ => format!("{a} {b}"),
    }
}

/// Reply tree of one post set with cleaned texts.
pub struct ReplyTree<'a> {
    source: &'a Member,
    texts: HashMap<&'a Id, String>,
    children: HashMap<&'a Id, Vec<&'a Member>>,
}

impl<'a> ReplyTree<'a> {
    pub fn new(set: &'a PostSet) -> Self {
        let mut texts = HashMap::new();
        let mut children: HashMap<&Id, Vec<&Member>> = HashMap::new();
        texts.insert(&set.source.id, clean_text(&set.source.text));
        for m in &set.responses {
            if m.kind == NodeKind::Retweet {
                continue;
            }
            if let Some(parent) = &m.parent {
                texts.insert(&m.id, clean_text(&m.text));
                children.entry(parent).or_default().push(m);
            }
        }
        for list in children.values_mut() {
            list.sort_by(|a, b| (a.ts, &a.id).cmp(&(b.ts, &b.id)));
        }
        Self {
            source: &set.source,
            texts,
            children,
        }
    }

    pub fn source_text(&self) -> &str {
        &self.texts[&self.source.id]
    }

    /// Responses directly below the source, excluding retweets.
    pub fn top_level(&self) -> &[&'a Member] {
        self.children.get(&self.source.id).map_or(&[], Vec::as_slice)
    }

    fn text(&self, m: &Member) -> &str {
        &self.texts[&m.id]
    }

    fn kids(&self, m: &Member) -> &[&'a Member] {
        self.children.get(&m.id).map_or(&[], Vec::as_slice)
    }
}

/// Raw `(prev, next)` pairs before empty-text filtering.
type RawPairs = Vec<(String, String)>;

/// Leaves under `node` paired with `source_text ⊕ parent`; a childless
/// `node` is paired with `source_text` itself.
pub fn pair_generate1(tree: &ReplyTree, source_text: &str, node: &Member) -> RawPairs {
    let mut out = Vec::new();
    let mut visited = HashSet::new();
    generate1(tree, source_text, source_text, node, &mut visited, &mut out);
    out
}

fn generate1<'a>(
    tree: &ReplyTree<'a>,
    source_text: &str,
    previous: &str,
    node: &'a Member,
    visited: &mut HashSet<&'a Id>,
    out: &mut RawPairs,
) {
    if !visited.insert(&node.id) {
        return;
    }
    let kids = tree.kids(node);
    if kids.is_empty() {
        out.push((previous.to_string(), tree.text(node).to_string()));
        return;
    }
    let previous = join(source_text, tree.text(node));
    for child in kids {
        generate1(tree, source_text, &previous, child, visited, out);
    }
}

/// Leaves under `node` paired with the full chain of texts above them.
pub fn pair_generate2(tree: &ReplyTree, prefix: &str, node: &Member) -> RawPairs {
    let mut out = Vec::new();
    let mut visited = HashSet::new();
    generate2(tree, prefix, node, &mut visited, &mut out);
    out
}

fn generate2<'a>(tree: &ReplyTree<'a>, prefix: &str, node: &'a Member, visited: &mut HashSet<&'a Id>, out: &mut RawPairs) {
    if !visited.insert(&node.id) {
        return;
    }
    let kids = tree.kids(node);
    if kids.is_empty() {
        out.push((prefix.to_string(), tree.text(node).to_string()));
        return;
    }
    let prefix = join(prefix, tree.text(node));
    for child in kids {
        generate2(tree, &prefix, child, visited, out);
    }
}

/// Positives from both generators over every post set, then
/// `neg_per_pos` negatives after each positive.
pub fn build_pair_corpus(sets: &[PostSet], neg_per_pos: usize, seed: u64) -> Result<PairCorpus, PairError> {
    if sets.len() < 2 {
        return Err(PairError::TooFewPostSets);
    }
    let mut corpus = PairCorpus::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    // (set index, prev, next, origin)
    let mut positives: Vec<(usize, String, String, PairOrigin)> = Vec::new();
    for (j, set) in sets.iter().enumerate() {
        let tree = ReplyTree::new(set);
        let s = tree.source_text().to_string();
        for node in tree.top_level() {
            let first = pair_generate1(&tree, &s, node).into_iter().map(|p| (p, PairOrigin::Method1));
            let second = pair_generate2(&tree, &s, node).into_iter().map(|p| (p, PairOrigin::Method2));
            for ((prev, next), origin) in first.chain(second) {
                if prev.is_empty() || next.is_empty() {
                    corpus.skipped_empty += 1;
                    continue;
                }
                if !seen.insert((prev.clone(), next.clone())) {
                    corpus.duplicates += 1;
                    continue;
                }
                positives.push((j, prev, next, origin));
            }
        }
    }

    // positives are grouped by set, so each set owns one contiguous block
    let mut blocks: HashMap<usize, (usize, usize)> = HashMap::new();
    for (k, (j, ..)) in positives.iter().enumerate() {
        blocks.entry(*j).and_modify(|b| b.1 = k + 1).or_insert((k, k + 1));
    }
    if neg_per_pos > 0 && !positives.is_empty() && blocks.len() < 2 {
        return Err(PairError::SinglePositiveSet);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = positives.len();
    for (j, prev, next, origin) in &positives {
        let id = |k: usize| sets[k].source.id.clone();
        corpus.pairs.push(SentencePair {
            prev: prev.clone(),
            next: next.clone(),
            label: 1,
            origin: *origin,
            prev_source: id(*j),
            next_source: id(*j),
        });
        corpus.positives += 1;
        let (lo, hi) = blocks[j];
        for _ in 0..neg_per_pos {
            let mut k = rng.random_range(0..total - (hi - lo));
            if k >= lo {
                k += hi - lo;
            }
            let (other, _, other_next, _) = &positives[k];
            corpus.pairs.push(SentencePair {
                prev: prev.clone(),
                next: other_next.clone(),
                label: 0,
                origin: PairOrigin::Negative,
                prev_source: id(*j),
                next_source: id(*other),
            });
            corpus.negatives += 1;
        }
    }
    Ok(corpus)
}
