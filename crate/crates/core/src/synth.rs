//! Seeded synthetic corpora with a controllable class signal.
//!
//! Each post set is a random reply tree with some retweets of the source.
//! Labels cycle through the classes. Node features carry the label in one of
//! two ways: `Node` shifts every node's mean along a class direction, `Edge`
//! leaves the source as pure noise and makes each reply equal to its parent
//! plus a class offset, so only parent-child differences are informative.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{atomic_write, ArtifactError};
use crate::classes::{Verdict, NUM_CLASSES};
use crate::graph::{attach_features, build_static_graph, FeatureTable, FeaturedGraph};
use crate::ingestion::records::Date;
use crate::ingestion::{
    CommentRecord, FactCheckRecord, Id, LabeledPostSet, Member, NodeKind, RecordKind, RepostRecord, Timestamp,
    TweetRecord, UserRecord,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    #[default]
    Node,
    Edge,
}

impl std::str::FromStr for SignalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "node" => Ok(Self::Node),
            "edge" => Ok(Self::Edge),
            other => Err(format!("unknown signal kind {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_graphs: usize,
    pub n_classes: usize,
    pub nodes_min: usize,
    pub nodes_max: usize,
    pub feature_dim: usize,
    pub signal_strength: f64,
    pub signal: SignalKind,
    /// Standard deviation of per-node noise.
    pub noise: f64,
    /// Standard deviation of source features in `Edge` mode.
    pub base_scale: f64,
    pub retweet_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_graphs: 100,
            n_classes: NUM_CLASSES,
            nodes_min: 3,
            nodes_max: 12,
            feature_dim: 768,
            signal_strength: 1.0,
            signal: SignalKind::Node,
            noise: 1.0,
            base_scale: 1.0,
            retweet_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n_graphs < 10 {
            return bad("n_graphs must be at least 10");
        }
        if !(1..=NUM_CLASSES).contains(&self.n_classes) {
            return bad("n_classes must be between 1 and 5");
        }
        if self.nodes_min == 0 || self.nodes_min > self.nodes_max {
            return bad("nodes range must satisfy 1 <= nodes_min <= nodes_max");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        for (name, v) in [
            ("signal_strength", self.signal_strength),
            ("noise", self.noise),
            ("base_scale", self.base_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !(0.0..=1.0).contains(&self.retweet_fraction) {
            return bad("retweet_fraction must be in [0, 1]");
        }
        Ok(())
    }
}

/// The five record files of a synthetic corpus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthRecords {
    pub factchecks: Vec<FactCheckRecord>,
    pub tweets: Vec<TweetRecord>,
    pub comments: Vec<CommentRecord>,
    pub reposts: Vec<RepostRecord>,
    pub users: Vec<UserRecord>,
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

impl SynthRecords {
    /// Writes the record files into `dir` under their standard names.
    pub fn write(&self, dir: &Path) -> Result<(), ArtifactError> {
        for kind in RecordKind::ALL {
            let bytes = match kind {
                RecordKind::Factchecks => jsonl(&self.factchecks),
                RecordKind::Tweets => jsonl(&self.tweets),
                RecordKind::Comments => jsonl(&self.comments),
                RecordKind::Reposts => jsonl(&self.reposts),
                RecordKind::Users => jsonl(&self.users),
            };
            atomic_write(&dir.join(kind.file_name()), &bytes)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub sets: Vec<LabeledPostSet>,
    pub features: FeatureTable,
    pub records: SynthRecords,
}

impl SynthData {
    /// Graphs with features attached, in post-set order.
    pub fn featured_graphs(&self) -> Vec<FeaturedGraph> {
        self.sets
            .iter()
            .enumerate()
            .map(|(j, set)| {
                let g = build_static_graph(j, set).expect("synthetic post sets are valid");
                attach_features(&g, &self.features, self.features.dim()).expect("every node has a row")
            })
            .collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v = gaussian(rng, dim, 1.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x / norm).collect()
}

const BASE_TS: i64 = 1_600_000_000;
const SOURCE_ID: u64 = 1_000_000_000_000;
const COMMENT_ID: u64 = 2_000_000_000_000;
const RETWEET_USER: u64 = 900_000;

/// A generated node before it becomes a record and a feature row.
struct SynthNode {
    id: Id,
    parent: Option<usize>,
    kind: NodeKind,
    ts: i64,
    text: String,
    x: Vec<f64>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthData, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.feature_dim;
    let directions: Vec<Vec<f64>> = (0..config.n_classes).map(|_| unit(&mut rng, dim)).collect();
    let mut sets = Vec::with_capacity(config.n_graphs);
    let mut features = FeatureTable::new(dim);
    let mut records = SynthRecords::default();
    let mut users = BTreeSet::new();
    let mut next_comment = COMMENT_ID;
    let day = NaiveDate::from_ymd_opt(2020, 9, 1).expect("valid date");

    for j in 0..config.n_graphs {
        let class = j % config.n_classes;
        let verdict = Verdict::from_index(class).expect("class in range");
        let n = rng.random_range(config.nodes_min..=config.nodes_max);
        let source_id = Id((SOURCE_ID + j as u64).to_string());
        let t0 = BASE_TS + j as i64 * 86_400;
        let source_user = rng.random_range(1..=500u64);
        users.insert(source_user);

        let shift: Vec<f64> = directions[class].iter().map(|d| d * config.signal_strength).collect();
        let node_features = |rng: &mut ChaCha8Rng, parent: Option<&Vec<f64>>, retweet: bool| -> Vec<f64> {
            match (config.signal, parent) {
                (SignalKind::Node, _) => {
                    let noise = gaussian(rng, dim, config.noise);
                    noise.iter().zip(&shift).map(|(a, b)| a + b).collect()
                }
                (SignalKind::Edge, None) => gaussian(rng, dim, config.base_scale),
                (SignalKind::Edge, Some(p)) => {
                    let noise = gaussian(rng, dim, config.noise);
                    if retweet {
                        p.iter().zip(&noise).map(|(a, b)| a + b).collect()
                    } else {
                        p.iter().zip(&noise).zip(&shift).map(|((a, b), c)| a + b + c).collect()
                    }
                }
            }
        };

        let source_text = format!("Synthetic claim {j} about topic {} https://example.org/{j}", j % 7);
        let x0 = node_features(&mut rng, None, false);
        let mut nodes = vec![SynthNode {
            id: source_id.clone(),
            parent: None,
            kind: NodeKind::Source,
            ts: t0,
            text: source_text.clone(),
            x: x0,
        }];
        for i in 1..n {
            let retweet = rng.random_bool(config.retweet_fraction);
            if retweet {
                let user = RETWEET_USER + i as u64;
                let id = Id(format!("rt:{source_id}:{user}"));
                let ts = t0 + rng.random_range(60..=36 * 3600);
                let x = node_features(&mut rng, Some(&nodes[0].x), true);
                records.reposts.push(RepostRecord {
                    post_id: source_id.clone(),
                    user_id: Id(user.to_string()),
                    name: format!("user {user}"),
                    username: format!("user{user}"),
                    date: Some(Timestamp(ts)),
                });
                nodes.push(SynthNode {
                    id,
                    parent: Some(0),
                    kind: NodeKind::Retweet,
                    ts,
                    text: source_text.clone(),
                    x,
                });
                continue;
            }
            let candidates: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k].kind != NodeKind::Retweet).collect();
            let parent = candidates[rng.random_range(0..candidates.len())];
            let ts = nodes[parent].ts + rng.random_range(60..=12 * 3600);
            let id = Id(next_comment.to_string());
            next_comment += 1;
            let user = rng.random_range(1..=500u64);
            users.insert(user);
            let text = format!("@user{user} reply {i} in thread {j} to {}", nodes[parent].id);
            let x = node_features(&mut rng, Some(&nodes[parent].x), false);
            records.comments.push(CommentRecord {
                post_id: source_id.clone(),
                comment_id: id.clone(),
                user_id: Id(user.to_string()),
                comment: text.clone(),
                reply_to: None,
                date: Timestamp(ts),
                source: None,
                retweets: 0,
                likes: 0,
                replies: 0,
                mentions: None,
                thread_id: None,
                reply_post_id: nodes[parent].id.clone(),
            });
            nodes.push(SynthNode {
                id,
                parent: Some(parent),
                kind: NodeKind::Reply,
                ts,
                text,
                x,
            });
        }

        records.tweets.push(TweetRecord {
            id: source_id.clone(),
            link: format!("https://twitter.com/user{source_user}/status/{source_id}"),
            date: Timestamp(t0),
            user_id: Id(source_user.to_string()),
            username: format!("user{source_user}"),
            tweet: source_text.clone(),
            replies: nodes.iter().filter(|n| n.kind == NodeKind::Reply && n.parent == Some(0)).count() as u64,
            retweets: records.reposts.iter().filter(|r| r.post_id == source_id).count() as u64,
            likes: 0,
            quoted: 0,
            language: "en".into(),
            place: None,
            mentions: None,
            hashtags: None,
            cashtags: None,
            place_code: None,
            place_id: None,
            geo: None,
            source: None,
            quote_url: None,
            refer_url: None,
            reply_url: None,
            photos: None,
        });
        let date = Date(day + chrono::Days::new(j as u64));
        records.factchecks.push(FactCheckRecord {
            verdict: verdict.name().to_string(),
            statement: format!("Synthetic statement {j}"),
            statement_originator: "Synthetic Source".into(),
            statement_date: date,
            factchecker_name: "Synthetic Checker".into(),
            factcheck_date: date,
            topics: vec![format!("topic {}", j % 7)],
            page: 1,
            factcheck_analysis_link: format!("https://example.org/factcheck/{j}"),
            date_retrieved: None,
            oursource_links: Vec::new(),
            translate_links: Vec::new(),
            translate_twitter_links: vec![format!("https://twitter.com/user{source_user}/status/{source_id}")],
        });

        for node in &nodes {
            let row: Vec<f32> = node.x.iter().map(|&v| v as f32).collect();
            features.push(node.id.clone(), &row).expect("fresh synthetic id");
        }
        let mut members: Vec<Member> = nodes
            .iter()
            .map(|node| Member {
                id: node.id.clone(),
                parent: node.parent.map(|p| nodes[p].id.clone()),
                kind: node.kind,
                ts: node.ts,
                text: node.text.clone(),
            })
            .collect();
        members[1..].sort_by(|a, b| (a.ts, &a.id).cmp(&(b.ts, &b.id)));
        sets.push(LabeledPostSet {
            source_id,
            label: Some(class),
            members,
        });
    }

    records.users = users
        .into_iter()
        .chain((RETWEET_USER..RETWEET_USER + config.nodes_max as u64).filter(|u| {
            let u = u.to_string();
            records.reposts.iter().any(|r| r.user_id.0 == u)
        }))
        .map(|u| UserRecord {
            id: Id(u.to_string()),
            name: format!("user {u}"),
            username: format!("user{u}"),
            bio: None,
            location: None,
            url: None,
            join_time: None,
            tweets: 1,
            following: 0,
            followers: 0,
            likes: 0,
            media: 0,
            private: false,
            verified: false,
            profile_image_url: None,
            background_image: None,
        })
        .collect();
    Ok(SynthData {
        sets,
        features,
        records,
    })
}
