use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rumorsage::graph::{build_static_graph, EdgeKind};
use rumorsage::ingestion::{join_post_sets, load_corpus, CorpusPaths, Id, LabeledPostSet, Member, NodeKind, RecordKind};
use rumorsage::synth::{generate, SynthConfig};

/// Assigns comments to threads by repeated sweeps until nothing changes.
fn fixed_point_threads(
    sources: &BTreeSet<Id>,
    comments: &[(Id, Id, Id)],
) -> BTreeMap<Id, BTreeSet<Id>> {
    let mut root_of: HashMap<Id, Id> = sources.iter().map(|s| (s.clone(), s.clone())).collect();
    loop {
        let mut changed = false;
        for (id, post, reply_to) in comments {
            if root_of.contains_key(id) || !sources.contains(post) {
                continue;
            }
            if root_of.get(reply_to) == Some(post) {
                root_of.insert(id.clone(), post.clone());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out: BTreeMap<Id, BTreeSet<Id>> = sources.iter().map(|s| (s.clone(), BTreeSet::new())).collect();
    for (id, root) in root_of {
        if id != root {
            out.get_mut(&root).unwrap().insert(id);
        }
    }
    out
}

#[test]
fn join_matches_fixed_point_reachability() {
    let mut data = generate(&SynthConfig {
        n_graphs: 40,
        feature_dim: 4,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    data.records.comments.shuffle(&mut rng);
    let keep = data.records.comments.len() * 4 / 5;
    data.records.comments.truncate(keep);

    let dir = tempfile::tempdir().unwrap();
    data.records.write(dir.path()).unwrap();
    let loaded = load_corpus(&CorpusPaths::in_dir(dir.path())).unwrap();
    let joined = join_post_sets(&loaded.corpus);

    let sources: BTreeSet<Id> = data.records.tweets.iter().map(|t| t.id.clone()).collect();
    let comments: Vec<(Id, Id, Id)> = data
        .records
        .comments
        .iter()
        .map(|c| (c.comment_id.clone(), c.post_id.clone(), c.reply_post_id.clone()))
        .collect();
    let mut expected = fixed_point_threads(&sources, &comments);
    let reached: usize = expected.values().map(BTreeSet::len).sum();
    for r in &data.records.reposts {
        expected
            .get_mut(&r.post_id)
            .unwrap()
            .insert(Id(format!("rt:{}:{}", r.post_id, r.user_id)));
    }

    let got: BTreeMap<Id, BTreeSet<Id>> = joined
        .post_sets
        .iter()
        .map(|s| (s.source.id.clone(), s.responses.iter().map(|m| m.id.clone()).collect()))
        .collect();
    assert_eq!(got, expected);
    let orphans = joined.quarantine.iter().filter(|q| q.file == RecordKind::Comments).count();
    assert_eq!(orphans, comments.len() - reached);
    assert!(orphans > 0, "the sample should orphan some comments");
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> LabeledPostSet {
    let mut members = vec![Member {
        id: Id("src".into()),
        parent: None,
        kind: NodeKind::Source,
        ts: 1_000,
        text: String::new(),
    }];
    for i in 1..n {
        let retweet = rng.random_bool(0.25);
        let parent = if retweet {
            0
        } else {
            let replies: Vec<usize> = (0..members.len()).filter(|&j| members[j].kind != NodeKind::Retweet).collect();
            replies[rng.random_range(0..replies.len())]
        };
        let ts = members[parent].ts + rng.random_range(0..500);
        members.push(Member {
            id: Id(format!("m{i:02}")),
            parent: Some(members[parent].id.clone()),
            kind: if retweet { NodeKind::Retweet } else { NodeKind::Reply },
            ts,
            text: String::new(),
        });
    }
    members[1..].shuffle(rng);
    LabeledPostSet {
        source_id: Id("src".into()),
        label: Some(2),
        members,
    }
}

#[test]
fn static_graph_matches_parent_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..50 {
        let set = random_set(&mut rng, 12);
        let g = build_static_graph(trial, &set).unwrap();
        assert_eq!(g.label, Some(2));
        assert_eq!(g.nodes[0].tweet_id, Id("src".into()));

        let mut order: Vec<&Member> = set.members.iter().filter(|m| m.parent.is_some()).collect();
        order.sort_by_key(|m| (m.ts, m.id.clone()));
        let ids: Vec<&Id> = g.nodes.iter().skip(1).map(|n| &n.tweet_id).collect();
        assert_eq!(ids, order.iter().map(|m| &m.id).collect::<Vec<_>>());

        let expected: BTreeSet<(Id, Id, EdgeKind)> = set
            .members
            .iter()
            .filter_map(|m| {
                let kind = match m.kind {
                    NodeKind::Reply => EdgeKind::Reply,
                    NodeKind::Retweet => EdgeKind::Retweet,
                    NodeKind::Source => return None,
                };
                Some((m.id.clone(), m.parent.clone().unwrap(), kind))
            })
            .collect();
        let got: BTreeSet<(Id, Id, EdgeKind)> = g
            .edges
            .iter()
            .map(|e| (g.nodes[e.src].tweet_id.clone(), g.nodes[e.dst].tweet_id.clone(), e.kind))
            .collect();
        assert_eq!(got, expected);
        assert_eq!(g.edges.len(), 11);
    }
}
