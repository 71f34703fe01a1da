use std::path::PathBuf;

use rumorsage::artifact::{write_jsonl, ArtifactHeader};
use rumorsage::graph::{attach_features, build_static_graph, FeatureSidecar, FeatureTable};
use rumorsage::ingestion::{Id, LabeledPostSet, Member, NodeKind, PostSet};
use rumorsage::pairs::{build_pair_corpus, PAIRS_FORMAT};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const ROWS: [[f32; 4]; 3] = [
    [0.5, -1.25, 3.0, 0.001],
    [0.0, -0.0, 1e-30, 65504.0],
    [-7.5, 9.536_743e-7, 123.456, -1.0],
];

#[test]
fn reads_conformance_file() {
    let features = fixture("conformance.nfv1");
    let sidecar = FeatureTable::sidecar_path(&features);
    assert_eq!(sidecar, fixture("conformance.nfv1.ids.json"));
    let table = FeatureTable::load(&features, &sidecar).unwrap();
    assert_eq!(table.dim(), 4);
    let ids = ["1001", "rt:1001:42", "2000"];
    for (id, expected) in ids.iter().zip(ROWS) {
        let row = table.row(&Id(id.to_string())).unwrap();
        let bits: Vec<u32> = row.iter().map(|x| x.to_bits()).collect();
        let want: Vec<u32> = expected.iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits, want, "row {id}");
    }
    let meta: FeatureSidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(meta.flagged, vec![Id("2000".into())]);
}

#[test]
fn rewrites_conformance_file_byte_for_byte() {
    let features = fixture("conformance.nfv1");
    let table = FeatureTable::load(&features, &FeatureTable::sidecar_path(&features)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.nfv1");
    table.save(&out, &FeatureTable::sidecar_path(&out), serde_json::json!({})).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&features).unwrap());
    let again = FeatureTable::load(&out, &FeatureTable::sidecar_path(&out)).unwrap();
    assert_eq!(again.ids(), table.ids());
}

#[test]
fn conformance_rows_attach_to_a_graph() {
    let features = fixture("conformance.nfv1");
    let table = FeatureTable::load(&features, &FeatureTable::sidecar_path(&features)).unwrap();
    let member = |id: &str, parent: Option<&str>, kind, ts| Member {
        id: Id(id.into()),
        parent: parent.map(|p| Id(p.into())),
        kind,
        ts,
        text: String::new(),
    };
    let set = LabeledPostSet {
        source_id: Id("1001".into()),
        label: Some(0),
        members: vec![
            member("1001", None, NodeKind::Source, 10),
            member("2000", Some("1001"), NodeKind::Reply, 20),
            member("rt:1001:42", Some("1001"), NodeKind::Retweet, 30),
        ],
    };
    let g = build_static_graph(0, &set).unwrap();
    let fg = attach_features(&g, &table, 4).unwrap();
    assert_eq!(fg.features.row(1)[3], -1.0);
    assert_eq!(fg.features.row(2)[3], 65504.0);
    assert!(attach_features(&g, &table, 768).is_err());
}

#[test]
fn pair_file_lines_carry_the_fields_the_encoder_reads() {
    let set = |tag: &str| {
        let m = |id: String, parent: Option<String>, ts| Member {
            id: Id(id),
            parent: parent.map(Id),
            kind: if ts == 0 { NodeKind::Source } else { NodeKind::Reply },
            ts,
            text: format!("text of {tag} {ts}"),
        };
        PostSet {
            source: m(format!("{tag}0"), None, 0),
            responses: vec![m(format!("{tag}1"), Some(format!("{tag}0")), 1), m(format!("{tag}2"), Some(format!("{tag}1")), 2)],
        }
    };
    let corpus = build_pair_corpus(&[set("a"), set("b")], 5, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.jsonl");
    let header = ArtifactHeader::new(PAIRS_FORMAT, serde_json::json!({"neg_per_pos": 5}));
    write_jsonl(&path, &header, &corpus.pairs).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let head: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(head["format"], PAIRS_FORMAT);
    assert_eq!(head["config"]["neg_per_pos"], 5);
    let mut count = 0;
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["prev"].is_string() && v["next"].is_string());
        assert!(v["label"] == 0 || v["label"] == 1);
        count += 1;
    }
    assert_eq!(count, corpus.pairs.len());
    assert_eq!(corpus.negatives, 5 * corpus.positives);
}
