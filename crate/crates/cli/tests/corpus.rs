//! The example corpus: canonical documents, snapshot reports, and the
//! binary's exit codes.  `DGM_REGENERATE=1` rewrites documents and snapshots.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command as Process, Output, Stdio};

use dgm_cli::doc::Document;
use dgm_cli::{run, Command, Options};

mod common;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn regenerate() -> bool {
    std::env::var_os("DGM_REGENERATE").is_some_and(|v| v == "1")
}

/// Compares `text` with the file, or rewrites the file when regenerating.
fn compare_or_write(path: &Path, text: &str) {
    if regenerate() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, text).unwrap();
        return;
    }
    let saved = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}; run with DGM_REGENERATE=1", path.display()));
    assert_eq!(saved, text, "{} is out of date", path.display());
}

/// Document, command, connections, isomorphism, expected exit code.
const CASES: &[(&str, Command, &[&str], Option<&str>, i32)] = &[
    ("rank_one_curved", Command::Validate, &[], None, 0),
    ("rank_one_curved", Command::TangentComplex, &[], None, 3),
    ("rank_one_curved", Command::Cohomology, &[], None, 0),
    ("rank_one_curved", Command::Todd, &[], None, 0),
    ("rank_one_curved", Command::HkrCheck, &[], None, 0),
    ("rank_one_curved", Command::HochschildWindow, &[], None, 0),
    ("projection", Command::Validate, &[], None, 0),
    ("projection", Command::Classify, &[], None, 0),
    ("projection", Command::KernelAcyclicity, &[], None, 0),
    ("projection", Command::Ladder, &[], None, 0),
    ("projection", Command::Invariance, &["twist"], None, 0),
    ("fold", Command::Validate, &[], None, 0),
    ("fold", Command::Classify, &[], None, 3),
    ("connections", Command::Validate, &[], None, 0),
    ("connections", Command::Atiyah, &["skew"], None, 0),
    ("connections", Command::CompareClasses, &["skew", "shift"], None, 0),
    ("shear", Command::Validate, &[], None, 0),
    ("shear", Command::HkrCheck, &[], Some("shear"), 0),
];

fn load(stem: &str) -> (String, Document) {
    let path = corpus_dir().join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&path).unwrap();
    let doc = Document::parse(&text).unwrap_or_else(|e| panic!("{stem}: {e}"));
    (text, doc)
}

#[test]
fn shear_document_matches_its_builder() {
    compare_or_write(&corpus_dir().join("shear.json"), &common::nonlinear_iso_doc().to_text());
}

#[test]
fn corpus_documents_are_canonical() {
    let mut stems: Vec<&str> = CASES.iter().map(|c| c.0).collect();
    stems.dedup();
    for stem in stems {
        let (text, doc) = load(stem);
        compare_or_write(&corpus_dir().join(format!("{stem}.json")), &doc.to_text());
        // serialize(parse(doc)) is a fixed point
        assert_eq!(Document::parse(&doc.to_text()).unwrap(), doc, "{stem}");
        if !regenerate() {
            assert_eq!(text, doc.to_text());
        }
    }
}

#[test]
fn corpus_reports_match_snapshots() {
    for &(stem, cmd, connections, iso, exit) in CASES {
        let (_, doc) = load(stem);
        let opts = Options {
            connections: connections.iter().map(|s| s.to_string()).collect(),
            isomorphism: iso.map(str::to_string),
            ..Options::default()
        };
        let r = run(cmd, &doc, &opts).unwrap_or_else(|e| panic!("{stem} {}: {e}", cmd.name()));
        assert_eq!(r.exit_code, exit, "{stem} {}: {:?}", cmd.name(), r.checks);
        compare_or_write(&corpus_dir().join("reports").join(format!("{stem}.{}.json", cmd.name())), &r.to_json());
    }
}

#[test]
fn fold_names_the_submersion_failure() {
    let (_, doc) = load("fold");
    let r = run(Command::Classify, &doc, &Options::default()).unwrap();
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    assert_eq!(failed, ["f is a submersion"]);
    let relaxed = Options { require: Some("none".into()), ..Options::default() };
    assert_eq!(run(Command::Classify, &doc, &relaxed).unwrap().exit_code, 0);
}

fn dgm(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Process::new(env!("CARGO_BIN_EXE_dgm"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn corpus_file(stem: &str) -> String {
    corpus_dir().join(format!("{stem}.json")).display().to_string()
}

#[test]
fn binary_output_is_the_snapshot_and_repeatable() {
    let file = corpus_file("fold");
    let a = dgm(&["classify", &file], None);
    let b = dgm(&["classify", &file], None);
    assert_eq!(a.status.code(), Some(3));
    assert_eq!(a.stdout, b.stdout);
    let snap = std::fs::read(corpus_dir().join("reports/fold.classify.json")).unwrap();
    assert_eq!(a.stdout, snap);
}

#[test]
fn binary_reads_stdin_and_writes_files() {
    let (text, _) = load("rank_one_curved");
    let out = std::env::temp_dir().join(format!("dgm-report-{}.md", std::process::id()));
    let o = dgm(&["todd", "-", "--report-format", "md", "--output", &out.display().to_string()], Some(&text));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let md = std::fs::read_to_string(&out).unwrap();
    std::fs::remove_file(&out).unwrap();
    assert!(md.starts_with("# dgm todd on L: PASS (exit 0)"));
}

#[test]
fn flags_override_document_params() {
    let file = corpus_file("rank_one_curved");
    let o = dgm(&["cohomology", &file, "--window", "-10..4", "--complex", "forms"], None);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ranks"][0]["window"], serde_json::json!([-10, 4]));
    assert_eq!(v["ranks"].as_array().unwrap().len(), 1);
}

#[test]
fn schema_errors_exit_with_2() {
    let (text, _) = load("rank_one_curved");
    let bad_field = text.replacen("\"degree\": 1", "\"degree\": 1, \"weight\": 0", 1);
    assert_eq!(dgm(&["validate"], Some(&bad_field)).status.code(), Some(2));
    assert_eq!(dgm(&["validate"], Some("not json")).status.code(), Some(2));
    let file = corpus_file("projection");
    let o = dgm(&["cohomology", &file], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("choose one with --bundle"));
    assert_eq!(dgm(&["cohomology", &file, "--window", "4..-2", "--bundle", "E"], None).status.code(), Some(2));
    assert_eq!(dgm(&["atiyah", &file, "--bundle", "E", "--connection", "missing"], None).status.code(), Some(2));
}

#[test]
fn inconclusive_hochschild_window_exits_with_4() {
    // too small an arity bound to stabilize the top degrees
    let file = corpus_file("connections");
    let o = dgm(&["hochschild-window", &file, "--truncate-arity", "1", "--window", "-2..2"], None);
    assert_eq!(o.status.code(), Some(4));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "inconclusive");
    assert!(!v["inconclusive"].as_array().unwrap().is_empty());
}
