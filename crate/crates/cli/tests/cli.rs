use std::path::Path;
use std::process::{Command, Output};

fn daarep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daarep"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = daarep(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(dir: &Path, rel: &str) -> String {
    std::fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Small hand-written dataset: taxon `core` is present everywhere.
fn write_small(dir: &Path, n_per_group: usize) {
    let n = 2 * n_per_group;
    let samples: Vec<String> = (0..n).map(|j| format!("s{j}")).collect();
    let mut counts = format!("taxon_id\t{}\n", samples.join("\t"));
    let rows: [(&str, Box<dyn Fn(usize) -> u64>); 3] = [
        ("core", Box::new(|j| 50 + (j as u64 * 7) % 13)),
        ("up", Box::new(move |j| if j >= n_per_group { 20 + j as u64 % 5 } else { (j % 3 == 0) as u64 })),
        ("patchy", Box::new(|j| (j as u64 * 5) % 4)),
    ];
    for (name, f) in &rows {
        let vals: Vec<String> = (0..n).map(|j| f(j).to_string()).collect();
        counts.push_str(&format!("{name}\t{}\n", vals.join("\t")));
    }
    let mut meta = String::from("sample_id\tgroup\n");
    for (j, s) in samples.iter().enumerate() {
        meta.push_str(&format!("{s}\t{}\n", if j < n_per_group { "control" } else { "case" }));
    }
    std::fs::write(dir.join("c.tsv"), counts).unwrap();
    std::fs::write(dir.join("m.tsv"), meta).unwrap();
}

#[test]
fn daa_writes_results_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_small(d, 12);
    ok(d, &["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--method", "orm", "--alpha", "0.05", "--out", "out"]);
    ok(d, &["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--method", "orm", "--alpha", "0.05", "--out", "again"]);
    let tsv = read(d, "out/results.tsv");
    assert_eq!(tsv.lines().next().unwrap(), "taxon_id\testimate\tse\tdf\tp\tq\tdirection\tapplicable");
    assert_eq!(tsv.lines().count(), 4);
    assert_eq!(tsv, read(d, "again/results.tsv"));
    assert_eq!(read(d, "out/results.json"), read(d, "again/results.json"));
    let meta: serde_json::Value = serde_json::from_str(&read(d, "out/results.json")).unwrap();
    assert_eq!(meta["method"], "orm");
    assert_eq!(meta["alpha"], 0.05);
    assert_eq!(meta["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(meta["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn logistic_marks_ubiquitous_taxon_not_applicable() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_small(d, 12);
    ok(d, &["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--method", "logr", "--out", "out"]);
    let tsv = read(d, "out/results.tsv");
    let core = tsv.lines().find(|l| l.starts_with("core\t")).unwrap();
    assert!(core.ends_with("\tfalse"), "{core}");
    let up = tsv.lines().find(|l| l.starts_with("up\t")).unwrap();
    assert!(up.ends_with("\ttrue"), "{up}");
}

#[test]
fn invalid_input_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_small(d, 12);
    for args in [
        vec!["daa", "--counts", "missing.tsv", "--meta", "m.tsv", "--out", "o"],
        vec!["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--method", "magic", "--out", "o"],
        vec!["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--alpha", "1.5", "--out", "o"],
        vec!["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--covariates", "age", "--out", "o"],
        vec!["daa", "--out", "o"],
        vec!["synth", "--affected", "500", "--seed", "1", "--out", "o"],
        vec!["split-bench", "--counts", "c.tsv", "--meta", "m.tsv", "--out", "o"],
    ] {
        let out = daarep(d, &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!String::from_utf8_lossy(&out.stderr).trim().is_empty());
    }
    assert!(!d.join("o").exists());
}

#[test]
fn small_datasets_are_skipped_unless_strict() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_small(d, 12);
    let out = ok(d, &["split-bench", "--counts", "c.tsv", "--meta", "m.tsv", "--seed", "1", "--out", "o"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 20"));
    assert_eq!(read(d, "o/metrics.tsv").lines().count(), 1);
    let strict = daarep(d, &["split-bench", "--counts", "c.tsv", "--meta", "m.tsv", "--seed", "1", "--strict", "--out", "s"]);
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn split_bench_counts_and_alpha_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--taxa", "60", "--n", "24", "--affected", "8", "--seed", "3", "--out", "syn"]);
    ok(d, &[
        "split-bench", "--counts", "syn/counts.tsv", "--meta", "syn/meta.tsv", "--methods",
        "orm,lin_log_tss,logr,wilcoxon", "--alphas", "0.01,0.05,0.10", "--seed", "5", "--out", "b",
    ]);
    let pair_files = std::fs::read_dir(d.join("b/pairs"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "tsv"))
        .count();
    assert_eq!(pair_files, 5);
    let metrics = read(d, "b/metrics.tsv");
    assert_eq!(metrics.lines().count(), 1 + 4 * 3);
    let header: Vec<&str> = metrics.lines().next().unwrap().split('\t').collect();
    let col = header.iter().position(|h| *h == "conflict_max").unwrap();
    let maxima: std::collections::BTreeSet<&str> =
        metrics.lines().skip(1).map(|l| l.split('\t').nth(col).unwrap()).collect();
    assert_eq!(maxima, ["0.00025", "0.00125", "0.0025"].into_iter().collect());
    let rank = read(d, "b/rank.tsv");
    assert_eq!(rank.lines().count(), 5);
    assert!(d.join("b/mds.json").exists());
    let run: serde_json::Value = serde_json::from_str(&read(d, "b/run.json")).unwrap();
    assert_eq!(run["n_pairs"], 5);
    assert_eq!(run["config"]["seed"], 5);

    // the rank command reproduces the ordering from the metrics table
    ok(d, &["rank", "--reports", "b/metrics.tsv", "--out", "r"]);
    let order = |t: &str| t.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(order(&read(d, "r/rank.tsv")), order(&rank));
}

#[test]
fn single_split_bench_writes_one_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--taxa", "40", "--n", "20", "--seed", "4", "--out", "syn"]);
    ok(d, &["split-bench", "--manifest", "syn/manifest.json", "--seed", "2", "--out", "b"]);
    assert_eq!(read(d, "b/metrics.tsv").lines().count(), 2);
    assert!(!d.join("b/rank.tsv").exists());
}

#[test]
fn cross_bench_pairs_three_studies() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut entries = Vec::new();
    for (name, n, seed) in [("s50", "25", "1"), ("s100", "50", "2"), ("s200", "100", "3")] {
        ok(d, &["synth", "--taxa", "30", "--n", n, "--seed", seed, "--study-id", name, "--out", name]);
        entries.push(format!(
            r#"{{"study_id": "{name}", "condition": "crc", "seq_type": "16S", "counts": "{name}/counts.tsv", "meta": "{name}/meta.tsv"}}"#
        ));
    }
    std::fs::write(d.join("m.json"), format!(r#"{{"datasets": [{}]}}"#, entries.join(","))).unwrap();
    ok(d, &["cross-bench", "--manifest", "m.json", "--out", "x"]);
    let mut pairs: Vec<String> = std::fs::read_dir(d.join("x/pairs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f.ends_with(".json"))
        .collect();
    pairs.sort();
    assert_eq!(pairs, ["s100~s200.json", "s50~s100.json", "s50~s200.json"]);
    let counts = read(d, "x/exploratory_counts.tsv");
    let expl: Vec<&str> = counts.lines().skip(1).map(|l| l.split('\t').nth(2).unwrap()).collect();
    assert_eq!(expl, ["s100", "s50"]);
    let n_valid: Vec<&str> = counts.lines().skip(1).map(|l| l.split('\t').nth(3).unwrap()).collect();
    assert_eq!(n_valid, ["1", "2"]);
}

#[test]
fn cross_bench_without_pairs_succeeds_with_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for (name, cond) in [("a", "ibd"), ("b", "crc")] {
        ok(d, &["synth", "--taxa", "20", "--n", "15", "--seed", "1", "--study-id", name, "--condition", cond, "--out", name]);
    }
    let m = r#"{"datasets": [
        {"study_id": "a", "condition": "ibd", "seq_type": "16S", "counts": "a/counts.tsv", "meta": "a/meta.tsv"},
        {"study_id": "b", "condition": "crc", "seq_type": "16S", "counts": "b/counts.tsv", "meta": "b/meta.tsv"}]}"#;
    std::fs::write(d.join("m.json"), m).unwrap();
    let out = ok(d, &["cross-bench", "--manifest", "m.json", "--out", "x"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid cross-study pairs"));
    assert_eq!(read(d, "x/metrics.tsv").lines().count(), 1);
    assert_eq!(read(d, "x/exploratory_counts.tsv").lines().count(), 1);
}

#[test]
fn synth_null_truth_and_bloom_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--taxa", "30", "--n", "10", "--affected", "0", "--seed", "7", "--out", "null"]);
    let truth: serde_json::Value = serde_json::from_str(&read(d, "null/truth.json")).unwrap();
    let taxa = truth["taxa"].as_array().unwrap();
    assert_eq!(taxa.len(), 30);
    assert!(taxa.iter().all(|t| t["true_log_fold"] == 0.0 && t["affected"] == false));

    ok(d, &["synth", "--taxa", "30", "--n", "20", "--seed", "7", "--absolute", "--bloom-fold", "50", "--out", "bloom"]);
    assert!(d.join("bloom/absolute.tsv").exists());
    ok(d, &[
        "daa", "--counts", "bloom/counts.tsv", "--meta", "bloom/meta.tsv", "--method", "lin_log_tss",
        "--truth", "bloom/truth.json", "--out", "audit",
    ]);
    let res: serde_json::Value = serde_json::from_str(&read(d, "audit/results.json")).unwrap();
    let acc = res["sign_accuracy"]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(res["sign_accuracy"]["denominator"], 30.0);
}

#[test]
fn wilcoxon_drops_covariates_with_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_small(d, 12);
    let meta = read(d, "m.tsv");
    let with_age: String = meta
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\tage\n") } else { format!("{l}\t{}\n", 20 + i % 7) })
        .collect();
    std::fs::write(d.join("m.tsv"), with_age).unwrap();
    let out = ok(d, &["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--method", "wilcoxon", "--out", "w"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("covariates ignored"));
    ok(d, &["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--method", "orm", "--covariates", "age", "--out", "o"]);
    ok(d, &["daa", "--counts", "c.tsv", "--meta", "m.tsv", "--method", "lin_log", "--covariates", "none", "--out", "n"]);
}
