use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::Deserialize;
use serde_json::Value;

fn wfbws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfbws"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = wfbws(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_to(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["simulate", "--out", path_str(&path)];
    args.extend_from_slice(extra);
    ok(&args);
    path
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--popsize", "1000", "--generations", "100", "--seed", "7"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert_eq!(data_rows(&a).len(), 101);
    assert!(a.contains("\"seed\":7"));
    assert!(a.lines().any(|l| l == "time,frequency"));

    let zero = ok(&["simulate", "--popsize", "50", "--generations", "20", "--x0", "0"]);
    assert!(data_rows(&zero).iter().all(|r| r.ends_with(",0")));

    let sched = ok(&[
        "simulate", "--popsize", "500", "--generations", "200", "--schedule", "0:+0.2,100:-0.2",
    ]);
    assert!(sched.contains("0:+0.2,100:-0.2"));
    assert!(!wfbws(&["simulate", "--popsize", "10.5", "--generations", "5"]).status.success());
    assert!(!wfbws(&["simulate", "--popsize", "10", "--generations", "5", "--x0", "1.5"]).status.success());
}

#[derive(Debug, Deserialize, PartialEq)]
struct FitRow {
    label: String,
    bin_width: Option<u32>,
    n_drift: f64,
    n_selection: f64,
    s: f64,
    p_value: Option<f64>,
    p_value_raw: Option<f64>,
    lambda: f64,
    replicates: usize,
    seed: u64,
}

fn read_fit_rows(text: &str) -> Vec<FitRow> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn fit_csv_round_trips_against_json() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate_to(
        dir.path(),
        "sel.csv",
        &["--popsize", "500", "--selection", "0.2", "--x0", "0.2", "--generations", "30", "--seed", "1"],
    );
    let common = [path_str(&series), "--replicates", "20", "--seed", "5"];
    let csv_text = ok(&[&["fit"][..], &common, &["--format", "csv"]].concat());
    let json: Value = serde_json::from_str(&ok(&[&["fit"][..], &common].concat())).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["config"]["replicates"], 20);

    let rows = read_fit_rows(&csv_text);
    assert_eq!(rows.len(), 1);
    let r = &json["results"][0];
    let from_json = FitRow {
        label: r["label"].as_str().unwrap().into(),
        bin_width: None,
        n_drift: r["drift_fit"]["popsize"].as_f64().unwrap(),
        n_selection: r["sel_fit"]["popsize"].as_f64().unwrap(),
        s: r["sel_fit"]["selstrength"].as_f64().unwrap(),
        p_value: r["p_value"].as_f64(),
        p_value_raw: r["p_value_raw"].as_f64(),
        lambda: r["lambda"].as_f64().unwrap(),
        replicates: 20,
        seed: 5,
    };
    assert_eq!(rows[0], from_json);
    assert!(rows[0].s > 0.0);

    // Written rows parse back to identical values.
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["label", "bin_width", "n_drift", "n_selection", "s", "p_value", "p_value_raw", "lambda", "replicates", "seed"]).unwrap();
    let f = &rows[0];
    wtr.write_record([
        f.label.clone(),
        String::new(),
        f.n_drift.to_string(),
        f.n_selection.to_string(),
        f.s.to_string(),
        f.p_value.unwrap().to_string(),
        f.p_value_raw.unwrap().to_string(),
        f.lambda.to_string(),
        f.replicates.to_string(),
        f.seed.to_string(),
    ])
    .unwrap();
    let again = read_fit_rows(&String::from_utf8(wtr.into_inner().unwrap()).unwrap());
    assert_eq!(&again[0], f);
}

#[test]
fn fit_bins_counts_and_reports_item_errors() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("bend.csv");
    let mut text = String::from("year,count_focal,count_other\n");
    for (i, year) in (1810..1900).enumerate() {
        let focal = 20 + i as u64;
        text.push_str(&format!("{year},{focal},{}\n", 120 - i as u64));
    }
    std::fs::write(&counts, text).unwrap();
    let missing = dir.path().join("absent.csv");
    let out = wfbws(&[
        "fit", path_str(&counts), path_str(&missing), "--bin-widths", "10,20", "--replicates", "5",
    ]);
    assert!(!out.status.success());
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    let results = json["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["bin_width"], 10);
    assert_eq!(results[1]["bin_width"], 20);
    assert_eq!(results[0]["generation_time"], 10.0);
    assert_eq!(json["errors"].as_array().unwrap().len(), 1);

    let ok_run = wfbws(&["fit", path_str(&counts), "--bin-widths", "10", "--replicates", "5"]);
    assert!(ok_run.status.success());
}

fn change_rows(csv_text: &str) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes())
        .records()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn changepoint_finds_the_switch_and_not_a_constant() {
    let dir = tempfile::tempdir().unwrap();
    let step = simulate_to(
        dir.path(),
        "step.csv",
        &[
            "--popsize", "1000", "--schedule", "0:+0.2,20:-0.2", "--x0", "0.2", "--generations", "40",
            "--generation-time", "5", "--seed", "4",
        ],
    );
    let args = ["--replicates", "39", "--max-depth", "1", "--format", "csv"];
    let text = ok(&[&["changepoint", path_str(&step)][..], &args].concat());
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "label,bin_width,T,n_before,s_before,n_after,s_after,p_value,p_value_raw,depth");
    let rows = change_rows(&text);
    assert_eq!(rows.len(), 1);
    let t: f64 = rows[0][2].parse().unwrap();
    assert!((t - 100.0).abs() <= 10.0, "{t}");
    assert!(rows[0][4].parse::<f64>().unwrap() > 0.0 && rows[0][6].parse::<f64>().unwrap() < 0.0);

    let flat = simulate_to(
        dir.path(),
        "flat.csv",
        &["--popsize", "1000", "--x0", "0.5", "--generations", "40", "--generation-time", "5", "--seed", "8"],
    );
    let text = ok(&[&["changepoint", path_str(&flat)][..], &args].concat());
    assert!(change_rows(&text).is_empty());

    let json: Value = serde_json::from_str(&ok(&[
        "changepoint", path_str(&flat), "--replicates", "9", "--max-depth", "1",
    ]))
    .unwrap();
    assert_eq!(json["config"]["p_threshold"], 0.05);
    assert_eq!(json["results"][0]["change_points"].as_array().unwrap().len(), 0);
    assert!(json["results"][0]["tree"]["p_value"].is_number());
}

#[test]
fn changepoint_aggregates_a_manifest_set() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts");
    std::fs::create_dir_all(&counts).unwrap();
    for (w, shift) in [("essa", 0u64), ("esse", 7)] {
        let mut text = String::from("year,count_focal,count_other\n");
        for (i, year) in (1740..1840).enumerate() {
            let focal = if year < 1790 { 90 } else { 90u64.saturating_sub(3 * (i as u64 - 50)) };
            text.push_str(&format!("{year},{},{}\n", focal.saturating_sub(shift), 10 + shift + (100 - focal)));
        }
        std::fs::write(counts.join(format!("{w}.csv")), text).unwrap();
    }
    let manifest = dir.path().join("sets.toml");
    std::fs::write(
        &manifest,
        "[[set]]\nname = \"A\"\ndir = \"counts\"\nwords = [\"essa\", \"esse\", \"nowhere\"]\n",
    )
    .unwrap();
    let out = wfbws(&[
        "changepoint", "--manifest", path_str(&manifest), "--bin-widths", "5", "--replicates", "9",
        "--max-depth", "1", "--equalize",
    ]);
    assert!(!out.status.success(), "missing word file should count as an item error");
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["results"][0]["label"], "A");
    assert_eq!(json["results"][0]["n_points"], 20);
    assert_eq!(json["errors"].as_array().unwrap().len(), 1);
}

fn write_fit_report(dir: &Path, name: &str, entries: &[(&str, u32, f64, f64)]) -> PathBuf {
    let results: Vec<Value> = entries
        .iter()
        .map(|&(label, w, s, p)| {
            serde_json::json!({
                "label": label, "bin_width": w, "p_value": p,
                "sel_fit": {"popsize": 100.0, "selstrength": s},
            })
        })
        .collect();
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&serde_json::json!({ "results": results })).unwrap()).unwrap();
    path
}

#[test]
fn analyze_ellipses_tables_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let fits = write_fit_report(
        dir.path(),
        "fits.json",
        &[("quit", 10, 0.05, 0.0), ("quit", 20, 0.054, 0.0), ("quit", 40, 0.06, 0.002)],
    );
    let text = ok(&["analyze", path_str(&fits), "--format", "csv"]);
    let rows = data_rows(&text);
    assert!(text.lines().any(|l| l == "label,cx,cy,ax1,ax2,angle,class"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("quit,") && rows[0].ends_with(",irregularising"));

    let json: Value = serde_json::from_str(&ok(&["analyze", "--table", "9,2,8;7,4,23"])).unwrap();
    let p = json["g_tests"][0]["goodness_of_fit"]["p_value"].as_f64().unwrap();
    assert!((p - 0.031).abs() <= 0.002, "{p}");

    let uneven = write_fit_report(dir.path(), "uneven.json", &[("a", 10, 0.1, 0.0), ("a", 20, 0.1, 0.0), ("b", 10, -0.1, 0.5)]);
    assert!(!wfbws(&["analyze", path_str(&uneven)]).status.success());
    assert!(wfbws(&["analyze", path_str(&uneven), "--allow-missing"]).status.success());

    // One verb per group leaves empty columns, which the G-test reports as an item error.
    let out = wfbws(&["analyze", path_str(&uneven), "--allow-missing", "--group", "x=a", "--group", "y=b"]);
    assert!(!out.status.success());
    let grouped: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(grouped["g_tests"][0]["table"], serde_json::json!([[1, 0, 0], [0, 0, 1]]));

    let sweep = ok(&["analyze", "--sweep", "--popsize", "50", "--format", "csv"]);
    assert!(sweep.lines().any(|l| l == "x0,s,tv_bws,tv_normal"));
    assert_eq!(data_rows(&sweep).len(), 42);
}
