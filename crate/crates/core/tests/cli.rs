use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn run(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xdata-complete")).args(args).output().unwrap()
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<&std::ffi::OsStr> = vec!["--config".as_ref(), config.as_os_str(), "--out-dir".as_ref(), out.as_os_str()];
    args.extend(extra.iter().map(std::ffi::OsStr::new));
    run(&args)
}

/// Copies the fixture corpus so a test can edit its config.
fn fixture_copy(extra_config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixture_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    let cfg = dir.path().join("config.txt");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str(extra_config);
    fs::write(cfg, text).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fixture_run_writes_all_outputs() {
    let out = tempfile::tempdir().unwrap();
    let o = run_config(&fixture_dir().join("config.txt"), out.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("completion finished"), "progress lines expected: {}", stderr(&o));
    for f in [
        "completed.arff",
        "assignments.csv",
        "iterations.csv",
        "report.txt",
        "scatter_emotion.csv",
        "completed_2_session2_emotion.arff",
    ] {
        assert!(out.path().join(f).is_file(), "{f} missing");
    }
    let completed = xdata::arff::read_arff_file(out.path().join("completed.arff")).unwrap();
    assert_eq!(completed.missing_count(), 0);
    assert_eq!(completed.rows.len(), 400);
    let per_source = xdata::arff::read_arff_file(out.path().join("completed_4_session4_unlabeled.arff")).unwrap();
    assert_eq!(per_source.attributes.len(), 13);
    assert_eq!(per_source.missing_count(), 0);

    let assignments = fs::read_to_string(out.path().join("assignments.csv")).unwrap();
    assert!(assignments.starts_with("iteration,instance,dataset_origin,task,label,confidence\n"));
    let iterations = fs::read_to_string(out.path().join("iterations.csv")).unwrap();
    let header = iterations.lines().next().unwrap();
    assert!(header.ends_with("uar_emotion,cc_arousal,cc_valence"), "{header}");
    assert!(iterations.lines().last().unwrap().starts_with("final,"));

    let report = fs::read_to_string(out.path().join("report.txt")).unwrap();
    assert!(report.contains("status: complete"));
    assert!(report.contains("cdlc.select_per_task = 100"));
    assert!(report.contains("not a test-set metric"));
}

#[test]
fn quiet_suppresses_progress() {
    let out = tempfile::tempdir().unwrap();
    let o = run_config(&fixture_dir().join("config.txt"), out.path(), &["--quiet"]);
    assert!(o.status.success());
    assert!(stderr(&o).is_empty(), "{}", stderr(&o));
}

#[test]
fn seed_flag_equals_seed_in_config() {
    let out = tempfile::tempdir().unwrap();
    let by_flag = out.path().join("flag");
    let o = run_config(&fixture_dir().join("config.txt"), &by_flag, &["--seed", "7", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let copy = fixture_copy("net.seed = 7\n");
    let by_config = out.path().join("config");
    let o = run_config(&copy.path().join("config.txt"), &by_config, &["--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));

    for f in ["assignments.csv", "iterations.csv"] {
        assert_eq!(fs::read(by_flag.join(f)).unwrap(), fs::read(by_config.join(f)).unwrap(), "{f}");
    }
    let report = fs::read_to_string(by_flag.join("report.txt")).unwrap();
    assert!(report.contains("net.seed = 7"));

    let default_seed = out.path().join("default");
    run_config(&fixture_dir().join("config.txt"), &default_seed, &["--quiet"]);
    assert_ne!(fs::read(by_flag.join("assignments.csv")).unwrap(), fs::read(default_seed.join("assignments.csv")).unwrap());
}

#[test]
fn missing_input_file_is_a_data_error() {
    let copy = fixture_copy("");
    fs::remove_file(copy.path().join("session3_av.arff")).unwrap();
    let o = run_config(&copy.path().join("config.txt"), &copy.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("session3_av.arff"), "{}", stderr(&o));
}

#[test]
fn malformed_arff_is_a_data_error_with_line() {
    let copy = fixture_copy("");
    let p = copy.path().join("session2_emotion.arff");
    let mut text = fs::read_to_string(&p).unwrap();
    text.push_str("1,2,3\n");
    fs::write(&p, text).unwrap();
    let o = run_config(&copy.path().join("config.txt"), &copy.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("session2_emotion.arff") && stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_1() {
    let copy = fixture_copy("net.optimizer = adam\n");
    let o = run_config(&copy.path().join("config.txt"), &copy.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("net.optimizer"), "{}", stderr(&o));

    let copy = fixture_copy("net.dropout = 1.5\n");
    let o = run_config(&copy.path().join("config.txt"), &copy.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("net.dropout"), "{}", stderr(&o));

    let copy = fixture_copy("cdlc.min_confidence.nosuchtask = -0.1\n");
    let o = run_config(&copy.path().join("config.txt"), &copy.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["--config".as_ref(), "/nonexistent/config.txt".as_ref()]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["--bogus".as_ref()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_task_in_test_file_is_a_data_error() {
    let copy = fixture_copy("");
    let p = copy.path().join("session5_test.arff");
    let text = fs::read_to_string(&p).unwrap();
    let text = text.replacen("@attribute valence numeric", "@attribute dominance numeric", 1);
    fs::write(&p, text).unwrap();
    let o = run_config(&copy.path().join("config.txt"), &copy.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("dominance"), "{}", stderr(&o));
}

#[test]
fn no_labels_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.arff"), "@relation a\n@attribute f numeric\n@attribute y {p,q}\n@data\n1,?\n2,?\n").unwrap();
    fs::write(dir.path().join("c.txt"), "dataset.1.file = a.arff\ndataset.1.num_targets = 1\noutput.dir = out\n").unwrap();
    let o = run_config(&dir.path().join("c.txt"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn schema_conflict_names_the_file() {
    let copy = fixture_copy("");
    let p = copy.path().join("session3_av.arff");
    let text = fs::read_to_string(&p).unwrap().replacen("@attribute f3 numeric", "@attribute g3 numeric", 1);
    fs::write(&p, text).unwrap();
    let o = run_config(&copy.path().join("config.txt"), &copy.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("session3_av.arff") && stderr(&o).contains("g3"), "{}", stderr(&o));
}
