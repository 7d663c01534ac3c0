use std::fs;
use std::process::Command;

fn featdiv() -> Command {
    Command::new(env!("CARGO_BIN_EXE_featdiv"))
}

#[test]
fn oracle_prints_reachable_cells() {
    let out = featdiv().arg("oracle").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "651");
    let out = featdiv()
        .args(["oracle", "--cube", "3:5,2:4"])
        .output()
        .unwrap();
    // (3,2), (4,2), (4,3), (5,2), (5,3), (5,4)
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "6");
}

#[test]
fn gen_writes_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = featdiv()
        .args([
            "gen",
            "--method",
            "rand-mfreq10-LHS30",
            "--model",
            "RecDepth5",
            "--budget",
            "300",
            "--seed",
            "4",
        ])
        .args(["--cube", "3:30,2:15", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let samples = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 301);
    let scatter = fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
    assert!(scatter.starts_with("# cube length=3:30 digits=2:15\nlength,num_digits\n"));
    let archive = fs::read_to_string(dir.path().join("archive.csv")).unwrap();
    assert_eq!(archive.lines().count(), 1 + 28 * 14);
    assert!(dir.path().join("parameters.csv").is_file());
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let path = dir.path().join(name);
        let ok = featdiv()
            .args([
                "gen",
                "--method",
                "nmcs-2-batch",
                "--model",
                "Default",
                "--budget",
                "400",
                "--seed",
                "9",
                "--out",
            ])
            .arg(&path)
            .status()
            .unwrap();
        assert!(ok.success());
        let text = fs::read_to_string(path.join("samples.csv")).unwrap();
        // drop the elapsed-time column
        let rows: Vec<String> = text
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect();
        logs.push(rows);
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn run_executes_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    let config = dir.path().join("grid.toml");
    fs::write(
        &config,
        format!(
            "master_seed = 3\nrepetitions = 2\nbudget = 200\noutput_directory = {:?}\n\n[[methods]]\nmethod = \"rand-freq1\"\nmodel = \"Default\"\n\n[[methods]]\nmethod = \"hillclimb-4-20\"\nmodel = \"RecDepth5\"\n",
            results
        ),
    )
    .unwrap();
    let out = featdiv().arg("run").arg(&config).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("Method"));
    assert_eq!(table.lines().count(), 3);
    let summary = fs::read_to_string(results.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert_eq!(
        fs::read_to_string(results.join("runs.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

#[test]
fn config_and_io_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = featdiv()
        .arg("run")
        .arg(dir.path().join("nope.toml"))
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.toml"));

    let config = dir.path().join("bad.toml");
    fs::write(
        &config,
        "master_seed = 1\nrepetitions = 1\noutput_directory = \"x\"\nmethods = []\nextra = 1\n",
    )
    .unwrap();
    assert!(!featdiv()
        .arg("run")
        .arg(&config)
        .status()
        .unwrap()
        .success());

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let status = featdiv()
        .args(["gen", "--method", "rand-once", "--budget", "10", "--out"])
        .arg(blocker.join("sub"))
        .status()
        .unwrap();
    assert!(!status.success());

    for args in [
        vec!["gen", "--method", "rand-thrice", "--out", "x"],
        vec![
            "gen",
            "--method",
            "rand-once",
            "--cube",
            "3:2,1:1",
            "--out",
            "x",
        ],
        vec![
            "gen",
            "--method",
            "rand-once",
            "--budget",
            "0",
            "--out",
            "x",
        ],
        vec!["oracle", "--max-depth", "0"],
    ] {
        assert!(
            !featdiv().args(&args).status().unwrap().success(),
            "{args:?}"
        );
    }
}
