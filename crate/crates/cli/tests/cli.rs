use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_supershadow"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn supershadow")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("nil_rot.json"), r#"{"dim": 2, "kind": "diagonal", "entries": [[0,0],[0.6,0.8]]}"#).unwrap();
    fs::write(dir.path().join("hyp.json"), r#"{"dim": 2, "kind": "diagonal", "entries": [[2,0],[0.5,0]]}"#).unwrap();
    fs::write(dir.path().join("huge.json"), r#"{"dim": 1, "kind": "diagonal", "entries": [[1e30,0]]}"#).unwrap();
    dir
}

#[test]
fn classify_prints_verdict() {
    let dir = workspace();
    let o = run(dir.path(), &["classify", "--operator", "nil_rot.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["tag"], "PositiveSuperShadowingNotShadowing");

    let o = run(dir.path(), &["classify", "--operator", "hyp.json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["tag"], "Shadowing");
}

#[test]
fn demo_passes_and_reports_delta() {
    let dir = workspace();
    let o = run(dir.path(), &["demo", "super-not-shadow", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("delta = 0.05"), "{text}");
    assert!(!text.contains("[FAIL]"));
}

#[test]
fn demo_writes_check_table() {
    let dir = workspace();
    let o = run(dir.path(), &["demo", "compact-1", "--seed", "1", "--format", "csv", "--out", "checks.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("check,value,bound,pass"));
    assert!(lines.all(|l| l.ends_with(",true")), "{table}");
}

#[test]
fn missing_generator_parameter_is_config_error() {
    let dir = workspace();
    let o = run(dir.path(), &["pseudo", "--kind", "rotation-linear", "--window", "positive:5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = workspace();
    fs::write(dir.path().join("bad.toml"), "epsilon = 0.1\n").unwrap();
    let o = run(dir.path(), &["classify", "--config", "bad.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown field `epsilon`"), "{}", stderr(&o));
}

#[test]
fn bad_flag_value_is_config_error() {
    let dir = workspace();
    let o = run(dir.path(), &["pseudo", "--window", "sideways:4", "--operator", "hyp.json"]);
    assert_eq!(code(&o), 1);
    let o = run(dir.path(), &["hitting", "--x", "[1,", "--operator", "hyp.json"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn flags_override_config_file() {
    let dir = workspace();
    let cfg = "operator = \"nil_rot.json\"\nkind = \"random\"\nwindow = \"positive:4\"\ndelta = 0.5\nx = [1, 1]\nseed = 9\n";
    fs::create_dir(dir.path().join("cfg")).unwrap();
    fs::copy(dir.path().join("nil_rot.json"), dir.path().join("cfg/nil_rot.json")).unwrap();
    fs::write(dir.path().join("cfg/exp.toml"), cfg).unwrap();

    // The operator path resolves against the config file's directory.
    let o = run(dir.path(), &["pseudo", "--config", "cfg/exp.toml", "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("claimed delta 5e-1"), "{}", stderr(&o));

    let o = run(dir.path(), &["pseudo", "--config", "cfg/exp.toml", "--format", "csv", "--delta", "0.01"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("claimed delta 1e-2"), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 6);
}

#[test]
fn run_takes_subcommand_from_config() {
    let dir = workspace();
    let cfg = "subcommand = \"density\"\nset = \"multiples:3\"\nhorizon = 100\nformat = \"csv\"\n";
    fs::write(dir.path().join("d.toml"), cfg).unwrap();
    let o = run(dir.path(), &["run", "--config", "d.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("n_prime,value,value_f64"));
    assert!(stderr(&o).contains("uBd estimate 1/3"), "{}", stderr(&o));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = workspace();
    let args = ["pseudo", "--kind", "random", "--operator", "nil_rot.json", "--x", "[1,[0,1]]", "--delta", "0.1", "--window", "positive:30", "--format", "csv", "--seed", "11"];
    let a = run(dir.path(), &args);
    let b = run(dir.path(), &args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let mut other = args.to_vec();
    *other.last_mut().unwrap() = "12";
    assert_ne!(run(dir.path(), &other).stdout, a.stdout);
}

#[test]
fn search_output_independent_of_thread_count() {
    let dir = workspace();
    let args = ["supershadow", "--mode", "super", "--operator", "nil_rot.json", "--window", "positive:30", "--budget", "16", "--iterations", "150", "--seed", "5", "--format", "csv"];
    let outputs: Vec<Vec<u8>> = ["1", "4"]
        .iter()
        .map(|t| {
            let o = bin().current_dir(dir.path()).env("RAYON_NUM_THREADS", t).args(args).output().unwrap();
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            o.stdout
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn failed_demo_check_exits_3() {
    let dir = workspace();
    // A ladder of equal windows cannot show growth.
    let o = run(dir.path(), &["demo", "dim-finita-diag", "--windows", "25,25"]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("[FAIL]"));
}

#[test]
fn precision_loss_exits_2() {
    let dir = workspace();
    let o = run(dir.path(), &["pseudo", "--kind", "random", "--operator", "huge.json", "--window", "positive:20", "--delta", "1e-3", "--x", "[1]"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("precision"));
}

#[test]
fn certify_ladder_grows() {
    let dir = workspace();
    let o = run(dir.path(), &["certify", "--kind", "jordan-impulse", "--param", "k=2", "--param", "beta=[1,0]", "--delta", "0.01", "--windows", "25,50", "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let bounds: Vec<f64> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            assert_eq!(&r[2], "certified");
            r[3].parse().unwrap()
        })
        .collect();
    assert_eq!(bounds.len(), 2);
    assert!(bounds[1] > bounds[0] && bounds[0] > 0.0, "{bounds:?}");
}
