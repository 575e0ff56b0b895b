use std::path::PathBuf;
use std::process::{Command, Output};

fn superlight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_superlight")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name].iter().collect();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_prints_the_golden_trace() {
    let o = superlight(&["run", &scenario("honest_two_relay.cfg")]);
    assert_eq!(o.status.code(), Some(0));
    let golden = std::fs::read_to_string(scenario("golden/honest_two_relay.trace")).unwrap();
    let out = stdout(&o);
    assert!(out.starts_with(&golden));
    assert!(out.contains("kind=summary queries=3 correct=3 expired=true"));
}

#[test]
fn seed_override_is_deterministic() {
    let cfg = scenario("cheating_two_relay.cfg");
    let a = superlight(&["run", &cfg, "--seed", "41"]);
    let b = superlight(&["run", &cfg, "--seed", "41"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("seed=41"));
    assert_ne!(a.stdout, superlight(&["run", &cfg]).stdout);
}

#[test]
fn run_rejects_a_broken_config() {
    let dir = std::env::temp_dir().join(format!("superlight-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "k = 2\nnonsense = 1\n").unwrap();
    let o = superlight(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(superlight(&["run", "/nonexistent.cfg"]).status.code(), Some(2));
}

#[test]
fn check_exit_codes_follow_the_verdict() {
    let holds = superlight(&["check", "--theorem", "1", "--params", "p=4,e=1,d_L=10,d_F=10,c=6,v1=5,v2=5"]);
    assert_eq!(holds.status.code(), Some(0), "{}", stdout(&holds));
    assert!(stdout(&holds).contains("result=holds"));
    // Violated conditions with a deviation found: as predicted, so exit 0.
    let fails = superlight(&["check", "--theorem", "1", "--params", "p=4,e=1,d_L=10,d_F=10,c=6,v=12,v1=20,v2=5"]);
    assert_eq!(fails.status.code(), Some(0));
    assert!(stdout(&fails).contains("kind=witness"));
    // The conditions are sufficient, not necessary: with a large v the client
    // answers a split report with O, so the lie buys nothing and the
    // equilibrium survives although the prediction says it fails.
    let survives = superlight(&["check", "--theorem", "1", "--params", "p=4,e=1,d_L=10,d_F=10,c=6,v=20,v1=20,v2=5"]);
    assert_eq!(survives.status.code(), Some(1));
    assert!(stdout(&survives).contains("holds=true predicted=false"));
    // An idle full node breaks the augmented equilibrium the conditions predict.
    let idle = superlight(&["check", "--theorem", "3", "--params", "p=4,e=1,d_L=10,d_F=10,c=6,v_i=5", "--pfn-idle"]);
    assert_eq!(idle.status.code(), Some(0));
    let missing = superlight(&["check", "--theorem", "2", "--params", "p=4,e=1,d_L=10,c=6,v_i=3,r=4"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(superlight(&["check", "--theorem", "4", "--params", "p=1"]).status.code(), Some(2));
    assert_eq!(superlight(&["check", "--theorem", "1", "--params", "p"]).status.code(), Some(2));
}

#[test]
fn merkle_round_trip() {
    let leaves = ["00", "61626364", "ff", "0102"];
    let root = stdout(&superlight(&[&["merkle", "build"][..], &leaves].concat())).trim().to_string();
    assert_eq!(root.len(), 64);
    for (i, leaf) in leaves.iter().enumerate() {
        let idx = i.to_string();
        let proof = stdout(&superlight(&[&["merkle", "prove", idx.as_str()][..], &leaves].concat())).trim().to_string();
        assert_eq!(stdout(&superlight(&["merkle", "verify", &root, leaf, &proof])).trim(), "1");
        assert_eq!(stdout(&superlight(&["merkle", "verify", &root, "77", &proof])).trim(), "0");
    }
    assert_eq!(superlight(&["merkle", "build", "zz"]).status.code(), Some(2));
    assert_eq!(superlight(&["merkle", "prove", "9", "00"]).status.code(), Some(2));
}

#[test]
fn predicate_evaluate_then_validate() {
    let cfg = scenario("honest_two_relay.cfg");
    let trace = stdout(&superlight(&["run", &cfg]));
    let query = trace
        .lines()
        .find(|l| l.contains("kind=request q=1"))
        .and_then(|l| l.split(" pred=").nth(1))
        .unwrap()
        .to_string();
    let out = stdout(&superlight(&["predicate", "evaluate", &query, "--config", &cfg]));
    let sigma = out.trim().strip_prefix("proof ").expect("planted transaction should be found").to_string();
    let valid = superlight(&["predicate", "validate", &query, &sigma, "--config", &cfg]);
    assert_eq!(stdout(&valid).trim(), "1");
    let truncated = &sigma[..sigma.len() - 2];
    assert_eq!(stdout(&superlight(&["predicate", "validate", &query, truncated, "--config", &cfg])).trim(), "0");
    let absent = format!("txid:{}", "ab".repeat(32));
    assert_eq!(stdout(&superlight(&["predicate", "evaluate", &absent, "--config", &cfg])).trim(), "bottom");
    assert_eq!(superlight(&["predicate", "evaluate", "txid:12", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = superlight(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("pass=true")).count(), 4);
}
