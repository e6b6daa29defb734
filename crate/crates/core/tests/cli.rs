use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_bolt");

struct Daemon {
    child: Child,
    addr: String,
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn boltd(dir: &std::path::Path) -> Daemon {
    let mut child = Command::new(BIN)
        .args(["boltd", "--listen", "127.0.0.1:0", "--linger-ms", "1"])
        .arg(format!("--store=fs:{}", dir.join("objects").display()))
        .arg("--cmdlog")
        .arg(dir.join("commands.log"))
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("daemon exited").unwrap();
        if let Some(rest) = line.split("listening on ").nth(1) {
            break rest.split_whitespace().next().unwrap().to_string();
        }
    };
    Daemon { child, addr }
}

fn ctl(d: &Daemon, args: &[&str], stdin: &[u8]) -> (bool, String) {
    let mut child = Command::new(BIN)
        .args(["boltctl", "--server", &d.addr])
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin).unwrap();
    let out = child.wait_with_output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

fn ok(d: &Daemon, args: &[&str], stdin: &[u8]) -> String {
    let (success, out) = ctl(d, args, stdin);
    assert!(success, "boltctl {args:?}: {out}");
    out.trim().to_string()
}

#[test]
fn ctl_round_trip_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (root, fork) = {
        let d = boltd(dir.path());
        let root = ok(&d, &["create"], b"");
        assert_eq!(ok(&d, &["append", "--log", &root], b"hello"), "0");
        assert_eq!(ok(&d, &["append", "--log", &root], b"world"), "1");
        let fork = ok(&d, &["cfork", "--log", &root], b"");
        assert_eq!(ok(&d, &["append", "--log", &fork], b"!"), "2");
        assert_eq!(ok(&d, &["read", "--log", &fork], b""), "helloworld!");
        assert_eq!(ok(&d, &["read", "--log", &fork, "--from", "1", "--hex"], b""), "776f726c64\n21");

        let p = ok(&d, &["cfork", "--log", &root, "--promotable"], b"");
        assert_eq!(ok(&d, &["append", "--log", &root], b"late"), "withheld");
        assert_eq!(ok(&d, &["tail", "--log", &root], b""), "withheld");
        let (success, out) = ctl(&d, &["read", "--log", &root, "--to", "3"], b"");
        assert!(!success && out.contains("blocked"), "{out}");
        assert!(ok(&d, &["squash", "--log", &p], b"").starts_with("squashed:"));
        assert_eq!(ok(&d, &["tail", "--log", &root], b""), "3");
        let (success, _) = ctl(&d, &["squash", "--log", &root], b"");
        assert!(!success);
        (root, fork)
    };

    let d = boltd(dir.path());
    assert_eq!(ok(&d, &["read", "--log", &fork], b""), "helloworld!late");
    let table = ok(&d, &["describe"], b"");
    assert!(table.lines().count() >= 4, "{table}");
    assert!(table.contains("squashed"), "{table}");
    assert_eq!(ok(&d, &["append", "--log", &root], b"again"), "3");
}

#[test]
fn unknown_personality_is_a_usage_error() {
    let out = Command::new(BIN).arg("nonsense").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_personality_prints_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = Command::new(BIN).args(["boltbench", "memory", "--ops", "2000", "--forks", "5", "--report"]).arg(&report).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("lazy_entries"));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    assert_eq!(v["bench"], "memory");
}
