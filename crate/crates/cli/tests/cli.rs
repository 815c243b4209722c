use std::fs;
use std::process::{Command, Output};

fn rocesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rocesim")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn missing_scenario_is_a_config_error() {
    let o = rocesim(&["run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scenario"));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    fs::write(&p, "scenario = incast\n# comment\nbogus = 3\n").unwrap();
    let o = rocesim(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("bogus") && err.contains('3'), "{err}");
}

#[test]
fn unknown_preset_and_figure_are_rejected() {
    assert_eq!(rocesim(&["run", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(rocesim(&["reproduce", "--figure", "1"]).status.code(), Some(2));
}

#[test]
fn print_defaults_round_trips_through_run_config() {
    let o = rocesim(&["print-defaults", "--preset", "clos_alltoall"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("scenario = alltoall"), "{text}");
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.cfg");
    fs::write(&p, &text).unwrap();
    let again = rocesim(&["dump-topology", "--config", p.to_str().unwrap()]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
}

#[test]
fn dump_topology_lists_the_clos_fabric() {
    let o = rocesim(&["dump-topology", "--scenario", "alltoall"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let nodes = text.lines().filter(|l| l.starts_with("node,")).count();
    // 128 NPUs, 16 scale-up switches, 8 TORs, 8 spines
    assert_eq!(nodes, 128 + 16 + 8 + 8);
    // per NPU: scale-up + NIC; per TOR: one uplink to each spine
    let links = text.lines().filter(|l| l.starts_with("link,")).count();
    assert!(links >= 128 * 2 + 8 * 8, "{links}");
}

#[test]
fn small_run_writes_outputs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(
        &cfg,
        "scenario = alltoall\ntopology = single_switch\nnpus = 4\nbytes = 400KB\nchunks = 2\ncc = pfc,hpcc\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = rocesim(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert!(rows.iter().all(|r| r.ends_with(",ok")), "{text}");
    assert!(out.join("summary.csv").exists());
    for cc in ["pfc", "hpcc"] {
        let d = out.join(format!("alltoall_{cc}"));
        for f in ["queue_timeline.csv", "pfc_counts.csv", "flows.csv"] {
            assert!(d.join(f).exists(), "{}", d.join(f).display());
        }
    }
}
