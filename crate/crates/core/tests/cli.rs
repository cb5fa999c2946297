use std::path::Path;
use std::process::{Command, Output};

use magnon_blockade::experiments::SweepResult;

fn magblock(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magblock")).args(args).current_dir(dir).output().expect("spawn magblock")
}

fn read(path: &Path) -> SweepResult {
    SweepResult::read_csv(std::fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn list_names_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = magblock(&["list"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig2a", "fig2b", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7a", "fig7b", "fig8a", "fig8b", "fig9a", "fig9b", "fig10", "fig11"] {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
}

#[test]
fn run_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = magblock(&["run", "fig3", "--grid", "5", "--out", "sub/f3.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = read(&dir.path().join("sub/f3.csv"));
    assert_eq!(res.rows.len(), 20);
    assert_eq!(&res.columns[..3], ["Omega_q_over_Omega_m", "Delta_plus_over_J", "log10_g2"]);
    assert_eq!(res.columns.last().unwrap(), "status");

    let side = std::fs::read_to_string(dir.path().join("sub/f3.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = side.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 21);
    assert_eq!(lines[20]["summary"], true);
    assert_eq!(lines[20]["failures"], 0);
}

#[test]
fn output_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    for (threads, name) in [("1", "a.csv"), ("3", "b.csv")] {
        let out = magblock(&["run", "fig2b", "--grid", "9", "--threads", threads, "--out", name], dir.path());
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);

    let parsed = read(&dir.path().join("a.csv"));
    let mut again = Vec::new();
    parsed.write_csv(&mut again).unwrap();
    assert_eq!(again, a);
}

#[test]
fn config_file_and_fock_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "name = 'custom'\nkind = 'steady_state'\nparams.J_over_2pi_MHz = 35\n\
         [[axes]]\npath = 'params.Omega_q_over_Omega_m'\nvalues = [3]\n",
    )
    .unwrap();
    let out = magblock(&["run", "c.toml", "--fock-dim", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = read(&dir.path().join("custom.csv"));
    let g = res.column("log10_g2").unwrap()[0].unwrap();
    assert!((g + 6.03).abs() < 0.15, "{g}");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "name = 'bad'\nkind = 'steady_state'\nparams.nope = 1\n").unwrap();
    for args in [&["run", "no_such_scenario"][..], &["run", "bad.toml"], &["run", "fig3", "--bogus"], &["frobnicate"]] {
        let out = magblock(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn strict_flags_failed_points() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("u.toml"),
        "name = 'undriven'\nkind = 'steady_state'\nparams.Omega_m_over_2pi_MHz = 0\n\
         [[axes]]\npath = 'Delta_plus_over_J'\nvalues = [0.5, 1.0]\n[solver]\nfock_dim = 3\n",
    )
    .unwrap();
    let lenient = magblock(&["run", "u.toml"], dir.path());
    assert_eq!(lenient.status.code(), Some(0));
    let res = read(&dir.path().join("undriven.csv"));
    assert_eq!(res.rows.len(), 2);
    let status = res.column_index("status").unwrap();
    assert!(res.rows.iter().all(|r| matches!(&r[status], magnon_blockade::experiments::Cell::Text(s) if s.starts_with("error"))));

    let strict = magblock(&["run", "u.toml", "--strict"], dir.path());
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn converge_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = magblock(&["converge", "fig4", "--grid", "5", "--fock-dims", "4,6,8", "--strict"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("converged") && !text.contains("NOT converged"), "{text}");
}
