use std::path::Path;
use std::process::{Command, Output};

use red_bench::dat::DatTable;
use red_bench::metrics::PacketLog;

fn red_bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_red-bench"))
        .args(args)
        .output()
        .expect("spawn red-bench")
}

fn ok(args: &[&str]) -> String {
    let out = red_bench(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    DatTable::read(path).unwrap().rows
}

#[test]
fn underloaded_flow_loses_nothing() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "sim",
        "-a",
        "10.2.0.10",
        "-T",
        "UDP",
        "-C",
        "100",
        "-c",
        "512",
        "-t",
        "20000",
        "--out-dir",
        p(dir.path()),
    ]);
    let report = ok(&["decode", p(&dir.path().join("recv.log"))]);
    assert!(
        report.contains("Packets dropped      = 0 (0.00 %)"),
        "{report}"
    );
    assert!(report.contains("Total packets        = 2000\n"), "{report}");
    assert!(report.contains("From sender:1\nTo 10.2.0.10\n"), "{report}");
}

#[test]
fn one_second_bins_over_twenty_seconds() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "sim",
        "-a",
        "x",
        "-C",
        "100",
        "-t",
        "20000",
        "--out-dir",
        p(dir.path()),
    ]);
    let out = ok(&[
        "decode",
        p(&dir.path().join("recv.log")),
        "-b",
        "1000",
        "--out-dir",
        p(dir.path()),
    ]);
    assert!(out.is_empty());
    let rows = data_rows(&dir.path().join("bitrate.dat"));
    assert_eq!(rows.len(), 20);
    // 100 packets of 512 B per second.
    for r in &rows {
        assert!((r[1] - 409.6).abs() < 1e-6, "{r:?}");
    }
}

#[test]
fn delay_and_jitter_in_one_pass() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "sim",
        "-a",
        "x",
        "-C",
        "500",
        "-t",
        "3000",
        "--out-dir",
        p(dir.path()),
    ]);
    ok(&[
        "decode",
        p(&dir.path().join("recv.log")),
        "-d",
        "100",
        "-j",
        "100",
        "--out-dir",
        p(dir.path()),
    ]);
    assert!(dir.path().join("delay.dat").exists());
    assert!(dir.path().join("jitter.dat").exists());
    assert!(!dir.path().join("bitrate.dat").exists());
}

#[test]
fn overload_shows_heavy_aggregate_loss() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("flows.txt");
    let text: String = (1..=5)
        .map(|k| format!("-a 10.2.0.10 -T UDP -C {} -c 512 -t 20000\n", 1000 * k))
        .collect();
    std::fs::write(&script, text).unwrap();
    ok(&[
        "sim",
        p(&script),
        "--capacity",
        "10e6",
        "--out-dir",
        p(dir.path()),
    ]);
    let log = PacketLog::read(&dir.path().join("recv.log")).unwrap();
    assert_eq!(log.entries.len(), 300_000);
    let report = ok(&["decode", p(&dir.path().join("recv.log"))]);
    assert!(report.contains("Number of flows      = 5"));
    // Conservation: at most capacity × time can be delivered.
    let delivered = log.entries.iter().filter(|e| e.t_recv.is_some()).count() as f64;
    assert!(delivered * 512.0 * 8.0 <= 10e6 * 20.1);
    assert!(delivered / 300_000.0 < 0.2);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# link\ncapacity = 1e6\nbuffer=7\nseed=3\n").unwrap();
    ok(&[
        "--config",
        p(&cfg),
        "sim",
        "-a",
        "x",
        "-t",
        "1000",
        "--buffer",
        "9",
        "--out-dir",
        p(dir.path()),
    ]);
    let log = PacketLog::read(&dir.path().join("recv.log")).unwrap();
    assert!(log.comments.iter().any(|c| c == "capacity=1000000"));
    assert!(log.comments.iter().any(|c| c == "buffer=9"));
    assert!(log.comments.iter().any(|c| c == "seed=3"));

    std::fs::write(&cfg, "bogus=1\n").unwrap();
    let out = red_bench(&[
        "--config",
        p(&cfg),
        "sim",
        "-a",
        "x",
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(red_bench(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(red_bench(&["--help"]).status.code(), Some(0));
    assert_eq!(red_bench(&["sim"]).status.code(), Some(1));
    assert_eq!(
        red_bench(&["fluid", "--mode", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(
        red_bench(&["fluid", "--q-min", "20", "--q-max", "10"])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("missing.log");
    assert_eq!(red_bench(&["decode", p(&missing)]).status.code(), Some(2));

    let script = dir.path().join("bad.txt");
    std::fs::write(&script, "-a x -C 10\n-a y -Z 3\n").unwrap();
    let out = red_bench(&["sim", p(&script)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // Script and inline flags together are ambiguous.
    let out = red_bench(&["sim", p(&script), "-a", "x"]);
    assert_eq!(out.status.code(), Some(1));

    // A step above T/10 trips the guard at run time.
    let out = red_bench(&["fluid", "--dt", "0.05", "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn window_grows_linearly_without_marking() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "fluid",
        "--mode",
        "det",
        "--marking",
        "off",
        "--t-end",
        "5",
        "--out-dir",
        p(dir.path()),
    ]);
    let rows = data_rows(&dir.path().join("fluid_det.dat"));
    // Below W = C·T = 10 the queue stays empty and dW/dt = 1/T exactly.
    for r in rows.iter().filter(|r| r[0] <= 0.8) {
        assert!((r[1] - (1.0 + r[0] / 0.1)).abs() < 1e-9, "{r:?}");
        assert_eq!(r[2], 0.0);
    }
}

#[test]
fn sde_without_noise_equals_det() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    ok(&["fluid", "--mode", "det", "--t-end", "30", "--out-dir", d]);
    ok(&[
        "fluid",
        "--mode",
        "sde",
        "--noise",
        "off",
        "--n-traj",
        "8",
        "--t-end",
        "30",
        "--out-dir",
        d,
    ]);
    let det = data_rows(&dir.path().join("fluid_det.dat"));
    let mean = data_rows(&dir.path().join("fluid_mean.dat"));
    let var = data_rows(&dir.path().join("fluid_var.dat"));
    assert_eq!(det, mean);
    assert!(var.iter().all(|r| r[1..].iter().all(|&v| v == 0.0)));
}

#[test]
fn sde_keeps_requested_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "fluid",
        "--mode",
        "sde",
        "--n-traj",
        "20",
        "--keep",
        "3",
        "--t-end",
        "2",
        "--out-dir",
        p(dir.path()),
    ]);
    for i in 0..3 {
        assert!(dir.path().join(format!("fluid_traj_{i}.dat")).exists());
    }
    assert!(!dir.path().join("fluid_traj_3.dat").exists());
}

#[test]
fn heat_kernel_variance() {
    let dir = tempfile::tempdir().unwrap();
    let t = 0.5;
    ok(&[
        "fluid",
        "--mode",
        "fp",
        "--fp-equation",
        "heat",
        "--grid-lo",
        "-10",
        "--grid-hi",
        "10",
        "--grid-n",
        "400",
        "--init-mean",
        "0",
        "--init-sd",
        "0.5",
        "--t-end",
        "0.5",
        "--out-dir",
        p(dir.path()),
    ]);
    let table = DatTable::read(&dir.path().join("fluid_fp.dat")).unwrap();
    let x = table.column("x").unwrap();
    let rho = table.column("density").unwrap();
    let dx = x[1] - x[0];
    let mass: f64 = rho.iter().sum::<f64>() * dx;
    let mean: f64 = x.iter().zip(&rho).map(|(x, r)| x * r).sum::<f64>() * dx;
    let var: f64 = x
        .iter()
        .zip(&rho)
        .map(|(x, r)| (x - mean).powi(2) * r)
        .sum::<f64>()
        * dx;
    assert!((mass - 1.0).abs() < 1e-9);
    // Discretised initial variance is 0.25 + dx²/12.
    let grown = var - (0.25 + dx * dx / 12.0);
    assert!(
        (grown - 2.0 * t).abs() / (2.0 * t) < 0.02,
        "variance grew {grown}"
    );
}

#[test]
fn compare_against_itself_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "fluid",
        "--mode",
        "det",
        "--t-end",
        "20",
        "--out-dir",
        p(dir.path()),
    ]);
    let f = dir.path().join("fluid_det.dat");
    let out = ok(&[
        "compare",
        "--packet",
        p(&f),
        "--fluid",
        p(&f),
        "--warmup",
        "2",
    ]);
    let summary = out.lines().find(|l| l.starts_with("summary ")).unwrap();
    for key in ["q_l1", "q_linf", "qhat_l1", "qhat_linf"] {
        assert!(summary.contains(&format!("{key}=0.000000 ")), "{summary}");
    }
}

#[test]
fn compare_packet_run_against_fluid() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    ok(&[
        "sim",
        "-a",
        "sink",
        "-T",
        "TCP",
        "-C",
        "100000",
        "-c",
        "1000",
        "-t",
        "60000",
        "--capacity",
        "800000",
        "--rtt-base",
        "0.09",
        "--buffer",
        "100",
        "--out-dir",
        d,
    ]);
    ok(&["fluid", "--mode", "det", "--t-end", "60", "--out-dir", d]);
    let report = dir.path().join("cmp.txt");
    let out = ok(&[
        "compare",
        "--packet",
        p(&dir.path().join("queue.dat")),
        "--fluid",
        p(&dir.path().join("fluid_det.dat")),
        "--warmup",
        "10",
        "--out",
        p(&report),
    ]);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), out);
    assert!(out.contains("window = [10.000000, 60.000000] s"));
}

#[test]
fn disjoint_ranges_fail() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "fluid",
        "--mode",
        "det",
        "--t-end",
        "5",
        "--out-dir",
        p(dir.path()),
    ]);
    let f = dir.path().join("fluid_det.dat");
    let out = red_bench(&[
        "compare",
        "--packet",
        p(&f),
        "--fluid",
        p(&f),
        "--warmup",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warm-up"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        ok(&[
            "sim",
            "-a",
            "sink",
            "-T",
            "TCP",
            "-C",
            "1000",
            "-c",
            "1000",
            "-t",
            "5000",
            "--capacity",
            "1e6",
            "--seed",
            "42",
            "--out-dir",
            p(dir.path()),
        ]);
    }
    for f in ["recv.log", "queue.dat"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}
