use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ibuq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibuq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        stderr(&o)
    );
    o
}

fn gen_discontinuous(dir: &Path, n: &str) -> std::path::PathBuf {
    let out = dir.join("data");
    ok(ibuq(&[
        "gen-data",
        "discontinuous",
        "--n",
        n,
        "--noise",
        "0.1",
        "--seed",
        "7",
        "--out",
        p(&out),
    ]));
    out.join("data.csv")
}

const QUICK: [&str; 12] = [
    "--iterations",
    "30",
    "--hidden",
    "8",
    "--latent-dim",
    "2",
    "--gin-iterations",
    "5",
    "--batch",
    "16",
    "--lr-every",
    "10",
];

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(ibuq(&[]).status.code(), Some(2));
    assert_eq!(ibuq(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ibuq(&["gen-data", "spiral"]).status.code(), Some(2));

    let o = ibuq(&["gen-data", "discontinuous"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--n"), "{}", stderr(&o));

    let o = ibuq(&["gen-data", "discontinuous", "--n", "4", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ibuq(&[
        "train",
        "ibuq-regression",
        "--data",
        "/nonexistent/data.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(ibuq(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("s.csv");
    fs::write(&input, "beta,iyz\n0.1,2\n").unwrap();
    let o = ibuq(&[
        "plot",
        "info-plane",
        "--input",
        p(&input),
        "--out",
        p(&dir.path().join("fig")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ixz"), "{}", stderr(&o));
}

#[test]
fn gen_data_writes_rows_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let csv = gen_discontinuous(dir.path(), "32");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 33);
    assert!(text.starts_with("x,y\n"));
    let config = fs::read_to_string(dir.path().join("data/config.txt")).unwrap();
    assert!(config.contains("command=gen-data discontinuous"));
    assert!(config.contains("n=32") && config.contains("seed=7"));

    let out = dir.path().join("op");
    let o = ok(ibuq(&[
        "gen-data",
        "operator",
        "--n",
        "3",
        "--l",
        "0.5",
        "--noise",
        "0.01",
        "--nx",
        "12",
        "--nt",
        "8",
        "--out",
        p(&out),
    ]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("D = 0.01, k = 0.5"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("n_functions=3"), "{manifest}");
}

#[test]
fn replaying_a_config_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_discontinuous(dir.path(), "32");
    let first = dir.path().join("a");
    let mut args = vec![
        "train",
        "ibuq-regression",
        "--data",
        p(&data),
        "--out",
        p(&first),
    ];
    args.extend(QUICK);
    let o = ok(ibuq(&args));
    assert!(String::from_utf8_lossy(&o.stdout).contains("final objective"));

    let second = dir.path().join("b");
    let config = first.join("config.txt");
    ok(ibuq(&[
        "train",
        "ibuq-regression",
        "--config",
        p(&config),
        "--out",
        p(&second),
    ]));
    let a = fs::read(first.join("metrics.csv")).unwrap();
    assert_eq!(a, fs::read(second.join("metrics.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 31);

    // evaluation of both checkpoints is identical too
    for run in [&first, &second] {
        ok(ibuq(&[
            "eval",
            "table1",
            "--model",
            p(run),
            "--grid",
            "101",
            "--samples",
            "8",
            "--out",
            p(&run.join("eval")),
        ]));
    }
    assert_eq!(
        fs::read(first.join("eval/report.csv")).unwrap(),
        fs::read(second.join("eval/report.csv")).unwrap()
    );
    let predictions = fs::read_to_string(first.join("eval/predictions.csv")).unwrap();
    assert!(predictions.starts_with("x,truth,mean,std,gate\n"));

    let fig = dir.path().join("fig");
    ok(ibuq(&[
        "plot",
        "band",
        "--input",
        p(&first.join("eval/predictions.csv")),
        "--train",
        p(&data),
        "--out",
        p(&fig),
    ]));
    assert!(fs::read_to_string(fig.join("figure.svg"))
        .unwrap()
        .contains("<circle"));
    assert!(fig.join("data.csv").exists() && fig.join("config.txt").exists());
}

#[test]
fn zero_beta_still_logs_compression() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_discontinuous(dir.path(), "16");
    let out = dir.path().join("run");
    let mut args = vec![
        "train",
        "ibuq-regression",
        "--data",
        p(&data),
        "--beta",
        "0.0",
        "--out",
        p(&out),
    ];
    args.extend(QUICK);
    ok(ibuq(&args));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let last = metrics.lines().last().unwrap();
    let ixz: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!(ixz.is_finite() && ixz != 0.0, "{last}");
}

#[test]
fn diverging_training_keeps_partial_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_discontinuous(dir.path(), "16");
    let out = dir.path().join("run");
    let o = ibuq(&[
        "train",
        "ibuq-regression",
        "--data",
        p(&data),
        "--out",
        p(&out),
        "--iterations",
        "200",
        "--lr",
        "1e6",
        "--lr-decay",
        "1",
        "--hidden",
        "8",
        "--latent-dim",
        "2",
        "--batch",
        "16",
        "--gin-iterations",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("partial metrics"), "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("iteration,objective,iyz,ixz,lr\n"));
    assert!(metrics.lines().count() >= 2);
}

#[test]
fn ensemble_trains_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_discontinuous(dir.path(), "32");
    let out = dir.path().join("ens");
    let o = ok(ibuq(&[
        "train",
        "ensemble",
        "--data",
        p(&data),
        "--members",
        "3",
        "--steps",
        "50",
        "--hidden",
        "8",
        "--heldout",
        p(&data),
        "--out",
        p(&out),
    ]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("held-out RL2E"));
    assert_eq!(
        fs::read_to_string(out.join("metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    ok(ibuq(&[
        "eval",
        "table1",
        "--model",
        p(&out),
        "--grid",
        "101",
        "--out",
        p(&out.join("eval")),
    ]));
    let text = fs::read_to_string(out.join("eval/predictions.csv")).unwrap();
    assert!(text.starts_with("x,truth,mean,std\n"));
    let o = ibuq(&["eval", "operator", "--model", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_discontinuous(dir.path(), "16");
    let mut outs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("sweep{workers}"));
        let mut args = vec![
            "sweep-beta",
            "--data",
            p(&data),
            "--betas",
            "0.1,0.9",
            "--seeds",
            "0,1",
            "--workers",
            workers,
            "--out",
        ];
        let out_s = out.to_str().unwrap().to_string();
        args.push(&out_s);
        args.extend(QUICK);
        ok(ibuq(&args));
        outs.push(fs::read(out.join("sweep.csv")).unwrap());
        if workers == "1" {
            let fig = dir.path().join("plane");
            ok(ibuq(&[
                "plot",
                "info-plane",
                "--input",
                p(&out.join("sweep.csv")),
                "--out",
                p(&fig),
            ]));
            let svg = fs::read_to_string(fig.join("figure.svg")).unwrap();
            assert!(svg.contains("β=0.9"), "{svg}");
        }
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(String::from_utf8_lossy(&outs[0]).lines().count(), 3);
}

#[test]
fn operator_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("op");
    ok(ibuq(&[
        "gen-data",
        "operator",
        "--n",
        "6",
        "--out",
        p(&data),
        "--nx",
        "12",
        "--nt",
        "12",
    ]));
    let run = dir.path().join("run");
    ok(ibuq(&[
        "train",
        "ibuq-operator",
        "--data",
        p(&data),
        "--iterations",
        "3",
        "--batch",
        "4",
        "--queries",
        "5",
        "--latent-dim",
        "2",
        "--hidden",
        "8",
        "--head-hidden",
        "8",
        "--features",
        "4",
        "--gin-iterations",
        "2",
        "--out",
        p(&run),
    ]));
    assert_eq!(
        fs::read_to_string(run.join("metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    let ev = dir.path().join("eval");
    let o = ibuq(&[
        "eval",
        "operator",
        "--model",
        p(&run),
        "--lengths",
        "0.2,0.5",
        "--n-inputs",
        "2",
        "--samples",
        "4",
        "--field-length",
        "0.5",
        "--out",
        p(&ev),
    ]);
    ok(o);
    assert_eq!(
        fs::read_to_string(ev.join("lengths.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    let cuts = ev.join("cuts.csv");
    assert!(fs::read_to_string(&cuts)
        .unwrap()
        .starts_with("x,t,mean,std,reference\n"));
    let fig = dir.path().join("fig");
    ok(ibuq(&[
        "plot",
        "field",
        "--input",
        p(&cuts),
        "--out",
        p(&fig),
    ]));
    ok(ibuq(&[
        "plot",
        "lengths",
        "--input",
        p(&ev.join("lengths.csv")),
        "--out",
        p(&dir.path().join("fl")),
    ]));
}
