use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nla"))
        .args(args)
        .env("NLA_THREADS", "2")
        .output()
        .expect("failed to launch nla")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn passing_run_writes_summary_verdict_and_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("residuals");
    let res = nla(&["profile_residuals", "--out", &out_arg(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.starts_with("PASS profile_residuals"), "{stdout}");

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("check,parameter,value,lower,upper,status"));
    assert!(lines.all(|l| l.split(',').count() == 6 && !l.ends_with(",fail")));
    let verdict = fs::read_to_string(out.join("verdict.txt")).unwrap();
    assert_eq!(verdict.trim(), stdout.trim());

    let sidecar = fs::read_to_string(out.join("profile_burgers_source.json")).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&sidecar).unwrap();
    assert_eq!(meta["kind"], "burgers_source");
    assert_eq!(meta["alpha"], 1);
    let csv = fs::read_to_string(out.join("profile_heat.csv")).unwrap();
    assert!(csv.starts_with("x,value\n"));
}

#[test]
fn config_file_and_overrides_are_layered() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("limits.cfg");
    fs::write(&cfg, "# two scales, widened by an override\nexperiment = kernel_limits\nlambda_list = 4, 8\nn_per_axis = 2048\n").unwrap();
    let out = tmp.path().join("limits");
    let res = nla(&[
        "kernel_limits",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(&out),
        "--override",
        "lambda_list=4,8,16",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("kernel_limits.csv")).unwrap();
    assert_eq!(table.lines().count(), 4, "header plus one row per λ");
}

#[test]
fn violated_bound_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    // early-time fit, far from the asymptotic regime
    let res = nla(&[
        "decay",
        "--out",
        &out_arg(tmp.path()),
        "--override",
        "n_per_axis=1024",
        "--override",
        "half_width=40",
        "--override",
        "t_end=2",
        "--override",
        "t_min=0.05",
        "--override",
        "fit_window=0.1,2",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stdout).starts_with("FAIL decay"));
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert!(summary.contains("decay_slope,p=2,") && summary.contains(",fail"));
}

#[test]
fn configuration_errors_exit_two_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[(&[&str], &str)] = &[
        (&["decay", "--override", "colour=blue"], "colour"),
        (&["decay", "--override", "q=abc"], "`q`"),
        (&["asymptotics", "--override", "q=1.5"], "`q`"),
        (&["energy_bounds", "--override", "lambda_list=4,2"], "lambda_list"),
        (&["nosuch"], "experiment"),
    ];
    for (args, key) in cases {
        let mut full = args.to_vec();
        let out = out_arg(tmp.path());
        full.extend(["--out", out.as_str()]);
        let res = nla(&full);
        assert_eq!(res.status.code(), Some(2), "{args:?}");
        let stderr = String::from_utf8_lossy(&res.stderr);
        assert!(stderr.contains(key), "{args:?}: {stderr}");
    }
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "q = 3\nthis line has no equals sign\n").unwrap();
    assert_eq!(nla(&["decay", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let missing = tmp.path().join("missing.cfg");
    assert_eq!(nla(&["decay", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(nla(&[]).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    // the domain is too small for the run, so the tail monitor trips
    let res = nla(&[
        "decay",
        "--out",
        &out_arg(tmp.path()),
        "--override",
        "half_width=8",
        "--override",
        "n_per_axis=256",
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("domain overflow"));
}

#[test]
fn bad_thread_count_is_a_configuration_error() {
    let res = Command::new(env!("CARGO_BIN_EXE_nla"))
        .args(["profile_residuals"])
        .env("NLA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let res = nla(&["--help"]);
    assert_eq!(res.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&res.stdout).contains("--override"));
}

#[test]
fn identical_configs_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    for experiment in ["compactness_functionals", "tail_bounds"] {
        let (a, b) = (tmp.path().join(format!("{experiment}_a")), tmp.path().join(format!("{experiment}_b")));
        for (dir, threads) in [(&a, "1"), (&b, "4")] {
            let res = Command::new(env!("CARGO_BIN_EXE_nla"))
                .args([experiment, "--out", &out_arg(dir), "--override", "seed=7"])
                .env("NLA_THREADS", threads)
                .output()
                .unwrap();
            assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        }
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 3);
        for name in names {
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
        }
    }
}
