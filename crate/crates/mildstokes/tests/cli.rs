use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mildstokes")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("mildstokes-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn check_mild_exit_codes() {
    let ok = run(&["check-mild", corpus("b_half.dsys").to_str().unwrap()]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).starts_with("mild"));
    let not = run(&["check-mild", corpus("singular.dsys").to_str().unwrap()]);
    assert_eq!(code(&not), 2);
    assert!(stdout(&not).contains("A(0) singular"));
    let d = scratch("bad");
    let bad = d.join("bad.dsys");
    std::fs::write(&bad, "A = [[1+t,]\n").unwrap();
    let o = run(&["check-mild", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":1:11:"));
    assert_eq!(code(&run(&["check-mild", "/nonexistent/file.dsys"])), 1);
}

#[test]
fn formal_lines_and_unsupported_structure() {
    let o = run(&["formal", corpus("diag_log2.dsys").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["(0.6931471805599453*s, G=[-1.0])", "(0, G=[-0.5])"]);
    let r = run(&["formal", corpus("resonant.dsys").to_str().unwrap()]);
    assert_eq!(code(&r), 3);
    assert!(String::from_utf8_lossy(&r.stderr).contains("block 0"));
}

#[test]
fn directions_of_a_linear_pair() {
    let o = run(&["directions", corpus("diag_log2.dsys").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let stokes: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("stokes"))
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(stokes.len(), 2);
    assert!(stokes.iter().all(|s| (s.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12));
    let t = run(&["directions", corpus("b_half.dsys").to_str().unwrap()]);
    assert!(!stdout(&t).contains("stokes"));
    assert_eq!(stdout(&t).lines().filter(|l| l.starts_with("special")).count(), 2);
}

#[test]
fn solve_writes_samples_and_reports_config() {
    let d = scratch("solve");
    let csv = d.join("b.csv");
    let o = run(&["solve", corpus("b_half.dsys").to_str().unwrap(), "--theta", "0", "--n", "12", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("theta=0 (flag)") && text.contains("smin=10 (default)"));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 13);
    let p = run(&["solve", corpus("params_only.dsys").to_str().unwrap(), "--smax", "30", "--n", "9"]);
    assert_eq!(code(&p), 0);
    let err = String::from_utf8_lossy(&p.stderr);
    assert!(err.contains("theta=-0.25 (file)") && err.contains("smax=30 (flag)"), "{err}");
}

#[test]
fn solve_on_a_stokes_line_warns() {
    let d = scratch("warn");
    let f = d.join("pair.dsys");
    std::fs::write(&f, "A = [[exp(1), 0],[0, 1]]\n").unwrap();
    let o = run(&["solve", f.to_str().unwrap(), "--theta", "pi/2", "--n", "8"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: theta is a Stokes direction"));
}

#[test]
fn cocycle_outputs_and_failures() {
    let d = scratch("cocycle");
    let o = run(&["cocycle", corpus("b_half.dsys").to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS overlap")).count(), 2);
    assert!(d.join("module.toml").exists() && d.join("overlap_0.csv").exists());
    let e = run(&["cocycle", corpus("formal_pair.dsys").to_str().unwrap(), "--out", d.join("e").to_str().unwrap()]);
    assert_eq!(code(&e), 0);
    assert!(stdout(&e).lines().filter(|l| l.starts_with("PASS")).all(|l| l.ends_with("identity")));
    let f = run(&["cocycle", corpus("diag_log2.dsys").to_str().unwrap(), "--cuts", "0,3", "--out", d.join("f").to_str().unwrap()]);
    assert_eq!(code(&f), 4);
    assert!(String::from_utf8_lossy(&f.stderr).contains("overlap 0"));
    let r = run(&["cocycle", corpus("formal_ramified.dsys").to_str().unwrap(), "--out", d.join("r").to_str().unwrap()]);
    assert_eq!(code(&r), 0);
}

#[test]
fn verify_suites() {
    assert_eq!(code(&run(&["verify", "gamma", "--alpha", "0.5"])), 0);
    assert_eq!(code(&run(&["verify", "egamma"])), 0);
    let l = run(&["verify", "lambda", "--direction", "0.3"]);
    assert_eq!(code(&l), 0);
    assert!(stdout(&l).lines().all(|x| x.starts_with("PASS")));
}

#[test]
fn plot_data_writes_rays_and_script() {
    let d = scratch("plot");
    let o = run(&["plot-data", corpus("diag_log2.dsys").to_str().unwrap(), "--n", "10", "--out", d.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 5);
    assert!(std::fs::read_to_string(d.join("plot.gp")).unwrap().contains("ray_3.csv"));
}

#[test]
fn output_is_deterministic() {
    let d = scratch("det");
    let (a, b) = (d.join("a.csv"), d.join("b.csv"));
    for p in [&a, &b] {
        run(&["solve", corpus("coupled.dsys").to_str().unwrap(), "--out", p.to_str().unwrap()]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
