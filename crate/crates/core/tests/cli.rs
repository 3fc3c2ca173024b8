use std::path::Path;
use std::process::{Command, Output};

const SAMPLE: &str = "class,time,a,b\ns1,1,0.5,1\ns1,2,0.25,2\ns1,3,-1,3\ns2,1,4,5\ns2,2,6,7\ns2,3,8,9\n";

fn mcvar(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcvar"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn fit_then_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("p.csv"), SAMPLE).unwrap();
    let o = mcvar(&["fit", "--input", "p.csv", "--order", "1", "--out", "fit.json"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit = mcvar::io::load_fit(&d.join("fit.json")).unwrap();
    assert_eq!(fit.class_names, vec!["s1", "s2"]);

    let o = mcvar(&["report", "similarity", "--fit", "fit.json", "--out", "sim.csv"], d);
    assert_eq!(code(&o), 0);
    let sim = std::fs::read_to_string(d.join("sim.csv")).unwrap();
    let lines: Vec<&str> = sim.lines().collect();
    assert_eq!(lines[0], "class,s1,s2");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("s1,") && lines[2].starts_with("s2,"));

    let o = mcvar(&["report", "network", "--fit", "fit.json", "--out", "net.dot"], d);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(d.join("net.dot")).unwrap().starts_with("digraph"));

    let o = mcvar(
        &["report", "network", "--fit", "fit.json", "--format", "csv", "--subset", "lag=1;targets=a;sources=*", "--out", "net.csv"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(d.join("net.csv")).unwrap().starts_with("class,lag,source,target"));

    let o = mcvar(&["report", "clusters", "--fit", "fit.json", "--tau", "0.01", "--out", "cl.csv"], d);
    assert_eq!(code(&o), 0);
    let cl = std::fs::read_to_string(d.join("cl.csv")).unwrap();
    assert_eq!(cl.lines().next(), Some("lag,target,source,group,value,classes"));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("class,time,a,b\n");
    for class in ["s1", "s2"] {
        for t in 1..=12 {
            let x = (t as f64 * 1.3).sin() + if class == "s1" { 0.0 } else { 0.5 };
            csv.push_str(&format!("{class},{t},{x},{}\n", (t as f64 * 0.7).cos()));
        }
    }
    std::fs::write(d.join("p.csv"), csv).unwrap();
    std::fs::write(d.join("run.conf"), "estimator = ls\norder = 1\n").unwrap();
    let o = mcvar(&["fit", "--input", "p.csv", "--config", "run.conf", "--out", "a.json"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(mcvar::io::load_fit(&d.join("a.json")).unwrap().estimator, mcvar::Estimator::LeastSquares);
    let o = mcvar(
        &["fit", "--input", "p.csv", "--config", "run.conf", "--estimator", "single-class", "--out", "b.json"],
        d,
    );
    assert_eq!(code(&o), 0);
    assert_eq!(mcvar::io::load_fit(&d.join("b.json")).unwrap().estimator, mcvar::Estimator::SingleClass);
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = mcvar(
        &["simulate", "--design", "varying-beta", "--runs", "2", "--seed", "7", "--scale", "3,3,60", "--out", "out"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/study.json")).unwrap()).unwrap();
    assert_eq!(json["runs"], 2);
    assert_eq!(json["summaries"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(d.join("out/runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn usage_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = mcvar(&["frobnicate"], d);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
    let o = mcvar(&["fit", "--input", "p.csv", "--bogus", "--out", "x"], d);
    assert_eq!(code(&o), 1);
    let o = mcvar(&["fit", "--input", "missing.csv", "--out", "x.json"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
    std::fs::write(d.join("bad.json"), "{\"format\": \"something-else\"}").unwrap();
    let o = mcvar(&["report", "similarity", "--fit", "bad.json", "--out", "s.csv"], d);
    assert_eq!(code(&o), 2);
    assert!(!d.join("s.csv").exists());
    let o = mcvar(&["--help"], d);
    assert_eq!(code(&o), 0);
}
