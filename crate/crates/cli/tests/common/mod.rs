#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_gridstrength");

pub fn data(rel: &str) -> String {
    format!("../../data/{rel}")
}

pub fn fig3() -> String {
    data("networks/fig3.toml")
}

pub fn smib() -> String {
    data("networks/smib.toml")
}

pub fn device() -> String {
    data("devices/calibrated_gfl.toml")
}

pub fn run<S: AsRef<str>>(args: &[S]) -> Output {
    Command::new(BIN)
        .args(args.iter().map(|a| a.as_ref()))
        .env("GRIDSTRENGTH_NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

pub fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// JSON report with the wall-clock field removed.
pub fn machine_output(out: &Output) -> String {
    let mut v = json(out);
    if let Some(obj) = v.as_object_mut() {
        obj.remove("wall_time_s");
    }
    serde_json::to_string_pretty(&v).unwrap()
}

pub struct GoldenCase {
    pub name: &'static str,
    pub args: Vec<String>,
    pub exit: i32,
}

pub fn golden_cases() -> Vec<GoldenCase> {
    let case = |name, args: &[&str], exit| GoldenCase {
        name,
        args: args.iter().map(|s| s.to_string()).collect(),
        exit,
    };
    let (fig3, smib, dev) = (fig3(), smib(), device());
    vec![
        case("gscr_fig3", &["gscr", &fig3], 0),
        case("gscr_smib", &["gscr", &smib], 0),
        case(
            "size_fig3",
            &["size-gfm", &fig3, "--target-gscr", "2.0", "--z-local", "0.16"],
            0,
        ),
        case(
            "size_fig3_units",
            &["size-gfm", &fig3, "--target-gscr", "2.0", "--z-local", "0.16", "--unit-mva", "5"],
            0,
        ),
        case(
            "size_fig3_satisfied",
            &["size-gfm", &fig3, "--target-gscr", "1.0", "--z-local", "0.16"],
            0,
        ),
        case("cgscr_calibrated", &["cgscr", &dev], 0),
        case("assess_fig3_weak", &["assess", &fig3, &dev, "--gamma", "0"], 4),
        case("assess_fig3_sized", &["assess", &fig3, &dev, "--gamma", "0.128"], 0),
        case(
            "assess_fig3_per_farm",
            &["assess", &fig3, &dev, "--gamma-per-farm", "0.2,0.1,0.1,0.2"],
            0,
        ),
    ]
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new("tests/golden").join(format!("{name}.txt"))
}

pub fn simulate_into(dir: &Path, gamma: f64) -> Output {
    run(&[
        "simulate".to_string(),
        fig3(),
        device(),
        "--gamma".into(),
        gamma.to_string(),
        "--out".into(),
        dir.display().to_string(),
        "--json".into(),
    ])
}
