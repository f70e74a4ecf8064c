#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn interdiff<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    run_with_env(args, &[])
}

pub fn run_with_env<I, S>(args: I, env: &[(&str, &str)]) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_interdiff"));
    cmd.args(args).env_remove("INTERDIFF_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let Output { status, stdout, stderr } = cmd.output().expect("spawn interdiff");
    Run {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

pub fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// `iteration,loss` columns of a training log; wall time is dropped.
pub fn loss_columns(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default()).collect()
}

pub fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

/// Value of `key=` in a `key=value` summary line.
pub fn field(line: &str, key: &str) -> Option<String> {
    line.split_whitespace().find_map(|tok| tok.strip_prefix(&format!("{key}=")).map(str::to_string))
}

/// Parses an eval CSV into `(id, psnr, ssim)` rows, mean row included.
pub fn eval_rows(csv: &str) -> Vec<(String, f64, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let psnr = if f[1] == "inf" { f64::INFINITY } else { f[1].parse().unwrap() };
            (f[0].to_string(), psnr, f[2].parse().unwrap())
        })
        .collect()
}
