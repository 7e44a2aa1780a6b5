//! Scenario-file front end for `nsiss-core`: JSON scenarios in, canonical
//! JSON reports and trajectory CSVs out.
//!
//! Exit codes: 0 when every check passes, 1 when checks ran and failed (the
//! report holds witnesses), 2 for unreadable or invalid input and
//! computation errors.

use std::fs;
use std::path::{Path, PathBuf};

pub mod builtins;
pub mod report;
pub mod run;
pub mod schema;

pub use run::{execute, RunOutput};
pub use schema::{Kind, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("computation error: {0}")]
    Compute(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, CliError>;

pub const BUILTIN_PREFIX: &str = "builtin:";

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
}

/// A scenario file path, or `builtin:NAME`.
pub fn load(arg: &str) -> Result<Scenario> {
    if let Some(name) = arg.strip_prefix(BUILTIN_PREFIX) {
        return builtins::builtin(name).ok_or_else(|| {
            CliError::Schema(format!("unknown builtin {name:?}; available: {}", builtins::NAMES.join(", ")))
        });
    }
    let text = fs::read_to_string(arg).map_err(|source| CliError::Io { path: arg.into(), source })?;
    parse_scenario(&text)
}

pub fn scenario_json(s: &Scenario) -> String {
    let mut text = serde_json::to_string_pretty(s).expect("scenarios serialize");
    text.push('\n');
    text
}

pub const REPORT_FILE: &str = "report.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

/// Runs the scenario and writes `report.json` (and `trajectory.csv` when a
/// trajectory was produced) into `out`.
pub fn run_to_dir(s: &Scenario, out: &Path) -> Result<RunOutput> {
    let res = execute(s)?;
    let io = |path: PathBuf| move |source| CliError::Io { path: path.clone(), source };
    fs::create_dir_all(out).map_err(io(out.into()))?;
    let rp = out.join(REPORT_FILE);
    fs::write(&rp, report::canonical_json(&res.report)).map_err(io(rp.clone()))?;
    if let Some(tr) = &res.trajectory {
        let tp = out.join(TRAJECTORY_FILE);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).map_err(io(tp.clone()))?;
        fs::write(&tp, buf).map_err(io(tp.clone()))?;
    }
    Ok(res)
}

pub fn exit_code(pass: bool) -> i32 {
    if pass {
        0
    } else {
        1
    }
}

/// Full command semantics: load, check the subcommand matches the scenario
/// kind, apply the seed override, run, and map the outcome to an exit code.
pub fn run_scenario(arg: &str, expected: Option<Kind>, out: &Path, seed: Option<u64>) -> i32 {
    let result = load(arg).and_then(|mut s| {
        if let Some(k) = expected {
            if s.kind != k {
                return Err(CliError::Schema(format!(
                    "subcommand expects kind {:?}, scenario has {:?}",
                    k.as_str(),
                    s.kind.as_str()
                )));
            }
        }
        if let Some(seed) = seed {
            s.seed = seed;
        }
        run_to_dir(&s, out)
    });
    match result {
        Ok(r) => {
            eprintln!("{}: {}", out.join(REPORT_FILE).display(), if r.pass { "pass" } else { "fail" });
            exit_code(r.pass)
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
