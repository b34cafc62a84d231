//! Command-line front end: argument parsing, config resolution, artifact
//! writing and exit-code mapping. The pipelines live in [`commands`].
//!
//! Exit codes: 0 success, 1 other failure (unreadable data, I/O), 2 bad
//! arguments or config, 3 missing input file, 4 numerical failure. Failures
//! after the output directory is known also write `error.json` there.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

pub mod args;
pub mod commands;
pub mod config;
pub mod svg;

use args::{Cli, Command};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "MIXEDGIBBS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("numerical failure ({kind}): {message}")]
    Numerical { kind: &'static str, message: String },
    #[error("{kind}: {message}")]
    Other { kind: &'static str, message: String },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::MissingInput(_) => 3,
            Failure::Numerical { .. } => 4,
            Failure::Other { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::MissingInput(_) => "missing_input",
            Failure::Numerical { kind, .. } | Failure::Other { kind, .. } => kind,
        }
    }

    pub fn from_io(e: std::io::Error, path: &Path) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            Failure::MissingInput(path.display().to_string())
        } else {
            Failure::Other {
                kind: "io",
                message: format!("{}: {e}", path.display()),
            }
        }
    }
}

impl From<mixedgibbs_core::Error> for Failure {
    fn from(e: mixedgibbs_core::Error) -> Self {
        use mixedgibbs_core::Error as E;
        if e.is_numerical() {
            return Failure::Numerical {
                kind: e.kind(),
                message: e.to_string(),
            };
        }
        match e {
            E::Domain(_) | E::Infeasible(_) | E::CapExceeded { .. } | E::Shape(_) => Failure::Config(e.to_string()),
            _ => Failure::Other {
                kind: e.kind(),
                message: e.to_string(),
            },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other {
            kind: "io",
            message: e.to_string(),
        }
    }
}

/// Destination for one run's artifacts.
pub struct Output {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Output {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
        let p = self.path(name);
        std::fs::write(&p, bytes).map_err(|e| Failure::from_io(e, &p))
    }

    /// Pretty JSON with a top-level `schema` field.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        self.write(name, report_json(value)?)
    }

    pub fn write_svg(&self, name: &str, chart: &svg::Chart) -> Result<(), Failure> {
        if self.plot {
            self.write(name, chart.render())?;
        }
        Ok(())
    }
}

pub fn report_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let v = serde_json::to_value(value).map_err(|e| Failure::Other {
        kind: "json",
        message: e.to_string(),
    })?;
    let v = match v {
        Value::Object(mut m) => {
            m.insert("schema".into(), json!(mixedgibbs_core::SCHEMA_VERSION));
            Value::Object(m)
        }
        other => json!({ "schema": mixedgibbs_core::SCHEMA_VERSION, "data": other }),
    };
    Ok(serde_json::to_string_pretty(&v).expect("value serializes") + "\n")
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Failure::Config(format!("{THREADS_ENV} = {raw:?} is not a positive integer")))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn write_error(dir: Option<&Path>, f: &Failure) {
    let doc = json!({
        "schema": mixedgibbs_core::SCHEMA_VERSION,
        "exit_code": f.exit_code(),
        "kind": f.kind(),
        "message": f.to_string(),
    });
    let text = serde_json::to_string_pretty(&doc).expect("error serializes") + "\n";
    eprintln!("error: {f}");
    if let Some(dir) = dir {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), text);
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let out_dir = cli.command.common().out.clone();
    let result = configure_threads().and_then(|_| dispatch(&cli.command));
    match result {
        Ok(()) => 0,
        Err(f) => {
            write_error(Some(&out_dir), &f);
            f.exit_code()
        }
    }
}

fn dispatch(cmd: &Command) -> Result<(), Failure> {
    let common = cmd.common();
    let out = Output {
        dir: common.out.clone(),
        plot: !common.no_plot,
    };
    // Each config is resolved before anything is written.
    match cmd {
        Command::Gen(a) => {
            let r = config::resolve_gen(a)?;
            finish(&out, "gen", r.gen.seed, &r, |o| commands::gen(&r, o))
        }
        Command::Check(a) => {
            let r = config::resolve_check(a)?;
            finish(&out, "check", None::<u64>, &r, |o| commands::check(&r, o))
        }
        Command::Sample(a) => {
            let r = config::resolve_sample(a)?;
            finish(&out, "sample", r.seed, &r, |o| commands::sample(&r, o))
        }
        Command::Drift(a) => {
            let r = config::resolve_drift(a)?;
            finish(&out, "drift", r.seed, &r, |o| commands::drift(&r, o))
        }
        Command::Contract(a) => {
            let r = config::resolve_contract(a)?;
            finish(&out, "contract", r.coupling.seed, &r, |o| commands::contract(&r, o))
        }
        Command::Wcurve(a) => {
            let r = config::resolve_wcurve(a)?;
            finish(&out, "wcurve", r.seed, &r, |o| commands::wcurve(&r, o))
        }
        Command::Rate(a) => {
            let r = config::resolve_rate(a)?;
            finish(&out, "rate", None::<u64>, &r, |o| commands::rate(&r, o))
        }
        Command::Scale(a) => {
            let r = config::resolve_scale(a)?;
            finish(&out, "scale", r.seed, &r, |o| commands::scale(&r, o))
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize, S: Serialize> {
    schema: u32,
    command: &'a str,
    seed: S,
    config: &'a C,
}

fn finish<C: Serialize, S: Serialize>(
    out: &Output,
    command: &str,
    seed: S,
    config: &C,
    body: impl FnOnce(&Output) -> Result<(), Failure>,
) -> Result<(), Failure> {
    std::fs::create_dir_all(&out.dir).map_err(|e| Failure::from_io(e, &out.dir))?;
    let m = Manifest {
        schema: mixedgibbs_core::SCHEMA_VERSION,
        command,
        seed,
        config,
    };
    out.write("manifest.json", serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n")?;
    body(out)
}
