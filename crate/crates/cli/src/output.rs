//! Input reading, report envelopes and exit-code classification.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use hpscale_core::{Error, ErrorClass};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "hpscale";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Read { path: PathBuf, message: String },
    Write { path: PathBuf, message: String },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(e) => match e.class() {
                ErrorClass::Argument => 2,
                ErrorClass::Domain => 3,
                ErrorClass::Io => 4,
            },
            Failure::Read { .. } => 2,
            Failure::Write { .. } => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Read { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            Failure::Write { path, message } => write!(f, "cannot write {}: {message}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// A read input together with its digest.
pub struct Input {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
    pub sha256: String,
}

impl Input {
    pub fn text(&self) -> CliResult<&str> {
        std::str::from_utf8(&self.bytes).map_err(|e| Failure::Read {
            path: self.path.clone(),
            message: format!("not UTF-8: {e}"),
        })
    }

    /// Core errors raised while interpreting this input, with the file name
    /// prepended to parse diagnostics.
    pub fn context(&self, e: Error) -> Failure {
        match e {
            Error::Parse { line, message } => Failure::Core(Error::Parse {
                line,
                message: format!("{}: {message}", self.path.display()),
            }),
            other => Failure::Core(other),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads `path`, or standard input when `path` is `-`.
pub fn read_input(path: &Path) -> CliResult<Input> {
    let fail = |e: io::Error| Failure::Read { path: path.to_path_buf(), message: e.to_string() };
    let bytes = if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().lock().read_to_end(&mut buf).map_err(fail)?;
        buf
    } else {
        fs::read(path).map_err(fail)?
    };
    let sha256 = sha256_hex(&bytes);
    Ok(Input { path: path.to_path_buf(), bytes, sha256 })
}

/// Writes `bytes` to `out`, or standard output when absent or `-`.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) if p != Path::new("-") => fs::write(p, bytes).map_err(|e| Failure::Write {
            path: p.to_path_buf(),
            message: e.to_string(),
        }),
        _ => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Write { path: PathBuf::from("<stdout>"), message: e.to_string() })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    /// Digest of the primary input file; absent for commands without one.
    pub input_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laws_sha256: Option<String>,
}

impl Meta {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Self { tool: TOOL, version: VERSION, command, seed, input_sha256: None, laws_sha256: None }
    }

    pub fn with_input(mut self, input: &Input) -> Self {
        self.input_sha256 = Some(input.sha256.clone());
        self
    }

    pub fn with_laws(mut self, laws: Option<&Input>) -> Self {
        self.laws_sha256 = laws.map(|l| l.sha256.clone());
        self
    }

    /// Provenance as `# key=value` comment lines for CSV outputs.
    pub fn csv_comments(&self) -> String {
        let mut s = format!("# generator={} {}\n# seed={}\n", self.tool, self.version, self.seed);
        if let Some(d) = &self.input_sha256 {
            s.push_str(&format!("# input_sha256={d}\n"));
        }
        s
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of `body` with `meta` as an extra top-level key.
pub fn report_json<T: Serialize>(meta: &Meta, body: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&Report { meta, body })
        .map_err(|e| Failure::Core(Error::Io(format!("serializing report: {e}"))))?;
    out.push(b'\n');
    Ok(out)
}
