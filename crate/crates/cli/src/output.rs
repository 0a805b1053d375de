//! Artifact writing with a `#` metadata header, and process exit codes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use wavegraph::io::{write_csv, Table};
use wavegraph::{Error, Graph};

use crate::Cli;

#[derive(Debug)]
pub enum Failure {
    /// Argument parsing ended the run; carries clap's exit code.
    Usage(i32),
    InvalidGraph(String),
    Resolution(String),
    Io(String),
    Other(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(c) => *c as u8,
            Failure::InvalidGraph(_) => 2,
            Failure::Resolution(_) => 3,
            Failure::Io(_) => 4,
            Failure::Other(_) => 1,
        }
    }

    pub fn report(&self) {
        match self {
            Failure::Usage(_) => {}
            Failure::InvalidGraph(m) => eprintln!("invalid graph:\n{m}"),
            Failure::Resolution(m) => eprintln!("solver resolution error: {m}"),
            Failure::Io(m) => eprintln!("i/o error: {m}"),
            Failure::Other(m) => eprintln!("error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Resolution { .. } => Failure::Resolution(e.to_string()),
            Error::Io(_) | Error::Csv(_) => Failure::Io(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Hex SHA-256 of the resolved options, excluding output location and
/// header-only flags.
pub fn config_hash(cli: &Cli) -> String {
    let json = serde_json::to_string(cli).expect("options serialize");
    Sha256::digest(json.as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub struct Output {
    dir: PathBuf,
    meta: Vec<(String, String)>,
    timestamp: Option<u64>,
}

impl Output {
    pub fn new(cli: &Cli, command: &str) -> Result<Self, Failure> {
        fs::create_dir_all(&cli.out)
            .map_err(|e| Failure::Io(format!("{}: {e}", cli.out.display())))?;
        let meta = vec![
            ("tool".into(), "wavegraph".into()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
            ("command".into(), command.into()),
            ("config_sha256".into(), config_hash(cli)),
            ("seed".into(), cli.seed.to_string()),
        ];
        let timestamp = (!cli.no_timestamp).then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        });
        Ok(Self {
            dir: cli.out.clone(),
            meta,
            timestamp,
        })
    }

    pub fn add_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    /// Records the graph checksum (total length) and level-density index.
    pub fn set_graph(&mut self, name: &str, graph: &Graph) {
        self.add_meta("graph", name);
        self.add_meta("total_length_um", format!("{:.17e}", graph.total_length()));
        self.add_meta(
            "density_index",
            format!("{:.17e}", graph.index.density_index()),
        );
    }

    fn header(&self, extra: &[(String, String)]) -> Vec<(String, String)> {
        let mut m = self.meta.clone();
        m.extend(extra.iter().cloned());
        if let Some(t) = self.timestamp {
            m.push(("timestamp_unix".into(), t.to_string()));
        }
        m
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&self, name: &str) -> Result<fs::File, Failure> {
        let p = self.path(name);
        fs::File::create(&p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
    }

    pub fn table(&self, name: &str, t: &Table) -> Result<(), Failure> {
        let t = Table {
            meta: self.header(&t.meta),
            ..t.clone()
        };
        t.write_to(self.create(name)?).map_err(Failure::from)
    }

    pub fn text_table(
        &self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), Failure> {
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        write_csv(self.create(name)?, &self.header(&[]), &header, rows).map_err(Failure::from)
    }

    pub fn json(&self, name: &str, value: serde_json::Value) -> Result<(), Failure> {
        let meta: serde_json::Map<String, serde_json::Value> = self
            .header(&[])
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::String(v)))
            .collect();
        let doc = serde_json::json!({ "meta": meta, "result": value });
        let text = serde_json::to_string_pretty(&doc).expect("json value serializes");
        fs::write(self.path(name), text + "\n")
            .map_err(|e| Failure::Io(format!("{}: {e}", self.path(name).display())))
    }

    /// Writes `<stem>.py`, a matplotlib script that plots `ys` against `x`.
    pub fn plot_stub(
        &self,
        csv_name: &str,
        x: &str,
        ys: &[&str],
        style: PlotStyle,
    ) -> Result<(), Failure> {
        let stem = Path::new(csv_name)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(csv_name);
        let marker = match style {
            PlotStyle::Line => "\"-\"",
            PlotStyle::Points => "\".\"",
        };
        let ys = ys
            .iter()
            .map(|y| format!("\"{y}\""))
            .collect::<Vec<_>>()
            .join(", ");
        let script = format!(
            r##"import csv
import matplotlib.pyplot as plt

with open("{csv_name}") as f:
    rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
x = [float(r["{x}"]) for r in rows]
for col in [{ys}]:
    plt.plot(x, [float(r[col]) for r in rows], {marker}, label=col)
plt.xlabel("{x}")
plt.legend()
plt.savefig("{stem}.png", dpi=150)
"##
        );
        fs::write(self.path(&format!("{stem}.py")), script)?;
        Ok(())
    }
}

#[derive(Clone, Copy)]
pub enum PlotStyle {
    Line,
    Points,
}
