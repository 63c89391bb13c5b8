//! Tab-separated output files and the run manifest.
//!
//! Every data file starts with `# config_digest: <hex>` and `# seed: <n>`,
//! then one header line. Data files carry no timestamps, so identical runs
//! produce identical bytes; wall-clock facts go only into `manifest.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::Result;
use crate::experiments::ExperimentReport;
use crate::integrator::Trajectory;
use crate::lattice::KernelMatrix;

/// The leading comment block of every data file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub config_digest: String,
    pub seed: u64,
}

fn fmt_value(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

/// Render a delimited table.
pub fn render_tsv(header: &Header, columns: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config_digest: {}", header.config_digest);
    let _ = writeln!(s, "# seed: {}", header.seed);
    s.push_str(&columns.join("\t"));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    s
}

/// Writes files into one directory and remembers their names.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    header: Header,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>, header: Header) -> Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(OutputDir {
            root: root.as_ref().to_path_buf(),
            header,
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    /// `name` is a bare file name; it never leaves the directory.
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        debug_assert!(!name.contains('/') && !name.contains('\\') && name != "..");
        fs::write(self.root.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, columns: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let cols: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        let text = render_tsv(&self.header, &cols, rows);
        self.write(name, &text)
    }

    /// `trajectory.tsv` (one line per recorded site value), `events.tsv` and
    /// `crossings.tsv`.
    pub fn write_trajectory(&mut self, traj: &Trajectory) -> Result<()> {
        let d = &traj.domain;
        let rows = traj
            .records
            .iter()
            .flat_map(|r| {
                r.values.iter().enumerate().map(move |(i, v)| {
                    vec![
                        fmt_value(r.t),
                        r.step.to_string(),
                        d.global_index(i).to_string(),
                        fmt_value(d.x(i)),
                        fmt_value(*v),
                    ]
                })
            })
            .collect();
        self.write_table("trajectory.tsv", &["t", "step", "site", "x", "value"], rows)?;
        let opt = |x: Option<String>| x.unwrap_or_else(|| "-".into());
        let rows = traj
            .events
            .iter()
            .map(|e| {
                vec![
                    fmt_value(e.t),
                    e.kind.name().into(),
                    opt(e.level.map(|l| l.to_string())),
                    opt(e.site.map(|s| d.global_index(s).to_string())),
                ]
            })
            .collect();
        self.write_table("events.tsv", &["t", "kind", "level", "site"], rows)?;
        let rows = traj
            .crossings
            .records
            .iter()
            .map(|c| {
                vec![
                    c.n.to_string(),
                    c.direction.name().into(),
                    fmt_value(c.t),
                    d.global_index(c.site).to_string(),
                ]
            })
            .collect();
        self.write_table("crossings.tsv", &["n", "direction", "t", "site"], rows)
    }

    /// `summary.tsv`, `replicas.tsv`, `missing.tsv`, `flags.tsv` and one file
    /// per report table.
    pub fn write_report(&mut self, report: &ExperimentReport) -> Result<()> {
        let mut summary: Vec<Vec<String>> = vec![
            vec!["replicas".into(), report.replicas.len().to_string()],
            vec!["missing".into(), report.missing.len().to_string()],
        ];
        if let Some(v) = report.max_violation {
            summary.push(vec!["max_violation".into(), fmt_value(v)]);
        }
        if let Some(v) = report.violating_fraction {
            summary.push(vec!["violating_fraction".into(), fmt_value(v)]);
        }
        summary.extend(report.summary.iter().map(|(k, v)| vec![k.clone(), fmt_value(*v)]));
        self.write_table("summary.tsv", &["key", "value"], summary)?;

        let mut cols = vec!["replica".to_string()];
        cols.extend(report.columns.iter().cloned());
        let rows = report.replicas.iter().map(|r| {
            std::iter::once(r.replica.to_string())
                .chain(r.values.iter().map(|v| fmt_value(*v)))
                .collect()
        });
        let text = render_tsv(&self.header, &cols, rows);
        self.write("replicas.tsv", &text)?;

        let rows = report
            .missing
            .iter()
            .map(|m| vec![m.replica.to_string(), m.reason.replace(['\t', '\n'], " ")])
            .collect();
        self.write_table("missing.tsv", &["replica", "reason"], rows)?;
        let rows = report
            .flags
            .iter()
            .map(|f| vec![f.kind.name().into(), f.message.replace(['\t', '\n'], " ")])
            .collect();
        self.write_table("flags.tsv", &["flag", "message"], rows)?;

        for t in &report.tables {
            let rows = t.rows.iter().map(|r| r.iter().map(|v| fmt_value(*v)).collect());
            let text = render_tsv(&self.header, &t.columns, rows);
            self.write(&format!("{}.tsv", t.name), &text)?;
        }
        Ok(())
    }

    /// `kernel.tsv`: every entry `(i, j, K_t(i, j))`.
    pub fn write_kernel(&mut self, k: &KernelMatrix) -> Result<()> {
        let d = &k.domain;
        let n = k.n();
        let rows = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| {
                vec![
                    d.global_index(i).to_string(),
                    d.global_index(j).to_string(),
                    fmt_value(k.get(i, j)),
                ]
            })
            .collect();
        self.write_table("kernel.tsv", &["site_i", "site_j", "value"], rows)
    }

    /// `config.toml`: the resolved config, defaults included.
    pub fn write_config(&mut self, cfg: &crate::config::RunConfig) -> Result<()> {
        let text = format!(
            "# config_digest: {}\n# seed: {}\n{}",
            self.header.config_digest,
            self.header.seed,
            cfg.to_toml()
        );
        self.write("config.toml", &text)
    }

    /// `manifest.json` with the digest, seed, versions, file list, run time,
    /// a timestamp and any extra fields.
    pub fn write_manifest<T: Serialize>(&mut self, command: &str, runtime: f64, extra: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a, T> {
            config_digest: &'a str,
            seed: u64,
            command: &'a str,
            package: &'static str,
            version: &'static str,
            files: &'a [String],
            runtime_seconds: f64,
            created_unix: u64,
            details: &'a T,
        }
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let m = Manifest {
            config_digest: &self.header.config_digest,
            seed: self.header.seed,
            command,
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            files: &self.written,
            runtime_seconds: runtime,
            created_unix,
            details: extra,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| crate::Error::Io(std::io::Error::other(e)))?;
        fs::write(self.root.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
