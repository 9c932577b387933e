//! Output files: a `#` metadata header followed by a CSV body or a key = value report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::config::{OutputFormat, RunConfig};

pub struct Output<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    seed: Option<u64>,
}

impl<'a> Output<'a> {
    pub fn new(cfg: &'a RunConfig, command: &'static str) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&cfg.output.dir)
            .with_context(|| format!("creating output directory {}", cfg.output.dir.display()))?;
        Ok(Self {
            cfg,
            command,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.output.dir.join(name)
    }

    fn header(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "# biphoton {} {}", env!("CARGO_PKG_VERSION"), self.command)?;
        if let Some(seed) = self.seed {
            writeln!(out, "# seed: {seed}")?;
        }
        if self.cfg.output.timestamps {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(out, "# unix_time: {now}")?;
        }
        writeln!(out, "# config:")?;
        for line in self.cfg.to_toml().lines() {
            if line.is_empty() {
                writeln!(out, "#")?;
            } else {
                writeln!(out, "#   {line}")?;
            }
        }
        Ok(())
    }

    /// Writes numeric `rows` under `columns` to `name` and returns the path.
    pub fn table(
        &self,
        name: &str,
        columns: &[&str],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> anyhow::Result<PathBuf> {
        self.records(
            name,
            columns,
            rows.into_iter().map(|r| r.iter().map(f64::to_string).collect()),
        )
    }

    pub fn records(
        &self,
        name: &str,
        columns: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        let mut file = BufWriter::new(create(&path)?);
        self.header(&mut file)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(columns)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(path)
    }

    /// Writes a report of `(key, value)` pairs as CSV or as `key = value` lines.
    pub fn report(&self, stem: &str, entries: &[(String, String)]) -> anyhow::Result<PathBuf> {
        let structured = self.cfg.output.format == OutputFormat::StructuredText;
        let path = self.path(&format!("{stem}.{}", if structured { "txt" } else { "csv" }));
        let mut file = BufWriter::new(create(&path)?);
        self.header(&mut file)?;
        if structured {
            for (k, v) in entries {
                writeln!(file, "{k} = {v}")?;
            }
            file.flush()?;
        } else {
            let mut w = csv::Writer::from_writer(file);
            w.write_record(["key", "value"])?;
            for (k, v) in entries {
                w.write_record([k, v])?;
            }
            w.flush()?;
        }
        Ok(path)
    }
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// Prints a report to stdout, aligned on the keys.
pub fn print_report(entries: &[(String, String)]) {
    let width = entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in entries {
        println!("{k:<width$}  {v}");
    }
}
