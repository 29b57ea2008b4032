//! Experiment outputs: scalars, tables, verdicts and their files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::Result;

/// A threshold check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Verdict { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// A CSV table held as formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }
}

/// Formats one CSV row.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::experiments::result::cell(&$x)),*] };
}

pub fn cell<T: Display>(x: &T) -> String {
    x.to_string()
}

/// Everything one experiment produced. Wall-clock time is kept apart from
/// the summary so that reruns produce identical summary bytes.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Table>,
    /// Replications `0..replications` of the master seed.
    pub replications: usize,
    pub verdicts: Vec<Verdict>,
    pub wall_clock: Duration,
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    config_hash: String,
    config: &'a BTreeMap<String, String>,
    replications: usize,
    seed_rule: &'static str,
    scalars: &'a BTreeMap<String, f64>,
    series: Vec<String>,
    verdicts: &'a [Verdict],
    passed: bool,
}

impl ExperimentResult {
    pub fn new(config: &ExperimentConfig) -> Self {
        ExperimentResult {
            config: config.clone(),
            scalars: BTreeMap::new(),
            series: BTreeMap::new(),
            replications: 0,
            verdicts: Vec::new(),
            wall_clock: Duration::ZERO,
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    pub fn table(&mut self, name: &str, table: Table) {
        self.series.insert(name.to_string(), table);
    }

    pub fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    /// True when there is at least one verdict and all of them pass.
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn summary_json(&self) -> Result<String> {
        let s = Summary {
            experiment: self.config.experiment(),
            config_hash: self.config.hash(),
            config: self.config.values(),
            replications: self.replications,
            seed_rule: "replication k draws from ChaCha8 stream k keyed by the master seed",
            scalars: &self.scalars,
            series: self.series.keys().map(|k| format!("{k}.csv")).collect(),
            verdicts: &self.verdicts,
            passed: self.passed(),
        };
        Ok(serde_json::to_string_pretty(&s)?)
    }

    /// Writes `summary.json`, one CSV per series and `timing.json` under the
    /// config's output directory, which is returned.
    pub fn write(&self) -> Result<PathBuf> {
        let dir = self.config.output_dir()?;
        self.write_to(&dir)?;
        Ok(dir)
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), self.summary_json()? + "\n")?;
        for (name, t) in &self.series {
            let f = std::fs::File::create(dir.join(format!("{name}.csv")))?;
            t.write_csv(std::io::BufWriter::new(f))?;
        }
        let timing = serde_json::json!({ "wall_clock_s": self.wall_clock.as_secs_f64() });
        std::fs::write(dir.join("timing.json"), timing.to_string() + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_summary_files() {
        let cfg = ExperimentConfig::defaults("clt").unwrap();
        let mut res = ExperimentResult::new(&cfg);
        assert!(!res.passed());
        let mut t = Table::new(&["seed", "x"]);
        t.push(crate::row![1, 0.5]);
        res.table("xs", t);
        res.verdict(Verdict::new("ok", true, ""));
        assert!(res.passed());
        res.wall_clock = Duration::from_secs(3);
        let dir = tempfile::tempdir().unwrap();
        res.write_to(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("xs.csv")).unwrap(), "seed,x\n1,0.5\n");
        let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        assert!(summary.contains(&cfg.hash()) && !summary.contains("wall_clock"));
        res.verdict(Verdict::new("bad", false, ""));
        assert!(!res.passed());
    }
}
