//! Line-oriented `key<TAB>value` run reports.

use std::fmt::Display;
use std::path::Path;

use tgc_core::{MetricsReport, RunConfig};

/// Key of the one line that is allowed to differ between identical runs.
pub const WALL_TIME_KEY: &str = "wall_time_s";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    lines: Vec<(String, String)>,
    table: Option<String>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn lines(&self) -> &[(String, String)] {
        &self.lines
    }

    pub fn config(&mut self, prefix: &str, cfg: &RunConfig) {
        for line in cfg.to_text().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                self.push(format!("{prefix}config.{k}"), v);
            }
        }
    }

    pub fn metrics(&mut self, prefix: &str, m: &MetricsReport, classes: &[String]) {
        self.push(format!("{prefix}accuracy"), m.accuracy);
        self.push(format!("{prefix}f1"), m.aggregate_f1);
        for (c, name) in classes.iter().enumerate() {
            self.push(format!("{prefix}precision.{name}"), m.precision[c]);
            self.push(format!("{prefix}recall.{name}"), m.recall[c]);
            self.push(format!("{prefix}f1.{name}"), m.f1[c]);
        }
        for (t, row) in m.confusion.counts().iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            self.push(format!("{prefix}confusion.{}", classes[t]), cells.join(","));
        }
    }

    pub fn losses(&mut self, prefix: &str, losses: &[f64]) {
        for (e, l) in losses.iter().enumerate() {
            self.push(format!("{prefix}loss.epoch{e}"), l);
        }
    }

    pub fn set_table(&mut self, table: String) {
        self.table = Some(table);
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            s.push_str(k);
            s.push('\t');
            s.push_str(v);
            s.push('\n');
        }
        if let Some(t) = &self.table {
            s.push('\n');
            s.push_str(t);
        }
        s
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_tsv())
    }
}

/// Parses the `key<TAB>value` part of a report, stopping at the first blank line.
pub fn parse_tsv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| !l.is_empty())
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
