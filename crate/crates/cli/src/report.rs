//! Reports: every verified identity, every rank with its window, and the
//! exact witnesses, rendered as JSON or markdown.

use std::fmt::Write;

use dgm_core::ladder::IdentityCheck;
use dgm_core::linalg::Matrix;
use dgm_core::scalar::{fmt_q, Q};
use serde::Serialize;
use serde_json::Value;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_FAIL: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Serialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Serialize, Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Serialize, Debug, Clone, PartialEq, Eq)]
pub struct RankEntry {
    pub degree: i32,
    pub dim: usize,
    /// Set for truncated computations: whether raising the bounds kept the rank.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next: Option<usize>,
}

#[derive(Serialize, Debug, Clone, PartialEq, Eq)]
pub struct RankTable {
    pub name: String,
    pub window: [i32; 2],
    pub entries: Vec<RankEntry>,
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct Witness {
    pub name: String,
    pub value: Value,
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub subject: String,
    pub status: Status,
    pub exit_code: i32,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ranks: Vec<RankTable>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inconclusive: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(command: &str, subject: impl Into<String>) -> Report {
        Report {
            command: command.into(),
            subject: subject.into(),
            status: Status::Pass,
            exit_code: EXIT_PASS,
            checks: Vec::new(),
            ranks: Vec::new(),
            witnesses: Vec::new(),
            inconclusive: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, failure: Option<String>) {
        self.checks.push(Check { name: name.into(), passed: failure.is_none(), detail: failure.unwrap_or_default() });
    }

    pub fn identity(&mut self, prefix: &str, c: &IdentityCheck) {
        let name = if prefix.is_empty() { c.name.clone() } else { format!("{prefix}: {}", c.name) };
        self.checks.push(Check { name, passed: c.passed, detail: c.detail.clone() });
    }

    pub fn ranks(&mut self, name: impl Into<String>, window: (i32, i32), dims: &[(i32, usize)]) {
        let entries = dims.iter().map(|&(degree, dim)| RankEntry { degree, dim, stable: None, next: None }).collect();
        self.ranks.push(RankTable { name: name.into(), window: [window.0, window.1], entries });
    }

    pub fn witness(&mut self, name: impl Into<String>, value: Value) {
        self.witnesses.push(Witness { name: name.into(), value });
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Sets status and exit code: any failed check gives 3, otherwise any
    /// inconclusive item gives 4.
    pub fn finish(mut self) -> Report {
        (self.status, self.exit_code) = if self.checks.iter().any(|c| !c.passed) {
            (Status::Fail, EXIT_FAIL)
        } else if !self.inconclusive.is_empty() {
            (Status::Inconclusive, EXIT_INCONCLUSIVE)
        } else {
            (Status::Pass, EXIT_PASS)
        };
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let status = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        };
        let _ = writeln!(s, "# dgm {} on {}: {status} (exit {})\n", self.command, self.subject, self.exit_code);
        if !self.checks.is_empty() {
            s.push_str("## Checks\n\n");
            for c in &self.checks {
                let mark = if c.passed { "pass" } else { "FAIL" };
                if c.detail.is_empty() {
                    let _ = writeln!(s, "- [{mark}] {}", c.name);
                } else {
                    let _ = writeln!(s, "- [{mark}] {}: {}", c.name, c.detail);
                }
            }
            s.push('\n');
        }
        for t in &self.ranks {
            let _ = writeln!(s, "## {} on [{}, {}]\n", t.name, t.window[0], t.window[1]);
            s.push_str("| degree | dim | stable |\n|---|---|---|\n");
            for e in &t.entries {
                let stable = match (e.stable, e.next) {
                    (None, _) => "".to_string(),
                    (Some(true), _) => "yes".to_string(),
                    (Some(false), Some(n)) => format!("no (next {n})"),
                    (Some(false), None) => "no".to_string(),
                };
                let _ = writeln!(s, "| {} | {} | {} |", e.degree, e.dim, stable);
            }
            s.push('\n');
        }
        if !self.witnesses.is_empty() {
            s.push_str("## Witnesses\n\n");
            for w in &self.witnesses {
                let _ = writeln!(s, "- {}: `{}`", w.name, w.value);
            }
            s.push('\n');
        }
        if !self.inconclusive.is_empty() {
            s.push_str("## Inconclusive\n\n");
            for i in &self.inconclusive {
                let _ = writeln!(s, "- {i}");
            }
            s.push('\n');
        }
        if !self.notes.is_empty() {
            s.push_str("## Notes\n\n");
            for n in &self.notes {
                let _ = writeln!(s, "- {n}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn q_value(x: &Q) -> Value {
    Value::String(fmt_q(x))
}

pub fn matrix_value(m: &Matrix) -> Value {
    Value::Array(m.to_dense().iter().map(|r| Value::Array(r.iter().map(q_value).collect())).collect())
}

pub fn strings<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Value {
    Value::Array(items.into_iter().map(|s| Value::String(s.into())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_outranks_inconclusive() {
        let mut r = Report::new("x", "y");
        r.inconclusive.push("degree 3".into());
        assert_eq!(r.clone().finish().exit_code, EXIT_INCONCLUSIVE);
        r.check("c", Some("bad".into()));
        let r = r.finish();
        assert_eq!((r.status, r.exit_code), (Status::Fail, EXIT_FAIL));
        assert!(r.to_markdown().contains("- [FAIL] c: bad"));
    }
}
