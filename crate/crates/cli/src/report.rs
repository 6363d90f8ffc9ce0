//! Line-oriented report format with a versioned header.
//!
//! ```text
//! #kledge-report v1
//! suite <name>
//! scenario <name>
//! digest <hex>
//! param <key> <value>
//! check <label> <pass|fail>[ note=<free text>]
//! result <pass|fail>
//! ```
//!
//! Reports render deterministically and parse back exactly, so they diff
//! cleanly in golden tests.

pub const REPORT_VERSION: &str = "#kledge-report v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub label: String,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub suite: String,
    pub scenario: String,
    pub digest: String,
    pub params: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    pub fn new(suite: &str, scenario: &str, digest: &str) -> Self {
        Report {
            suite: suite.to_string(),
            scenario: scenario.to_string(),
            digest: digest.to_string(),
            params: Vec::new(),
            checks: Vec::new(),
            pass: true,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn check(&mut self, label: &str, pass: bool, note: Option<String>) {
        // notes must stay on one line
        let note = note.map(|n| n.replace('\n', " "));
        self.checks.push(Check { label: label.to_string(), pass, note });
        self.pass &= pass;
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(REPORT_VERSION);
        out.push('\n');
        out.push_str(&format!("suite {}\n", self.suite));
        out.push_str(&format!("scenario {}\n", self.scenario));
        out.push_str(&format!("digest {}\n", self.digest));
        for (k, v) in &self.params {
            out.push_str(&format!("param {k} {v}\n"));
        }
        for c in &self.checks {
            let verdict = if c.pass { "pass" } else { "fail" };
            match &c.note {
                Some(note) => out.push_str(&format!("check {} {verdict} note={note}\n", c.label)),
                None => out.push_str(&format!("check {} {verdict}\n", c.label)),
            }
        }
        out.push_str(&format!("result {}\n", if self.pass { "pass" } else { "fail" }));
        out
    }

    pub fn parse(text: &str) -> Result<Report, String> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_VERSION) {
            return Err("missing report version header".into());
        }
        let mut report = Report::new("", "", "");
        let mut saw_result = false;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let (kind, rest) = line.split_once(' ').ok_or_else(|| format!("bad line {line:?}"))?;
            match kind {
                "suite" => report.suite = rest.to_string(),
                "scenario" => report.scenario = rest.to_string(),
                "digest" => report.digest = rest.to_string(),
                "param" => {
                    let (k, v) =
                        rest.split_once(' ').ok_or_else(|| format!("bad param {rest:?}"))?;
                    report.params.push((k.to_string(), v.to_string()));
                }
                "check" => {
                    let (label, rest) =
                        rest.split_once(' ').ok_or_else(|| format!("bad check {rest:?}"))?;
                    let (verdict, note) = match rest.split_once(" note=") {
                        Some((v, n)) => (v, Some(n.to_string())),
                        None => (rest, None),
                    };
                    let pass = match verdict {
                        "pass" => true,
                        "fail" => false,
                        other => return Err(format!("bad verdict {other:?}")),
                    };
                    report.checks.push(Check { label: label.to_string(), pass, note });
                }
                "result" => {
                    report.pass = rest == "pass";
                    saw_result = true;
                }
                other => return Err(format!("unknown line kind {other:?}")),
            }
        }
        if !saw_result {
            return Err("missing result line".into());
        }
        Ok(report)
    }

    /// Human-oriented rendering.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} on {} (digest {})\n", self.suite, self.scenario, self.digest));
        for (k, v) in &self.params {
            out.push_str(&format!("  {k} = {v}\n"));
        }
        for c in &self.checks {
            let verdict = if c.pass { "ok" } else { "FAIL" };
            match &c.note {
                Some(note) => out.push_str(&format!("  [{verdict}] {} ({note})\n", c.label)),
                None => out.push_str(&format!("  [{verdict}] {}\n", c.label)),
            }
        }
        out.push_str(if self.pass { "PASS\n" } else { "FAIL\n" });
        out
    }
}
