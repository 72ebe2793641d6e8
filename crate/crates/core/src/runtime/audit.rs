//! No-leak audit over a serialized message log.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::message::{Envelope, Message};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    PidValue { value: String },
    CountBelowThreshold { statistic: String, count: u64, k: u64 },
    Unparseable { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based line in the log.
    pub line: usize,
    pub job_id: String,
    pub gateway_id: String,
    pub round: u32,
    pub finding: Finding,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.job_id.is_empty() {
            write!(f, "line {}: ", self.line)?;
        } else {
            write!(f, "line {} ({} round {} via {}): ", self.line, self.job_id, self.round, self.gateway_id)?;
        }
        match &self.finding {
            Finding::PidValue { value } => write!(f, "identifier value `{value}`"),
            Finding::CountBelowThreshold { statistic, count, k } => write!(f, "count {count} for `{statistic}` below k = {k}"),
            Finding::Unparseable { error } => write!(f, "unparseable message: {error}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub messages: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Identifier matcher: exact strings plus substrings of every identifier length.
struct PidIndex<'a> {
    pids: &'a HashSet<String>,
    lengths: BTreeSet<usize>,
}

impl<'a> PidIndex<'a> {
    fn new(pids: &'a HashSet<String>) -> Self {
        PidIndex { pids, lengths: pids.iter().map(|p| p.len()).filter(|&l| l > 0).collect() }
    }

    fn find_in(&self, s: &str) -> Option<String> {
        if self.pids.contains(s) {
            return Some(s.to_string());
        }
        for &len in &self.lengths {
            if s.len() <= len {
                continue;
            }
            for start in 0..=(s.len() - len) {
                if let Some(w) = s.get(start..start + len) {
                    if self.pids.contains(w) {
                        return Some(w.to_string());
                    }
                }
            }
        }
        None
    }

    fn scan(&self, v: &Value) -> Option<String> {
        match v {
            Value::String(s) => self.find_in(s),
            Value::Array(xs) => xs.iter().find_map(|x| self.scan(x)),
            Value::Object(m) => m.iter().find_map(|(k, x)| self.find_in(k).or_else(|| self.scan(x))),
            _ => None,
        }
    }
}

/// Scans every message for identifier values and every reply for counts in (0, k).
///
/// `thresholds` maps dataset id to its k; datasets not listed use `default_k`.
pub fn audit_log<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    pids: &HashSet<String>,
    thresholds: &BTreeMap<String, u64>,
    default_k: u64,
) -> AuditReport {
    let index = PidIndex::new(pids);
    let mut report = AuditReport::default();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.messages += 1;
        let line_no = i + 1;
        let raw: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                report.violations.push(Violation {
                    line: line_no,
                    job_id: String::new(),
                    gateway_id: String::new(),
                    round: 0,
                    finding: Finding::Unparseable { error: e.to_string() },
                });
                continue;
            }
        };
        let field = |k: &str| raw.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let (job_id, gateway_id) = (field("job_id"), field("gateway_id"));
        let round = raw.get("round").and_then(Value::as_u64).unwrap_or(0) as u32;
        let mut push = |finding| {
            report.violations.push(Violation {
                line: line_no,
                job_id: job_id.clone(),
                gateway_id: gateway_id.clone(),
                round,
                finding,
            })
        };
        if let Some(value) = index.scan(&raw) {
            push(Finding::PidValue { value });
        }
        match serde_json::from_value::<Envelope>(raw.clone()) {
            Ok(env) => {
                if let Message::Response { dataset_id, aggregate } = &env.payload {
                    let k = thresholds.get(dataset_id).copied().unwrap_or(default_k);
                    if let Some((statistic, count)) = aggregate.first_count_below(k) {
                        push(Finding::CountBelowThreshold { statistic, count, k });
                    }
                }
            }
            Err(e) => push(Finding::Unparseable { error: e.to_string() }),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::message::{AggregatePayload, PayloadBody, Step};
    use crate::runtime::OpKind;
    use crate::stats::MomentAggregate;

    fn reply(n: u64) -> String {
        let mut m = MomentAggregate::from_values("EDSS", [1.0]);
        m.n = n;
        let env = Envelope {
            job_id: "job-0001".into(),
            round: 0,
            gateway_id: "gw-1".into(),
            op_kind: OpKind::Tableone,
            payload: Message::Response {
                dataset_id: "site-1".into(),
                aggregate: AggregatePayload::new(OpKind::Tableone, 0, PayloadBody::Moments(vec![m])),
            },
        };
        String::from_utf8(env.to_bytes()).unwrap()
    }

    #[test]
    fn clean_log_has_no_violations() {
        let pids: HashSet<String> = ["SITE-1-00001".to_string()].into();
        let log = [reply(693)];
        let r = audit_log(log.iter().map(String::as_str), &pids, &BTreeMap::new(), 5);
        assert!(r.is_clean(), "{:?}", r.violations);
        assert_eq!(r.messages, 1);
    }

    #[test]
    fn detects_small_counts_and_pids() {
        let pids: HashSet<String> = ["SITE-1-00001".to_string()].into();
        let small = reply(3);
        let r = audit_log([small.as_str()], &pids, &BTreeMap::new(), 5);
        assert!(matches!(r.violations[0].finding, Finding::CountBelowThreshold { count: 3, k: 5, .. }));

        let req = Envelope {
            job_id: "job-0002".into(),
            round: 0,
            gateway_id: "gw-1".into(),
            op_kind: OpKind::Correlation,
            payload: Message::Request {
                dataset_id: "site-1".into(),
                step: Step::CrossProducts { columns: vec!["x SITE-1-00001".into()] },
            },
        };
        let line = String::from_utf8(req.to_bytes()).unwrap();
        let r = audit_log([line.as_str()], &pids, &BTreeMap::new(), 5);
        assert_eq!(r.violations[0].finding, Finding::PidValue { value: "SITE-1-00001".into() });

        let r = audit_log(["{not json"], &pids, &BTreeMap::new(), 5);
        assert!(matches!(r.violations[0].finding, Finding::Unparseable { .. }));
    }
}
