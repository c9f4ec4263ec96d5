//! Measured-estimate reports: named entries keyed to statement anchors,
//! serialized as JSON and CSV with a deterministic row order.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStatus {
    Met,
    NotMet,
    NotApplicable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateEntry {
    /// Anchor of the statement being measured; entries without one are
    /// refused by the constructor.
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub tolerance_used: f64,
    pub pass: bool,
    pub gate: GateStatus,
}

impl EstimateEntry {
    pub fn new(
        anchor: &str,
        lhs: f64,
        rhs: f64,
        ratio: f64,
        tolerance_used: f64,
        pass: bool,
        gate: GateStatus,
    ) -> Self {
        assert!(!anchor.is_empty(), "report entries must carry an anchor");
        EstimateEntry { anchor: anchor.to_string(), lhs, rhs, ratio, tolerance_used, pass, gate }
    }

    /// A measured-constant entry: pass means finite.
    pub fn measured(anchor: &str, lhs: f64, rhs: f64, gate: GateStatus) -> Self {
        let ratio = if rhs != 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
        Self::new(anchor, lhs, rhs, ratio, f64::INFINITY, ratio.is_finite(), gate)
    }
}

/// Provenance of the solved instance a report refers to.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub m: usize,
    pub h: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EstimateReport {
    pub provenance: Provenance,
    pub entries: Vec<EstimateEntry>,
}

impl EstimateReport {
    pub fn new(m: usize, h: f64, energy: f64) -> Self {
        EstimateReport { provenance: Provenance { m, h, energy }, entries: Vec::new() }
    }

    pub fn push(&mut self, e: EstimateEntry) {
        self.entries.push(e);
    }

    pub fn get(&self, anchor: &str) -> Option<&EstimateEntry> {
        self.entries.iter().find(|e| e.anchor == anchor)
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass || e.gate == GateStatus::NotMet)
    }
}

/// Merge reports into CSV rows sorted by (anchor, m, h): one row per entry.
pub fn to_csv(reports: &[EstimateReport]) -> String {
    let mut rows: Vec<(String, usize, String, String)> = Vec::new();
    for r in reports {
        for e in &r.entries {
            let line = format!(
                "{},{},{},{},{:.12e},{:.12e},{:.12e},{:.6e},{},{}",
                e.anchor,
                r.provenance.m,
                fmt_f(r.provenance.h),
                fmt_f(r.provenance.energy),
                e.lhs,
                e.rhs,
                e.ratio,
                e.tolerance_used,
                e.pass,
                match e.gate {
                    GateStatus::Met => "met",
                    GateStatus::NotMet => "not_met",
                    GateStatus::NotApplicable => "n/a",
                }
            );
            rows.push((e.anchor.clone(), r.provenance.m, fmt_f(r.provenance.h), line));
        }
    }
    rows.sort();
    let mut out = String::from("anchor,m,h,energy,lhs,rhs,ratio,tolerance,pass,gate\n");
    for (_, _, _, line) in rows {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

/// Stability of one measured constant across a sweep: max/min over the
/// finite, gate-met values grouped by anchor.
pub fn stability_ratios(reports: &[EstimateReport]) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for e in &r.entries {
            if e.ratio.is_finite() && e.ratio > 0.0 {
                groups.entry(e.anchor.clone()).or_default().push(e.ratio);
            }
        }
    }
    groups
        .into_iter()
        .map(|(k, v)| {
            let max = v.iter().cloned().fold(f64::MIN, f64::max);
            let min = v.iter().cloned().fold(f64::MAX, f64::min);
            (k, max / min)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_sorted_and_complete() {
        let mut r1 = EstimateReport::new(3, 0.1, 0.2);
        r1.push(EstimateEntry::measured("b_anchor", 1.0, 2.0, GateStatus::Met));
        r1.push(EstimateEntry::measured("a_anchor", 1.0, 4.0, GateStatus::Met));
        let mut r2 = EstimateReport::new(8, 0.1, 0.2);
        r2.push(EstimateEntry::measured("a_anchor", 2.0, 4.0, GateStatus::Met));
        let csv = to_csv(&[r1, r2]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("a_anchor,3"));
        assert!(lines[2].starts_with("a_anchor,8"));
        assert!(lines[3].starts_with("b_anchor,3"));
    }

    #[test]
    #[should_panic]
    fn unanchored_entry_refused() {
        let _ = EstimateEntry::measured("", 1.0, 1.0, GateStatus::Met);
    }
}
