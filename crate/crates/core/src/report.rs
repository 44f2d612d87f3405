//! Phase-timed, machine-readable run reports.

use std::time::Instant;

/// Wall-clock spans per named phase, measured with a monotonic clock.
#[derive(Debug, Default)]
pub struct PhaseTimer {
    spans: Vec<(String, f64)>,
    current: Option<(String, Instant)>,
}

impl PhaseTimer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Closes the current phase and opens a new one.
    pub fn enter(&mut self, name: &str) {
        self.close();
        self.current = Some((name.to_string(), Instant::now()));
    }

    fn close(&mut self) {
        if let Some((name, started)) = self.current.take() {
            let secs = started.elapsed().as_secs_f64();
            // merge repeated phases (retries re-enter the same names)
            if let Some(span) = self.spans.iter_mut().find(|(n, _)| *n == name) {
                span.1 += secs;
            } else {
                self.spans.push((name, secs));
            }
        }
    }

    pub fn finish(mut self) -> Vec<(String, f64)> {
        self.close();
        self.spans
    }
}

/// Outcome of one protocol run: phase timings, result fields, and a
/// digest of the ordered message transcript.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub protocol: String,
    pub phases: Vec<(String, f64)>,
    pub fields: Vec<(String, String)>,
    pub transcript_sha256: String,
}

impl RunReport {
    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Percentage of the total spent in each phase. Sums to 100 up to
    /// rounding when any time was recorded.
    pub fn phase_fractions(&self) -> Vec<(String, f64)> {
        let total: f64 = self.phases.iter().map(|(_, s)| s).sum();
        if total <= 0.0 {
            return Vec::new();
        }
        self.phases
            .iter()
            .map(|(n, s)| (n.clone(), 100.0 * s / total))
            .collect()
    }

    /// One key per line, machine-readable, followed by phase timings.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("protocol: {}\n", self.protocol));
        for (k, v) in &self.fields {
            out.push_str(&format!("{k}: {v}\n"));
        }
        let fractions = self.phase_fractions();
        for ((name, secs), (_, frac)) in self.phases.iter().zip(&fractions) {
            out.push_str(&format!("phase_{name}_s: {secs:.6}\n"));
            out.push_str(&format!("phase_{name}_pct: {frac:.1}\n"));
        }
        if !self.transcript_sha256.is_empty() {
            out.push_str(&format!("transcript_sha256: {}\n", self.transcript_sha256));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_sum_to_one_hundred() {
        let mut report = RunReport {
            protocol: "x".into(),
            phases: vec![
                ("a".into(), 0.5),
                ("b".into(), 0.25),
                ("c".into(), 0.25),
            ],
            ..Default::default()
        };
        report.put("k", "v");
        let total: f64 = report.phase_fractions().iter().map(|(_, f)| f).sum();
        assert!((total - 100.0).abs() < 1e-9);
        assert!(report.to_text().contains("phase_a_pct: 50.0"));
        assert_eq!(report.get("k"), Some("v"));
    }

    #[test]
    fn timer_merges_reentered_phases() {
        let mut t = PhaseTimer::new();
        t.enter("a");
        t.enter("b");
        t.enter("a");
        let spans = t.finish();
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].0, "a");
    }
}
