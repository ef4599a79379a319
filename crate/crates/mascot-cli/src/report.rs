//! Per-run reporting: what `bench` prints and writes next to each trace.

use std::collections::BTreeMap;

use mascot_core::trace::ClassificationReport;
use mascot_core::transport::RunStats;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: String,
    pub strategy: String,
    pub seed: u64,
    pub run: u32,
    pub quiesced: bool,
    pub wall_ms: f64,
    /// Delivered message counts keyed `sender->recipient`.
    pub messages: BTreeMap<String, u64>,
    pub stats: RunStats,
    pub violations: usize,
    pub classification: Option<ClassificationReport>,
}

impl RunReport {
    pub fn summary_line(&self) -> String {
        let class = match &self.classification {
            Some(report) => report.observable_class.to_string(),
            None => "n/a (empty trace)".to_string(),
        };
        format!(
            "[{} @ {} seed={} run {}] {} in {:.1} ms: delivered={} errors={} dropped={} violations={} class={}",
            self.spec,
            self.strategy,
            self.seed,
            self.run,
            if self.quiesced { "quiesced" } else { "TIMED OUT" },
            self.wall_ms,
            self.stats.messages_delivered,
            self.stats.delivery_errors,
            self.stats.dropped_events,
            self.violations,
            class,
        )
    }

    pub fn compatible_line(&self) -> Option<String> {
        let report = self.classification.as_ref()?;
        let list: Vec<String> = report
            .compatible_strategies
            .iter()
            .map(|c| c.to_string())
            .collect();
        Some(format!("  compatible: {}", list.join(", ")))
    }
}
