use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LatencyRecord, Module};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSummary {
    pub module: Module,
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
    /// True when any sample of this module ran online.
    pub online: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub modules: Vec<ModuleSummary>,
    /// Sum of mean latencies over online modules.
    pub online_total_ms: f64,
}

impl LatencyReport {
    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn module(&self, m: Module) -> Option<&ModuleSummary> {
        self.modules.iter().find(|s| s.module == m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("module,count,mean_ms,median_ms,max_ms,online\n");
        for s in &self.modules {
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{:.3},{}\n",
                s.module.as_str(),
                s.count,
                s.mean_ms,
                s.median_ms,
                s.max_ms,
                s.online
            ));
        }
        out.push_str(&format!("online_total,,{:.3},,,\n", self.online_total_ms));
        out
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Mean, median and max per module, ordered LLM, MP, VLM, RL.
pub fn latency_report(records: &[LatencyRecord]) -> LatencyReport {
    let mut by: BTreeMap<Module, (Vec<f64>, bool)> = BTreeMap::new();
    for r in records {
        let e = by.entry(r.module).or_default();
        e.0.push(r.ms);
        e.1 |= r.online;
    }
    let mut report = LatencyReport::default();
    for (module, (mut ms, online)) in by {
        ms.sort_by(f64::total_cmp);
        let mean = ms.iter().sum::<f64>() / ms.len() as f64;
        if online {
            report.online_total_ms += mean;
        }
        report.modules.push(ModuleSummary {
            module,
            count: ms.len(),
            mean_ms: mean,
            median_ms: median(&ms),
            max_ms: *ms.last().expect("non-empty"),
            online,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(module: Module, ms: f64, online: bool) -> LatencyRecord {
        LatencyRecord { module, ms, online }
    }

    #[test]
    fn empty_records_give_empty_report() {
        let r = latency_report(&[]);
        assert!(r.is_empty());
        assert_eq!(r.online_total_ms, 0.0);
    }

    #[test]
    fn only_online_modules_count() {
        let r = latency_report(&[
            rec(Module::Llm, 3024.0, false),
            rec(Module::Mp, 5714.0, false),
            rec(Module::Vlm, 3441.0, false),
            rec(Module::Rl, 15.0, true),
        ]);
        assert_eq!(r.online_total_ms, 15.0);
        assert_eq!(r.modules.len(), 4);
        assert!(r.to_csv().starts_with("module,count"));
    }

    #[test]
    fn median_of_even_count() {
        let r = latency_report(&[rec(Module::Rl, 1.0, true), rec(Module::Rl, 3.0, true), rec(Module::Rl, 10.0, true), rec(Module::Rl, 2.0, true)]);
        let s = r.module(Module::Rl).unwrap();
        assert_eq!(s.median_ms, 2.5);
        assert_eq!(s.max_ms, 10.0);
        assert_eq!(s.mean_ms, 4.0);
    }
}
