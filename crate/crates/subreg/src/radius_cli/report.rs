//! Run reports and their three renderings: full JSON, per-scale CSV, and a
//! console summary.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mappings::{GraphPoint, KnownValue};
use crate::moduli::{ConsistencyReport, EckartYoungReport, Estimate, RelationReport};
use crate::perturb::{BuilderReport, Perturbation, WitnessKind};
use crate::variational::SemismoothReport;
use crate::xreal;

use super::config::ExperimentConfig;

/// One verified inequality or comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub label: String,
    pub pass: bool,
    /// Positive when the inequality holds with room to spare.
    #[serde(with = "xreal")]
    pub slack: f64,
    pub detail: String,
}

impl CheckLine {
    pub fn new(label: impl Into<String>, pass: bool, slack: f64, detail: impl Into<String>) -> Self {
        Self { label: label.into(), pass, slack, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        format!("{verdict} {} slack={} {}", self.label, xreal::fmt(self.slack), self.detail).trim_end().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum BuildOutcome {
    Built { bumps: usize, report: Box<BuilderReport> },
    Refused { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuilderEntry {
    pub kind: WitnessKind,
    pub gamma: f64,
    pub outcome: BuildOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// A verification check failed.
    Fail,
    /// Estimates contradict an identity that must hold on shared samples.
    Alarm,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Fail => 3,
            RunStatus::Alarm => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub map: Option<String>,
    pub base: Option<GraphPoint>,
    pub estimates: Vec<Estimate>,
    pub known_values: Vec<KnownValue>,
    pub relations: Option<RelationReport>,
    pub consistency: Option<ConsistencyReport>,
    pub semismooth: Option<SemismoothReport>,
    pub builders: Vec<BuilderEntry>,
    pub perturbation: Option<Perturbation>,
    pub eckart_young: Vec<EckartYoungReport>,
    pub checks: Vec<CheckLine>,
    pub status: RunStatus,
    /// Wall-clock per stage; the only field that varies between reruns.
    pub stages: Vec<StageTiming>,
}

impl RunReport {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            config_hash: config.hash(),
            config,
            map: None,
            base: None,
            estimates: Vec::new(),
            known_values: Vec::new(),
            relations: None,
            consistency: None,
            semismooth: None,
            builders: Vec::new(),
            perturbation: None,
            eckart_young: Vec::new(),
            checks: Vec::new(),
            status: RunStatus::Ok,
            stages: Vec::new(),
        }
    }

    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    /// Sets the status from the checks unless an alarm was raised.
    pub fn settle(&mut self) {
        if self.status != RunStatus::Alarm && self.checks.iter().any(|c| !c.pass) {
            self.status = RunStatus::Fail;
        }
    }

    /// Hex sha256 of the report with timings removed; equal across reruns.
    pub fn fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.stages.clear();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&copy).expect("report serializes"));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Flat per-scale table: one row per (quantity, scale).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["quantity", "level", "radius", "value"]).expect("in-memory write");
        let mut rows = |name: &str, pairs: &[(f64, f64)]| {
            for (j, (r, v)) in pairs.iter().enumerate() {
                w.write_record([name.to_string(), j.to_string(), xreal::fmt(*r), xreal::fmt(*v)])
                    .expect("in-memory write");
            }
        };
        for e in &self.estimates {
            rows(&e.name, &e.per_scale);
        }
        if let Some(s) = &self.semismooth {
            rows("semismooth_star", &s.scales);
        }
        for b in &self.builders {
            if let BuildOutcome::Built { report, .. } = &b.outcome {
                let name = format!("destabilization_{:?}_gamma_{}", b.kind, b.gamma).to_lowercase();
                rows(&name, &report.destabilization);
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn summary(&self) -> String {
        let mut out = vec![format!(
            "task {:?} map {} norm {:?} seed {} hash {}",
            self.config.task,
            self.map.as_deref().unwrap_or("-"),
            self.config.norm,
            self.config.seed,
            &self.config_hash[..12]
        )];
        for e in &self.estimates {
            let flags = if e.flags.is_empty() { String::new() } else { format!(" [{}]", e.flags.join(",")) };
            out.push(format!("  {:<8} = {}  ({:?}){flags}", e.name, xreal::fmt(e.reported), e.trend));
        }
        if let Some(r) = &self.relations {
            out.push(format!("  relations hold: {}", r.all_hold));
        }
        if let Some(s) = &self.semismooth {
            out.push(format!("  semismooth*: {:?}", s.verdict));
        }
        for b in &self.builders {
            match &b.outcome {
                BuildOutcome::Built { bumps, report } => out.push(format!(
                    "  build {:?} gamma={} bumps={bumps} {}={} all_ok={}",
                    b.kind,
                    b.gamma,
                    report.modulus_name,
                    xreal::fmt(report.modulus_estimate),
                    report.all_ok
                )),
                BuildOutcome::Refused { error } => {
                    out.push(format!("  build {:?} gamma={} refused: {error}", b.kind, b.gamma))
                }
            }
        }
        if !self.eckart_young.is_empty() {
            let worst = self.eckart_young.iter().map(|r| r.rg_relerr).fold(0.0, f64::max);
            out.push(format!("  eckart-young matrices={} worst rg relerr={worst:.3e}", self.eckart_young.len()));
        }
        out.extend(self.checks.iter().map(CheckLine::line));
        out.push(format!("status {:?}", self.status));
        out.join("\n")
    }
}
