use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chart::render_chart;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub id: String,
    pub n: usize,
    pub top1_error: f64,
    pub top5_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub arch: String,
    pub cutmix: bool,
    pub seed: u64,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelInfo,
    pub chance_level: f64,
    pub conditions: Vec<ConditionResult>,
}

impl EvalReport {
    pub fn new(model: ModelInfo, conditions: Vec<ConditionResult>) -> Result<Self> {
        let report = Self {
            chance_level: 1.0 - 1.0 / model.num_classes as f64,
            model,
            conditions,
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conditions.is_empty() {
            return Err(Error::arg("report has no conditions"));
        }
        let mut seen = BTreeSet::new();
        for c in &self.conditions {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::arg(format!("duplicate condition {:?}", c.id)));
            }
            if c.n == 0
                || !(0.0..=1.0).contains(&c.top1_error)
                || !(0.0..=c.top1_error).contains(&c.top5_error)
            {
                return Err(Error::arg(format!(
                    "inconsistent result for condition {:?}",
                    c.id
                )));
            }
        }
        Ok(())
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.id == id)
    }

    /// Pretty JSON with keys in sorted order and a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        report.validate()?;
        Ok(report)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["condition", "n", "top1_error", "top5_error"])
            .map_err(csv_err)?;
        for c in &self.conditions {
            w.write_record([
                c.id.clone(),
                c.n.to_string(),
                c.top1_error.to_string(),
                c.top5_error.to_string(),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::arg(e.to_string()))?)
            .map_err(|e| Error::arg(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::arg(format!("csv: {e}"))
}

fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // Round-tripping through `Value` sorts every object's keys.
    let value = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `report.json`, `report.csv` and `chart.svg` into `out_dir`.
pub fn write_report(report: &EvalReport, out_dir: &Path) -> Result<()> {
    report.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("report.json"), &report.to_json()?)?;
    write(&out_dir.join("report.csv"), &report.to_csv()?)?;
    write(&out_dir.join("chart.svg"), &render_chart(report))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvalReport::from_json(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub condition: String,
    pub top1_error: f64,
    /// `error(condition) / error(clean)`; absent without a nonzero clean error.
    pub degradation_ratio: Option<f64>,
    /// `error(maskN) - error(maskN+inpaint)` on the occluded row.
    pub inpaint_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub models: Vec<ModelInfo>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, model: &str, condition: &str) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.condition == condition)
    }

    pub fn to_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn to_csv(&self) -> Result<String> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "condition",
            "top1_error",
            "degradation_ratio",
            "inpaint_delta",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.condition.clone(),
                r.top1_error.to_string(),
                opt(r.degradation_ratio),
                opt(r.inpaint_delta),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::arg(e.to_string()))?)
            .map_err(|e| Error::arg(e.to_string()))
    }
}

/// Degradation ratios and inpainting deltas for reports sharing their
/// condition ids.
pub fn compare_models(reports: &[EvalReport]) -> Result<Comparison> {
    let first = reports
        .first()
        .ok_or_else(|| Error::arg("no reports to compare"))?;
    let ids: BTreeSet<&str> = first.conditions.iter().map(|c| c.id.as_str()).collect();
    for r in &reports[1..] {
        let other: BTreeSet<&str> = r.conditions.iter().map(|c| c.id.as_str()).collect();
        if other != ids {
            let missing: Vec<_> = ids.difference(&other).collect();
            let extra: Vec<_> = other.difference(&ids).collect();
            return Err(Error::arg(format!(
                "model {:?} condition ids differ: missing {missing:?}, extra {extra:?}",
                r.model.id
            )));
        }
    }
    let mut rows = Vec::new();
    for r in reports {
        let errors: BTreeMap<&str, f64> = r
            .conditions
            .iter()
            .map(|c| (c.id.as_str(), c.top1_error))
            .collect();
        let clean = errors.get("clean").copied().filter(|&e| e > 0.0);
        for c in &r.conditions {
            let inpaint = errors.get(format!("{}+inpaint", c.id).as_str());
            rows.push(ComparisonRow {
                model: r.model.id.clone(),
                condition: c.id.clone(),
                top1_error: c.top1_error,
                degradation_ratio: clean.map(|e| c.top1_error / e),
                inpaint_delta: inpaint.map(|&e| c.top1_error - e),
            });
        }
    }
    Ok(Comparison {
        models: reports.iter().map(|r| r.model.clone()).collect(),
        rows,
    })
}

/// Write `comparison.json` and `comparison.csv` into `out_dir`.
pub fn write_comparison(cmp: &Comparison, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("comparison.json"), &cmp.to_json()?)?;
    write(&out_dir.join("comparison.csv"), &cmp.to_csv()?)
}
