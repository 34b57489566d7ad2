//! Transparency-correction ablation: the same masks run with no correction,
//! detector-driven correction, and the user's one-click correction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::pipeline::{Backends, PipelineConfig};
use crate::scalar::Scalar;
use crate::trimap::TransparencyMode;

use super::dataset::{evaluate_dataset, DatasetLayout, EvalReport};
use super::predictor::{GuidanceSource, PipelinePredictor, TransparencyPolicy};

/// Row names, in report order.
pub const BASELINE: &str = "baseline";
pub const WITH_DETECTOR: &str = "baseline+ovd";
pub const WITH_USER: &str = "baseline+user";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub experiment: String,
    pub count: usize,
    pub sad: Option<f64>,
    pub mse: Option<f64>,
}

/// Per-image SAD under each experiment (absent when that run failed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationImage {
    pub stem: String,
    pub baseline: Option<f64>,
    pub with_detector: Option<f64>,
    pub with_user: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub images: Vec<AblationImage>,
    pub excluded: usize,
}

impl AblationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    pub fn row(&self, experiment: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.experiment == experiment)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14}  {:>6}  {:>10}  {:>10}", "experiment", "n", "SAD", "MSE");
        for r in &self.rows {
            let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<14}  {:>6}  {:>10}  {:>10}",
                r.experiment,
                r.count,
                f(r.sad),
                f(r.mse)
            );
        }
        let _ = writeln!(s, "excluded: {}", self.excluded);
        s
    }
}

/// Runs the three experiments with a shared guidance source.
pub fn run_ablation<T: Scalar>(
    layout: &DatasetLayout,
    config: &PipelineConfig,
    backends: &Backends<T>,
    source: GuidanceSource,
) -> AblationReport {
    let run = |policy| {
        let predictor = PipelinePredictor {
            config: config.clone(),
            backends: backends.clone(),
            source,
            policy,
        };
        evaluate_dataset(layout, &predictor)
    };
    let reports: [(&str, EvalReport); 3] = [
        (BASELINE, run(TransparencyPolicy::Fixed(TransparencyMode::UserOpaque))),
        (WITH_DETECTOR, run(TransparencyPolicy::Fixed(TransparencyMode::Auto))),
        (WITH_USER, run(TransparencyPolicy::FromLabels)),
    ];
    let rows = reports
        .iter()
        .map(|(name, rep)| {
            let all = rep.aggregate("all").expect("every report has an `all` row");
            AblationRow {
                experiment: name.to_string(),
                count: all.count,
                sad: all.sad,
                mse: all.mse,
            }
        })
        .collect();
    let sad_of = |rep: &EvalReport, i: usize| rep.images[i].metrics.map(|m| m.sad);
    let images = (0..layout.stems().len())
        .map(|i| AblationImage {
            stem: layout.stems()[i].clone(),
            baseline: sad_of(&reports[0].1, i),
            with_detector: sad_of(&reports[1].1, i),
            with_user: sad_of(&reports[2].1, i),
        })
        .collect::<Vec<_>>();
    let excluded = images
        .iter()
        .filter(|r| r.baseline.is_none() || r.with_detector.is_none() || r.with_user.is_none())
        .count();
    AblationReport { rows, images, excluded }
}
