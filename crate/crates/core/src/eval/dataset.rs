//! On-disk evaluation datasets and the per-image evaluation loop.
//!
//! Layout under a root directory:
//!
//! ```text
//! images/<stem>.png     RGB input
//! alphas/<stem>.png     ground-truth alpha (8-bit gray)
//! trimaps/<stem>.png    optional evaluation trimap (metrics over its unknown band)
//! masks/<stem>.png      optional precomputed instance masks
//! labels.csv            optional `stem,transparent` header + one row per image
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{
    decode_alpha, decode_image, decode_mask, decode_trimap, encode_alpha, encode_image, encode_mask, encode_trimap,
};
use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, AlphaMatte, BinaryMask, RasterImage, Trimap};
use crate::scalar::Scalar;

use super::metrics::{evaluate, EvalRegion, MetricsReport};

pub const IMAGES_DIR: &str = "images";
pub const ALPHAS_DIR: &str = "alphas";
pub const TRIMAPS_DIR: &str = "trimaps";
pub const MASKS_DIR: &str = "masks";
pub const LABELS_FILE: &str = "labels.csv";

/// An evaluation dataset rooted at a directory.
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    root: PathBuf,
    stems: Vec<String>,
    has_trimaps: bool,
    labels: Option<BTreeMap<String, bool>>,
}

impl DatasetLayout {
    /// Scans `root`. Stems are the `.png` files under `images/`, sorted.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let images = root.join(IMAGES_DIR);
        if !images.is_dir() {
            return Err(Error::invalid(format!(
                "{} has no `{IMAGES_DIR}` directory",
                root.display()
            )));
        }
        let mut stems = Vec::new();
        for entry in fs::read_dir(&images)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    stems.push(stem.to_string());
                }
            }
        }
        stems.sort();
        let labels_path = root.join(LABELS_FILE);
        let labels = if labels_path.is_file() {
            Some(parse_labels(&fs::read_to_string(&labels_path)?)?)
        } else {
            None
        };
        Ok(Self {
            has_trimaps: root.join(TRIMAPS_DIR).is_dir(),
            root,
            stems,
            labels,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }

    /// Whether metrics use evaluation trimaps (otherwise the whole image).
    pub fn has_trimaps(&self) -> bool {
        self.has_trimaps
    }

    pub fn labels(&self) -> Option<&BTreeMap<String, bool>> {
        self.labels.as_ref()
    }

    pub fn label(&self, stem: &str) -> Option<bool> {
        self.labels.as_ref().and_then(|l| l.get(stem).copied())
    }

    fn file(&self, dir: &str, stem: &str) -> PathBuf {
        self.root.join(dir).join(format!("{stem}.png"))
    }

    /// Loads one sample; a missing or mismatched ground truth is an error.
    pub fn load_sample<T: Scalar>(&self, stem: &str) -> Result<Sample<T>> {
        let image: RasterImage<T> = decode_image(&read(&self.file(IMAGES_DIR, stem))?)?;
        let gt_path = self.file(ALPHAS_DIR, stem);
        if !gt_path.is_file() {
            return Err(Error::invalid(format!(
                "missing ground-truth alpha {}",
                gt_path.display()
            )));
        }
        let gt: AlphaMatte<T> = decode_alpha(&read(&gt_path)?)?;
        ensure_same_dims(image.dims(), gt.dims(), "image/ground-truth alpha")?;
        let eval_trimap = if self.has_trimaps {
            let t = decode_trimap(&read(&self.file(TRIMAPS_DIR, stem))?)?;
            ensure_same_dims(image.dims(), t.dims(), "image/evaluation trimap")?;
            Some(t)
        } else {
            None
        };
        let mask_path = self.file(MASKS_DIR, stem);
        let mask = if mask_path.is_file() {
            let m = decode_mask(&read(&mask_path)?)?;
            ensure_same_dims(image.dims(), m.dims(), "image/precomputed mask")?;
            Some(m)
        } else {
            None
        };
        Ok(Sample {
            stem: stem.to_string(),
            image,
            gt,
            eval_trimap,
            mask,
            transparent: self.label(stem),
        })
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

/// Everything the evaluation loop knows about one image.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub stem: String,
    pub image: RasterImage<T>,
    pub gt: AlphaMatte<T>,
    pub eval_trimap: Option<Trimap>,
    pub mask: Option<BinaryMask>,
    pub transparent: Option<bool>,
}

/// Writes one sample in dataset layout (directories are created as needed).
pub fn write_sample<T: Scalar>(
    root: &Path,
    stem: &str,
    image: &RasterImage<T>,
    gt: &AlphaMatte<T>,
    eval_trimap: Option<&Trimap>,
    mask: Option<&BinaryMask>,
) -> Result<()> {
    let put = |dir: &str, bytes: Vec<u8>| -> Result<()> {
        let d = root.join(dir);
        fs::create_dir_all(&d)?;
        fs::write(d.join(format!("{stem}.png")), bytes)?;
        Ok(())
    };
    put(IMAGES_DIR, encode_image(image))?;
    put(ALPHAS_DIR, encode_alpha(gt))?;
    if let Some(t) = eval_trimap {
        put(TRIMAPS_DIR, encode_trimap(t))?;
    }
    if let Some(m) = mask {
        put(MASKS_DIR, encode_mask(m))?;
    }
    Ok(())
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Parses a `stem,transparent` CSV (header required; flags 0/1/true/false/yes/no).
pub fn parse_labels(text: &str) -> Result<BTreeMap<String, bool>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("labels header: {e}")))?;
    if headers.iter().collect::<Vec<_>>() != ["stem", "transparent"] {
        return Err(Error::invalid(format!(
            "labels header must be `stem,transparent`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::invalid(format!("labels row {}: {e}", i + 1)))?;
        let stem = row[0].to_string();
        let flag = parse_flag(&row[1])
            .ok_or_else(|| Error::invalid(format!("labels row {}: bad flag `{}`", i + 1, &row[1])))?;
        if out.insert(stem.clone(), flag).is_some() {
            return Err(Error::invalid(format!("labels row {}: duplicate stem `{stem}`", i + 1)));
        }
    }
    Ok(out)
}

/// Renders labels in the format [`parse_labels`] reads.
pub fn format_labels(labels: &BTreeMap<String, bool>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["stem", "transparent"]).expect("in-memory write");
    for (stem, &flag) in labels {
        writer
            .write_record([stem.as_str(), if flag { "1" } else { "0" }])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Produces an alpha prediction for a sample.
pub trait AlphaPredictor<T: Scalar> {
    fn predict(
        &self,
        sample: &Sample<T>,
    ) -> std::result::Result<AlphaMatte<T>, Box<dyn std::error::Error + Send + Sync>>;
}

/// Outcome for one image: metrics, or the reason it was excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub stem: String,
    pub transparent: Option<bool>,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

/// Mean metrics over one subset of images. Means are absent for empty subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub split: String,
    pub count: usize,
    pub sad: Option<f64>,
    pub mse: Option<f64>,
    pub grad: Option<f64>,
    pub conn: Option<f64>,
}

impl AggregateRow {
    fn over<'a>(split: &str, reports: impl Iterator<Item = &'a MetricsReport>) -> Self {
        let reports: Vec<&MetricsReport> = reports.collect();
        let n = reports.len();
        let mean = |f: fn(&MetricsReport) -> f64| (n > 0).then(|| reports.iter().map(|r| f(r)).sum::<f64>() / n as f64);
        Self {
            split: split.to_string(),
            count: n,
            sad: mean(|r| r.sad),
            mse: mean(|r| r.mse),
            grad: mean(|r| r.grad),
            conn: mean(|r| r.conn),
        }
    }
}

/// Region convention used by a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionConvention {
    UnknownOfTrimap,
    WholeImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub region: RegionConvention,
    /// Sorted by stem.
    pub images: Vec<ImageResult>,
    /// `all`, then `transparent` and `opaque` when the dataset has labels.
    pub aggregates: Vec<AggregateRow>,
    /// Images left out of every aggregate because they failed.
    pub excluded: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    pub fn aggregate(&self, split: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|r| r.split == split)
    }

    /// Aligned plain-text table: one line per image, then the aggregates.
    pub fn to_table(&self) -> String {
        let width = self.images.iter().map(|r| r.stem.len()).chain([11]).max().unwrap_or(11);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>11}  {:>10}  {:>10}  {:>10}  {:>10}",
            "image", "transparent", "SAD", "MSE", "Grad", "Conn"
        );
        for r in &self.images {
            let flag = r.transparent.map_or("-", |t| if t { "yes" } else { "no" });
            match (&r.metrics, &r.error) {
                (Some(m), _) => {
                    let _ = writeln!(
                        s,
                        "{:<width$}  {:>11}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}",
                        r.stem, flag, m.sad, m.mse, m.grad, m.conn
                    );
                }
                (None, err) => {
                    let _ = writeln!(
                        s,
                        "{:<width$}  {:>11}  error: {}",
                        r.stem,
                        flag,
                        err.as_deref().unwrap_or("unknown")
                    );
                }
            }
        }
        let _ = writeln!(s);
        for a in &self.aggregates {
            let _ = writeln!(
                s,
                "{:<width$}  {:>11}  {:>10}  {:>10}  {:>10}  {:>10}",
                format!("mean[{}]", a.split),
                format!("n={}", a.count),
                fmt_opt(a.sad),
                fmt_opt(a.mse),
                fmt_opt(a.grad),
                fmt_opt(a.conn)
            );
        }
        let _ = writeln!(s, "excluded: {}", self.excluded);
        s
    }
}

/// Scores one prediction against its sample's ground truth.
pub fn score_sample<T: Scalar>(sample: &Sample<T>, pred: &AlphaMatte<T>) -> Result<MetricsReport> {
    let region = match &sample.eval_trimap {
        Some(t) => EvalRegion::UnknownOf(t),
        None => EvalRegion::WholeImage,
    };
    evaluate(pred, &sample.gt, region)
}

/// Runs `predictor` on every image and aggregates unweighted means.
pub fn evaluate_dataset<T: Scalar, P: AlphaPredictor<T> + ?Sized>(layout: &DatasetLayout, predictor: &P) -> EvalReport {
    let images: Vec<ImageResult> = layout
        .stems()
        .iter()
        .map(|stem| {
            let outcome = layout
                .load_sample::<T>(stem)
                .map_err(|e| e.to_string())
                .and_then(|sample| {
                    let pred = predictor.predict(&sample).map_err(|e| e.to_string())?;
                    score_sample(&sample, &pred).map_err(|e| e.to_string())
                });
            let (metrics, error) = match outcome {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e)),
            };
            ImageResult {
                stem: stem.clone(),
                transparent: layout.label(stem),
                metrics,
                error,
            }
        })
        .collect();
    let ok = || {
        images
            .iter()
            .filter_map(|r| r.metrics.as_ref().map(|m| (r.transparent, m)))
    };
    let mut aggregates = vec![AggregateRow::over("all", ok().map(|(_, m)| m))];
    if layout.labels().is_some() {
        aggregates.push(AggregateRow::over(
            "transparent",
            ok().filter(|(t, _)| *t == Some(true)).map(|(_, m)| m),
        ));
        aggregates.push(AggregateRow::over(
            "opaque",
            ok().filter(|(t, _)| *t == Some(false)).map(|(_, m)| m),
        ));
    }
    EvalReport {
        region: if layout.has_trimaps() {
            RegionConvention::UnknownOfTrimap
        } else {
            RegionConvention::WholeImage
        },
        excluded: images.iter().filter(|r| r.metrics.is_none()).count(),
        images,
        aggregates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip_and_validation() {
        let parsed = parse_labels("stem,transparent\na,1\n b , false\nc,yes\n").unwrap();
        assert_eq!(parsed.get("b"), Some(&false));
        assert_eq!(parsed.len(), 3);
        assert_eq!(parse_labels(&format_labels(&parsed)).unwrap(), parsed);
        assert!(parse_labels("name,flag\na,1\n").is_err());
        assert!(parse_labels("stem,transparent\na,maybe\n").is_err());
        assert!(parse_labels("stem,transparent\na,1\na,0\n").is_err());
    }
}
