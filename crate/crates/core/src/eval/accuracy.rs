//! Transparency-detector accuracy against per-image labels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::perception::Detector;
use crate::pipeline::{predict_transparency, PipelineConfig};
use crate::scalar::Scalar;

use super::dataset::DatasetLayout;

/// Fraction of images whose prediction equals the label. Both maps must cover
/// exactly the same, nonempty set of images.
pub fn detector_accuracy(predictions: &BTreeMap<String, bool>, labels: &BTreeMap<String, bool>) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    if let Some(k) = predictions.keys().find(|k| !labels.contains_key(*k)) {
        return Err(Error::invalid(format!("prediction for `{k}` has no label")));
    }
    if let Some(k) = labels.keys().find(|k| !predictions.contains_key(*k)) {
        return Err(Error::invalid(format!("label for `{k}` has no prediction")));
    }
    let correct = predictions.iter().filter(|(k, p)| labels[*k] == **p).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Runs the detector over every labelled image of a dataset. Precomputed masks,
/// when present, feed the overlap filter.
pub fn predict_dataset_transparency<T: Scalar>(
    layout: &DatasetLayout,
    config: &PipelineConfig,
    detector: &dyn Detector<T>,
) -> Result<BTreeMap<String, bool>> {
    let mut out = BTreeMap::new();
    for stem in layout.stems() {
        let sample = layout.load_sample::<T>(stem)?;
        let flagged = predict_transparency(&sample.image, sample.mask.as_ref(), config, detector)?;
        out.insert(stem.clone(), flagged);
    }
    Ok(out)
}
