//! The full matting pipeline as a dataset predictor.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::perception::{segment_checked, Prompt};
use crate::pipeline::{run_from_mask, Backends, PipelineConfig};
use crate::raster::{AlphaMatte, BinaryMask};
use crate::scalar::Scalar;
use crate::trimap::{BoundingBox, TransparencyMode};

use super::dataset::{AlphaPredictor, Sample};

/// Where the instance mask for an evaluation image comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceSource {
    /// The box enclosing the ground-truth support, sent to the configured segmenter.
    #[default]
    GtBox,
    /// The ground-truth support itself (alpha > 0), bypassing the segmenter.
    GtMask,
    /// `masks/<stem>.png` from the dataset.
    PrecomputedMasks,
}

/// Which transparency mode each image is run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransparencyPolicy {
    /// Same mode for every image.
    Fixed(TransparencyMode),
    /// What a user would pick: transparent where the label says so, opaque
    /// where it says not; unlabelled images are treated as transparent.
    FromLabels,
}

impl TransparencyPolicy {
    pub fn mode_for(&self, label: Option<bool>) -> TransparencyMode {
        match self {
            TransparencyPolicy::Fixed(m) => *m,
            TransparencyPolicy::FromLabels => match label {
                Some(false) => TransparencyMode::UserOpaque,
                Some(true) | None => TransparencyMode::UserTransparent,
            },
        }
    }
}

/// Ground-truth support as a mask.
pub fn gt_support<T: Scalar>(gt: &AlphaMatte<T>) -> BinaryMask {
    BinaryMask::new(
        gt.width(),
        gt.height(),
        gt.values().iter().map(|&v| v > T::zero()).collect(),
    )
    .expect("dimensions preserved")
}

pub struct PipelinePredictor<T: Scalar> {
    pub config: PipelineConfig,
    pub backends: Backends<T>,
    pub source: GuidanceSource,
    pub policy: TransparencyPolicy,
}

impl<T: Scalar> PipelinePredictor<T> {
    fn mask_for(&self, sample: &Sample<T>) -> Result<BinaryMask, Error> {
        match self.source {
            GuidanceSource::GtMask => Ok(gt_support(&sample.gt)),
            GuidanceSource::GtBox => {
                let support = gt_support(&sample.gt);
                let b: BoundingBox = BoundingBox::enclosing(&support)
                    .ok_or_else(|| Error::invalid("ground-truth alpha is empty; no box to derive"))?;
                segment_checked(&sample.image, &Prompt::from_box(b), self.backends.segmenter.as_ref())
            }
            GuidanceSource::PrecomputedMasks => sample
                .mask
                .clone()
                .ok_or_else(|| Error::invalid(format!("no precomputed mask for `{}`", sample.stem))),
        }
    }
}

impl<T: Scalar> AlphaPredictor<T> for PipelinePredictor<T> {
    fn predict(&self, sample: &Sample<T>) -> Result<AlphaMatte<T>, Box<dyn std::error::Error + Send + Sync>> {
        let mask = self.mask_for(sample)?;
        let mode = self.policy.mode_for(sample.transparent);
        Ok(run_from_mask(&sample.image, mask, mode, &self.config, &self.backends)?.alpha)
    }
}
