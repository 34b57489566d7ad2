//! JSON forms of user guidance, shared by the REST API and the CLI.
//!
//! ```json
//! {"kind": "points", "points": [{"x": 10, "y": 12, "label": 1}]}
//! {"kind": "box", "box": [x0, y0, x1, y1]}
//! {"kind": "scribble", "mask_b64": "<PNG>", "polarity": "positive"}
//! {"kind": "text", "caption": "the cat on the left"}
//! ```
//!
//! Point labels follow the sidecar convention (1 positive, 0 negative); a
//! `"polarity"` field may be used instead.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use mattelab_core::codec::{decode_mask, encode_mask};
use mattelab_core::perception::{Guidance, PointPrompt, Polarity};
use mattelab_core::BoundingBox;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointDto {
    Labelled { x: u32, y: u32, label: u8 },
    Polar { x: u32, y: u32, polarity: Polarity },
}

impl PointDto {
    fn to_prompt(&self) -> Result<PointPrompt, ServiceError> {
        match *self {
            PointDto::Labelled { x, y, label } => {
                let polarity = match label {
                    1 => Polarity::Positive,
                    0 => Polarity::Negative,
                    other => {
                        return Err(ServiceError::Validation(format!(
                            "point label must be 0 or 1, got {other}"
                        )))
                    }
                };
                Ok(PointPrompt { x, y, polarity })
            }
            PointDto::Polar { x, y, polarity } => Ok(PointPrompt { x, y, polarity }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuidanceDto {
    Points {
        points: Vec<PointDto>,
    },
    Box {
        #[serde(rename = "box")]
        bbox: BoundingBox,
    },
    Scribble {
        mask_b64: String,
        polarity: Polarity,
    },
    Text {
        caption: String,
    },
}

impl GuidanceDto {
    pub fn to_guidance(&self) -> Result<Guidance, ServiceError> {
        Ok(match self {
            GuidanceDto::Points { points } => {
                Guidance::Points(points.iter().map(PointDto::to_prompt).collect::<Result<_, _>>()?)
            }
            GuidanceDto::Box { bbox } => Guidance::Box(*bbox),
            GuidanceDto::Scribble { mask_b64, polarity } => {
                let bytes = STANDARD
                    .decode(mask_b64)
                    .map_err(|e| ServiceError::BadRequest(format!("mask_b64: invalid base-64: {e}")))?;
                let stroke = decode_mask(&bytes).map_err(|e| ServiceError::BadRequest(format!("mask_b64: {e}")))?;
                Guidance::Scribble {
                    stroke,
                    polarity: *polarity,
                }
            }
            GuidanceDto::Text { caption } => Guidance::Text(caption.clone()),
        })
    }

    pub fn from_guidance(g: &Guidance) -> Self {
        match g {
            Guidance::Points(p) => GuidanceDto::Points {
                points: p
                    .iter()
                    .map(|p| PointDto::Labelled {
                        x: p.x,
                        y: p.y,
                        label: u8::from(p.polarity.is_positive()),
                    })
                    .collect(),
            },
            Guidance::Box(b) => GuidanceDto::Box { bbox: *b },
            Guidance::Scribble { stroke, polarity } => GuidanceDto::Scribble {
                mask_b64: STANDARD.encode(encode_mask(stroke)),
                polarity: *polarity,
            },
            Guidance::Text(c) => GuidanceDto::Text { caption: c.clone() },
        }
    }
}

/// A guidance file holds either one guidance object or a list applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GuidanceScript {
    One(GuidanceDto),
    Many(Vec<GuidanceDto>),
}

impl GuidanceScript {
    pub fn into_steps(self) -> Vec<GuidanceDto> {
        match self {
            GuidanceScript::One(g) => vec![g],
            GuidanceScript::Many(v) => v,
        }
    }
}
