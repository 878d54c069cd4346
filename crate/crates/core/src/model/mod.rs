//! Concrete networks and data: the denoiser MLP and its featurization, the
//! closed-form Gaussian reference field, the latent codec, toy dataset
//! generation, and the training loops.

pub mod analytic;
pub mod codec;
pub mod dataset;
pub mod field;
pub mod nn;
pub mod train;

pub use analytic::{analytic_gaussian_field, AnalyticGaussianField};
pub use codec::{train_codec, CodecTrainConfig, ToyCodec, AUX_DIM, N_LABELS};
pub use dataset::{gen_toy_binder_dataset, TaskSpec, ToyDataset, ToyRecord};
pub use field::{FieldArch, MlpField};
pub use train::{train_field, TrainConfig, TrainTrace};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geom::vec3;

/// The fixed conditioning for one placement task: target points, which of
/// them are designated hotspots, and an optional fold-class id for the
/// one-hot conditioning channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetContext {
    pub points: Vec<[f64; 3]>,
    pub hotspot: Vec<bool>,
    pub class_id: Option<u32>,
    /// Width of the class one-hot in the feature vector; 0 disables it.
    pub n_classes: usize,
}

impl TargetContext {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(CoreError::InvalidArgument("target context needs points".into()));
        }
        if self.hotspot.len() != self.points.len() {
            return Err(CoreError::Shape(format!(
                "hotspot flags ({}) != points ({})",
                self.hotspot.len(),
                self.points.len()
            )));
        }
        if !self.points.iter().flatten().all(|v| v.is_finite()) {
            return Err(CoreError::Numeric("non-finite target point".into()));
        }
        if let Some(c) = self.class_id {
            if self.n_classes == 0 || c as usize >= self.n_classes {
                return Err(CoreError::InvalidArgument(format!(
                    "class id {} outside {} classes",
                    c, self.n_classes
                )));
            }
        }
        Ok(())
    }

    pub fn hotspot_points(&self) -> Vec<[f64; 3]> {
        self.points
            .iter()
            .zip(&self.hotspot)
            .filter(|(_, &h)| h)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn n_hotspots(&self) -> usize {
        self.hotspot.iter().filter(|&&h| h).count()
    }

    pub fn centroid(&self) -> [f64; 3] {
        vec3::centroid(&self.points)
    }

    /// Centroid of the hotspot subset; falls back to the full centroid when
    /// no point is flagged.
    pub fn hotspot_centroid(&self) -> [f64; 3] {
        let hs = self.hotspot_points();
        if hs.is_empty() {
            self.centroid()
        } else {
            vec3::centroid(&hs)
        }
    }
}
