//! Sampling Shapley attribution of pair similarity to image-patch features.
//!
//! The explainer never touches pixels: it sends coalitions (one bit per
//! feature, 1 = present, 0 = corrupted) to a [`PairOracle`], which applies the
//! corruption and answers with a similarity in `[0, 1]`.

mod estimator;
mod heatmap;
mod oracle;

pub use estimator::{
    exact_shapley, explain_pair, permutation_count, shapley_estimate, ExplanationMap,
    ShapleyConfig,
};
pub use heatmap::{heatmap_csv, render_heatmap_png, write_heatmap_png};
pub use oracle::{
    serve_toy_protocol, toy, EngineRequest, FnOracle, GridAdvert, OracleReply, PairOracle,
    ProcessOracle, ValidatingOracle, DEFAULT_ORACLE_TIMEOUT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square-cell partition of an image pair into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGrid {
    pub image_width: u32,
    pub image_height: u32,
    pub cell: u32,
}

impl Default for FeatureGrid {
    fn default() -> Self {
        FeatureGrid {
            image_width: 512,
            image_height: 512,
            cell: 64,
        }
    }
}

impl FeatureGrid {
    pub fn new(image_width: u32, image_height: u32, cell: u32) -> Result<Self> {
        if image_width == 0 || image_height == 0 || cell == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive (width {image_width}, height {image_height}, cell {cell})"
            )));
        }
        Ok(FeatureGrid {
            image_width,
            image_height,
            cell,
        })
    }

    pub fn cols(&self) -> usize {
        self.image_width.div_ceil(self.cell) as usize
    }

    pub fn rows(&self) -> usize {
        self.image_height.div_ceil(self.cell) as usize
    }

    pub fn features_per_image(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Features for the pair: both images.
    pub fn feature_count(&self) -> usize {
        2 * self.features_per_image()
    }

    /// `(image_index, row, col)` of feature `f`.
    pub fn locate(&self, f: usize) -> (usize, usize, usize) {
        let per = self.features_per_image();
        let local = f % per;
        (f / per, local / self.cols(), local % self.cols())
    }
}
