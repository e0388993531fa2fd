use std::sync::Arc;

use iseg_core::guidance::{compute_click_size, render_guidance, Click, ClickSet, ClickSizePolicy, Polarity};
use iseg_core::loss::{binarize, dsc};
use iseg_core::network::Segmenter;
use iseg_core::raster::{self, Mask};
use ndarray::Array2;
use serde::Serialize;

use crate::error::{ApiError, ApiResult};

pub type SharedModel = Arc<dyn Segmenter + Send>;

/// One stored state of a session. Revision 0 has no clicks.
#[derive(Debug, Clone, PartialEq)]
pub struct Revision {
    pub revision: u64,
    pub clicks: ClickSet,
    pub mask: Mask,
    /// Size given to the click that produced this revision.
    pub applied_size: Option<u32>,
    pub dsc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PaddedShape {
    pub height: usize,
    pub width: usize,
}

/// An image, its optional ground truth and the append-only history of
/// click lists with the mask the model produced for each.
pub struct Session {
    pub id: String,
    pub checkpoint: String,
    pub image: Array2<f32>,
    pub gt: Option<Mask>,
    pub policy: ClickSizePolicy,
    /// Network input size after padding to the model's size multiple.
    pub padded: PaddedShape,
    model: SharedModel,
    history: Vec<Revision>,
}

impl Session {
    pub fn new(
        id: String,
        checkpoint: String,
        model: SharedModel,
        image: Array2<f32>,
        gt: Option<Mask>,
        policy: ClickSizePolicy,
        size_multiple: usize,
    ) -> ApiResult<Self> {
        let (h, w) = raster::dims(&image);
        if h == 0 || w == 0 {
            return Err(ApiError::BadImage("empty image".into()));
        }
        if let Some(gt) = &gt {
            if raster::dims(gt) != (h, w) {
                return Err(ApiError::BadImage(format!("ground truth is {:?}, image is {:?}", raster::dims(gt), (h, w))));
            }
        }
        let m = size_multiple.max(1);
        let padded = PaddedShape { height: h.div_ceil(m) * m, width: w.div_ceil(m) * m };
        let mut session = Session { id, checkpoint, image, gt, policy: policy.for_image(h, w), padded, model, history: Vec::new() };
        let first = session.compute(0, ClickSet::new(), None)?;
        session.history.push(first);
        Ok(session)
    }

    pub fn dims(&self) -> (usize, usize) {
        raster::dims(&self.image)
    }

    pub fn latest(&self) -> &Revision {
        self.history.last().expect("revision 0 always exists")
    }

    pub fn revision(&self, revision: Option<u64>) -> ApiResult<&Revision> {
        match revision {
            None => Ok(self.latest()),
            Some(r) => self.history.get(r as usize).ok_or(ApiError::UnknownRevision(r)),
        }
    }

    /// Size for the next click: the fixed size while the mask is empty or
    /// the policy is fixed, otherwise scaled from the current mask area.
    pub fn next_click_size(&self) -> u32 {
        let area = raster::count_foreground(&self.latest().mask);
        if !self.policy.is_dynamic() || area == 0 {
            return self.policy.fixed_size_px.max(1);
        }
        compute_click_size(self.policy.alpha, area, &self.policy).unwrap_or(self.policy.fixed_size_px.max(1))
    }

    pub fn add_click(&mut self, row: usize, col: usize, polarity: Polarity) -> ApiResult<&Revision> {
        let (h, w) = self.dims();
        if row >= h || col >= w {
            return Err(ApiError::OutOfBounds { row, col, height: h, width: w });
        }
        let size = self.next_click_size();
        let mut clicks = self.latest().clicks.clone();
        clicks.clicks.push(Click::new(row, col, polarity, size));
        clicks.interaction_count = clicks.clicks.len().div_ceil(2);
        let next = self.compute(self.history.len() as u64, clicks, Some(size))?;
        self.history.push(next);
        Ok(self.latest())
    }

    /// New revision holding the click list without its last click.
    pub fn undo(&mut self) -> ApiResult<&Revision> {
        let mut clicks = self.latest().clicks.clone();
        if clicks.clicks.pop().is_none() {
            return Err(ApiError::NothingToUndo);
        }
        clicks.interaction_count = clicks.clicks.len().div_ceil(2);
        let next = self.compute(self.history.len() as u64, clicks, None)?;
        self.history.push(next);
        Ok(self.latest())
    }

    /// Recompute a stored revision's mask from its click list.
    pub fn replay(&self, revision: u64) -> ApiResult<Mask> {
        let stored = self.revision(Some(revision))?;
        Ok(self.compute(revision, stored.clicks.clone(), stored.applied_size)?.mask)
    }

    pub fn history(&self) -> &[Revision] {
        &self.history
    }

    fn compute(&self, revision: u64, clicks: ClickSet, applied_size: Option<u32>) -> ApiResult<Revision> {
        let (h, w) = self.dims();
        let pred = if clicks.is_empty() {
            self.model.predict(&self.image, None)?
        } else {
            let guidance = render_guidance(&clicks, h, w)?;
            self.model.predict(&self.image, Some(&guidance))?
        };
        let mask = binarize(&pred);
        let dsc = match &self.gt {
            Some(gt) => Some(dsc(&mask, gt)?),
            None => None,
        };
        Ok(Revision { revision, clicks, mask, applied_size, dsc })
    }
}
