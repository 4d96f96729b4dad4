use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One prompt region of a layout, over 1-based iterations `start..=end`
/// (iteration 1 is the first block).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSegment {
    pub start: usize,
    pub end: usize,
    pub prompt: String,
    /// Transition factor applied at the seam where this segment begins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blend: Option<f64>,
}

/// Which boundary tokens a segment seam re-quantizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlendScope {
    /// Every adjacent token pair along the seam.
    #[default]
    FullSeam,
    /// Only the last token before the seam and the first token after it, in
    /// raster order.
    BoundaryPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    #[serde(rename = "segment")]
    pub segments: Vec<LayoutSegment>,
    #[serde(default)]
    pub scope: BlendScope,
}

impl LayoutSpec {
    pub fn single(prompt: &str, iterations: usize) -> Self {
        LayoutSpec {
            segments: vec![LayoutSegment { start: 1, end: iterations, prompt: prompt.to_owned(), blend: None }],
            scope: BlendScope::default(),
        }
    }

    /// Checks that segments are ordered, contiguous and cover `1..=iterations`.
    pub fn validate(&self, iterations: usize) -> Result<()> {
        let mut next = 1;
        for seg in &self.segments {
            if seg.prompt.is_empty() {
                return Err(Error::Layout(format!("segment {}..={} has an empty prompt", seg.start, seg.end)));
            }
            if seg.start != next || seg.end < seg.start {
                return Err(Error::Layout(format!(
                    "segment {}..={} does not continue at iteration {next}",
                    seg.start, seg.end
                )));
            }
            if let Some(l) = seg.blend {
                if !(0.0..=1.0).contains(&l) {
                    return Err(Error::Layout(format!("blend factor {l} outside [0, 1]")));
                }
            }
            next = seg.end + 1;
        }
        if next != iterations + 1 {
            return Err(Error::Layout(format!(
                "layout covers iterations 1..{} but the plan has {iterations}",
                next - 1
            )));
        }
        Ok(())
    }

    /// Segment index owning 1-based iteration `i`.
    pub fn segment_of(&self, i: usize) -> Option<usize> {
        self.segments.iter().position(|s| s.start <= i && i <= s.end)
    }
}
