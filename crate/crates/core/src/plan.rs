//! Partition of the time axis into segments and their overlapped windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive range of time indices `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: usize) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn contains_range(&self, other: &IndexRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Segments `A_k = {(k-1)Δ, …, kΔ-1}` and their δ-enlargements clipped to `{0, …, n}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub horizon: usize,
    pub num_segments: usize,
    pub block_len: usize,
    pub overlap: usize,
    pub segments: Vec<IndexRange>,
    pub enlarged: Vec<IndexRange>,
}

pub fn build_segment_plan(horizon: usize, num_segments: usize, overlap: usize) -> Result<SegmentPlan> {
    let len = horizon + 1;
    if num_segments == 0 {
        return Err(Error::Plan("number of segments must be positive".into()));
    }
    if !len.is_multiple_of(num_segments) {
        return Err(Error::Plan(format!(
            "horizon + 1 = {len} is not divisible by {num_segments} segments"
        )));
    }
    if overlap >= len {
        return Err(Error::Plan(format!(
            "overlap {overlap} must be smaller than horizon + 1 = {len}"
        )));
    }
    let block_len = len / num_segments;
    let segments: Vec<IndexRange> = (0..num_segments)
        .map(|k| IndexRange::new(k * block_len, (k + 1) * block_len - 1))
        .collect();
    let enlarged = segments
        .iter()
        .map(|s| IndexRange::new(s.start.saturating_sub(overlap), (s.end + overlap).min(horizon)))
        .collect();
    Ok(SegmentPlan {
        horizon,
        num_segments,
        block_len,
        overlap,
        segments,
        enlarged,
    })
}

impl SegmentPlan {
    /// Index of the segment whose kept region contains `m`.
    pub fn owner(&self, m: usize) -> Option<usize> {
        (m <= self.horizon).then(|| m / self.block_len)
    }
}
