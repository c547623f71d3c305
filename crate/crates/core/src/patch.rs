//! Search for the square window holding the most valid positions.

use thiserror::Error;

use crate::validity::ValidityMask;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("patch side {side} does not fit a {width}x{height} frame")]
pub struct PatchSizeError {
    pub side: usize,
    pub width: usize,
    pub height: usize,
}

/// Integral image of a validity mask, `(width + 1) x (height + 1)`, zero first row and column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummedAreaTable {
    width: usize,
    height: usize,
    sums: Vec<u32>,
}

impl SummedAreaTable {
    pub fn build(mask: &ValidityMask) -> Self {
        let (width, height) = (mask.width(), mask.height());
        let stride = width + 1;
        let mut sums = vec![0u32; stride * (height + 1)];
        for y in 0..height {
            let mut row_sum = 0u32;
            for x in 0..width {
                row_sum += mask.get(x, y) as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row_sum;
            }
        }
        SummedAreaTable {
            width,
            height,
            sums,
        }
    }

    /// Width of the source mask.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Height of the source mask.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Cumulative count of valid bits in `[0, x) x [0, y)`.
    pub fn at(&self, x: usize, y: usize) -> u32 {
        self.sums[y * (self.width + 1) + x]
    }

    pub fn total(&self) -> u32 {
        self.at(self.width, self.height)
    }

    /// Number of valid bits in the `w x h` rectangle with top-left corner `(x0, y0)`.
    pub fn rect_count(&self, x0: usize, y0: usize, w: usize, h: usize) -> u32 {
        let (x1, y1) = (x0 + w, y0 + h);
        self.at(x1, y1) + self.at(x0, y0) - self.at(x1, y0) - self.at(x0, y1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PatchLocation {
    pub x0: usize,
    pub y0: usize,
    pub valid_count: usize,
}

/// Work done by one search, for complexity checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub table_cells: usize,
    pub window_queries: usize,
}

/// Returns the `side x side` window with the highest valid count, ties going
/// to the first corner in row-major order, or `None` when no bit is set.
pub fn best_patch(
    mask: &ValidityMask,
    side: usize,
) -> Result<Option<PatchLocation>, PatchSizeError> {
    best_patch_with_stats(mask, side).map(|(patch, _)| patch)
}

pub fn best_patch_with_stats(
    mask: &ValidityMask,
    side: usize,
) -> Result<(Option<PatchLocation>, ScanStats), PatchSizeError> {
    let (width, height) = (mask.width(), mask.height());
    if side == 0 || side > width || side > height {
        return Err(PatchSizeError {
            side,
            width,
            height,
        });
    }
    let sat = SummedAreaTable::build(mask);
    let mut stats = ScanStats {
        table_cells: sat.sums.len(),
        window_queries: 0,
    };
    let mut best: Option<PatchLocation> = None;
    if sat.total() == 0 {
        return Ok((None, stats));
    }
    for y0 in 0..=height - side {
        for x0 in 0..=width - side {
            stats.window_queries += 1;
            let count = sat.rect_count(x0, y0, side, side) as usize;
            if best.is_none_or(|b| count > b.valid_count) {
                best = Some(PatchLocation {
                    x0,
                    y0,
                    valid_count: count,
                });
            }
        }
    }
    Ok((best.filter(|b| b.valid_count > 0), stats))
}
