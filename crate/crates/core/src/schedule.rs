//! Patch tiling, causal context masks and wavefront coding schedules.
//!
//! The mask `M_k^j` lives in a `k×k` window. Pixels are grouped by the step
//! `t = (j-1)·row + col`; a neighbour is admitted to the mask only if its step
//! is strictly smaller, so every group can be processed at once given the
//! earlier groups. `j = (k+3)/2` keeps the full raster-causal window and
//! `j = 1` reduces a `P×P` patch to `P` column steps.

use crate::error::{Error, Result};

/// Kernel size and parallelism index of a context model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContextModelSpec {
    k: u8,
    j: u8,
}

impl ContextModelSpec {
    /// `k` must be odd and at least 3, `1 <= j <= (k+3)/2`.
    pub fn new(k: u32, j: u32) -> Result<Self> {
        let valid = k >= 3 && k % 2 == 1 && k <= 63 && j >= 1 && j <= (k + 3) / 2;
        if !valid {
            return Err(Error::InvalidContextModel { k, j });
        }
        Ok(Self {
            k: k as u8,
            j: j as u8,
        })
    }

    /// The mask with the full raster-causal window, `M_k^{(k+3)/2}`.
    pub fn raster_equivalent(k: u32) -> Result<Self> {
        Self::new(k, (k + 3) / 2)
    }

    pub fn kernel(&self) -> u32 {
        self.k.into()
    }

    pub fn parallelism(&self) -> u32 {
        self.j.into()
    }

    pub fn half_width(&self) -> i32 {
        i32::from(self.k / 2)
    }

    /// Smallest patch size a schedule may use with this kernel.
    pub fn min_patch(&self) -> u32 {
        self.kernel() / 2 + 1
    }

    /// Relative positions `(dr, dc)` of the context pixels, row-major.
    pub fn context_offsets(&self) -> Vec<(i32, i32)> {
        let h = self.half_width();
        let slope = i32::from(self.j) - 1;
        let mut offsets = Vec::new();
        for dr in -h..=-1 {
            for dc in -h..=h {
                if slope * dr + dc < 0 {
                    offsets.push((dr, dc));
                }
            }
        }
        offsets.extend((-h..=-1).map(|dc| (0, dc)));
        offsets
    }

    pub fn wavefront_step(&self, row: u32, col: u32) -> u32 {
        wavefront_step(row, col, self.parallelism())
    }
}

impl Default for ContextModelSpec {
    fn default() -> Self {
        Self { k: 7, j: 3 }
    }
}

/// Context offsets of `M_k^j`.
pub fn context_offsets(k: u32, j: u32) -> Result<Vec<(i32, i32)>> {
    Ok(ContextModelSpec::new(k, j)?.context_offsets())
}

/// `t = (j-1)·row + col` for patch-local coordinates.
pub fn wavefront_step(row: u32, col: u32, j: u32) -> u32 {
    (j - 1) * row + col
}

/// Coding order of one patch: a sequence of groups whose members only
/// depend on members of earlier groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    height: u32,
    width: u32,
    groups: Vec<Vec<(u32, u32)>>,
}

impl Schedule {
    /// Wavefront schedule of a `height×width` patch. Steps with no pixels
    /// (possible only in narrow edge patches) are dropped.
    pub fn wavefront(height: u32, width: u32, spec: ContextModelSpec) -> Self {
        let j = spec.parallelism();
        let steps = if height == 0 || width == 0 {
            0
        } else {
            wavefront_step(height - 1, width - 1, j) as usize + 1
        };
        let mut groups = vec![Vec::new(); steps];
        for row in 0..height {
            for col in 0..width {
                groups[wavefront_step(row, col, j) as usize].push((row, col));
            }
        }
        groups.retain(|g| !g.is_empty());
        Self {
            height,
            width,
            groups,
        }
    }

    /// One pixel per step in raster order.
    pub fn raster(height: u32, width: u32) -> Self {
        let groups = (0..height)
            .flat_map(|row| (0..width).map(move |col| vec![(row, col)]))
            .collect();
        Self {
            height,
            width,
            groups,
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn groups(&self) -> &[Vec<(u32, u32)>] {
        &self.groups
    }

    pub fn steps(&self) -> usize {
        self.groups.len()
    }
}

/// Wavefront schedule of a full `P×P` patch; it has `jP - j + 1` steps.
pub fn build_schedule(patch: u32, spec: ContextModelSpec) -> Result<Schedule> {
    if patch < spec.min_patch() {
        return Err(Error::PatchTooSmall {
            patch,
            k: spec.kernel(),
        });
    }
    Ok(Schedule::wavefront(patch, patch, spec))
}

/// A rectangular region of the image coded independently of the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Patch {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.height).contains(&row)
            && (self.col..self.col + self.width).contains(&col)
    }
}

/// Splits an image into non-overlapping `P×P` patches in raster order;
/// patches on the bottom and right edges may be smaller.
pub fn tile(height: usize, width: usize, patch: usize) -> Vec<Patch> {
    assert!(patch > 0, "patch size must be positive");
    let mut out = Vec::with_capacity(height.div_ceil(patch) * width.div_ceil(patch));
    for row in (0..height).step_by(patch) {
        for col in (0..width).step_by(patch) {
            out.push(Patch {
                row,
                col,
                height: patch.min(height - row),
                width: patch.min(width - col),
            });
        }
    }
    out
}
