//! Stacks of 2D slices and their brain masks.

use ndarray::{Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

pub type Affine = [[f64; 4]; 4];

pub fn identity_affine(spacing: [f64; 3]) -> Affine {
    let mut a = [[0.0; 4]; 4];
    for (i, s) in spacing.iter().enumerate() {
        a[i][i] = *s;
    }
    a[3][3] = 1.0;
    a
}

/// Axis with the coarsest spacing; the highest index wins ties.
pub fn through_plane_axis(spacing: [f64; 3]) -> usize {
    let mut best = 0;
    for ax in 1..3 {
        if spacing[ax] >= spacing[best] {
            best = ax;
        }
    }
    best
}

/// The two axes spanning a slice, in increasing order.
pub fn in_plane_axes(through_plane: usize) -> [usize; 2] {
    match through_plane {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

fn validate_geometry(shape: &[usize], spacing: [f64; 3]) -> Result<()> {
    if shape.len() != 3 || shape.contains(&0) {
        return Err(Error::Dimension(format!(
            "expected a 3D grid with non-empty axes, got shape {shape:?}"
        )));
    }
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Dimension(format!(
            "spacing must be positive, got {spacing:?}"
        )));
    }
    Ok(())
}

/// A low-resolution stack: a 3D intensity grid indexed `[x, y, z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    pub subject_id: String,
    pub run_id: String,
    pub voxels: Array3<f64>,
    pub spacing: [f64; 3],
    pub affine: Affine,
    pub through_plane_axis: usize,
}

impl Stack {
    pub fn new(
        subject_id: impl Into<String>,
        run_id: impl Into<String>,
        voxels: Array3<f64>,
        spacing: [f64; 3],
        affine: Affine,
    ) -> Result<Self> {
        validate_geometry(voxels.shape(), spacing)?;
        Ok(Stack {
            subject_id: subject_id.into(),
            run_id: run_id.into(),
            voxels,
            spacing,
            affine,
            through_plane_axis: through_plane_axis(spacing),
        })
    }

    /// Convenience constructor with an axis-aligned affine.
    pub fn from_voxels(voxels: Array3<f64>, spacing: [f64; 3]) -> Result<Self> {
        Stack::new(
            "sub-unknown",
            "run-unknown",
            voxels,
            spacing,
            identity_affine(spacing),
        )
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.voxels.shape();
        [s[0], s[1], s[2]]
    }

    pub fn n_slices(&self) -> usize {
        self.voxels.len_of(Axis(self.through_plane_axis))
    }

    pub fn slice(&self, index: usize) -> ArrayView2<'_, f64> {
        self.voxels.index_axis(Axis(self.through_plane_axis), index)
    }
}

/// Binary brain mask co-registered with a [`Stack`].
#[derive(Debug, Clone, PartialEq)]
pub struct BrainMask {
    pub voxels: Array3<bool>,
    pub spacing: [f64; 3],
    pub affine: Affine,
    pub through_plane_axis: usize,
}

impl BrainMask {
    pub fn new(voxels: Array3<bool>, spacing: [f64; 3], affine: Affine) -> Result<Self> {
        validate_geometry(voxels.shape(), spacing)?;
        Ok(BrainMask {
            voxels,
            spacing,
            affine,
            through_plane_axis: through_plane_axis(spacing),
        })
    }

    pub fn from_voxels(voxels: Array3<bool>, spacing: [f64; 3]) -> Result<Self> {
        BrainMask::new(voxels, spacing, identity_affine(spacing))
    }

    /// Mask of a stack's nonzero voxels after thresholding a label volume.
    pub fn from_labels(labels: &Stack) -> Self {
        BrainMask {
            voxels: labels.voxels.mapv(|v| v > 0.5),
            spacing: labels.spacing,
            affine: labels.affine,
            through_plane_axis: labels.through_plane_axis,
        }
    }

    /// Mask covering the whole grid of `stack`.
    pub fn full(stack: &Stack) -> Self {
        BrainMask {
            voxels: Array3::from_elem(stack.voxels.raw_dim(), true),
            spacing: stack.spacing,
            affine: stack.affine,
            through_plane_axis: stack.through_plane_axis,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.voxels.shape();
        [s[0], s[1], s[2]]
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.voxels.iter().any(|&v| v)
    }

    pub fn slice(&self, index: usize) -> ArrayView2<'_, bool> {
        self.voxels.index_axis(Axis(self.through_plane_axis), index)
    }

    pub fn n_slices(&self) -> usize {
        self.voxels.len_of(Axis(self.through_plane_axis))
    }

    /// Inclusive per-axis bounds of the nonzero voxels.
    pub fn bounding_box(&self) -> Option<[(usize, usize); 3]> {
        let mut bb: Option<[(usize, usize); 3]> = None;
        for ((i, j, k), &v) in self.voxels.indexed_iter() {
            if !v {
                continue;
            }
            let idx = [i, j, k];
            match bb.as_mut() {
                None => bb = Some([(i, i), (j, j), (k, k)]),
                Some(b) => {
                    for ax in 0..3 {
                        b[ax].0 = b[ax].0.min(idx[ax]);
                        b[ax].1 = b[ax].1.max(idx[ax]);
                    }
                }
            }
        }
        bb
    }

    /// Indices of slices along the through-plane axis with at least one mask voxel.
    pub fn occupied_slices(&self) -> Vec<usize> {
        (0..self.n_slices())
            .filter(|&s| self.slice(s).iter().any(|&v| v))
            .collect()
    }

    /// Checks the mask can be paired with `stack`.
    pub fn check_pair(&self, stack: &Stack) -> Result<()> {
        if self.shape() != stack.shape() {
            return Err(Error::Dimension(format!(
                "mask shape {:?} does not match stack shape {:?}",
                self.shape(),
                stack.shape()
            )));
        }
        Ok(())
    }
}
