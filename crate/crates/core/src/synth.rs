//! Synthetic fetal-brain-like stacks with controllable degradations.
//!
//! A phantom is a layered ellipsoidal "brain" (white matter, cortex, CSF)
//! with a folding texture, surrounded by maternal tissue. Four degradations
//! can be applied, each with a scalar level:
//!
//! * motion: per-slice in-plane shift of the content and its mask, in voxels
//! * bias: strength of a smooth multiplicative field (mainly through-plane)
//! * noise: Gaussian noise standard deviation relative to white-matter intensity
//! * drop: fractional signal loss on a fixed subset of slices

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::nifti::{save_mask, save_nifti};
use crate::io::tables::{Orientation, Rating};
use crate::volume::{identity_affine, BrainMask, Stack};

const WM: f64 = 100.0;
const GM: f64 = 150.0;
const CSF: f64 = 230.0;
const MATERNAL: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anatomy {
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    /// Brain semi-axes in mm.
    pub semi_axes: [f64; 3],
    pub contrast: f64,
    pub seed: u64,
}

impl Default for Anatomy {
    fn default() -> Self {
        Anatomy {
            shape: [44, 44, 22],
            spacing: [0.8, 0.8, 2.5],
            semi_axes: [12.0, 14.5, 23.0],
            contrast: 1.0,
            seed: 0,
        }
    }
}

impl Anatomy {
    /// A subject with randomly perturbed size and contrast.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
        let base = Anatomy::default();
        let scale = rng.gen_range(0.85..1.1);
        Anatomy {
            semi_axes: base.semi_axes.map(|a| a * scale),
            contrast: rng.gen_range(0.8..1.2),
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub motion: f64,
    pub bias: f64,
    pub noise: f64,
    pub drop: f64,
}

/// Builds a phantom stack and its brain mask. `seed` drives the random
/// parts of the degradations (shift directions, noise, dropped slices); the
/// same seed with larger levels gives a strictly stronger degradation of the
/// same pattern.
pub fn phantom(anatomy: &Anatomy, deg: &Degradation, seed: u64) -> (Stack, BrainMask) {
    let [nx, ny, nz] = anatomy.shape;
    let sp = anatomy.spacing;
    let centre = [
        (nx as f64 - 1.0) / 2.0,
        (ny as f64 - 1.0) / 2.0,
        (nz as f64 - 1.0) / 2.0,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // per-slice shift pattern; centre slice stays put
    let shifts: Vec<(f64, f64)> = (0..nz)
        .map(|z| {
            let sign = if z % 2 == 0 { 1.0 } else { -1.0 };
            let (a, b): (f64, f64) = (rng.gen_range(0.3..1.0), rng.gen_range(-1.0..1.0));
            (sign * a, 0.5 * b)
        })
        .collect();
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut dropped: Vec<usize> = (0..nz).filter(|_| rng.gen_bool(0.35)).collect();
    if dropped.is_empty() {
        dropped.push(nz / 2);
    }

    let folding = |x: f64, y: f64, z: f64| {
        0.12 * ((0.9 * x + 0.4 * z + phase).sin() * (0.7 * y - 0.3 * z).cos())
            + 0.06 * (0.35 * (x + y) + 0.5 * z).sin()
    };
    let contrast = anatomy.contrast;
    // clean tissue at continuous mm coordinates relative to the brain centre
    let tissue = |x: f64, y: f64, z: f64| -> (f64, bool) {
        let [a, b, c] = anatomy.semi_axes;
        let r = ((x / a).powi(2) + (y / b).powi(2) + (z / c).powi(2)).sqrt();
        if r <= 1.0 {
            let base = if r < 0.6 {
                WM
            } else if r < 0.85 + folding(x, y, z) * 0.5 {
                GM * contrast
            } else {
                CSF
            };
            (base * (1.0 + 0.5 * folding(x, y, z)), true)
        } else {
            let rb = ((x / (1.6 * a)).powi(2) + (y / (1.6 * b)).powi(2)).sqrt();
            let v = if rb <= 1.0 {
                MATERNAL * (1.0 + 0.3 * (0.5 * x).sin() * (0.4 * y).cos())
            } else {
                10.0
            };
            (v, false)
        }
    };

    let mut voxels = Array3::<f64>::zeros((nx, ny, nz));
    let mut mask = Array3::from_elem((nx, ny, nz), false);
    for k in 0..nz {
        let (sx, sy) = shifts[k];
        let (dx, dy) = (deg.motion * sx, deg.motion * sy);
        // mask follows the rounded shift
        let (rx, ry) = (dx.round(), dy.round());
        for i in 0..nx {
            for j in 0..ny {
                let z = (k as f64 - centre[2]) * sp[2];
                let x = (i as f64 - centre[0] - dx) * sp[0];
                let y = (j as f64 - centre[1] - dy) * sp[1];
                voxels[[i, j, k]] = tissue(x, y, z).0;
                let xm = (i as f64 - centre[0] - rx) * sp[0];
                let ym = (j as f64 - centre[1] - ry) * sp[1];
                mask[[i, j, k]] = tissue(xm, ym, z).1;
            }
        }
    }

    let half_z = centre[2].max(1.0);
    let half_x = centre[0].max(1.0);
    for ((i, _, k), v) in voxels.indexed_iter_mut() {
        let field = 1.0
            + deg.bias * ((k as f64 - centre[2]) / half_z)
            + 0.25 * deg.bias * ((i as f64 - centre[0]) / half_x);
        *v *= field.max(0.05);
    }
    for &k in &dropped {
        voxels
            .index_axis_mut(ndarray::Axis(2), k)
            .mapv_inplace(|v| v * (1.0 - deg.drop).max(0.0));
    }
    if deg.noise > 0.0 {
        let normal = Normal::new(0.0, deg.noise * WM).expect("finite sigma");
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9));
        for v in voxels.iter_mut() {
            *v = (*v + normal.sample(&mut noise_rng)).abs();
        }
    }

    let affine = identity_affine(sp);
    let stack =
        Stack::new("sub-phantom", "run-1", voxels, sp, affine).expect("valid phantom geometry");
    let mask = BrainMask::new(mask, sp, affine).expect("valid phantom geometry");
    (stack, mask)
}

/// One stack of a synthetic dataset with its ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticStack {
    pub subject_id: String,
    pub run_id: String,
    pub site: String,
    pub anatomy: Anatomy,
    pub degradation: Degradation,
    pub seed: u64,
    pub quality: f64,
}

impl SyntheticStack {
    pub fn render(&self) -> (Stack, BrainMask) {
        let (mut s, m) = phantom(&self.anatomy, &self.degradation, self.seed);
        s.subject_id = self.subject_id.clone();
        s.run_id = self.run_id.clone();
        (s, m)
    }
}

/// Severity-to-level mapping and the quality model of the synthetic data.
pub const MAX_MOTION: f64 = 3.0;
pub const MAX_BIAS: f64 = 0.6;
pub const MAX_NOISE: f64 = 0.25;
pub const MAX_DROP: f64 = 0.7;

/// Generates `n_subjects × stacks_per_subject` stacks. Each stack draws four
/// severities in [0, 1]; its quality is a fixed decreasing function of them
/// plus a little rating noise, clamped to [0, 4].
pub fn synthetic_dataset(
    n_subjects: usize,
    stacks_per_subject: usize,
    seed: u64,
) -> Vec<SyntheticStack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rating_noise = Normal::new(0.0, 0.15).expect("finite sigma");
    let mut out = Vec::with_capacity(n_subjects * stacks_per_subject);
    for s in 0..n_subjects {
        let subject_id = format!("sub-{:03}", s + 1);
        let anatomy = Anatomy::random(seed.wrapping_mul(1000).wrapping_add(s as u64));
        let site = if s % 2 == 0 { "A" } else { "B" };
        for r in 0..stacks_per_subject {
            let mut severity = || -> f64 {
                let u: f64 = rng.gen();
                u * u
            };
            let sev = [severity(), severity(), severity(), severity()];
            let quality = (4.0 - 1.8 * sev[0] - 1.4 * sev[1] - 1.8 * sev[2] - 1.4 * sev[3]
                + rating_noise.sample(&mut rng))
            .clamp(0.0, 4.0);
            out.push(SyntheticStack {
                subject_id: subject_id.clone(),
                run_id: format!("run-{}", r + 1),
                site: site.to_owned(),
                anatomy,
                degradation: Degradation {
                    motion: MAX_MOTION * sev[0],
                    bias: MAX_BIAS * sev[1],
                    noise: MAX_NOISE * sev[2],
                    drop: MAX_DROP * sev[3],
                },
                seed: rng.gen(),
                quality,
            });
        }
    }
    out
}

/// Paths written by [`write_dataset`].
#[derive(Debug, Clone)]
pub struct WrittenDataset {
    pub bids_root: PathBuf,
    pub mask_root: PathBuf,
    pub ratings: PathBuf,
}

/// Writes stacks, masks (`{stem}_mask.nii.gz`) and a ratings table with a
/// `site` column under `out`.
pub fn write_dataset(out: &Path, stacks: &[SyntheticStack]) -> Result<WrittenDataset> {
    let bids_root = out.join("rawdata");
    let mask_root = out.join("masks");
    let mut rows = Vec::new();
    for st in stacks {
        let (stack, mask) = st.render();
        let stem = format!("{}_{}", st.subject_id, st.run_id);
        let rel = Path::new(&st.subject_id).join("anat");
        save_nifti(
            &stack,
            &bids_root.join(&rel).join(format!("{stem}_T2w.nii.gz")),
        )?;
        save_mask(
            &mask,
            &mask_root.join(&rel).join(format!("{stem}_mask.nii.gz")),
        )?;
        rows.push((
            Rating {
                subject_id: st.subject_id.clone(),
                run_id: st.run_id.clone(),
                quality: (st.quality * 100.0).round() / 100.0,
                orientation: Orientation::Axial,
                artifacts: BTreeMap::new(),
                rater_id: "synthetic".into(),
                seconds_spent: 0.0,
                timestamp: "1970-01-01T00:00:00Z".into(),
            },
            st.site.clone(),
        ));
    }
    let mut text =
        crate::io::tables::ratings_to_tsv(&rows.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>());
    // append the site column
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[0].push_str("\tsite");
    for (line, (_, site)) in lines.iter_mut().skip(1).zip(&rows) {
        line.push('\t');
        line.push_str(site);
    }
    text = lines.join("\n");
    text.push('\n');
    let ratings = out.join("ratings.tsv");
    std::fs::write(&ratings, text).map_err(|e| crate::Error::io(&ratings, e))?;
    Ok(WrittenDataset {
        bids_root,
        mask_root,
        ratings,
    })
}
