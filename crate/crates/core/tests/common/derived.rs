//! Worked examples of the metrics, each checked against an oracle that is
//! computed independently (by hand, by brute force or by a dense solver).

use fetqc::eval::metrics;
use fetqc::iqm::filters;
use fetqc::iqm::intensity::{
    bias_level, sharpness_filters, slice_loss, summary_stats, SliceLossParams, VoxelRegion,
};
use fetqc::iqm::{
    centroid_features, closing_mask, mask_sharpness, mask_volume, mutual_information, rank_error,
    Filter, MaskCombine, PairMetric, Region,
};
use fetqc::synth::{phantom, Anatomy, Degradation};
use fetqc::{BrainMask, Stack};
use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{close, ensure, oracle, Check};

pub const TOL: f64 = 1e-8;

fn full(v: Array3<f64>, spacing: [f64; 3]) -> (Stack, BrainMask) {
    let s = Stack::from_voxels(v, spacing).expect("valid stack");
    let m = BrainMask::full(&s);
    (s, m)
}

fn slice_values(v: &Array3<f64>, z: usize) -> Vec<f64> {
    let (nx, ny, _) = v.dim();
    let mut out = Vec::with_capacity(nx * ny);
    for x in 0..nx {
        for y in 0..ny {
            out.push(v[[x, y, z]]);
        }
    }
    out
}

fn err(e: fetqc::Error) -> String {
    e.to_string()
}

/// Three slices A, A, A+10 compared pairwise: mean of {0, 10, 10}.
pub fn slice_loss_pairs() -> Check {
    let a = [[0.0, 1.0], [2.0, 3.0]];
    let v = Array3::from_shape_fn((2, 2, 3), |(x, y, z)| {
        a[x][y] + if z == 2 { 10.0 } else { 0.0 }
    });
    let slices: Vec<Vec<f64>> = (0..3).map(|z| slice_values(&v, z)).collect();
    let mut pair_mae = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            pair_mae.push(oracle::mae(&slices[i], &slices[j]));
        }
    }
    let want = oracle::mean(&pair_mae);
    close("oracle vs hand value", want, 20.0 / 3.0, 1e-12)?;
    let (s, m) = full(v, [1.0, 1.0, 3.0]);
    let got = slice_loss(&s, &m, &SliceLossParams::new(PairMetric::Mae)).map_err(err)?;
    close("slice_loss mae", got, want, TOL)
}

/// Independent marginals give zero mutual information; random slices match
/// the direct p log p/(pa pb) sum.
pub fn mutual_information_histogram() -> Check {
    let t = [true; 4];
    let a = [0.0, 0.0, 1.0, 1.0];
    let b = [0.0, 1.0, 0.0, 1.0];
    let want = oracle::mutual_information(&a, &b, 2);
    close("oracle on the worked example", want, 0.0, 1e-15)?;
    let got = mutual_information(&a, &b, &t, &t, 2, false, MaskCombine::Union).map_err(err)?;
    close("mi on the worked example", got, want, TOL)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.gen_range(8..200);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0f64).round()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + rng.gen_range(0.0..3.0)).collect();
        let mask = vec![true; n];
        let got =
            mutual_information(&a, &b, &mask, &mask, 32, false, MaskCombine::Union).map_err(err)?;
        close(
            "mi on random slices",
            got,
            oracle::mutual_information(&a, &b, 32),
            TOL,
        )?;
    }
    Ok(())
}

/// Values {1..5}: mean 3, median 3, population std sqrt(2), p5 1.2, p95 4.8.
pub fn summary_statistics() -> Check {
    let vals = [1.0, 2.0, 3.0, 4.0, 5.0];
    let (s, m) = full(
        Array3::from_shape_vec((5, 1, 1), vals.to_vec()).expect("shape"),
        [1.0; 3],
    );
    let st = summary_stats(&s, &m).map_err(err)?;
    close("mean", st.mean, oracle::mean(&vals), TOL)?;
    close("median", st.median, oracle::percentile(&vals, 50.0), TOL)?;
    close("std", st.std, oracle::variance(&vals).sqrt(), TOL)?;
    close("std hand value", st.std, 2f64.sqrt(), TOL)?;
    close("p5", st.p5, oracle::percentile(&vals, 5.0), TOL)?;
    close("p5 hand value", st.p5, 1.2, TOL)?;
    close("p95", st.p95, oracle::percentile(&vals, 95.0), TOL)?;
    close("p95 hand value", st.p95, 4.8, TOL)
}

/// Excess kurtosis of 10^5 standard normal draws is within 0.1 of 0.
pub fn normal_kurtosis() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = Array3::from_shape_simple_fn((100, 100, 10), || rng.sample::<f64, _>(StandardNormal));
    let (s, m) = full(v, [1.0, 1.0, 2.0]);
    let k = summary_stats(&s, &m).map_err(err)?.kurtosis;
    close("kurtosis of a normal sample", k, 0.0, 0.1)
}

/// A stronger linear field gives a larger bias level; a uniform brain gives
/// none.
pub fn bias_field_ordering() -> Check {
    let (clean, mask) = phantom(&Anatomy::default(), &Degradation::default(), 0);
    let nx = clean.shape()[0] as f64 - 1.0;
    let level = |a: f64| -> Result<f64, String> {
        let mut s = clean.clone();
        for ((x, _, _), v) in s.voxels.indexed_iter_mut() {
            *v *= 1.0 + a * x as f64 / nx;
        }
        bias_level(&s, &mask).map_err(err)
    };
    let (weak, strong) = (level(0.1)?, level(0.4)?);
    ensure(strong > weak, || {
        format!("bias level 0.4 ({strong}) should exceed 0.1 ({weak})")
    })?;
    let mut flat = clean.clone();
    flat.voxels.fill(100.0);
    let b = bias_level(&flat, &mask).map_err(err)?;
    ensure(b <= 1e-3, || {
        format!("uniform intensities gave bias level {b}")
    })
}

/// Laplacian of a single bright voxel equals the 6-neighbour stencil.
pub fn laplacian_impulse() -> Check {
    let mut v = Array3::<f64>::zeros((5, 5, 5));
    v[[2, 2, 2]] = 10.0;
    let resp = filters::laplace(&v, [1.0; 3]);
    for x in 1..4 {
        for y in 1..4 {
            for z in 1..4 {
                let want = oracle::laplacian_at(&v, [x, y, z], [1.0; 3]);
                close("laplacian stencil", resp[[x, y, z]], want, TOL)?;
            }
        }
    }
    close("centre response", resp[[2, 2, 2]], -60.0, TOL)?;
    close("neighbour response", resp[[1, 2, 2]], 10.0, TOL)?;
    let total: f64 = (0..5)
        .flat_map(|x| (0..5).flat_map(move |y| (0..5).map(move |z| [x, y, z])))
        .map(|p| oracle::laplacian_at(&v, p, [1.0; 3]).abs())
        .sum();
    let (s, m) = full(v.clone(), [1.0, 1.0, 2.0]);
    let got = sharpness_filters(&s, &m, Filter::Laplace, VoxelRegion::Whole).map_err(err)?;
    close(
        "normalised sharpness",
        got,
        (total / 125.0) / (10.0 / 125.0),
        TOL,
    )
}

/// Volume equals a plain voxel count times the voxel volume.
pub fn random_mask_volume() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spacing = [0.8, 0.9, 2.5];
    let v = Array3::from_shape_simple_fn((10, 9, 7), || rng.gen_bool(0.3));
    let mut count = 0usize;
    for b in v.iter() {
        if *b {
            count += 1;
        }
    }
    let m = BrainMask::from_voxels(v, spacing).map_err(err)?;
    close(
        "mask volume",
        mask_volume(&m).map_err(err)?,
        count as f64 * 0.8 * 0.9 * 2.5,
        TOL,
    )
}

fn disc(shape: (usize, usize, usize), radius: f64, shift: impl Fn(usize) -> isize) -> Array3<bool> {
    let (cx, cy) = ((shape.0 as f64 - 1.0) / 2.0, (shape.1 as f64 - 1.0) / 2.0);
    Array3::from_shape_fn(shape, |(i, j, k)| {
        let x = i as f64 - cx - shift(k) as f64;
        x * x + (j as f64 - cy).powi(2) <= radius * radius
    })
}

/// One of five slices shifted by 2 voxels: that slice sits 2(1 - 1/5) =
/// 1.6 mm from the global centroid and the others 0.4 mm.
pub fn centroid_shifted_slice() -> Check {
    let v = disc((15, 15, 5), 3.0, |k| if k == 3 { 2 } else { 0 });
    let m = BrainMask::from_voxels(v.clone(), [1.0, 1.0, 3.0]).map_err(err)?;
    let (mean, max) = centroid_features(&m, Region::Full).map_err(err)?;
    // per-slice centroids by direct summation (all slices hold equal counts)
    let mut cents = Vec::new();
    for z in 0..5 {
        let pts: Vec<(f64, f64)> = v
            .indexed_iter()
            .filter(|((_, _, k), b)| *k == z && **b)
            .map(|((i, j, _), _)| (i as f64, j as f64))
            .collect();
        let n = pts.len() as f64;
        cents.push((
            pts.iter().map(|p| p.0).sum::<f64>() / n,
            pts.iter().map(|p| p.1).sum::<f64>() / n,
        ));
    }
    let gx = cents.iter().map(|c| c.0).sum::<f64>() / 5.0;
    let gy = cents.iter().map(|c| c.1).sum::<f64>() / 5.0;
    let dists: Vec<f64> = cents
        .iter()
        .map(|c| ((c.0 - gx).powi(2) + (c.1 - gy).powi(2)).sqrt())
        .collect();
    close("max displacement", max, 1.6, TOL)?;
    close("mean displacement", mean, oracle::mean(&dists), TOL)?;
    close("mean hand value", mean, 0.64, TOL)?;
    let m2 = BrainMask::from_voxels(v, [2.0, 2.0, 3.0]).map_err(err)?;
    let (mean2, max2) = centroid_features(&m2, Region::Full).map_err(err)?;
    close("doubled spacing mean", mean2, 2.0 * mean, TOL)?;
    close("doubled spacing max", max2, 2.0 * max, TOL)
}

/// Closing a 5-slice prism of 20 voxels per slice with the middle slice
/// missing adds 20 voxels to the original 80.
pub fn closing_missing_slice() -> Check {
    let mut v = Array3::from_elem((5, 4, 5), true);
    v.index_axis_mut(Axis(2), 2).fill(false);
    // closing by literal definition on each through-plane column
    let mut added = 0usize;
    let original = v.iter().filter(|b| **b).count();
    for col in v.lanes(Axis(2)) {
        let n = col.len();
        let dil: Vec<bool> = (0..n)
            .map(|i| (i.saturating_sub(1)..=(i + 1).min(n - 1)).any(|p| col[p]))
            .collect();
        for i in 0..n {
            let closed = (i as isize - 1..=i as isize + 1)
                .all(|p| p < 0 || p as usize >= n || dil[p as usize]);
            added += usize::from(closed && !col[i]);
        }
    }
    close(
        "oracle vs hand value",
        added as f64 / original as f64,
        0.25,
        1e-15,
    )?;
    let m = BrainMask::from_voxels(v, [1.0, 1.0, 3.0]).map_err(err)?;
    close(
        "closing_mask",
        closing_mask(&m, Region::Full, 1).map_err(err)?,
        0.25,
        TOL,
    )
}

/// Half-space masks: only the last layer inside the bounding box responds,
/// with a single-step-edge stencil value of 1/spacing for the Laplacian
/// and 1/(2 spacing) for the Sobel gradient.
pub fn mask_sharpness_half_space() -> Check {
    let spacing = [1.0, 1.0, 2.0];
    // split across slices (through-plane)
    let v = Array3::from_shape_fn((6, 6, 8), |(_, _, z)| z < 4);
    let data = v.mapv(|b| if b { 1.0 } else { 0.0 });
    let w = [1.0, 1.0, 0.5];
    let mut sum = 0.0;
    for x in 0..6 {
        for y in 0..6 {
            for z in 0..4 {
                sum += oracle::laplacian_at(&data, [x, y, z], w).abs();
            }
        }
    }
    let stencil_mean = sum / (6.0 * 6.0 * 4.0);
    close("stencil vs analytic", stencil_mean, 0.5 / 4.0, 1e-15)?;
    let m = BrainMask::from_voxels(v, spacing).map_err(err)?;
    close(
        "laplace, through-plane edge",
        mask_sharpness(&m, Filter::Laplace).map_err(err)?,
        stencil_mean,
        TOL,
    )?;
    close(
        "sobel, through-plane edge",
        mask_sharpness(&m, Filter::Sobel).map_err(err)?,
        0.5 * 0.5 / 4.0,
        TOL,
    )?;
    // split within the slice plane
    let v = Array3::from_shape_fn((6, 6, 8), |(x, _, _)| x < 3);
    let m = BrainMask::from_voxels(v, spacing).map_err(err)?;
    close(
        "laplace, in-plane edge",
        mask_sharpness(&m, Filter::Laplace).map_err(err)?,
        1.0 / 3.0,
        TOL,
    )?;
    close(
        "sobel, in-plane edge",
        mask_sharpness(&m, Filter::Sobel).map_err(err)?,
        0.5 / 3.0,
        TOL,
    )
}

/// Shifting every other slice sideways roughens the mask surface, which the
/// Laplace response picks up. (The Sobel variant is not monotone here: its
/// cross-axis smoothing spreads the step and the wider bounding box dilutes
/// the mean.)
pub fn mask_sharpness_jitter() -> Check {
    let straight =
        BrainMask::from_voxels(disc((15, 15, 8), 4.0, |_| 0), [1.0, 1.0, 3.0]).map_err(err)?;
    let mut last = mask_sharpness(&straight, Filter::Laplace).map_err(err)?;
    for amp in 1..=2 {
        let jittered = BrainMask::from_voxels(
            disc((15, 15, 8), 4.0, |k| amp * (k % 2) as isize),
            [1.0, 1.0, 3.0],
        )
        .map_err(err)?;
        let b = mask_sharpness(&jittered, Filter::Laplace).map_err(err)?;
        ensure(b > last, || {
            format!("jitter {amp}: response {b} should exceed {last}")
        })?;
        last = b;
    }
    Ok(())
}

/// Two orthogonal equal-energy patterns need rank 2 at threshold 0.9 and
/// reconstruct exactly; noise slices are less compressible than identical
/// ones and match the dense decomposition.
pub fn rank_error_svd() -> Check {
    let v = Array3::from_shape_fn((4, 4, 4), |(_, y, z)| {
        let left = y < 2;
        f64::from(u8::from(if z % 2 == 0 { left } else { !left }))
    });
    let slices: Vec<Vec<f64>> = (0..4).map(|z| slice_values(&v, z)).collect();
    let (r, want) = oracle::rank_error(&slices, 0.9);
    ensure(r == 2, || format!("oracle rank {r}, want 2"))?;
    close("oracle error", want, 0.0, TOL)?;
    let (s, m) = full(v, [1.0, 1.0, 3.0]);
    close(
        "two patterns",
        rank_error(&s, &m, Region::Full, 0.9).map_err(err)?,
        0.0,
        TOL,
    )?;

    let same = Array3::from_shape_fn((6, 6, 5), |(x, y, _)| (x * 6 + y) as f64 + 1.0);
    let (s, m) = full(same, [1.0, 1.0, 3.0]);
    let identical = rank_error(&s, &m, Region::Full, 0.99).map_err(err)?;
    close("identical slices", identical, 0.0, TOL)?;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let noise = Array3::from_shape_simple_fn((8, 8, 8), || rng.gen_range(0.0..1.0));
    let slices: Vec<Vec<f64>> = (0..8).map(|z| slice_values(&noise, z)).collect();
    let (_, want) = oracle::rank_error(&slices, 0.9);
    let (s, m) = full(noise, [1.0, 1.0, 3.0]);
    let got = rank_error(&s, &m, Region::Full, 0.9).map_err(err)?;
    close("noise slices vs dense oracle", got, want, TOL)?;
    ensure(got > identical, || {
        format!("noise {got} should exceed identical {identical}")
    })
}

pub fn iqm_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("slice-loss pair enumeration", slice_loss_pairs()),
        (
            "mutual information histogram",
            mutual_information_histogram(),
        ),
        ("summary statistics", summary_statistics()),
        ("kurtosis Monte-Carlo", normal_kurtosis()),
        ("bias field ordering", bias_field_ordering()),
        ("laplacian impulse stencil", laplacian_impulse()),
        ("mask volume voxel count", random_mask_volume()),
        ("centroid shifted slice", centroid_shifted_slice()),
        ("closing voxel count", closing_missing_slice()),
        (
            "mask sharpness half-space stencil",
            mask_sharpness_half_space(),
        ),
        ("mask sharpness jitter", mask_sharpness_jitter()),
        ("rank error dense SVD", rank_error_svd()),
    ]
}

/// Random score vectors with many ties, lengths 2..=200.
pub fn random_vectors(n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(2..=200);
            let levels = rng.gen_range(2..20) as f64;
            let a: Vec<f64> = (0..len)
                .map(|_| (rng.gen_range(0.0..1.0) * levels).floor() / levels)
                .collect();
            let b: Vec<f64> = (0..len)
                .map(|_| (rng.gen_range(0.0..1.0) * levels).floor() / levels)
                .collect();
            let mut y: Vec<f64> = (0..len)
                .map(|_| f64::from(u8::from(rng.gen_bool(0.5))))
                .collect();
            y[0] = 0.0;
            y[1] = 1.0;
            (a, b, y)
        })
        .collect()
}

/// Evaluation metrics against their brute-force definitions.
pub fn metric_oracles(n: usize, seed: u64, tol: f64) -> Check {
    for (a, b, y) in random_vectors(n, seed) {
        close("mae", metrics::mae(&a, &b), oracle::mae(&a, &b), tol)?;
        close(
            "spearman",
            metrics::spearman(&a, &b),
            oracle::spearman(&a, &b),
            tol,
        )?;
        close("f1", metrics::f1(&y, &a), oracle::f1(&y, &a), tol)?;
        close(
            "auc",
            metrics::auc(&y, &a).map_err(err)?,
            oracle::auc(&y, &a),
            tol,
        )?;
    }
    let got = metrics::auc(&[0.0, 0.0, 1.0, 1.0], &[0.1, 0.4, 0.35, 0.8]).map_err(err)?;
    ensure(got == 0.75, || format!("worked AUC example gave {got}"))
}
