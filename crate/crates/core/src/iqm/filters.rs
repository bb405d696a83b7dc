//! Separable 3D filters with edge-replicating borders.

use ndarray::{Array3, Axis, Zip};

#[inline]
fn clamp_shift(i: usize, delta: isize, len: usize) -> usize {
    (i as isize + delta).clamp(0, len as isize - 1) as usize
}

/// 6-neighbour discrete Laplacian; the second difference along each axis is
/// multiplied by `axis_weight[axis]`.
pub fn laplace(volume: &Array3<f64>, axis_weight: [f64; 3]) -> Array3<f64> {
    let dims = volume.dim();
    let len = [dims.0, dims.1, dims.2];
    Array3::from_shape_fn(dims, |(i, j, k)| {
        let idx = [i, j, k];
        let c = volume[[i, j, k]];
        let mut acc = 0.0;
        for ax in 0..3 {
            let mut lo = idx;
            let mut hi = idx;
            lo[ax] = clamp_shift(idx[ax], -1, len[ax]);
            hi[ax] = clamp_shift(idx[ax], 1, len[ax]);
            acc += axis_weight[ax] * (volume[lo] + volume[hi] - 2.0 * c);
        }
        acc
    })
}

/// Applies the 1D kernel `[w0, w1, w2]` centred on each voxel along `axis`.
fn correlate3(volume: &Array3<f64>, axis: usize, kernel: [f64; 3]) -> Array3<f64> {
    let dims = volume.dim();
    let len = [dims.0, dims.1, dims.2];
    Array3::from_shape_fn(dims, |(i, j, k)| {
        let idx = [i, j, k];
        let mut lo = idx;
        let mut hi = idx;
        lo[axis] = clamp_shift(idx[axis], -1, len[axis]);
        hi[axis] = clamp_shift(idx[axis], 1, len[axis]);
        kernel[0] * volume[lo] + kernel[1] * volume[[i, j, k]] + kernel[2] * volume[hi]
    })
}

/// Sobel derivative along `axis`, normalised so that a unit-per-voxel ramp
/// has response 1.
pub fn sobel_axis(volume: &Array3<f64>, axis: usize) -> Array3<f64> {
    let mut out = correlate3(volume, axis, [-0.5, 0.0, 0.5]);
    for other in (0..3).filter(|&a| a != axis) {
        out = correlate3(&out, other, [0.25, 0.5, 0.25]);
    }
    out
}

/// Gradient magnitude from per-axis Sobel derivatives scaled by `axis_weight`.
pub fn sobel_magnitude(volume: &Array3<f64>, axis_weight: [f64; 3]) -> Array3<f64> {
    let mut acc = Array3::<f64>::zeros(volume.dim());
    for (ax, w) in axis_weight.iter().enumerate() {
        let g = sobel_axis(volume, ax);
        Zip::from(&mut acc)
            .and(&g)
            .for_each(|a, &g| *a += (w * g) * (w * g));
    }
    acc.mapv_inplace(f64::sqrt);
    acc
}

fn gaussian_kernel(sigma: f64, max_radius: usize) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = ((3.0 * sigma).ceil() as usize).min(max_radius);
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn convolve_axis(volume: &Array3<f64>, axis: usize, kernel: &[f64]) -> Array3<f64> {
    if kernel.len() == 1 {
        return volume.clone();
    }
    let radius = (kernel.len() / 2) as isize;
    let mut out = Array3::<f64>::zeros(volume.dim());
    let n = volume.len_of(Axis(axis));
    for (src, mut dst) in volume
        .lanes(Axis(axis))
        .into_iter()
        .zip(out.lanes_mut(Axis(axis)))
    {
        for i in 0..n {
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                // zero outside the grid; callers normalise by a convolved weight map
                let p = i as isize + t as isize - radius;
                if p >= 0 && (p as usize) < n {
                    acc += w * src[p as usize];
                }
            }
            dst[i] = acc;
        }
    }
    out
}

/// Separable Gaussian smoothing with zero padding; `sigma` in voxels per axis.
pub fn gaussian(volume: &Array3<f64>, sigma: [f64; 3]) -> Array3<f64> {
    let dims = volume.dim();
    let len = [dims.0, dims.1, dims.2];
    let mut out = volume.clone();
    for ax in 0..3 {
        let k = gaussian_kernel(sigma[ax], len[ax].saturating_sub(1));
        out = convolve_axis(&out, ax, &k);
    }
    out
}
