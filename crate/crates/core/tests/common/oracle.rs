//! Brute-force reference implementations.

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns the
/// eigenvalues and the eigenvectors as columns of `v` (`v[row][col]`).
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let scale: f64 = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (a[k][p], a[k][q]);
                    a[k][p] = c * kp - s * kq;
                    a[k][q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Linear-interpolation percentile, `q` in [0, 100].
pub fn percentile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Average ranks (1-based) by counting, O(n²).
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// F1 of the positive class from explicit precision and recall.
pub fn f1(y: &[f64], s: &[f64]) -> f64 {
    let pred: Vec<bool> = s.iter().map(|v| *v >= 0.5).collect();
    let truth: Vec<bool> = y.iter().map(|v| *v >= 0.5).collect();
    let tp = pred.iter().zip(&truth).filter(|(p, t)| **p && **t).count() as f64;
    let n_pred = pred.iter().filter(|p| **p).count() as f64;
    let n_true = truth.iter().filter(|t| **t).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let (precision, recall) = (tp / n_pred, tp / n_true);
    2.0 * precision * recall / (precision + recall)
}

/// AUC by counting every positive-negative pair, ties one half.
pub fn auc(y: &[f64], s: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] >= 0.5 && y[j] < 0.5 {
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn bin(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        0
    } else {
        (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
    }
}

/// Mutual information in bits from the joint histogram, summing
/// p(x,y) log p(x,y) / (p(x) p(y)).
pub fn mutual_information(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let lo_a = a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_a = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo_b = b.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_b = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = a.len() as f64;
    let mut joint = vec![vec![0.0; bins]; bins];
    for (x, y) in a.iter().zip(b) {
        joint[bin(*x, lo_a, hi_a, bins)][bin(*y, lo_b, hi_b, bins)] += 1.0 / n;
    }
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let pb: Vec<f64> = (0..bins)
        .map(|j| joint.iter().map(|r| r[j]).sum())
        .collect();
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            if joint[i][j] > 0.0 {
                mi += joint[i][j] * (joint[i][j] / (pa[i] * pb[j])).log2();
            }
        }
    }
    mi
}

/// 6-neighbour Laplacian at one voxel with replicated borders and a weight
/// per axis.
pub fn laplacian_at(v: &ndarray::Array3<f64>, at: [usize; 3], w: [f64; 3]) -> f64 {
    let dims = v.dim();
    let len = [dims.0, dims.1, dims.2];
    let c = v[at];
    let mut acc = 0.0;
    for ax in 0..3 {
        let mut lo = at;
        let mut hi = at;
        lo[ax] = at[ax].saturating_sub(1);
        hi[ax] = (at[ax] + 1).min(len[ax] - 1);
        acc += w[ax] * (v[lo] + v[hi] - 2.0 * c);
    }
    acc
}

/// The rank-error definition evaluated literally: slices are the columns
/// of `m`, the right singular vectors come from the Jacobi decomposition
/// of the Gram matrix, and the error is the Frobenius norm of the residual
/// of the explicit rank-r projection.
pub fn rank_error(slices: &[Vec<f64>], threshold: f64) -> (usize, f64) {
    let n = slices.len();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| slices[i].iter().zip(&slices[j]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let (vals, vecs) = jacobi_eigen(&gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let energy: Vec<f64> = order.iter().map(|&k| vals[k].max(0.0)).collect();
    let total: f64 = energy.iter().sum();
    let mut r = n;
    let mut acc = 0.0;
    for (i, e) in energy.iter().enumerate() {
        acc += e;
        if acc / total >= threshold {
            r = i + 1;
            break;
        }
    }
    // M_r = M V_r V_r^T; coefficients of slice j on the kept directions
    let len = slices[0].len();
    let mut resid2 = 0.0;
    let mut norm2 = 0.0;
    for j in 0..n {
        let mut approx = vec![0.0; len];
        for &k in &order[..r] {
            let w = vecs[j][k];
            for (jj, s) in slices.iter().enumerate() {
                let coef = vecs[jj][k] * w;
                for (a, x) in approx.iter_mut().zip(s) {
                    *a += coef * x;
                }
            }
        }
        for (a, x) in approx.iter().zip(&slices[j]) {
            resid2 += (x - a) * (x - a);
            norm2 += x * x;
        }
    }
    (r, r as f64 / n as f64 * (resid2 / norm2).sqrt())
}
