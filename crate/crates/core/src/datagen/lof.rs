use ndarray::{Array1, Array2, ArrayView1};

use crate::{Error, Result};

const REACH_FLOOR: f64 = 1e-12;

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Negative local outlier factor per row (Euclidean distance): inliers score
/// near −1, outliers below.
///
/// The k-neighbourhood of `p` contains every other point within its
/// k-distance, so ties can make it larger than `k`.
pub fn lof_scores(points: &Array2<f64>, k: usize) -> Result<Array1<f64>> {
    let n = points.nrows();
    if k == 0 || n <= k {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= k < number of points, got k = {k}, n = {n}"
        )));
    }
    let mut kdist = vec![0.0; n];
    let mut neighbours: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut row = vec![0.0; n];
    for p in 0..n {
        let pp = points.row(p);
        for (q, slot) in row.iter_mut().enumerate() {
            *slot = if q == p {
                f64::INFINITY
            } else {
                dist(pp, points.row(q))
            };
        }
        let mut sorted = row.clone();
        let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
        let kd = *kth;
        kdist[p] = kd;
        neighbours.push(
            row.iter()
                .enumerate()
                .filter(|&(q, &d)| q != p && d <= kd)
                .map(|(q, &d)| (q, d))
                .collect(),
        );
    }
    let lrd: Vec<f64> = neighbours
        .iter()
        .map(|nb| {
            let mean_reach =
                nb.iter().map(|&(o, d)| kdist[o].max(d)).sum::<f64>() / nb.len() as f64;
            1.0 / mean_reach.max(REACH_FLOOR)
        })
        .collect();
    Ok(neighbours
        .iter()
        .enumerate()
        .map(|(p, nb)| -nb.iter().map(|&(o, _)| lrd[o]).sum::<f64>() / (nb.len() as f64 * lrd[p]))
        .collect())
}
