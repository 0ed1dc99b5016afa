//! Diagonal-covariance Gaussian mixtures: EM fitting with seeded k-means++
//! initialization, log-domain posterior and likelihood scoring, and a
//! versioned JSON persistence format.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
const CONVERGENCE_TOL: f64 = 1e-6;

/// Fitted diagonal-covariance mixture. Weights form a simplex; every
/// variance is at or above [`VARIANCE_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
}

/// Total data log-likelihood after each EM iteration.
#[derive(Debug, Clone)]
pub struct EmReport {
    pub log_likelihood: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Array2<f64>, variances: Array2<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.nrows() != k || variances.dim() != means.dim() {
            return Err(Error::invalid("inconsistent mixture shapes"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::invalid("weights must form a simplex"));
        }
        if variances.iter().any(|v| *v < VARIANCE_FLOOR) {
            return Err(Error::invalid("variance below floor"));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn variances(&self) -> ArrayView2<'_, f64> {
        self.variances.view()
    }

    /// Log density of one frame under component `k`, without the weight.
    fn component_log_density(&self, k: usize, frame: ArrayView1<f64>) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.dims() {
            let var = self.variances[[k, d]];
            let diff = frame[d] - self.means[[k, d]];
            acc += (2.0 * std::f64::consts::PI * var).ln() + diff * diff / var;
        }
        -0.5 * acc
    }

    /// Per-component weighted log densities ln(w_k) + ln N(x; mu_k, var_k).
    fn weighted_log_densities(&self, frame: ArrayView1<f64>) -> Result<Vec<f64>> {
        if frame.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: frame.len(),
            });
        }
        Ok((0..self.n_components())
            .map(|k| self.weights[k].max(f64::MIN_POSITIVE).ln() + self.component_log_density(k, frame))
            .collect())
    }

    /// Log mixture density of one frame, computed with log-sum-exp.
    pub fn log_density(&self, frame: ArrayView1<f64>) -> Result<f64> {
        Ok(log_sum_exp(&self.weighted_log_densities(frame)?))
    }

    /// Posterior p(component | frame); non-negative and summing to one.
    pub fn posteriors(&self, frame: ArrayView1<f64>) -> Result<Vec<f64>> {
        let logs = self.weighted_log_densities(frame)?;
        let lse = log_sum_exp(&logs);
        let mut p: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        Ok(p)
    }

    /// Mean per-frame log density over a data matrix (nats per frame).
    pub fn avg_log_likelihood(&self, data: ArrayView2<f64>) -> Result<f64> {
        if data.nrows() == 0 {
            return Err(Error::invalid("cannot score an empty data matrix"));
        }
        let mut acc = 0.0;
        for row in data.rows() {
            acc += self.log_density(row)?;
        }
        Ok(acc / data.nrows() as f64)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = GmmFile {
            format_version: FORMAT_VERSION,
            weights: self.weights.clone(),
            means: matrix_to_rows(&self.means),
            variances: matrix_to_rows(&self.variances),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let file: GmmFile = serde_json::from_str(&text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported mixture format version {}",
                file.format_version
            )));
        }
        let means = rows_to_matrix(&file.means)?;
        let variances = rows_to_matrix(&file.variances)?;
        Self::new(file.weights, means, variances)
    }
}

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GmmFile {
    format_version: u32,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

pub(crate) fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    if rows.is_empty() {
        return Err(Error::invalid("empty matrix"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|e| Error::invalid(format!("bad matrix shape: {e}")))
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Fits a diagonal GMM by EM with k-means++ initialization.
///
/// Deterministic for a given seed. Stops when the mean per-frame
/// log-likelihood improves by less than 1e-6 or after `max_iters`.
pub fn fit_em(data: ArrayView2<f64>, k: usize, max_iters: usize, seed: u64) -> Result<GaussianMixture> {
    fit_em_traced(data, k, max_iters, seed).map(|(g, _)| g)
}

/// [`fit_em`] plus the per-iteration total log-likelihood trace.
pub fn fit_em_traced(
    data: ArrayView2<f64>,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(GaussianMixture, EmReport)> {
    let n = data.nrows();
    let d = data.ncols();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if n < k {
        return Err(Error::invalid(format!(
            "need at least k={k} rows, got {n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp_centers(data, k, &mut rng);

    // Hard-assign to the initial centers for starting statistics.
    let mut weights = vec![0.0f64; k];
    let mut means: Array2<f64> = Array2::zeros((k, d));
    let mut variances: Array2<f64> = Array2::zeros((k, d));
    {
        let mut counts = vec![0usize; k];
        let mut assign = vec![0usize; n];
        for (i, row) in data.rows().into_iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dist: f64 = row
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            assign[i] = best;
            counts[best] += 1;
        }
        for (i, row) in data.rows().into_iter().enumerate() {
            for j in 0..d {
                means[[assign[i], j]] += row[j];
            }
        }
        for c in 0..k {
            let denom = counts[c].max(1) as f64;
            for j in 0..d {
                means[[c, j]] /= denom;
            }
            if counts[c] == 0 {
                for j in 0..d {
                    means[[c, j]] = centers[c][j];
                }
            }
        }
        for (i, row) in data.rows().into_iter().enumerate() {
            for j in 0..d {
                let diff = row[j] - means[[assign[i], j]];
                variances[[assign[i], j]] += diff * diff;
            }
        }
        for c in 0..k {
            let denom = counts[c].max(1) as f64;
            for j in 0..d {
                variances[[c, j]] = (variances[[c, j]] / denom).max(VARIANCE_FLOOR);
            }
            weights[c] = (counts[c] as f64 / n as f64).max(1e-10);
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
    }

    let mut gmm = GaussianMixture {
        weights,
        means,
        variances,
    };
    let mut trace: Vec<f64> = Vec::new();
    let mut resp: Array2<f64> = Array2::zeros((n, k));

    for _ in 0..max_iters {
        // E-step in the log domain.
        let mut total_ll = 0.0;
        for (i, row) in data.rows().into_iter().enumerate() {
            let logs = gmm.weighted_log_densities(row)?;
            let lse = log_sum_exp(&logs);
            total_ll += lse;
            for c in 0..k {
                resp[[i, c]] = (logs[c] - lse).exp();
            }
        }
        if let Some(&prev) = trace.last() {
            if ((total_ll - prev) / n as f64).abs() < CONVERGENCE_TOL {
                trace.push(total_ll);
                break;
            }
        }
        trace.push(total_ll);

        // M-step.
        let mut nk = vec![0.0f64; k];
        for i in 0..n {
            for c in 0..k {
                nk[c] += resp[[i, c]];
            }
        }
        let mut means: Array2<f64> = Array2::zeros((k, d));
        for (i, row) in data.rows().into_iter().enumerate() {
            for c in 0..k {
                let r = resp[[i, c]];
                if r > 0.0 {
                    for j in 0..d {
                        means[[c, j]] += r * row[j];
                    }
                }
            }
        }
        for c in 0..k {
            let denom = nk[c].max(1e-300);
            for j in 0..d {
                means[[c, j]] /= denom;
            }
        }
        let mut variances: Array2<f64> = Array2::zeros((k, d));
        for (i, row) in data.rows().into_iter().enumerate() {
            for c in 0..k {
                let r = resp[[i, c]];
                if r > 0.0 {
                    for j in 0..d {
                        let diff = row[j] - means[[c, j]];
                        variances[[c, j]] += r * diff * diff;
                    }
                }
            }
        }
        for c in 0..k {
            let denom = nk[c].max(1e-300);
            for j in 0..d {
                variances[[c, j]] = (variances[[c, j]] / denom).max(VARIANCE_FLOOR);
            }
        }
        let mut weights: Vec<f64> = nk.iter().map(|v| (v / n as f64).max(1e-300)).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }

        gmm = GaussianMixture {
            weights,
            means,
            variances,
        };
    }

    Ok((
        gmm,
        EmReport {
            log_likelihood: trace,
        },
    ))
}

fn kmeans_pp_centers(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.nrows();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data.row(rng.gen_range(0..n)).to_vec());
    let mut best_dist = vec![f64::INFINITY; n];
    while centers.len() < k {
        let last = centers.last().unwrap();
        for (i, row) in data.rows().into_iter().enumerate() {
            let dist: f64 = row
                .iter()
                .zip(last.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best_dist[i] {
                best_dist[i] = dist;
            }
        }
        let total: f64 = best_dist.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &dd) in best_dist.iter().enumerate() {
                r -= dd;
                if r <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(data.row(idx).to_vec());
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_chacha::ChaCha8Rng;

    fn blob(center: (f64, f64), sigma: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
        // Box-Muller keeps the test free of distribution crates.
        (0..count)
            .map(|_| {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let r = (-2.0 * u1.ln()).sqrt();
                let (x, y) = (
                    r * (2.0 * std::f64::consts::PI * u2).cos(),
                    r * (2.0 * std::f64::consts::PI * u2).sin(),
                );
                [center.0 + sigma * x, center.1 + sigma * y]
            })
            .collect()
    }

    fn to_matrix(rows: &[[f64; 2]]) -> Array2<f64> {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Array2::from_shape_vec((rows.len(), 2), flat).unwrap()
    }

    #[test]
    fn single_component_matches_sample_statistics() {
        let data = array![[1.0, 2.0], [3.0, 6.0], [5.0, 4.0], [7.0, 0.0]];
        let gmm = fit_em(data.view(), 1, 100, 0).unwrap();
        let n = data.nrows() as f64;
        for j in 0..2 {
            let mean = data.column(j).sum() / n;
            let var = data.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!((gmm.means()[[0, j]] - mean).abs() < 1e-9);
            assert!((gmm.variances()[[0, j]] - var).abs() < 1e-9);
        }
        assert!((gmm.weights()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_separated_blobs_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = blob((0.0, 0.0), 0.5, 500, &mut rng);
        pts.extend(blob((10.0, 10.0), 0.5, 500, &mut rng));
        let data = to_matrix(&pts);
        let gmm = fit_em(data.view(), 2, 100, 1).unwrap();
        let mut centers: Vec<Vec<f64>> =
            (0..2).map(|c| gmm.means().row(c).to_vec()).collect();
        centers.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!((centers[0][0]).abs() < 0.2 && (centers[0][1]).abs() < 0.2);
        assert!((centers[1][0] - 10.0).abs() < 0.2 && (centers[1][1] - 10.0).abs() < 0.2);
    }

    #[test]
    fn em_log_likelihood_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut pts = blob((0.0, 0.0), 1.0, 200, &mut rng);
        pts.extend(blob((3.0, 1.0), 0.7, 150, &mut rng));
        pts.extend(blob((-2.0, 4.0), 1.2, 120, &mut rng));
        let data = to_matrix(&pts);
        let (_, report) = fit_em_traced(data.view(), 3, 100, 2).unwrap();
        for w in report.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "log-likelihood dropped: {w:?}");
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts = blob((1.0, -1.0), 2.0, 300, &mut rng);
        let data = to_matrix(&pts);
        let a = fit_em(data.view(), 3, 50, 7).unwrap();
        let b = fit_em(data.view(), 3, 50, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_identical_rows_floors_variance() {
        let data = Array2::from_elem((20, 3), 1.5);
        let gmm = fit_em(data.view(), 2, 50, 0).unwrap();
        assert!(gmm.variances().iter().all(|&v| v >= VARIANCE_FLOOR));
    }

    #[test]
    fn posterior_at_component_mean_dominates() {
        let gmm = GaussianMixture::new(
            vec![0.5, 0.5],
            array![[0.0, 0.0], [8.0, 8.0]],
            array![[0.25, 0.25], [0.25, 0.25]],
        )
        .unwrap();
        let p = gmm.posteriors(array![8.0, 8.0].view()).unwrap();
        assert!(p[1] > 0.99);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_component_posterior_is_one() {
        let gmm = GaussianMixture::new(vec![1.0], array![[2.0]], array![[1.0]]).unwrap();
        let p = gmm.posteriors(array![5.0].view()).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn posteriors_match_direct_evaluation() {
        let gmm = GaussianMixture::new(
            vec![0.3, 0.45, 0.25],
            array![[0.0, 1.0], [2.0, -1.0], [-1.5, 0.5]],
            array![[1.0, 0.5], [0.8, 1.2], [0.6, 0.9]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let frame = array![x[0], x[1]];
            // Direct linear-domain densities.
            let mut dens = [0.0f64; 3];
            for c in 0..3 {
                let mut p = gmm.weights()[c];
                for j in 0..2 {
                    let var = gmm.variances()[[c, j]];
                    let diff = x[j] - gmm.means()[[c, j]];
                    p *= (-0.5 * diff * diff / var).exp()
                        / (2.0 * std::f64::consts::PI * var).sqrt();
                }
                dens[c] = p;
            }
            let total: f64 = dens.iter().sum();
            let post = gmm.posteriors(frame.view()).unwrap();
            for c in 0..3 {
                assert!((post[c] - dens[c] / total).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn posterior_rejects_dimension_mismatch() {
        let gmm = GaussianMixture::new(vec![1.0], array![[0.0, 0.0]], array![[1.0, 1.0]]).unwrap();
        assert!(gmm.posteriors(array![1.0].view()).is_err());
    }

    #[test]
    fn avg_ll_at_unit_gaussian_mean() {
        let gmm = GaussianMixture::new(vec![1.0], array![[0.0]], array![[1.0]]).unwrap();
        let data = array![[0.0]];
        let ll = gmm.avg_log_likelihood(data.view()).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn avg_ll_invariant_under_duplication() {
        let gmm = GaussianMixture::new(vec![1.0], array![[0.0]], array![[2.0]]).unwrap();
        let data = array![[0.1], [0.7], [-1.3]];
        let doubled = ndarray::concatenate![ndarray::Axis(0), data, data];
        let a = gmm.avg_log_likelihood(data.view()).unwrap();
        let b = gmm.avg_log_likelihood(doubled.view()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn avg_ll_prefers_matching_data() {
        let gmm = GaussianMixture::new(
            vec![0.6, 0.4],
            array![[0.0, 0.0], [4.0, 4.0]],
            array![[1.0, 1.0], [1.0, 1.0]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut own = Vec::new();
        let mut shifted = Vec::new();
        for _ in 0..400 {
            let c = if rng.gen::<f64>() < 0.6 { 0 } else { 1 };
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let g0 = r * (2.0 * std::f64::consts::PI * u2).cos();
            let g1 = r * (2.0 * std::f64::consts::PI * u2).sin();
            let base = if c == 0 { 0.0 } else { 4.0 };
            own.push([base + g0, base + g1]);
            shifted.push([base + 10.0 + g0, base + 10.0 + g1]);
        }
        let own = to_matrix(&own);
        let shifted = to_matrix(&shifted);
        assert!(
            gmm.avg_log_likelihood(own.view()).unwrap()
                > gmm.avg_log_likelihood(shifted.view()).unwrap()
        );
    }

    #[test]
    fn empty_data_is_error() {
        let gmm = GaussianMixture::new(vec![1.0], array![[0.0]], array![[1.0]]).unwrap();
        let data = Array2::<f64>::zeros((0, 1));
        assert!(gmm.avg_log_likelihood(data.view()).is_err());
    }

    #[test]
    fn json_persistence_roundtrip_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = blob((0.7, -0.3), 1.3, 100, &mut rng);
        let gmm = fit_em(to_matrix(&pts).view(), 3, 40, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gmm.json");
        gmm.save(&path).unwrap();
        let back = GaussianMixture::load(&path).unwrap();
        assert_eq!(gmm, back);
    }
}
