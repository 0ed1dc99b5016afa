use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Mutual information (nats) of a joint distribution given as a matrix of
/// non-negative entries summing to one. 0 log 0 is treated as 0.
pub fn mutual_information(joint: ArrayView2<f64>) -> Result<f64> {
    if joint.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid("joint entries must be finite and non-negative"));
    }
    let total: f64 = joint.sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "joint must sum to 1, got {total}"
        )));
    }
    let rows: Vec<f64> = joint.rows().into_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = joint.columns().into_iter().map(|c| c.sum()).collect();
    let mut info = 0.0;
    for (i, row) in joint.rows().into_iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                info += p * (p / (rows[i] * cols[j])).ln();
            }
        }
    }
    Ok(info)
}

/// Weighted Jensen-Shannon divergence between two distributions with
/// non-negative weights (w_p, w_q); the mixture weights are the normalized
/// pair. Zero entries contribute nothing.
pub fn weighted_js(p: &[f64], q: &[f64], w_p: f64, w_q: f64) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let total = w_p + w_q;
    if total <= 0.0 {
        return 0.0;
    }
    let (pi_p, pi_q) = (w_p / total, w_q / total);
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q.iter()) {
        let m = pi_p * a + pi_q * b;
        if a > 0.0 {
            js += pi_p * a * (a / m).ln();
        }
        if b > 0.0 {
            js += pi_q * b * (b / m).ln();
        }
    }
    js
}
