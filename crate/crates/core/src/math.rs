//! Small dense-vector helpers shared by the learners and the oracles.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `log(sum(exp(v)))` with max subtraction. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-domain weights into a probability mass function.
pub fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let lse = logsumexp(log_weights);
    let mut pmf: Vec<f64> = log_weights.iter().map(|w| (w - lse).exp()).collect();
    // Renormalize the rounding residue so the entries sum to one.
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|q| *q /= total);
    pmf
}

/// Inverse-CDF draw from `pmf` given a uniform `u` in `[0, 1)`.
///
/// Zero-probability entries are never returned.
pub fn sample_index(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &q) in pmf.iter().enumerate() {
        if q <= 0.0 {
            continue;
        }
        acc += q;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Total-variation distance `0.5 * sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
