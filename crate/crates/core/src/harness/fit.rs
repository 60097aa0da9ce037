use serde::{Deserialize, Serialize};

/// Two-level extrapolation assuming an O(h²) error: `coarse` at size
/// `h_coarse`, `fine` at `h_fine`.
pub fn richardson_ratio(coarse: f64, fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    let r2 = (h_coarse / h_fine).powi(2);
    fine + (fine - coarse) / (r2 - 1.0)
}

/// Extrapolation for a halved mesh size: b + (b − a)/3.
pub fn richardson(a: f64, b: f64) -> f64 {
    richardson_ratio(a, b, 2.0, 1.0)
}

/// Observed convergence order from three levels with a constant size ratio.
pub fn observed_order(v: [f64; 3], ratio: f64) -> Option<f64> {
    let d0 = v[0] - v[1];
    let d1 = v[1] - v[2];
    if d0 == 0.0 || d1 == 0.0 || d0.signum() != d1.signum() {
        return None;
    }
    Some((d0 / d1).ln() / ratio.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub alpha: f64,
    pub c: f64,
    pub points: usize,
}

/// Least-squares fit of gap ≈ c·ε^α on log-log axes. Needs at least two
/// strictly positive gaps.
pub fn fit_rate(eps: &[f64], gaps: &[f64]) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(gaps)
        .filter(|(e, g)| **e > 0.0 && **g > 0.0 && g.is_finite())
        .map(|(e, g)| (e.ln(), g.ln()))
        .collect();
    if pts.len() < 2 || pts.len() != eps.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let alpha = sxy / sxx;
    Some(RateFit {
        alpha,
        c: (my - alpha * mx).exp(),
        points: pts.len(),
    })
}
