//! Brute-force Besov projection for small J.

/// Exact projection of θ onto {Σ_{j≥k} η_j² ≤ b_k, k = 1..J} by enumerating
/// active sets. With actives k_1 < … < k_m, η_j = f_i·θ_j on [k_i, k_{i+1}),
/// η_j = θ_j before k_1, and each active constraint holds with equality. The
/// multipliers are 1/f_i − 1/f_{i−1} ≥ 0 with f_0 = 1, so the factors must
/// be non-increasing and at most one. The unique point passing these checks
/// and primal feasibility is the projection.
pub fn kkt_projection(theta: &[f64], bounds: &[f64]) -> Option<Vec<f64>> {
    let len = theta.len();
    let mut found: Option<Vec<f64>> = None;
    for mask in 0u32..(1 << len) {
        let active: Vec<usize> = (0..len).filter(|i| mask & (1 << i) != 0).collect();
        let mut factors = vec![1.0; len];
        let mut ok = true;
        let mut later = 0.0;
        for (pos, &k) in active.iter().enumerate().rev() {
            let end = active.get(pos + 1).copied().unwrap_or(len);
            let energy: f64 = theta[k..end].iter().map(|t| t * t).sum();
            let budget = bounds[k] - later;
            if energy <= 0.0 || budget <= 0.0 {
                ok = false;
                break;
            }
            let f = (budget / energy).sqrt();
            factors[k..end].iter_mut().for_each(|x| *x = f);
            later = bounds[k];
        }
        if !ok {
            continue;
        }
        let mut prev = 1.0;
        for &k in &active {
            if factors[k] > prev + 1e-12 {
                ok = false;
            }
            prev = factors[k];
        }
        let eta: Vec<f64> = theta.iter().zip(&factors).map(|(t, f)| t * f).collect();
        let mut tail = 0.0;
        for k in (0..len).rev() {
            tail += eta[k] * eta[k];
            if tail > bounds[k] * (1.0 + 1e-10) + 1e-14 {
                ok = false;
            }
        }
        if ok {
            assert!(found.is_none(), "two KKT points for {theta:?}");
            found = Some(eta);
        }
    }
    found
}
