//! Order-of-accuracy fitting for convergence studies.

/// Pairwise observed orders `ln(e_i / e_{i+1}) / ln(h_i / h_{i+1})`.
pub fn local_orders(resolutions: &[f64], errors: &[f64]) -> Vec<f64> {
    resolutions
        .windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Least-squares slope of `ln e` against `ln h`.
pub fn fitted_order(resolutions: &[f64], errors: &[f64]) -> f64 {
    let n = resolutions.len() as f64;
    let xs: Vec<f64> = resolutions.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    num / den
}

/// Fit the order over the pre-plateau range only: points whose error exceeds
/// `floor` (e.g. the accuracy floor set by round-off or event localization).
pub fn fitted_order_above(resolutions: &[f64], errors: &[f64], floor: f64) -> f64 {
    let (hs, es): (Vec<f64>, Vec<f64>) = resolutions
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > floor)
        .map(|(&h, &e)| (h, e))
        .unzip();
    fitted_order(&hs, &es)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_clean_power_law() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let es: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((fitted_order(&hs, &es) - 2.0).abs() < 1e-12);
        for q in local_orders(&hs, &es) {
            assert!((q - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plateau_points_are_excluded() {
        let hs = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        let es: Vec<f64> = hs.iter().map(|h: &f64| h.powi(4).max(1e-13)).collect();
        let q = fitted_order_above(&hs, &es, 1e-12);
        assert!((q - 4.0).abs() < 0.05, "q = {q}");
    }
}
