//! Small Gauss-Legendre quadrature helper used by kernel normalization and
//! Chapman-Kolmogorov checks.

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre nodes/weights mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| half * w).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        // 8-point rule is exact through degree 15.
        let (xs, ws) = gauss_legendre_on(8, 0.0, 1.0);
        let value: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| w * x.powi(15))
            .sum();
        assert!((value - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn integrates_gaussian_accurately() {
        let (xs, ws) = gauss_legendre_on(48, -8.0, 8.0);
        let value: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| w * (-0.5 * x * x).exp())
            .sum();
        assert!((value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }
}
