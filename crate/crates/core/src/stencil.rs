//! Five-point finite-difference kernels on uniform grids.
//!
//! Interior points use centered O(h⁴) stencils; the two points at each edge
//! fall back to one-sided formulas of the same width. The integrator does not
//! propagate derivatives, so everything downstream differentiates sampled
//! arrays through these kernels.

/// First derivative of uniformly sampled values, spacing `h`.
pub fn derivative1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "stencils need at least 5 samples");
    let mut d = vec![0.0; n];
    let c = 1.0 / (12.0 * h);

    d[0] = c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
    d[1] = c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
    for i in 2..n - 2 {
        d[i] = c * (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]);
    }
    d[n - 2] = c * (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]);
    d[n - 1] = c
        * (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]);
    d
}

/// Second derivative of uniformly sampled values, spacing `h`.
pub fn derivative2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "stencils need at least 5 samples");
    let mut d = vec![0.0; n];
    let c = 1.0 / (12.0 * h * h);

    d[0] = c * (35.0 * f[0] - 104.0 * f[1] + 114.0 * f[2] - 56.0 * f[3] + 11.0 * f[4]);
    d[1] = c * (11.0 * f[0] - 20.0 * f[1] + 6.0 * f[2] + 4.0 * f[3] - f[4]);
    for i in 2..n - 2 {
        d[i] = c * (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]);
    }
    d[n - 2] = c * (11.0 * f[n - 1] - 20.0 * f[n - 2] + 6.0 * f[n - 3] + 4.0 * f[n - 4] - f[n - 5]);
    d[n - 1] = c
        * (35.0 * f[n - 1] - 104.0 * f[n - 2] + 114.0 * f[n - 3] - 56.0 * f[n - 4]
            + 11.0 * f[n - 5]);
    d
}

/// Centered first derivative at a single interior index (i ± 2 must exist).
#[inline]
pub fn derivative1_at(f: &[f64], i: usize, h: f64) -> f64 {
    (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
}
