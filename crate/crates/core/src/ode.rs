//! Numerical solutions of −ψ″ + V ψ = E ψ at arbitrary energy.
//!
//! Solutions are produced by the Numerov three-term recurrence (local error
//! O(h⁶)) seeded in the classically forbidden region with the WKB ansatz
//! ψ ∝ exp(−∫√(V−E)), sweeping inward so that seed inaccuracies decay
//! relative to the dominated solution. Stored samples are max-normalized with
//! the removed amplitude kept as a log-scale.
//!
//! Node counting and sign analysis use per-sample significance floors: a raw
//! recurrence solution is relatively accurate everywhere, but mixtures and
//! operator outputs carry a cancellation noise scale per sample, and sign
//! changes below that scale are treated as noise rather than zeros.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::grid::Grid;
use crate::potential::Potential;
use crate::stencil;
use crate::Result;

/// Sign-significance factor: samples below `NODE_NOISE_FACTOR × noise_scale`
/// do not participate in node counting or crossing detection.
pub const NODE_NOISE_FACTOR: f64 = 1e-12;

/// Absolute floor (relative to max|ψ|) below which samples are treated as
/// underflow junk regardless of the local noise scale.
pub const UNDERFLOW_FLOOR: f64 = 1e-280;

/// Rescale trigger during the Numerov sweep.
const RESCALE_LIMIT: f64 = 1e250;

/// Fraction of the grid used for the tail log-slope fits.
const TAIL_FRACTION: f64 = 0.10;

/// Minimum |Δ log ψ| across the fit window for a decisive tail verdict.
const TAIL_DECISIVE_LOG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Per-side asymptotic tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideClass {
    Decaying,
    Growing,
    Undetermined,
}

/// Whole-line asymptotic class of a gap solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymClass {
    /// Decays at −∞, grows at +∞.
    ZeroLeft,
    /// Decays at +∞, grows at −∞.
    ZeroRight,
    /// Decays at both infinities (bound state).
    ZeroBoth,
    /// Grows at both infinities.
    GrowingBoth,
}

/// Grid samples of a solution at energy E.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub energy: f64,
    /// ln of the amplitude removed by max-normalization (true solution =
    /// values × exp(log_scale), up to the arbitrary overall seed scale).
    pub log_scale: f64,
    pub node_count: usize,
    pub asym_left: SideClass,
    pub asym_right: SideClass,
    pub normalized: bool,
    /// Set when no sample is significant (degenerate input).
    pub all_zero: bool,
    /// Per-sample cancellation noise scale for values assembled from sums of
    /// large terms; empty for raw recurrence solutions.
    pub noise: Vec<f64>,
}

impl WaveFunction {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Interior sign changes between significant samples.
    pub fn count_nodes(&self) -> usize {
        count_sign_changes(&self.values, &self.noise)
    }

    /// x-locations of the sign changes, by linear interpolation.
    pub fn node_positions(&self) -> Vec<f64> {
        crossings(&self.values, &self.noise, &self.grid)
    }

    /// Rescales so that the trapezoid norm ∫ψ² = 1.
    pub fn normalize(&mut self) {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        let norm = self.grid.trapezoid(&sq).sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            for v in &mut self.values {
                *v *= inv;
            }
            for nssample in &mut self.noise {
                *nssample *= inv;
            }
            self.log_scale += norm.ln();
            self.normalized = true;
        }
    }

    /// Maps the per-side tags to the four-way class.
    pub fn asymptotic_class(&self) -> Result<AsymClass> {
        match (self.asym_left, self.asym_right) {
            (SideClass::Decaying, SideClass::Growing) => Ok(AsymClass::ZeroLeft),
            (SideClass::Growing, SideClass::Decaying) => Ok(AsymClass::ZeroRight),
            (SideClass::Decaying, SideClass::Decaying) => Ok(AsymClass::ZeroBoth),
            (SideClass::Growing, SideClass::Growing) => Ok(AsymClass::GrowingBoth),
            (l, _) => Err(CoreError::AsymptoticFit {
                side: if l == SideClass::Undetermined {
                    "left"
                } else {
                    "right"
                },
                reason: "tail slope fit was not decisive".into(),
            }),
        }
    }
}

fn max_abs_of(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

fn count_sign_changes(values: &[f64], noise: &[f64]) -> usize {
    let max = max_abs_of(values);
    if max == 0.0 {
        return 0;
    }
    let floor_abs = UNDERFLOW_FLOOR * max;
    let mut count = 0;
    let mut prev = 0.0_f64;
    for (i, &v) in values.iter().enumerate() {
        let av = v.abs();
        if av <= floor_abs {
            continue;
        }
        if let Some(&ns) = noise.get(i) {
            if av <= NODE_NOISE_FACTOR * ns {
                continue;
            }
        }
        if prev != 0.0 && prev * v < 0.0 {
            count += 1;
        }
        prev = v;
    }
    count
}

/// Width (in x units) of the seed pad appended beyond the grid edge.
///
/// The two-point WKB seed is only asymptotically correct; it carries a small
/// admixture of the mode decaying away from the edge. Seeding on a padded
/// extension lets the sweep shed that admixture by e^{−2∫√(V−E)} across the
/// pad before the physical grid begins, which keeps the relative shape of
/// decaying tails clean enough for the log-derivative of the Wronskian.
pub const SEED_PAD_X: f64 = 2.0;

/// Potential samples continued beyond both grid edges (outward order).
#[derive(Debug, Clone, Default)]
pub struct EdgePads {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl EdgePads {
    /// Evaluates the potential beyond both edges, clamped from below by the
    /// edge value so that extrapolated tails never open a classical region.
    pub fn build(v: &Potential, grid: &Grid) -> Self {
        let h = grid.spacing();
        let len = (SEED_PAD_X / h).ceil() as usize;
        let left = (1..=len)
            .map(|j| v.eval(grid.x_min - j as f64 * h).max(v.eval(grid.x_min)))
            .collect();
        let right = (1..=len)
            .map(|j| v.eval(grid.x_max + j as f64 * h).max(v.eval(grid.x_max)))
            .collect();
        EdgePads { left, right }
    }
}

/// Raw Numerov sweep over `v` samples at energy E, seeded at the `side` edge
/// (on the pad extension when one is supplied).
///
/// Returns max-normalized samples and the log of the removed amplitude (the
/// overall seed scale is arbitrary). `stop` bounds the sweep: for a left
/// sweep samples 0..=stop are filled, for a right sweep stop..n−1.
pub fn numerov_sweep(
    v: &[f64],
    energy: f64,
    grid: &Grid,
    side: Side,
    stop: usize,
) -> Result<(Vec<f64>, f64)> {
    numerov_sweep_padded(v, &EdgePads::default(), energy, grid, side, stop)
}

pub fn numerov_sweep_padded(
    v: &[f64],
    pads: &EdgePads,
    energy: f64,
    grid: &Grid,
    side: Side,
    stop: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = grid.n;
    assert!(stop < n);
    let h = grid.spacing();
    let h2_12 = h * h / 12.0;
    let mut log_scale = 0.0_f64;

    // Assemble the extended sample array for the seed side, innermost first.
    let pad = match side {
        Side::Left => &pads.left,
        Side::Right => &pads.right,
    };
    let np = pad.len();
    // ext[j]: distance j cells from the outer seed point, moving inward.
    let mut ext: Vec<f64> = Vec::with_capacity(np + n);
    ext.extend(pad.iter().rev());
    match side {
        Side::Left => ext.extend(v.iter().copied()),
        Side::Right => ext.extend(v.iter().rev().copied()),
    }

    // The decaying solution only exists (and is representable on the grid)
    // when the grid edge itself is classically forbidden; the pad must be
    // forbidden too for the seed to make sense.
    for &edge in &[ext[0], ext[1], ext[np], ext[np + 1]] {
        if edge <= energy {
            return Err(CoreError::NoForbiddenRegion {
                energy,
                v_edge: edge,
                side: match side {
                    Side::Left => "left",
                    Side::Right => "right",
                },
            });
        }
    }

    // WKB seed on the two outermost points:
    // psi ∝ (V−E)^(−1/4) exp(−∫√(V−E)) toward the edge.
    let k0 = (ext[0] - energy).sqrt();
    let k1 = (ext[1] - energy).sqrt();
    let mut psi = vec![0.0_f64; ext.len()];
    psi[0] = 1.0;
    psi[1] = (0.5 * h * (k0 + k1)).exp() * (k0 / k1).sqrt().sqrt();

    let t = |f: f64| h2_12 * (f - energy);
    let sweep_end = match side {
        Side::Left => np + stop,
        Side::Right => np + (n - 1 - stop),
    };
    let mut i = 1;
    while i < sweep_end {
        let next = (2.0 * (1.0 + 5.0 * t(ext[i])) * psi[i] - (1.0 - t(ext[i - 1])) * psi[i - 1])
            / (1.0 - t(ext[i + 1]));
        psi[i + 1] = next;
        if !next.is_finite() {
            return Err(CoreError::Overflow);
        }
        if next.abs() > RESCALE_LIMIT {
            let s = next.abs();
            for p in psi[..=i + 1].iter_mut() {
                *p /= s;
            }
            log_scale += s.ln();
        }
        i += 1;
    }

    // Strip the pad and restore grid order.
    let mut out = vec![0.0_f64; n];
    match side {
        Side::Left => out.copy_from_slice(&psi[np..]),
        Side::Right => {
            for (j, p) in psi[np..].iter().enumerate() {
                out[n - 1 - j] = *p;
            }
        }
    }

    // Max-normalize; keep the seed-side tail positive.
    let max = max_abs_of(&out);
    if max > 0.0 {
        let inv = 1.0 / max;
        for p in &mut out {
            *p *= inv;
        }
        log_scale += max.ln();
    }
    Ok((out, log_scale))
}

/// Integrates −ψ″ + Vψ = Eψ with decay prescribed toward the chosen edge.
pub fn integrate(v: &Potential, energy: f64, grid: &Grid, side: Side) -> Result<WaveFunction> {
    let samples = v.sample(grid)?;
    let pads = EdgePads::build(v, grid);
    let stop = match side {
        Side::Left => grid.n - 1,
        Side::Right => 0,
    };
    let (values, log_scale) = numerov_sweep_padded(&samples, &pads, energy, grid, side, stop)?;
    Ok(finish_wavefunction(
        values,
        Vec::new(),
        energy,
        *grid,
        log_scale,
    ))
}

/// Same as [`integrate`] but reusing presampled potential values (no seed
/// pad: the seed sits directly on the grid edge).
pub fn integrate_sampled(
    v_samples: &[f64],
    energy: f64,
    grid: &Grid,
    side: Side,
) -> Result<WaveFunction> {
    let stop = match side {
        Side::Left => grid.n - 1,
        Side::Right => 0,
    };
    let (values, log_scale) = numerov_sweep(v_samples, energy, grid, side, stop)?;
    Ok(finish_wavefunction(
        values,
        Vec::new(),
        energy,
        *grid,
        log_scale,
    ))
}

/// Assembles tags, node count, and degeneracy flag for a fresh sample array.
pub(crate) fn finish_wavefunction(
    values: Vec<f64>,
    noise: Vec<f64>,
    energy: f64,
    grid: Grid,
    log_scale: f64,
) -> WaveFunction {
    let node_count = count_sign_changes(&values, &noise);
    let all_zero = max_abs_of(&values) == 0.0;
    let (asym_left, asym_right) = classify_tails(&values, &noise, &grid);
    WaveFunction {
        grid,
        values,
        energy,
        log_scale,
        node_count,
        asym_left,
        asym_right,
        normalized: false,
        all_zero,
        noise,
    }
}

/// Linear combination cos(θ)·fL + sin(θ)·fR at a common energy.
///
/// θ = 0 reproduces fL and θ = π/2 reproduces fR; generic angles realize the
/// solutions growing at both infinities. The cancellation noise scale
/// |cosθ·fL| + |sinθ·fR| is recorded per sample so that spurious sign flips
/// in regions of destructive interference are not counted as nodes.
pub fn mix(f_left: &WaveFunction, f_right: &WaveFunction, theta: f64) -> Result<WaveFunction> {
    if f_left.grid != f_right.grid {
        return Err(CoreError::GridMismatch);
    }
    let scale = 1.0 + f_left.energy.abs().max(f_right.energy.abs());
    if (f_left.energy - f_right.energy).abs() > 1e-12 * scale {
        return Err(CoreError::EnergyMismatch(f_left.energy, f_right.energy));
    }
    if !(0.0..std::f64::consts::PI).contains(&theta) {
        return Err(CoreError::ThetaRange(theta));
    }
    let (c, s) = (theta.cos(), theta.sin());
    let n = f_left.values.len();
    let mut values = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        let a = c * f_left.values[i];
        let b = s * f_right.values[i];
        values.push(a + b);
        let mut ns = a.abs() + b.abs();
        // Propagate input noise scales, if any.
        if let Some(&nl) = f_left.noise.get(i) {
            ns = ns.max(c.abs() * nl);
        }
        if let Some(&nr) = f_right.noise.get(i) {
            ns = ns.max(s.abs() * nr);
        }
        noise.push(ns);
    }
    let max = max_abs_of(&values);
    if max > 0.0 {
        let inv = 1.0 / max;
        for v in &mut values {
            *v *= inv;
        }
        for v in &mut noise {
            *v *= inv;
        }
    }
    Ok(finish_wavefunction(
        values,
        noise,
        f_left.energy,
        f_left.grid,
        0.0,
    ))
}

/// Per-side tail classification by the log-slope of |ψ| over the outer 10%
/// of the grid. A tail containing a sign change (a node migrating through
/// the fit window) or too few significant samples is left undetermined.
fn classify_tails(values: &[f64], noise: &[f64], grid: &Grid) -> (SideClass, SideClass) {
    let n = grid.n;
    let m = ((n as f64 * TAIL_FRACTION) as usize).max(8).min(n / 2);
    let left = classify_window(values, noise, grid, 0..m, Side::Left);
    let right = classify_window(values, noise, grid, n - m..n, Side::Right);
    (left, right)
}

fn classify_window(
    values: &[f64],
    noise: &[f64],
    grid: &Grid,
    range: std::ops::Range<usize>,
    side: Side,
) -> SideClass {
    let max = max_abs_of(values);
    if max == 0.0 {
        return SideClass::Undetermined;
    }
    let floor = UNDERFLOW_FLOOR * max;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut prev_sign = 0.0_f64;
    for i in range {
        let v = values[i];
        let av = v.abs();
        if av <= floor {
            continue;
        }
        if let Some(&ns) = noise.get(i) {
            if av <= NODE_NOISE_FACTOR * ns {
                continue;
            }
        }
        if prev_sign != 0.0 && prev_sign * v < 0.0 {
            // Node inside the fit window: slope fit unreliable.
            return SideClass::Undetermined;
        }
        prev_sign = v;
        xs.push(grid.x(i));
        ys.push(av.ln());
    }
    if xs.len() < 4 {
        return SideClass::Undetermined;
    }
    // Least-squares slope of ln|ψ| against x.
    let nn = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / nn;
    let mean_y = ys.iter().sum::<f64>() / nn;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return SideClass::Undetermined;
    }
    let slope = sxy / sxx;
    let span = xs.last().unwrap() - xs[0];
    let total = slope * span;
    if total.abs() < TAIL_DECISIVE_LOG {
        return SideClass::Undetermined;
    }
    match side {
        // Positive slope on the left window: |ψ| shrinks toward the left
        // edge, i.e. the solution decays at −∞.
        Side::Left => {
            if slope > 0.0 {
                SideClass::Decaying
            } else {
                SideClass::Growing
            }
        }
        Side::Right => {
            if slope > 0.0 {
                SideClass::Growing
            } else {
                SideClass::Decaying
            }
        }
    }
}

/// Wronskian W(u₁,u₂) = u₁u₂′ − u₂u₁′ sampled on the grid, together with its
/// sign structure.
#[derive(Debug, Clone)]
pub struct WronskianTrace {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Per-sample magnitude of the two products forming W; W values below
    /// NODE_NOISE_FACTOR × this are within rounding of zero.
    pub noise: Vec<f64>,
    pub min_abs: f64,
    pub zero_crossings: Vec<f64>,
    pub extrema: Vec<f64>,
    /// Combined log-scale of the two (max-normalized) inputs.
    pub log_scale: f64,
}

impl WronskianTrace {
    pub fn max_abs(&self) -> f64 {
        max_abs_of(&self.values)
    }

    /// true when no significant sign change occurs anywhere on the grid.
    pub fn zero_free(&self) -> bool {
        self.zero_crossings.is_empty()
    }

    /// min|W| / max|W| restricted to |x| ≤ half_width. The global ratio is
    /// meaningless for wide grids (W picks up e^{±x²}-type factors in the
    /// forbidden region), so regularity thresholds are applied on a central
    /// window covering the classical region where zeros could occur.
    pub fn window_min_max_ratio(&self, half_width: f64) -> f64 {
        let mut min = f64::INFINITY;
        let mut max = 0.0_f64;
        for (i, x) in self.grid.points().enumerate() {
            if x.abs() <= half_width {
                let v = self.values[i].abs();
                min = min.min(v);
                max = max.max(v);
            }
        }
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }
}

/// Computes W(u₁,u₂) with five-point stencil derivatives.
pub fn wronskian(u1: &WaveFunction, u2: &WaveFunction) -> Result<WronskianTrace> {
    if u1.grid != u2.grid {
        return Err(CoreError::GridMismatch);
    }
    let h = u1.grid.spacing();
    let du1 = stencil::derivative1(&u1.values, h);
    let du2 = stencil::derivative1(&u2.values, h);
    let n = u1.grid.n;
    let mut values = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        let a = u1.values[i] * du2[i];
        let b = u2.values[i] * du1[i];
        values.push(a - b);
        noise.push(a.abs() + b.abs());
    }

    let min_abs = values.iter().fold(f64::INFINITY, |m, &v| m.min(v.abs()));
    let zero_crossings = crossings(&values, &noise, &u1.grid);
    let extrema = discrete_extrema(&values, &noise, &u1.grid);

    Ok(WronskianTrace {
        grid: u1.grid,
        values,
        noise,
        min_abs,
        zero_crossings,
        extrema,
        log_scale: u1.log_scale + u2.log_scale,
    })
}

fn crossings(values: &[f64], noise: &[f64], grid: &Grid) -> Vec<f64> {
    let max = max_abs_of(values);
    if max == 0.0 {
        return Vec::new();
    }
    let floor = UNDERFLOW_FLOOR * max;
    let mut out = Vec::new();
    let mut prev: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        let av = v.abs();
        if av <= floor {
            continue;
        }
        if let Some(&ns) = noise.get(i) {
            if av <= NODE_NOISE_FACTOR * ns {
                continue;
            }
        }
        if let Some((j, pv)) = prev {
            if pv * v < 0.0 {
                let (xa, xb) = (grid.x(j), grid.x(i));
                out.push(xa + (xb - xa) * pv / (pv - v));
            }
        }
        prev = Some((i, v));
    }
    out
}

/// Local extrema of W located by sign changes of the forward difference.
/// Differences below the per-sample rounding scale are treated as flat.
fn discrete_extrema(values: &[f64], noise: &[f64], grid: &Grid) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::new();
    let sig = |i: usize| -> Option<f64> {
        let d = values[i + 1] - values[i];
        let floor = 100.0 * f64::EPSILON * (noise[i] + noise[i + 1]);
        if d.abs() > floor {
            Some(d)
        } else {
            None
        }
    };
    let mut prev: Option<(usize, f64)> = None;
    for i in 0..n - 1 {
        if let Some(d) = sig(i) {
            if let Some((j, pd)) = prev {
                if pd * d < 0.0 {
                    // Extremum between the two difference midpoints.
                    let idx = (j + 1 + i) / 2;
                    out.push(grid.x(idx.min(n - 1)));
                }
            }
            prev = Some((i, d));
        }
    }
    out
}
