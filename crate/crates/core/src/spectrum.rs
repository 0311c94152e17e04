//! Discrete spectrum of −ψ″ + Vψ = Eψ by shooting.
//!
//! Levels are bracketed by node-count transitions of the left-integrated
//! solution (the count at energy E equals the number of levels below E) and
//! refined by bisection on the log-derivative matching defect of the left and
//! right solutions at the rightmost classical turning point, where both
//! one-sided integrations are numerically stable.

use crate::error::CoreError;
use crate::grid::Grid;
use crate::ode::{self, EdgePads, Side, WaveFunction};
use crate::potential::Potential;
use crate::stencil;
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Absolute bisection tolerance on the eigenvalue.
    pub energy_tol: f64,
    /// Accepted log-derivative matching defect (normalized) per level.
    pub defect_tol: f64,
    /// Initial energy step of the bracketing sweep.
    pub scan_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            energy_tol: 1e-9,
            defect_tol: 1e-6,
            scan_step: 0.5,
        }
    }
}

/// Ordered levels with normalized eigenfunctions.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub levels: Vec<f64>,
    pub eigenfunctions: Vec<WaveFunction>,
    pub mismatch_tolerance: f64,
    /// Matching defect recorded at each converged level.
    pub defects: Vec<f64>,
}

impl Spectrum {
    pub fn eigenfunction(&self, k: usize) -> Result<&WaveFunction> {
        self.eigenfunctions
            .get(k)
            .ok_or(CoreError::EigenIndexOutOfRange {
                k,
                len: self.levels.len(),
            })
    }

    /// The open gap (E_k, E_{k+1}).
    pub fn gap(&self, k: usize) -> Result<(f64, f64)> {
        if k + 1 >= self.levels.len() {
            return Err(CoreError::EigenIndexOutOfRange {
                k: k + 1,
                len: self.levels.len(),
            });
        }
        Ok((self.levels[k], self.levels[k + 1]))
    }

    /// Index of the level matching `e` within `tol`, if any.
    pub fn level_index(&self, e: f64, tol: f64) -> Option<usize> {
        self.levels.iter().position(|&l| (l - e).abs() <= tol)
    }
}

/// Computes levels E₀..E_{k_max} and their normalized eigenfunctions.
pub fn compute_spectrum(
    v: &Potential,
    k_max: usize,
    grid: &Grid,
    opts: SolverOptions,
) -> Result<Spectrum> {
    let samples = v.sample(grid)?;
    let pads = EdgePads::build(v, grid);
    solve(&samples, &pads, k_max, grid, opts)
}

/// Spectrum from raw samples without seed pads (tails slightly less clean).
pub fn compute_spectrum_sampled(
    samples: &[f64],
    k_max: usize,
    grid: &Grid,
    opts: SolverOptions,
) -> Result<Spectrum> {
    solve(samples, &EdgePads::default(), k_max, grid, opts)
}

fn solve(
    samples: &[f64],
    pads: &EdgePads,
    k_max: usize,
    grid: &Grid,
    opts: SolverOptions,
) -> Result<Spectrum> {
    let n = grid.n;
    let v_min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_edge = samples[0].min(samples[n - 1]);
    // Levels must sit well below the truncation walls.
    let e_cap = v_edge - 0.1 * (v_edge - v_min);
    if !(v_edge > v_min) {
        return Err(CoreError::GridTooNarrow(
            "potential is not confining on this grid (edges not above the minimum)".into(),
        ));
    }

    let count = |e: f64| -> Result<usize> {
        let (vals, _) = ode::numerov_sweep_padded(samples, pads, e, grid, Side::Left, n - 1)?;
        Ok(count_nodes_raw(&vals))
    };

    // Bracket each level by node-count transitions.
    let mut brackets: Vec<(f64, f64)> = Vec::with_capacity(k_max + 1);
    let mut e_lo = v_min + 1e-9 * (1.0 + v_min.abs());
    let mut c_lo = count(e_lo)?;
    if c_lo > 0 {
        return Err(CoreError::BracketFailure {
            k: 0,
            reason: format!("left solution already has {c_lo} node(s) at the potential minimum"),
        });
    }
    while brackets.len() <= k_max {
        let e_hi = e_lo + opts.scan_step;
        if e_hi > e_cap {
            return Err(CoreError::GridTooNarrow(format!(
                "bracketing level {} needs E > {e_cap:.3}, too close to the edge height {v_edge:.3}",
                brackets.len()
            )));
        }
        let c_hi = count(e_hi)?;
        if c_hi > c_lo {
            split_bracket(e_lo, c_lo, e_hi, c_hi, &count, &mut brackets)?;
        }
        e_lo = e_hi;
        c_lo = c_hi;
    }
    brackets.truncate(k_max + 1);

    let mut levels = Vec::with_capacity(k_max + 1);
    let mut eigenfunctions = Vec::with_capacity(k_max + 1);
    let mut defects = Vec::with_capacity(k_max + 1);

    for (k, &(mut a, mut b)) in brackets.iter().enumerate() {
        // Narrow by node count first so the defect bracket holds one level.
        while b - a > 1e-3 {
            let mid = 0.5 * (a + b);
            if count(mid)? > k {
                b = mid;
            } else {
                a = mid;
            }
        }

        // Refine on the matching defect; fall back to node-count bisection
        // when the defect does not change sign across the residual bracket.
        let mut da = matching_defect(samples, pads, a, grid)?;
        let db = matching_defect(samples, pads, b, grid)?;
        if da.signum() != db.signum() && da != 0.0 && db != 0.0 {
            while b - a > opts.energy_tol {
                let mid = 0.5 * (a + b);
                let dm = matching_defect(samples, pads, mid, grid)?;
                if dm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if dm.signum() == da.signum() {
                    a = mid;
                    da = dm;
                } else {
                    b = mid;
                }
            }
        } else {
            while b - a > opts.energy_tol {
                let mid = 0.5 * (a + b);
                if count(mid)? > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
        }
        let e = 0.5 * (a + b);

        let (mut wf, defect) = glue_eigenfunction(samples, pads, e, grid)?;
        if defect.abs() > opts.defect_tol {
            return Err(CoreError::BracketFailure {
                k,
                reason: format!("matching defect {defect:.3e} above tolerance at E = {e:.9}"),
            });
        }
        wf.normalize();
        if wf.node_count != k {
            return Err(CoreError::BracketFailure {
                k,
                reason: format!(
                    "glued eigenfunction at E = {e:.9} has {} node(s), expected {k}",
                    wf.node_count
                ),
            });
        }
        levels.push(e);
        defects.push(defect);
        eigenfunctions.push(wf);
    }

    debug_assert!(levels.windows(2).all(|w| w[0] < w[1]));
    Ok(Spectrum {
        levels,
        eigenfunctions,
        mismatch_tolerance: opts.defect_tol,
        defects,
    })
}

fn count_nodes_raw(values: &[f64]) -> usize {
    let max = values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    let floor = ode::UNDERFLOW_FLOOR * max;
    let mut count = 0;
    let mut prev = 0.0_f64;
    for &v in values {
        if v.abs() <= floor {
            continue;
        }
        if prev != 0.0 && prev * v < 0.0 {
            count += 1;
        }
        prev = v;
    }
    count
}

fn split_bracket(
    e_lo: f64,
    c_lo: usize,
    e_hi: f64,
    c_hi: usize,
    count: &dyn Fn(f64) -> Result<usize>,
    out: &mut Vec<(f64, f64)>,
) -> Result<()> {
    if c_hi == c_lo + 1 {
        out.push((e_lo, e_hi));
        return Ok(());
    }
    if e_hi - e_lo < 1e-11 {
        return Err(CoreError::BracketFailure {
            k: out.len(),
            reason: format!(
                "node count jumps by {} across a vanishing interval at E ≈ {e_lo:.9}",
                c_hi - c_lo
            ),
        });
    }
    let mid = 0.5 * (e_lo + e_hi);
    let c_mid = count(mid)?;
    if c_mid > c_lo {
        split_bracket(e_lo, c_lo, mid, c_mid, count, out)?;
    }
    if c_hi > c_mid {
        split_bracket(mid, c_mid, e_hi, c_hi, count, out)?;
    }
    Ok(())
}

/// Index of the rightmost classical turning point for energy `e`, clamped to
/// leave room for the five-point stencil at the match.
fn matching_index(samples: &[f64], e: f64, n: usize) -> Result<usize> {
    let mut idx = None;
    for i in (0..n - 1).rev() {
        if (samples[i] - e) <= 0.0 && (samples[i + 1] - e) > 0.0 {
            idx = Some(i);
            break;
        }
    }
    let m = idx.ok_or_else(|| {
        CoreError::GridTooNarrow(format!(
            "no classical turning point on the grid for E = {e}"
        ))
    })?;
    Ok(m.clamp(2, n - 3))
}

/// Normalized log-derivative mismatch of the two one-sided solutions at the
/// rightmost turning point. Zero exactly at the discrete eigenvalues.
fn matching_defect(samples: &[f64], pads: &EdgePads, e: f64, grid: &Grid) -> Result<f64> {
    let n = grid.n;
    let h = grid.spacing();
    let m = matching_index(samples, e, n)?;
    let (left, _) =
        ode::numerov_sweep_padded(samples, pads, e, grid, Side::Left, (m + 2).min(n - 1))?;
    let (right, _) =
        ode::numerov_sweep_padded(samples, pads, e, grid, Side::Right, m.saturating_sub(2))?;
    let dl = stencil::derivative1_at(&left, m, h);
    let dr = stencil::derivative1_at(&right, m, h);
    let cross = dl * right[m] - dr * left[m];
    let scale = (dl * right[m]).abs() + (dr * left[m]).abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(cross / scale)
}

/// Glues the two one-sided solutions at the matching point.
fn glue_eigenfunction(
    samples: &[f64],
    pads: &EdgePads,
    e: f64,
    grid: &Grid,
) -> Result<(WaveFunction, f64)> {
    let n = grid.n;
    let h = grid.spacing();
    let m = matching_index(samples, e, n)?;
    let (left, _) =
        ode::numerov_sweep_padded(samples, pads, e, grid, Side::Left, (m + 2).min(n - 1))?;
    let (right, _) =
        ode::numerov_sweep_padded(samples, pads, e, grid, Side::Right, m.saturating_sub(2))?;

    let dl = stencil::derivative1_at(&left, m, h);
    let dr = stencil::derivative1_at(&right, m, h);
    let cross = dl * right[m] - dr * left[m];
    let scale_mag = (dl * right[m]).abs() + (dr * left[m]).abs();
    let defect = if scale_mag == 0.0 {
        0.0
    } else {
        cross / scale_mag
    };

    if right[m] == 0.0 || left[m] == 0.0 {
        return Err(CoreError::BracketFailure {
            k: 0,
            reason: format!("solution vanishes at the matching point x = {}", grid.x(m)),
        });
    }
    let ratio = left[m] / right[m];
    let mut values = Vec::with_capacity(n);
    values.extend_from_slice(&left[..=m]);
    values.extend(right[m + 1..].iter().map(|&v| v * ratio));

    let max = values.iter().fold(0.0_f64, |mx, &v| mx.max(v.abs()));
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    Ok((
        ode::finish_wavefunction(values, Vec::new(), e, *grid, 0.0),
        defect,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{AsymClass, SideClass};

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 20001).unwrap()
    }

    #[test]
    fn oscillator_levels_are_odd_integers() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let spec = compute_spectrum(&v, 5, &grid(), SolverOptions::default()).unwrap();
        for (k, &e) in spec.levels.iter().enumerate() {
            let exact = (2 * k + 1) as f64;
            assert!(
                (e - exact).abs() < 1e-8,
                "E_{k} = {e:.12}, expected {exact}"
            );
        }
    }

    #[test]
    fn shifted_oscillator_levels() {
        let v = Potential::builtin("shifted_harmonic", &[1.0, 4.0]).unwrap();
        let spec = compute_spectrum(&v, 3, &grid(), SolverOptions::default()).unwrap();
        let expected = [5.0, 7.0, 9.0, 11.0];
        for (e, ex) in spec.levels.iter().zip(expected) {
            assert!((e - ex).abs() < 1e-8, "{e} vs {ex}");
        }
    }

    #[test]
    fn quartic_ground_state_matches_dense_matrix_oracle() {
        // Independent oracle: finite-difference tridiagonal discretization of
        // −ψ″ + x⁴ψ with Sturm-count bisection for the lowest eigenvalue,
        // Richardson-extrapolated from two grids (O(h²) → O(h⁴)).
        let v = Potential::builtin("quartic", &[1.0]).unwrap();
        let g = Grid::new(-8.0, 8.0, 8001).unwrap();
        let spec = compute_spectrum(&v, 0, &g, SolverOptions::default()).unwrap();

        let coarse = lowest_eigenvalue_fd(&g, |x| x.powi(4));
        let g2 = Grid::new(-8.0, 8.0, 16001).unwrap();
        let fine = lowest_eigenvalue_fd(&g2, |x| x.powi(4));
        let oracle = (4.0 * fine - coarse) / 3.0;

        assert!(
            (spec.levels[0] - oracle).abs() < 1e-6,
            "shooting {:.10} vs dense oracle {:.10}",
            spec.levels[0],
            oracle
        );
        assert!(
            (spec.levels[0] - 1.0603620904).abs() < 1e-8,
            "E0 = {:.10}",
            spec.levels[0]
        );
    }

    #[test]
    fn eigenfunctions_have_expected_node_counts_and_tails() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let spec = compute_spectrum(&v, 3, &grid(), SolverOptions::default()).unwrap();
        for k in 0..=3 {
            let wf = spec.eigenfunction(k).unwrap();
            assert_eq!(wf.node_count, k);
            assert_eq!(wf.asym_left, SideClass::Decaying);
            assert_eq!(wf.asym_right, SideClass::Decaying);
            assert_eq!(wf.asymptotic_class().unwrap(), AsymClass::ZeroBoth);
            assert!(wf.normalized);
        }
        assert!(matches!(
            spec.eigenfunction(7),
            Err(CoreError::EigenIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn ground_state_matches_closed_form() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let g = grid();
        let spec = compute_spectrum(&v, 0, &g, SolverOptions::default()).unwrap();
        let wf = spec.eigenfunction(0).unwrap();
        let norm = std::f64::consts::PI.powf(-0.25);
        let mut dev = 0.0_f64;
        for (i, x) in g.points().enumerate() {
            let exact = norm * (-0.5 * x * x).exp();
            dev = dev.max((wf.values[i].abs() - exact).abs());
        }
        assert!(dev < 1e-6, "sup deviation {dev:.3e}");
    }

    #[test]
    fn orthonormality_of_low_levels() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let g = grid();
        let spec = compute_spectrum(&v, 4, &g, SolverOptions::default()).unwrap();
        for i in 0..=4 {
            for j in 0..=4 {
                let ip = g.inner_product(
                    &spec.eigenfunctions[i].values,
                    &spec.eigenfunctions[j].values,
                );
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (ip.abs() - expected).abs() < 1e-6,
                    "<psi_{i}, psi_{j}> = {ip:.3e}"
                );
            }
        }
    }

    #[test]
    fn eigen_residual_small_in_interior() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let g = grid();
        let samples = v.sample(&g).unwrap();
        let spec = compute_spectrum(&v, 4, &g, SolverOptions::default()).unwrap();
        let h = g.spacing();
        let skip = g.n / 20; // outer 5%
        for (k, wf) in spec.eigenfunctions.iter().enumerate() {
            let dd = stencil::derivative2(&wf.values, h);
            let sup = wf.max_abs();
            let mut resid = 0.0_f64;
            for i in skip..g.n - skip {
                let r = -dd[i] + samples[i] * wf.values[i] - spec.levels[k] * wf.values[i];
                resid = resid.max(r.abs());
            }
            assert!(
                resid / sup < 1e-5,
                "level {k}: residual {:.3e}",
                resid / sup
            );
        }
    }

    #[test]
    fn interlacing_node_counts_in_gaps() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let g = grid();
        for k in 0..=2 {
            let e = (2 * k + 1) as f64 + 1.0; // mid-gap
            let wf = ode::integrate(&v, e, &g, Side::Left).unwrap();
            let nodes = wf.count_nodes();
            assert!(
                nodes == k + 1 || nodes == k + 2,
                "gap {k}: left solution has {nodes} nodes"
            );
        }
    }

    #[test]
    fn too_narrow_grid_is_rejected() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let g = Grid::new(-2.5, 2.5, 501).unwrap();
        // E_4 = 9 needs turning points at |x| = 3, beyond this grid.
        let err = compute_spectrum(&v, 4, &g, SolverOptions::default());
        assert!(err.is_err());
    }

    /// Tridiagonal FD oracle: count of eigenvalues below λ via Sturm sequence,
    /// bisected for the lowest one.
    fn lowest_eigenvalue_fd(g: &Grid, v: impl Fn(f64) -> f64) -> f64 {
        let n = g.n - 2; // interior points, Dirichlet walls
        let h = g.spacing();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 / (h * h) + v(g.x(i + 1))).collect();
        let off = -1.0 / (h * h);

        let count_below = |lambda: f64| -> usize {
            let mut cnt = 0;
            let mut q = diag[0] - lambda;
            if q < 0.0 {
                cnt += 1;
            }
            for d in diag.iter().skip(1) {
                let safe = if q.abs() < 1e-300 {
                    1e-300_f64.copysign(q)
                } else {
                    q
                };
                q = (d - lambda) - off * off / safe;
                if q < 0.0 {
                    cnt += 1;
                }
            }
            cnt
        };

        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) < 1 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}
