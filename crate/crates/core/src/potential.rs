//! Seed potentials: builtin analytic forms, tabulated tables with cubic-spline
//! interpolation, and the tail-integral classification that separates
//! scattering from confining seeds.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::grid::Grid;
use crate::stencil;
use crate::Result;

/// Points with |V| below this are excluded from the confining integrals,
/// whose integrands divide by powers of V.
pub const NEAR_ZERO_V: f64 = 1e-8;

/// The confining integrands also diverge at interior zeros of V; the tail
/// conditions only constrain |x| → ∞, so the integrals are taken over
/// |x| ≥ 1 (the convention used by the analytic cross-checks in the tests).
pub const CONFINING_INNER_CUTOFF: f64 = 1.0;

/// Absolute threshold on the scattering tail integral ∫|xV| over the outer
/// half-intervals: below it the integral is judged convergent.
pub const SCATTERING_TAIL_TOL: f64 = 1e-6;

/// A confining integral is judged convergent when each outer-octave partial
/// integral decays by at least this factor relative to the previous octave.
pub const OCTAVE_DECAY: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryHint {
    Even,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialLabel {
    Scattering,
    ConfiningRegular,
    Unknown,
}

/// Classification result: the label plus the three diagnostic integrals
/// (∫|xV| dx, ∫|V′/V^{5/4}|² dx, ∫|V″|/|V|^{3/2} dx) evaluated on the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialClass {
    pub label: PotentialLabel,
    pub integral_values: [f64; 3],
    /// Outer-half partial of the scattering integral (convergence diagnostic).
    pub scattering_tail: f64,
    /// Outer-octave decay ratios of the two confining integrals.
    pub confining_decay: [f64; 2],
}

#[derive(Debug, Clone)]
enum Kind {
    Harmonic { stiffness: f64 },
    Quartic { strength: f64 },
    ShiftedHarmonic { stiffness: f64, shift: f64 },
    Tabulated(Table),
}

/// Real-valued potential on the line together with classification metadata.
#[derive(Debug, Clone)]
pub struct Potential {
    kind: Kind,
    pub lower_bound: f64,
    pub symmetry_hint: SymmetryHint,
}

impl Potential {
    /// Builds one of the named analytic potentials.
    ///
    /// - `harmonic` with params `[k]`: V(x) = k·x² (unit stiffness gives x²)
    /// - `quartic` with params `[c]`: V(x) = c·x⁴
    /// - `shifted_harmonic` with params `[k, c]`: V(x) = k·x² + c
    pub fn builtin(name: &str, params: &[f64]) -> Result<Self> {
        if params.iter().any(|p| !p.is_finite()) {
            return Err(CoreError::InvalidParameter {
                kind: name.into(),
                reason: "non-finite parameter".into(),
            });
        }
        let positive = |v: f64, what: &str, kind: &str| -> Result<f64> {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(CoreError::InvalidParameter {
                    kind: kind.into(),
                    reason: format!("{what} must be positive, got {v}"),
                })
            }
        };
        match name {
            "harmonic" => {
                if params.len() != 1 {
                    return Err(CoreError::InvalidParameter {
                        kind: name.into(),
                        reason: format!("expected 1 parameter, got {}", params.len()),
                    });
                }
                let k = positive(params[0], "stiffness", name)?;
                Ok(Potential {
                    kind: Kind::Harmonic { stiffness: k },
                    lower_bound: 0.0,
                    symmetry_hint: SymmetryHint::Even,
                })
            }
            "quartic" => {
                if params.len() != 1 {
                    return Err(CoreError::InvalidParameter {
                        kind: name.into(),
                        reason: format!("expected 1 parameter, got {}", params.len()),
                    });
                }
                let c = positive(params[0], "strength", name)?;
                Ok(Potential {
                    kind: Kind::Quartic { strength: c },
                    lower_bound: 0.0,
                    symmetry_hint: SymmetryHint::Even,
                })
            }
            "shifted_harmonic" => {
                if params.len() != 2 {
                    return Err(CoreError::InvalidParameter {
                        kind: name.into(),
                        reason: format!(
                            "expected 2 parameters [stiffness, shift], got {}",
                            params.len()
                        ),
                    });
                }
                let k = positive(params[0], "stiffness", name)?;
                Ok(Potential {
                    kind: Kind::ShiftedHarmonic {
                        stiffness: k,
                        shift: params[1],
                    },
                    lower_bound: params[1],
                    symmetry_hint: SymmetryHint::Even,
                })
            }
            other => Err(CoreError::UnknownPotential(other.into())),
        }
    }

    /// Wraps a table of (x, V) samples; evaluation interpolates with a natural
    /// cubic spline and extrapolates quadratically beyond the table ends.
    pub fn from_table(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        let table = Table::new(xs, vs)?;
        let lower = table.vs.iter().cloned().fold(f64::INFINITY, f64::min);
        let symmetry = table.detect_even();
        Ok(Potential {
            kind: Kind::Tabulated(table),
            lower_bound: lower,
            symmetry_hint: symmetry,
        })
    }

    /// Reads a two-column CSV (header `x,V` or `x,value`).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                if line != "x,V" && line != "x,value" {
                    return Err(CoreError::TableFormat(format!(
                        "expected header `x,V` or `x,value`, got `{line}`"
                    )));
                }
                continue;
            }
            let mut parts = line.split(',');
            let (a, b) = match (parts.next(), parts.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(CoreError::TableFormat(format!(
                        "line {}: expected two comma-separated columns",
                        lineno + 1
                    )))
                }
            };
            let x: f64 = a
                .trim()
                .parse()
                .map_err(|_| CoreError::TableFormat(format!("line {}: bad x `{a}`", lineno + 1)))?;
            let v: f64 = b
                .trim()
                .parse()
                .map_err(|_| CoreError::TableFormat(format!("line {}: bad V `{b}`", lineno + 1)))?;
            xs.push(x);
            vs.push(v);
        }
        Potential::from_table(xs, vs)
    }

    /// Writes the potential sampled on `grid` as a two-column CSV with header `x,V`.
    pub fn write_csv(&self, grid: &Grid, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,V")?;
        for x in grid.points() {
            writeln!(out, "{},{}", x, self.eval(x))?;
        }
        Ok(())
    }

    /// Evaluates V(x). Deterministic and side-effect free.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Harmonic { stiffness } => stiffness * x * x,
            Kind::Quartic { strength } => strength * x.powi(4),
            Kind::ShiftedHarmonic { stiffness, shift } => stiffness * x * x + shift,
            Kind::Tabulated(t) => t.eval(x),
        }
    }

    /// Samples the potential on every grid point, checking finiteness.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.n);
        for x in grid.points() {
            let v = self.eval(x);
            if !v.is_finite() {
                return Err(CoreError::InvalidParameter {
                    kind: self.kind_name().into(),
                    reason: format!("V({x}) is not finite"),
                });
            }
            out.push(v);
        }
        Ok(out)
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            Kind::Harmonic { .. } => "harmonic",
            Kind::Quartic { .. } => "quartic",
            Kind::ShiftedHarmonic { .. } => "shifted_harmonic",
            Kind::Tabulated(_) => "tabulated",
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.kind, Kind::Tabulated(_))
    }

    /// For harmonic-family potentials, the stiffness k of the k·x² term.
    /// Tail models of transformed potentials are only known in closed form
    /// for this family.
    pub fn harmonic_stiffness(&self) -> Option<f64> {
        match &self.kind {
            Kind::Harmonic { stiffness } => Some(*stiffness),
            Kind::ShiftedHarmonic { stiffness, .. } => Some(*stiffness),
            _ => None,
        }
    }
}

/// Classifies the potential per the tail-integral conditions.
///
/// Scattering requires a convergent ∫|xV| dx (outer-half partial below an
/// absolute threshold); confining regularity requires convergent
/// ∫|V′/V^{5/4}|² dx and ∫|V″|/|V|^{3/2} dx, decided by geometric decay of the
/// outer-octave partial integrals. Degenerate inputs (V ≈ 0, or |V| not
/// bounded away from zero near the edges) fall back to `Unknown`.
pub fn classify_potential(v: &Potential, grid: &Grid) -> Result<PotentialClass> {
    let samples = v.sample(grid)?;
    let h = grid.spacing();
    let max_abs = samples.iter().fold(0.0_f64, |m, &s| m.max(s.abs()));

    // ∫|xV| over the full grid, plus the outer-half partial as the tail probe.
    let abs_xv: Vec<f64> = grid
        .points()
        .zip(&samples)
        .map(|(x, &vv)| (x * vv).abs())
        .collect();
    let i1 = grid.trapezoid(&abs_xv);
    let half = 0.5 * grid.x_max.min(-grid.x_min);
    let tail1 = masked_integral(grid, &abs_xv, |x| x.abs() >= half);

    // Confining integrands from stencil derivatives of the samples.
    let dv = stencil::derivative1(&samples, h);
    let ddv = stencil::derivative2(&samples, h);
    let usable =
        |x: f64, i: usize| x.abs() >= CONFINING_INNER_CUTOFF && samples[i].abs() >= NEAR_ZERO_V;
    let mut g2 = vec![0.0; grid.n];
    let mut g3 = vec![0.0; grid.n];
    let mut excluded_outer = false;
    let quarter = 0.25 * grid.x_max.min(-grid.x_min);
    for (i, x) in grid.points().enumerate() {
        if usable(x, i) {
            let vv = samples[i].abs();
            g2[i] = (dv[i] / vv.powf(1.25)).powi(2);
            g3[i] = ddv[i].abs() / vv.powf(1.5);
        } else if x.abs() >= quarter {
            // |V| vanishes inside the tail-diagnostic region: the confining
            // integrands blow up there and the test is undecidable.
            excluded_outer = true;
        }
    }
    // Integrate only over segments fully inside the |x| ≥ cutoff window so
    // the jump cells at the mask boundary do not contribute.
    let in_window = |x: f64| x.abs() >= CONFINING_INNER_CUTOFF;
    let i2 = masked_integral(grid, &g2, in_window);
    let i3 = masked_integral(grid, &g3, in_window);

    let octave =
        |g: &[f64], lo: f64, hi: f64| masked_integral(grid, g, |x| x.abs() >= lo && x.abs() < hi);
    let decay = |g: &[f64]| -> f64 {
        let inner = octave(g, quarter, half);
        let outer = masked_integral(grid, g, |x| x.abs() >= half);
        if inner > 0.0 {
            outer / inner
        } else {
            f64::INFINITY
        }
    };
    let decay2 = decay(&g2);
    let decay3 = decay(&g3);

    let degenerate = max_abs < NEAR_ZERO_V;
    let scattering = !degenerate && tail1 < SCATTERING_TAIL_TOL;
    let confining =
        !degenerate && !excluded_outer && decay2 <= OCTAVE_DECAY && decay3 <= OCTAVE_DECAY;

    let label = if scattering {
        PotentialLabel::Scattering
    } else if confining {
        PotentialLabel::ConfiningRegular
    } else {
        PotentialLabel::Unknown
    };

    Ok(PotentialClass {
        label,
        integral_values: [i1, i2, i3],
        scattering_tail: tail1,
        confining_decay: [decay2, decay3],
    })
}

fn masked_integral(grid: &Grid, f: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    let h = grid.spacing();
    let mut acc = 0.0;
    for i in 0..grid.n - 1 {
        let (xa, xb) = (grid.x(i), grid.x(i + 1));
        if keep(xa) && keep(xb) {
            acc += 0.5 * h * (f[i] + f[i + 1]);
        }
    }
    acc
}

/// Natural cubic spline through strictly increasing knots, with one-sided
/// quadratic extrapolation beyond the table so that exported transforms can
/// be re-ingested as seeds on slightly different grids.
#[derive(Debug, Clone)]
struct Table {
    xs: Vec<f64>,
    vs: Vec<f64>,
    /// Spline second derivatives at the knots.
    m: Vec<f64>,
}

impl Table {
    fn new(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        if xs.len() != vs.len() {
            return Err(CoreError::TableFormat(
                "x and V column lengths differ".into(),
            ));
        }
        if xs.len() < 4 {
            return Err(CoreError::TableFormat(format!(
                "need at least 4 rows, got {}",
                xs.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::TableFormat(
                "x column must be strictly increasing".into(),
            ));
        }
        if xs.iter().chain(vs.iter()).any(|t| !t.is_finite()) {
            return Err(CoreError::TableFormat("non-finite table entry".into()));
        }
        let m = spline_second_derivatives(&xs, &vs);
        Ok(Table { xs, vs, m })
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.extrapolate(x, 0);
        }
        if x >= self.xs[n - 1] {
            return self.extrapolate(x, n - 1);
        }
        // Bisect for the knot interval [i, i+1).
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (x0, x1) = (self.xs[lo], self.xs[hi]);
        let hseg = x1 - x0;
        if x == x0 {
            return self.vs[lo];
        }
        let a = (x1 - x) / hseg;
        let b = (x - x0) / hseg;
        a * self.vs[lo]
            + b * self.vs[hi]
            + ((a * a * a - a) * self.m[lo] + (b * b * b - b) * self.m[hi]) * hseg * hseg / 6.0
    }

    /// Quadratic extrapolation clamped to the edge curvature: match value,
    /// one-sided slope, and one-sided second difference at the boundary knot.
    fn extrapolate(&self, x: f64, edge: usize) -> f64 {
        let n = self.xs.len();
        let (i0, i1, i2) = if edge == 0 {
            (0, 1, 2)
        } else {
            (n - 1, n - 2, n - 3)
        };
        let (x0, x1, x2) = (self.xs[i0], self.xs[i1], self.xs[i2]);
        let (v0, v1, v2) = (self.vs[i0], self.vs[i1], self.vs[i2]);
        // Second-order Lagrange polynomial through the three outermost knots.
        let l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
        v0 * l0 + v1 * l1 + v2 * l2
    }

    fn detect_even(&self) -> SymmetryHint {
        let n = self.xs.len();
        let tol = 1e-10 * self.vs.iter().fold(1.0_f64, |m, &v| m.max(v.abs()));
        for i in 0..n / 2 {
            let j = n - 1 - i;
            if (self.xs[i] + self.xs[j]).abs() > 1e-9 || (self.vs[i] - self.vs[j]).abs() > tol {
                return SymmetryHint::None;
            }
        }
        SymmetryHint::Even
    }
}

/// Tridiagonal solve for natural-spline second derivatives.
fn spline_second_derivatives(xs: &[f64], vs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upper = vec![0.0; n];

    diag[0] = 1.0;
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((vs[i + 1] - vs[i]) / h1 - (vs[i] - vs[i - 1]) / h0);
    }
    diag[n - 1] = 1.0;

    // Thomas algorithm; lower diagonal of row i is h0 = xs[i]-xs[i-1].
    for i in 1..n - 1 {
        let lower = xs[i] - xs[i - 1];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[n - 1] = 0.0;
    for i in (1..n - 1).rev() {
        m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
    }
    m[0] = 0.0;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 20001).unwrap()
    }

    #[test]
    fn harmonic_evaluates_to_x_squared() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        assert_eq!(v.eval(2.0), 4.0);
        assert_eq!(v.eval(0.0), 0.0);
        assert_eq!(v.eval(-3.0), 9.0);
    }

    #[test]
    fn quartic_and_shifted() {
        let q = Potential::builtin("quartic", &[1.0]).unwrap();
        assert_eq!(q.eval(-1.0), 1.0);
        let s = Potential::builtin("shifted_harmonic", &[1.0, 4.0]).unwrap();
        assert_eq!(s.eval(2.0), 8.0);
        assert_eq!(s.lower_bound, 4.0);
    }

    #[test]
    fn rejects_unknown_and_bad_params() {
        assert!(matches!(
            Potential::builtin("morse", &[1.0]),
            Err(CoreError::UnknownPotential(_))
        ));
        assert!(Potential::builtin("harmonic", &[f64::NAN]).is_err());
        assert!(Potential::builtin("harmonic", &[-1.0]).is_err());
        assert!(Potential::builtin("harmonic", &[1.0, 2.0]).is_err());
    }

    #[test]
    fn evaluation_is_bit_deterministic() {
        let v = Potential::builtin("quartic", &[1.3]).unwrap();
        for x in [-7.77, 0.1, 3.9] {
            assert_eq!(v.eval(x).to_bits(), v.eval(x).to_bits());
        }
    }

    #[test]
    fn classify_x_squared_as_confining_regular() {
        // Analytic values over the |x| >= 1 window:
        //   I2 = 2 * int_1^10 4/x^3 dx = 3.96
        //   I3 = 2 * int_1^10 2/x^3 dx = 1.98
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let class = classify_potential(&v, &grid()).unwrap();
        assert_eq!(class.label, PotentialLabel::ConfiningRegular);
        assert!(
            (class.integral_values[1] - 3.96).abs() < 4e-3,
            "I2 = {}",
            class.integral_values[1]
        );
        assert!(
            (class.integral_values[2] - 1.98).abs() < 2e-3,
            "I3 = {}",
            class.integral_values[2]
        );
    }

    #[test]
    fn x_squared_is_not_scattering() {
        // int |x V| = 2 int_0^10 x^3 dx = 5000 with a huge outer-half partial.
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let class = classify_potential(&v, &grid()).unwrap();
        assert!((class.integral_values[0] - 5000.0).abs() < 1.0);
        assert!(class.scattering_tail > 1.0);
        assert_ne!(class.label, PotentialLabel::Scattering);
    }

    #[test]
    fn zero_potential_is_unknown() {
        let g = Grid::new(-10.0, 10.0, 101).unwrap();
        let xs: Vec<f64> = g.points().collect();
        let vs = vec![0.0; g.n];
        let v = Potential::from_table(xs, vs).unwrap();
        let class = classify_potential(&v, &g).unwrap();
        assert_eq!(class.label, PotentialLabel::Unknown);
    }

    #[test]
    fn gaussian_well_is_scattering() {
        let g = Grid::new(-20.0, 20.0, 4001).unwrap();
        let xs: Vec<f64> = g.points().collect();
        let vs: Vec<f64> = xs.iter().map(|&x| -2.0 * (-x * x).exp()).collect();
        let v = Potential::from_table(xs, vs).unwrap();
        let class = classify_potential(&v, &g).unwrap();
        assert_eq!(class.label, PotentialLabel::Scattering);
    }

    #[test]
    fn doubling_x_max_changes_confining_integrals_below_one_percent() {
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        let c10 = classify_potential(&v, &grid()).unwrap();
        let g20 = Grid::new(-20.0, 20.0, 40001).unwrap();
        let c20 = classify_potential(&v, &g20).unwrap();
        for j in 1..=2 {
            let rel =
                (c20.integral_values[j] - c10.integral_values[j]).abs() / c10.integral_values[j];
            assert!(rel < 0.01, "integral {j} moved by {rel:.4}");
        }
    }

    #[test]
    fn spline_reproduces_smooth_samples() {
        let g = Grid::new(-5.0, 5.0, 501).unwrap();
        let xs: Vec<f64> = g.points().collect();
        let vs: Vec<f64> = xs.iter().map(|&x| x * x + (x * 0.7).sin()).collect();
        let v = Potential::from_table(xs.clone(), vs.clone()).unwrap();
        // Exact at the knots.
        for (x, expected) in xs.iter().zip(&vs) {
            assert_eq!(v.eval(*x), *expected);
        }
        // Accurate off the knots (the natural-spline end condition costs
        // accuracy in the outermost segments, which sit in the truncation
        // tails for every consumer).
        for i in 0..g.n - 1 {
            let x = xs[i] + 0.5 * g.spacing();
            let exact = x * x + (x * 0.7).sin();
            let tol = if i < 5 || i >= g.n - 6 { 1e-3 } else { 1e-6 };
            assert!((v.eval(x) - exact).abs() < tol, "x = {x}");
        }
        // Quadratic extrapolation stays finite and close just beyond the ends.
        let beyond = 5.0 + 0.01;
        assert!((v.eval(beyond) - (beyond * beyond + (beyond * 0.7).sin())).abs() < 1e-3);
    }

    #[test]
    fn table_rejects_malformed_input() {
        assert!(Potential::from_table(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(Potential::from_table(vec![0.0, 1.0, 1.0, 2.0], vec![0.0; 4]).is_err());
        assert!(
            Potential::from_table(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, f64::NAN, 0.0, 0.0]).is_err()
        );
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("darboux_core_pot_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.csv");
        let g = Grid::new(-3.0, 3.0, 301).unwrap();
        let v = Potential::builtin("harmonic", &[1.0]).unwrap();
        v.write_csv(&g, &path).unwrap();
        let back = Potential::from_csv(&path).unwrap();
        for x in [-2.5, -0.3, 0.0, 1.7] {
            assert!((back.eval(x) - x * x).abs() < 1e-9);
        }
        assert_eq!(back.symmetry_hint, SymmetryHint::Even);
        std::fs::remove_dir_all(&dir).ok();
    }
}
