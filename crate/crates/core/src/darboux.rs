//! First- and second-order Darboux transforms.
//!
//! From two solutions u₁, u₂ of h₀u = αu (α₂ > α₁) the second-order
//! transform produces V₂ = V₀ − 2[log W(u₁,u₂)]″ and the intertwiner
//! L: ker-free solutions of h₀ map to solutions of h₂ = −∂² + V₂ at the same
//! energy. Presented as a chain of two first-order steps the intermediate
//! potential V₁ = V₀ − 2(log u₁)″ picks up poles at the zeros of u₁; the
//! chain is completely reducible only when u₁ is nodeless.
//!
//! Numerical conventions:
//! - log-derivative second derivatives are evaluated in the expanded form
//!   f″/f − (f′/f)², never by differencing log|f|, to avoid branch problems
//!   at sign changes — and with the derivatives of W taken from the identity
//!   W′ = (α₁−α₂)u₁u₂ rather than from stencils of W;
//! - the 3×3 Wronskian in L eliminates ψ″ through the Schrödinger equation,
//!   so only ψ and ψ′ enter;
//! - L⁺ is the composition of the reversed factorized first-order operators
//!   (+∂ + log-derivative terms), algebraically expanded so that the
//!   1/u₁ poles of the intermediate step cancel before evaluation.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::grid::Grid;
use crate::ode::{self, WaveFunction, WronskianTrace};
use crate::potential::Potential;
use crate::stencil;
use crate::Result;

/// |W| below this fraction of max|W| is treated as unresolvable: such
/// samples (possible only on very wide grids) revert V₂ to V₀. The V₂
/// expression itself is evaluated through the ratios W′/W and W″/W, so the
/// usable range is limited by the representability of W alone, not of W².
const W_RATIO_FLOOR: f64 = 1e-250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainClass {
    /// Intermediate potential regular: u₁ nodeless.
    CompletelyReducible,
    /// Intermediate potential has real poles at the nodes of u₁.
    IrreducibleSingular,
}

/// First-order transform output: V₁ samples with pole bookkeeping.
#[derive(Debug, Clone)]
pub struct V1Result {
    pub values: Vec<f64>,
    /// true where the sample lies within one grid cell of a zero of u.
    pub pole_mask: Vec<bool>,
    /// x-locations of the zeros of u.
    pub poles: Vec<f64>,
}

/// Bundle of one second-order transformation.
#[derive(Debug, Clone)]
pub struct DarbouxPair {
    pub v0: Potential,
    pub v0_samples: Vec<f64>,
    pub u1: WaveFunction,
    pub u2: WaveFunction,
    pub alpha1: f64,
    pub alpha2: f64,
    pub w: WronskianTrace,
    pub v1: V1Result,
    pub v2_samples: Vec<f64>,
    /// Samples where |W| fell below the representable floor and V₂ was
    /// reverted to V₀ (empty on sanely sized grids).
    pub v2_tail_fallback: Vec<bool>,
    /// Samples within one cell of a W zero crossing (non-regular pairs only).
    pub v2_pole_mask: Vec<bool>,
    pub chain_class: ChainClass,
    /// No W zero crossings inside the grid.
    pub regular: bool,
    v2_potential: Option<Potential>,
    du1: Vec<f64>,
    du2: Vec<f64>,
}

impl DarbouxPair {
    pub fn grid(&self) -> &Grid {
        &self.u1.grid
    }

    /// The transformed potential as a re-ingestable tabulated seed.
    pub fn v2_potential(&self) -> Result<&Potential> {
        self.v2_potential
            .as_ref()
            .ok_or(CoreError::NonRegularPair(self.w.zero_crossings.len()))
    }

    fn ensure_regular(&self) -> Result<()> {
        if self.regular {
            Ok(())
        } else {
            Err(CoreError::NonRegularPair(self.w.zero_crossings.len()))
        }
    }
}

/// Ker L⁺ basis: v₁ = u₂/W at energy α₁ and v₂ = u₁/W at energy α₂,
/// eigen-solutions of h₂.
#[derive(Debug, Clone)]
pub struct KernelFunctions {
    pub v1: WaveFunction,
    pub v2: WaveFunction,
    pub v1_square_integrable: bool,
    pub v2_square_integrable: bool,
}

/// V₁ = V₀ − 2(log u)″ with samples within one cell of a zero of u marked as
/// poles (poles are data, not failures).
///
/// The second derivative of u is eliminated through u″ = (V₀−α)u, leaving
/// V₁ = −V₀ + 2α + 2(u′/u)² with a single stencil pass.
pub fn first_order_transform(v0: &Potential, u: &WaveFunction) -> Result<V1Result> {
    let grid = u.grid;
    let v0_samples = v0.sample(&grid)?;
    first_order_from_samples(&v0_samples, u)
}

fn first_order_from_samples(v0_samples: &[f64], u: &WaveFunction) -> Result<V1Result> {
    let grid = u.grid;
    let h = grid.spacing();
    let du = stencil::derivative1(&u.values, h);
    let poles = u.node_positions();
    let mut pole_mask = vec![false; grid.n];
    for &p in &poles {
        let i = grid.nearest_index(p);
        for j in i.saturating_sub(1)..=(i + 1).min(grid.n - 1) {
            pole_mask[j] = true;
        }
    }
    let umax = u.max_abs();
    let mut values = vec![0.0; grid.n];
    for i in 0..grid.n {
        if pole_mask[i] {
            continue;
        }
        let ui = u.values[i];
        if ui.abs() < W_RATIO_FLOOR * umax {
            pole_mask[i] = true;
            continue;
        }
        let log_deriv = du[i] / ui;
        values[i] = -v0_samples[i] + 2.0 * u.energy + 2.0 * log_deriv * log_deriv;
    }
    Ok(V1Result {
        values,
        pole_mask,
        poles,
    })
}

/// Builds the full second-order transformation bundle.
///
/// Fails on α₂ ≤ α₁ or a degenerate pair (W ≡ 0). A Wronskian with zero
/// crossings still yields a pair, with the crossings marked as V₂ poles and
/// `regular` cleared.
pub fn second_order_transform(
    v0: &Potential,
    u1: &WaveFunction,
    u2: &WaveFunction,
) -> Result<DarbouxPair> {
    let (alpha1, alpha2) = (u1.energy, u2.energy);
    if alpha2 <= alpha1 {
        return Err(CoreError::AlphaOrder { alpha1, alpha2 });
    }
    if u1.grid != u2.grid {
        return Err(CoreError::GridMismatch);
    }
    let grid = u1.grid;
    let h = grid.spacing();
    let v0_samples = v0.sample(&grid)?;

    let w = ode::wronskian(u1, u2)?;
    let w_max = w.max_abs();
    let noise_max = w.noise.iter().fold(0.0_f64, |m, &v| m.max(v));
    if w_max == 0.0 || w_max <= ode::NODE_NOISE_FACTOR * noise_max {
        return Err(CoreError::DegenerateWronskian);
    }

    let du1 = stencil::derivative1(&u1.values, h);
    let du2 = stencil::derivative1(&u2.values, h);

    // W′ and W″ through the derivative identity W′ = (α₁−α₂)u₁u₂ instead of
    // stencils of W: differentiating the sampled Wronskian twice amplifies
    // the cancellation noise of u₁u₂′ − u₂u₁′ by the local condition number
    // of W″W − W′² and loses ~1e-5 absolute accuracy in V₂ tails.
    let delta = alpha1 - alpha2;
    let dw: Vec<f64> = (0..grid.n)
        .map(|i| delta * u1.values[i] * u2.values[i])
        .collect();
    let ddw: Vec<f64> = (0..grid.n)
        .map(|i| delta * (du1[i] * u2.values[i] + u1.values[i] * du2[i]))
        .collect();

    let mut v2_pole_mask = vec![false; grid.n];
    for &x in &w.zero_crossings {
        let i = grid.nearest_index(x);
        for j in i.saturating_sub(1)..=(i + 1).min(grid.n - 1) {
            v2_pole_mask[j] = true;
        }
    }

    let mut v2_samples = vec![0.0; grid.n];
    let mut v2_tail_fallback = vec![false; grid.n];
    for i in 0..grid.n {
        if v2_pole_mask[i] {
            continue;
        }
        let wi = w.values[i];
        if wi.abs() < W_RATIO_FLOOR * w_max {
            v2_samples[i] = v0_samples[i];
            v2_tail_fallback[i] = true;
            continue;
        }
        // (log W)″ = W″/W − (W′/W)², combined from the per-sample ratios so
        // that samples where |W| is hundreds of orders below max|W| (the
        // central plateau of a growing-W pair) never square into denormals.
        let r = dw[i] / wi;
        let s = ddw[i] / wi;
        v2_samples[i] = v0_samples[i] - 2.0 * (s - r * r);
    }

    let regular = w.zero_free();
    let v2_potential = if regular {
        let xs: Vec<f64> = grid.points().collect();
        Some(Potential::from_table(xs, v2_samples.clone())?)
    } else {
        None
    };

    let v1 = first_order_from_samples(&v0_samples, u1)?;
    let chain_class = if v1.poles.is_empty() {
        ChainClass::CompletelyReducible
    } else {
        ChainClass::IrreducibleSingular
    };

    Ok(DarbouxPair {
        v0: v0.clone(),
        v0_samples,
        u1: u1.clone(),
        u2: u2.clone(),
        alpha1,
        alpha2,
        w,
        v1,
        v2_samples,
        v2_tail_fallback,
        v2_pole_mask,
        chain_class,
        regular,
        v2_potential,
        du1,
        du2,
    })
}

/// Applies L ψ = W(u₁,u₂,ψ)/W(u₁,u₂).
///
/// The 3×3 Wronskian is expanded with every second derivative eliminated by
/// the Schrödinger equation of the respective function, leaving
/// L ψ = [α₂u₂·W(u₁,ψ) − α₁u₁·W(u₂,ψ) − Eψ·W(u₁,u₂)] / W(u₁,u₂)
/// so that only ψ, ψ′ and the cached u-data enter. Inputs proportional to u₁
/// or u₂ cancel exactly.
pub fn apply_l(pair: &DarbouxPair, psi: &WaveFunction) -> Result<WaveFunction> {
    pair.ensure_regular()?;
    if psi.grid != *pair.grid() {
        return Err(CoreError::GridMismatch);
    }
    let grid = psi.grid;
    let h = grid.spacing();
    let dpsi = stencil::derivative1(&psi.values, h);
    let e = psi.energy;
    let n = grid.n;

    let mut values = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        let (u1, u2, du1, du2) = (
            pair.u1.values[i],
            pair.u2.values[i],
            pair.du1[i],
            pair.du2[i],
        );
        let (p, dp) = (psi.values[i], dpsi[i]);
        let w1p = u1 * dp - p * du1;
        let w2p = u2 * dp - p * du2;
        let t1 = pair.alpha2 * u2 * w1p;
        let t2 = pair.alpha1 * u1 * w2p;
        let t3 = e * p * pair.w.values[i];
        let wi = pair.w.values[i];
        let val = (t1 - t2 - t3) / wi;
        let ns = (t1.abs() + t2.abs() + t3.abs()) / wi.abs();
        // W samples can underflow outright in the flushed tail of an extreme
        // grid; the output there has no representable value, so store zero.
        if val.is_finite() {
            values.push(val);
            noise.push(ns);
        } else {
            values.push(0.0);
            noise.push(0.0);
        }
    }

    let max = values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let mut log_scale = psi.log_scale;
    if max > 0.0 {
        let inv = 1.0 / max;
        for v in &mut values {
            *v *= inv;
        }
        for v in &mut noise {
            *v *= inv;
        }
        log_scale += max.ln();
    }
    Ok(ode::finish_wavefunction(values, noise, e, grid, log_scale))
}

/// Applies the formal adjoint L⁺ to a solution of h₂ at its tagged energy.
///
/// L⁺ = (∂ + (log u₁)′)(∂ + (log v)′) with v = −W/u₁; expanding the
/// composition and using u₁″ = (V₀−α₁)u₁ and W′ = (α₁−α₂)u₁u₂ turns it into
/// L⁺φ = (V₂−E)φ + (W′/W)φ′ + [(W′/W)′ − V₀ + α₁ + (α₁−α₂)u₁′u₂/W]φ,
/// which is free of the 1/u₁ poles of the literal two-step form. The φ″
/// elimination uses φ″ = (V₂−E)φ, so the input must solve h₂φ = Eφ.
pub fn apply_l_adjoint(pair: &DarbouxPair, phi: &WaveFunction) -> Result<WaveFunction> {
    pair.ensure_regular()?;
    if phi.grid != *pair.grid() {
        return Err(CoreError::GridMismatch);
    }
    let grid = phi.grid;
    let h = grid.spacing();
    let dphi = stencil::derivative1(&phi.values, h);
    let e = phi.energy;
    let delta = pair.alpha1 - pair.alpha2;
    let n = grid.n;

    let mut values = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        let wi = pair.w.values[i];
        let (u1, u2, du1, du2) = (
            pair.u1.values[i],
            pair.u2.values[i],
            pair.du1[i],
            pair.du2[i],
        );
        let dw_over_w = delta * u1 * u2 / wi;
        let ddw_over_w = delta * (du1 * u2 + u1 * du2) / wi;
        let dlog_prime = ddw_over_w - dw_over_w * dw_over_w;

        let t1 = (pair.v2_samples[i] - e) * phi.values[i];
        let t2 = dw_over_w * dphi[i];
        let t3 =
            (dlog_prime - pair.v0_samples[i] + pair.alpha1 + delta * du1 * u2 / wi) * phi.values[i];
        let val = t1 + t2 + t3;
        if val.is_finite() {
            values.push(val);
            noise.push(t1.abs() + t2.abs() + t3.abs());
        } else {
            values.push(0.0);
            noise.push(0.0);
        }
    }

    let max = values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let mut log_scale = phi.log_scale;
    if max > 0.0 {
        let inv = 1.0 / max;
        for v in &mut values {
            *v *= inv;
        }
        for v in &mut noise {
            *v *= inv;
        }
        log_scale += max.ln();
    }
    Ok(ode::finish_wavefunction(values, noise, e, grid, log_scale))
}

/// The Ker L⁺ basis v₁ = u₂/W (energy α₁) and v₂ = u₁/W (energy α₂), with
/// square-integrability decided by the tail classification of the ratios.
pub fn kernel_functions(pair: &DarbouxPair) -> Result<KernelFunctions> {
    pair.ensure_regular()?;
    let grid = *pair.grid();
    let make = |num: &WaveFunction, energy: f64| -> Result<WaveFunction> {
        let mut values = Vec::with_capacity(grid.n);
        for i in 0..grid.n {
            let r = num.values[i] / pair.w.values[i];
            if !r.is_finite() {
                return Err(CoreError::NonRegularPair(0));
            }
            values.push(r);
        }
        let max = values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        let mut log_scale = num.log_scale - pair.w.log_scale;
        if max > 0.0 {
            let inv = 1.0 / max;
            for v in &mut values {
                *v *= inv;
            }
            log_scale += max.ln();
        }
        Ok(ode::finish_wavefunction(
            values,
            Vec::new(),
            energy,
            grid,
            log_scale,
        ))
    };
    let v1 = make(&pair.u2, pair.alpha1)?;
    let v2 = make(&pair.u1, pair.alpha2)?;
    let sq = |wf: &WaveFunction| {
        matches!(
            (wf.asym_left, wf.asym_right),
            (ode::SideClass::Decaying, ode::SideClass::Decaying)
        )
    };
    let v1_sq = sq(&v1);
    let v2_sq = sq(&v2);
    Ok(KernelFunctions {
        v1,
        v2,
        v1_square_integrable: v1_sq,
        v2_square_integrable: v2_sq,
    })
}

/// Expected tail behavior of V₂ − V₀ on one grid side.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailModel {
    /// Constant limit of V₂ − V₀ (0 or ∓4√k for harmonic-family seeds).
    pub offset: f64,
    /// Coefficient of the 1/x² correction.
    pub inv_sq_coeff: f64,
    /// Coefficient of the 1/x⁴ correction.
    pub inv_quart_coeff: f64,
}

impl TailModel {
    pub fn eval(&self, x: f64) -> f64 {
        let x2 = x * x;
        self.offset + self.inv_sq_coeff / x2 + self.inv_quart_coeff / (x2 * x2)
    }
}

/// Per-side tail models of V₂ − V₀, available for harmonic-family seeds.
///
/// With V₀ = k·x² + c and ω = √k, growing solutions behave as
/// e^{+ωx²/2} x^{−s} (1 + β/x²) with s = (ᾱ/ω+1)/2, β = s(s+1)/(4ω), and
/// decaying ones as e^{−ωx²/2} x^{σ} (1 + γ/x²) with σ = (ᾱ/ω−1)/2,
/// γ = σ(1−σ)/(4ω), where ᾱ = α − c. Composing them, log W carries ±ωx²
/// when the exponential factors of u₁ and u₂ reinforce on a side and only a
/// power of x when they cancel; two derivatives give V₂ − V₀ as a constant
/// (0 or ∓4ω) plus 1/x² and 1/x⁴ corrections. Exponential reversion to V₀
/// therefore only happens on sides where the tail types differ.
pub fn reversion_models(pair: &DarbouxPair) -> Option<(TailModel, TailModel)> {
    use ode::SideClass::{Decaying, Growing};
    let omega = pair.v0.harmonic_stiffness()?.sqrt();
    let shift = pair.v0.lower_bound;
    let a1 = pair.alpha1 - shift;
    let a2 = pair.alpha2 - shift;
    let s_of = |a: f64| (a / omega + 1.0) / 2.0;
    let beta_of = |s: f64| s * (s + 1.0) / (4.0 * omega);
    let sig_of = |a: f64| (a / omega - 1.0) / 2.0;
    let gamma_of = |sg: f64| sg * (1.0 - sg) / (4.0 * omega);
    let model = |t1: ode::SideClass, t2: ode::SideClass| -> Option<TailModel> {
        match (t1, t2) {
            (Growing, Growing) => {
                let (s1, s2) = (s_of(a1), s_of(a2));
                let (b1, b2) = (beta_of(s1), beta_of(s2));
                let c2 = b1 + b2 + 2.0 * (b1 - b2) / (s1 - s2);
                Some(TailModel {
                    offset: -4.0 * omega,
                    inv_sq_coeff: -(a1 + a2 + 4.0 * omega) / omega,
                    inv_quart_coeff: -12.0 * c2,
                })
            }
            (Decaying, Decaying) => {
                let (sg1, sg2) = (sig_of(a1), sig_of(a2));
                let (g1, g2) = (gamma_of(sg1), gamma_of(sg2));
                let c2 = g1 + g2 - 2.0 * (g2 - g1) / (sg2 - sg1);
                Some(TailModel {
                    offset: 4.0 * omega,
                    inv_sq_coeff: (a1 + a2 - 4.0 * omega) / omega,
                    inv_quart_coeff: -12.0 * c2,
                })
            }
            (Decaying, Growing) => {
                let (sg1, s2) = (sig_of(a1), s_of(a2));
                let c2 = gamma_of(sg1) + beta_of(s2) - (s2 + sg1) / (2.0 * omega);
                Some(TailModel {
                    offset: 0.0,
                    inv_sq_coeff: (a1 - a2) / omega,
                    inv_quart_coeff: -12.0 * c2,
                })
            }
            (Growing, Decaying) => {
                let (s1, sg2) = (s_of(a1), sig_of(a2));
                let c2 = gamma_of(sg2) + beta_of(s1) - (s1 + sg2) / (2.0 * omega);
                Some(TailModel {
                    offset: 0.0,
                    inv_sq_coeff: (a2 - a1) / omega,
                    inv_quart_coeff: -12.0 * c2,
                })
            }
            _ => None,
        }
    };
    let left = model(pair.u1.asym_left, pair.u2.asym_left)?;
    let right = model(pair.u1.asym_right, pair.u2.asym_right)?;
    Some((left, right))
}

/// Max over the outer `fraction` of the grid of |V₂ − V₀ − model(x)|.
pub fn reversion_deviation(pair: &DarbouxPair, fraction: f64) -> Option<f64> {
    let (left, right) = reversion_models(pair)?;
    let grid = pair.grid();
    let m = ((grid.n as f64 * fraction) as usize).max(4);
    let mut worst = 0.0_f64;
    for i in 0..grid.n {
        let (x, model) = if i < m {
            (grid.x(i), &left)
        } else if i >= grid.n - m {
            (grid.x(i), &right)
        } else {
            continue;
        };
        let d = pair.v2_samples[i] - pair.v0_samples[i] - model.eval(x);
        worst = worst.max(d.abs());
    }
    Some(worst)
}

/// Rebuilds V₂ through the explicit two-step chain: V₁ from u₁, then
/// V₂ = V₁ − 2(log v)″ with v = L⁽¹⁾u₂ = −W/u₁. Returns the samples and a
/// validity mask (false near the V₁ poles, where the intermediate step is
/// singular and its stencils contaminated).
pub fn factored_v2(pair: &DarbouxPair) -> (Vec<f64>, Vec<bool>) {
    let grid = *pair.grid();
    let h = grid.spacing();
    let n = grid.n;
    let umax = pair.u1.max_abs();

    let mut v = vec![0.0; n];
    let mut ok = vec![true; n];
    for i in 0..n {
        if pair.v1.pole_mask[i] || pair.u1.values[i].abs() < W_RATIO_FLOOR * umax {
            ok[i] = false;
            continue;
        }
        v[i] = -pair.w.values[i] / pair.u1.values[i];
    }
    // Finite differences of a function with 1/(x−x₀) poles are inaccurate
    // well beyond the pole cell: the truncation term h⁴v⁽⁵⁾ grows like
    // d⁻⁶ at d cells from the pole, so the usable region starts where
    // h⁴/(dh)⁶ drops below the target accuracy. d ~ 10·h^(2/3)/h cells
    // keeps the local error under ~1e-6.
    let radius_cells = ((15.0 * h.powf(2.0 / 3.0) / h).ceil() as usize).max(5);
    let mut usable = ok.clone();
    for i in 0..n {
        if !ok[i] {
            let lo = i.saturating_sub(radius_cells);
            let hi = (i + radius_cells).min(n - 1);
            for u in usable.iter_mut().take(hi + 1).skip(lo) {
                *u = false;
            }
        }
    }

    // v solves the intermediate equation v″ = (V₁ − α₂)v, so
    // V₂ = V₁ − 2(log v)″ = −V₁ + 2α₂ + 2(v′/v)².
    let dv = stencil::derivative1(&v, h);
    let mut out = vec![0.0; n];
    for i in 0..n {
        if !usable[i] {
            continue;
        }
        let vi = v[i];
        if vi == 0.0 {
            usable[i] = false;
            continue;
        }
        let log_deriv = dv[i] / vi;
        out[i] = -pair.v1.values[i] + 2.0 * pair.alpha2 + 2.0 * log_deriv * log_deriv;
    }
    (out, usable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, mix, Side};

    const PI_4: f64 = 0.7511255444649425;

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 20001).unwrap()
    }

    fn oscillator() -> Potential {
        Potential::builtin("harmonic", &[1.0]).unwrap()
    }

    fn exact_wf(g: &Grid, f: impl Fn(f64) -> f64, energy: f64) -> WaveFunction {
        let values: Vec<f64> = g.points().map(f).collect();
        ode::finish_wavefunction(values, Vec::new(), energy, *g, 0.0)
    }

    fn psi0(g: &Grid) -> WaveFunction {
        exact_wf(g, |x| (-0.5 * x * x).exp() / PI_4, 1.0)
    }

    fn psi1(g: &Grid) -> WaveFunction {
        exact_wf(
            g,
            |x| std::f64::consts::SQRT_2 / PI_4 * x * (-0.5 * x * x).exp(),
            3.0,
        )
    }

    fn psi2(g: &Grid) -> WaveFunction {
        let norm = 1.0 / (8.0_f64.sqrt() * std::f64::consts::PI.sqrt()).sqrt();
        exact_wf(
            g,
            move |x| norm * (4.0 * x * x - 2.0) * (-0.5 * x * x).exp(),
            5.0,
        )
    }

    /// Mid-gap transformation functions for gap 0 built by theta scanning.
    fn gap_pair(g: &Grid) -> (WaveFunction, WaveFunction) {
        let v = oscillator();
        let u1 = scan_for_nodes(&v, 1.5, g, 2);
        let u2 = scan_for_nodes(&v, 2.5, g, 1);
        (u1, u2)
    }

    fn scan_for_nodes(v: &Potential, e: f64, g: &Grid, target: usize) -> WaveFunction {
        let fl = integrate(v, e, g, Side::Left).unwrap();
        let fr = integrate(v, e, g, Side::Right).unwrap();
        for j in 1..256 {
            let theta = std::f64::consts::PI * j as f64 / 256.0;
            let m = mix(&fl, &fr, theta).unwrap();
            if m.count_nodes() == target
                && m.asym_left == ode::SideClass::Growing
                && m.asym_right == ode::SideClass::Growing
            {
                return m;
            }
        }
        panic!("no {target}-node growing mix found at E = {e}");
    }

    #[test]
    fn v1_for_nodeless_u_is_shifted_oscillator() {
        let g = grid();
        let r = first_order_transform(&oscillator(), &psi0(&g)).unwrap();
        assert!(r.poles.is_empty());
        for (i, x) in g.points().enumerate() {
            if x.abs() <= 6.0 {
                assert!(
                    (r.values[i] - (x * x + 2.0)).abs() < 1e-6,
                    "x = {x}: V1 = {}",
                    r.values[i]
                );
            }
        }
    }

    #[test]
    fn v1_for_single_node_u_has_centrifugal_pole() {
        // (log x e^{-x²/2})″ = −1/x² − 1, so V₁ = x² + 2 + 2/x² off the pole.
        let g = grid();
        let r = first_order_transform(&oscillator(), &psi1(&g)).unwrap();
        assert_eq!(r.poles.len(), 1);
        assert!(r.poles[0].abs() < g.spacing());
        for (i, x) in g.points().enumerate() {
            if x.abs() <= 4.0 && x.abs() >= 0.05 && !r.pole_mask[i] {
                let expected = x * x + 2.0 + 2.0 / (x * x);
                assert!(
                    (r.values[i] - expected).abs() < 1e-4 * expected.abs(),
                    "x = {x}: V1 = {} vs {expected}",
                    r.values[i]
                );
            }
        }
    }

    #[test]
    fn v1_pole_tracks_node_of_gap_solution() {
        let g = grid();
        let v = oscillator();
        let u = integrate(&v, 1.5, &g, Side::Left).unwrap();
        assert_eq!(u.count_nodes(), 1);
        let node = u.node_positions()[0];
        let r = first_order_transform(&v, &u).unwrap();
        assert_eq!(r.poles.len(), 1);
        assert!((r.poles[0] - node).abs() <= g.spacing());
    }

    #[test]
    fn krein_pair_produces_shifted_partner() {
        let g = grid();
        let pair = second_order_transform(&oscillator(), &psi0(&g), &psi1(&g)).unwrap();
        assert!(pair.regular);
        assert_eq!(pair.chain_class, ChainClass::CompletelyReducible);
        let mut worst = 0.0_f64;
        for (i, x) in g.points().enumerate() {
            if x.abs() <= 6.0 {
                worst = worst.max((pair.v2_samples[i] - (x * x + 4.0)).abs());
            }
        }
        assert!(worst < 1e-6, "max |V2 - (x²+4)| = {worst:.3e}");
    }

    #[test]
    fn krein_v2_reverts_to_v0_plus_four_at_edges() {
        // Both u's decay, so W ~ e^{-x²} and V₂ − V₀ → +4 exactly.
        let g = grid();
        let pair = second_order_transform(&oscillator(), &psi0(&g), &psi1(&g)).unwrap();
        let skip = g.n - g.n / 20;
        for i in skip..g.n {
            let d = pair.v2_samples[i] - pair.v0_samples[i];
            assert!((d - 4.0).abs() < 1e-3, "x = {}: V2-V0 = {d}", g.x(i));
        }
    }

    #[test]
    fn mid_gap_pair_is_irreducible_but_regular() {
        let g = grid();
        let (u1, u2) = gap_pair(&g);
        let pair = second_order_transform(&oscillator(), &u1, &u2).unwrap();
        assert!(pair.regular, "{} crossings", pair.w.zero_crossings.len());
        assert_eq!(pair.chain_class, ChainClass::IrreducibleSingular);
        assert_eq!(pair.v1.poles.len(), 2);
        assert!(pair.v2_samples.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_bad_pairs() {
        let g = grid();
        let err = second_order_transform(&oscillator(), &psi1(&g), &psi0(&g));
        assert!(matches!(err, Err(CoreError::AlphaOrder { .. })));

        let mut u2 = psi0(&g);
        u2.energy = 3.0; // same samples, higher tag: W ≡ 0
        let err = second_order_transform(&oscillator(), &psi0(&g), &u2);
        assert!(matches!(err, Err(CoreError::DegenerateWronskian)));
    }

    #[test]
    fn l_annihilates_its_transformation_functions() {
        let g = grid();
        let pair = second_order_transform(&oscillator(), &psi0(&g), &psi1(&g)).unwrap();
        for u in [&pair.u1.clone(), &pair.u2.clone()] {
            let lu = apply_l(&pair, u).unwrap();
            // finish_wavefunction max-normalizes; a vanishing result keeps
            // max 0. Compare against the formula's term scale.
            let raw_max: f64 = lu
                .values
                .iter()
                .zip(&lu.noise)
                .map(|(v, n)| if *n > 0.0 { v.abs() / n } else { 0.0 })
                .fold(0.0, f64::max);
            assert!(
                lu.all_zero || raw_max < 1e-8,
                "‖Lu‖ relative to term scale: {raw_max:.3e}"
            );
        }
    }

    #[test]
    fn l_maps_psi2_to_partner_ground_state() {
        let g = grid();
        let pair = second_order_transform(&oscillator(), &psi0(&g), &psi1(&g)).unwrap();
        let phi = apply_l(&pair, &psi2(&g)).unwrap();
        assert_eq!(phi.energy, 5.0);
        // Residual of −φ″ + (x²+4)φ = 5φ.
        let h = g.spacing();
        let dd = stencil::derivative2(&phi.values, h);
        let skip = g.n / 20;
        let mut resid = 0.0_f64;
        for i in skip..g.n - skip {
            resid = resid
                .max((-dd[i] + pair.v2_samples[i] * phi.values[i] - 5.0 * phi.values[i]).abs());
        }
        assert!(resid / phi.max_abs() < 1e-5, "residual {resid:.3e}");
        // Shape: proportional to e^{-x²/2}, i.e. nodeless and even.
        assert_eq!(phi.count_nodes(), 0);
    }

    #[test]
    fn kernel_functions_of_krein_pair_are_not_square_integrable() {
        let g = grid();
        let pair = second_order_transform(&oscillator(), &psi0(&g), &psi1(&g)).unwrap();
        let kf = kernel_functions(&pair).unwrap();
        assert!(!kf.v1_square_integrable);
        assert!(!kf.v2_square_integrable);
        // v₂ = u₁/W ∝ e^{+x²/2}: nodeless, growing both sides.
        assert_eq!(kf.v2.count_nodes(), 0);
        assert_eq!(kf.v2.asym_left, ode::SideClass::Growing);
        // v₁ = u₂/W ∝ x e^{+x²/2}: one node.
        assert_eq!(kf.v1.count_nodes(), 1);
    }

    #[test]
    fn kernel_functions_of_case_a_pair_are_square_integrable() {
        let g = grid();
        let (u1, u2) = gap_pair(&g);
        let pair = second_order_transform(&oscillator(), &u1, &u2).unwrap();
        let kf = kernel_functions(&pair).unwrap();
        assert!(kf.v1_square_integrable);
        assert!(kf.v2_square_integrable);
    }

    #[test]
    fn kernel_function_eigen_residuals() {
        let g = grid();
        let (u1, u2) = gap_pair(&g);
        let pair = second_order_transform(&oscillator(), &u1, &u2).unwrap();
        let kf = kernel_functions(&pair).unwrap();
        let h = g.spacing();
        let skip = g.n / 20;
        for (vj, alpha) in [(&kf.v1, pair.alpha1), (&kf.v2, pair.alpha2)] {
            let dd = stencil::derivative2(&vj.values, h);
            let mut resid = 0.0_f64;
            for i in skip..g.n - skip {
                resid = resid
                    .max((-dd[i] + pair.v2_samples[i] * vj.values[i] - alpha * vj.values[i]).abs());
            }
            let rel = resid / vj.max_abs();
            assert!(rel < 1e-5, "alpha = {alpha}: eigen-residual {rel:.3e}");
        }
    }

    #[test]
    fn adjoint_annihilates_kernel_functions() {
        let g = grid();
        for (u1, u2) in [(psi0(&g), psi1(&g)), gap_pair(&g)] {
            let pair = second_order_transform(&oscillator(), &u1, &u2).unwrap();
            let kf = kernel_functions(&pair).unwrap();
            for vj in [&kf.v1, &kf.v2] {
                let out = apply_l_adjoint(&pair, vj).unwrap();
                // ‖L⁺v‖∞ relative to the sup of the operator's term scale,
                // excluding the cells where the stencils go one-sided.
                let rng = 2..g.n - 2;
                let sup: f64 = out.values[rng.clone()]
                    .iter()
                    .fold(0.0, |m, v| m.max(v.abs()));
                let scale: f64 = out.noise[rng].iter().fold(0.0, |m, v| m.max(*v));
                let rel = if scale > 0.0 { sup / scale } else { 0.0 };
                assert!(out.all_zero || rel < 1e-6, "‖L⁺v‖/scale = {rel:.3e}");
            }
        }
    }

    #[test]
    fn l_adjoint_l_is_polynomial_of_h0() {
        // L⁺Lψ₂ = (E−α₁)(E−α₂)ψ₂ = (5−1)(5−3)ψ₂ = 8ψ₂ for the Krein pair.
        let g = grid();
        let pair = second_order_transform(&oscillator(), &psi0(&g), &psi1(&g)).unwrap();
        let p2 = psi2(&g);
        let lpsi = apply_l(&pair, &p2).unwrap();
        let back = apply_l_adjoint(&pair, &lpsi).unwrap();
        // back is max-normalized; undo the scales to compare against 8ψ₂.
        let total_scale = (back.log_scale - p2.log_scale).exp();
        let skip = g.n / 20;
        let mut worst = 0.0_f64;
        for i in skip..g.n - skip {
            let lhs = back.values[i] * total_scale;
            let rhs = 8.0 * p2.values[i];
            worst = worst.max((lhs - rhs).abs());
        }
        let rel = worst / (8.0 * p2.max_abs());
        assert!(rel < 1e-4, "relative deviation {rel:.3e}");
    }

    #[test]
    fn factored_chain_reproduces_v2() {
        let g = grid();
        for (u1, u2) in [(psi0(&g), psi1(&g)), gap_pair(&g)] {
            let pair = second_order_transform(&oscillator(), &u1, &u2).unwrap();
            let (alt, usable) = factored_v2(&pair);
            let mut worst = 0.0_f64;
            for (i, x) in g.points().enumerate() {
                if usable[i] && x.abs() <= 8.0 {
                    worst = worst.max((alt[i] - pair.v2_samples[i]).abs());
                }
            }
            assert!(worst < 1e-5, "two-step V2 deviates by {worst:.3e}");
        }
    }
}
