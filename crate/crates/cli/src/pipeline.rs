//! The construct → analyze → verify pipeline behind `forge run`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use darboux_core::darboux::{self, ChainClass, DarbouxPair, TailModel};
use darboux_core::ode::AsymClass;
use darboux_core::potential::{classify_potential, Potential, PotentialClass};
use darboux_core::regularity::{self, RegularityReport, TransformSpec, ALPHA_MATCH_TOL};
use darboux_core::spectrum::{compute_spectrum, SolverOptions, Spectrum};
use darboux_core::susy::{
    self, AlgebraReport, CaseLabel, CompletenessReport, OutcomeComparison, SpectralOutcome,
};
use darboux_core::{CoreError, Grid};
use serde::Serialize;

use crate::config::{CompletenessMode, ConfigError, PotentialSpec, RunConfig};

/// Pipeline failure classes, mapped to process exit codes by the binary.
#[derive(Debug)]
pub enum PipelineFailure {
    /// Invalid configuration (exit 2). No outputs are written.
    Config(String),
    /// The transformation could not be constructed (exit 3).
    Construction(String),
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineFailure::Config(m) => write!(f, "configuration: {m}"),
            PipelineFailure::Construction(m) => write!(f, "construction: {m}"),
        }
    }
}

impl std::error::Error for PipelineFailure {}

impl From<ConfigError> for PipelineFailure {
    fn from(e: ConfigError) -> Self {
        PipelineFailure::Config(e.0)
    }
}

fn construction(e: CoreError) -> PipelineFailure {
    PipelineFailure::Construction(e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionSummary {
    pub energy: f64,
    pub node_count: usize,
    pub asym_left: String,
    pub asym_right: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    pub u1: bool,
    pub u2: bool,
    pub v1: bool,
    pub v2: bool,
    /// Square-integrability flags exactly predict deletions and creations.
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReversionReport {
    pub left: TailModel,
    pub right: TailModel,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub timestamp: u64,
    pub config: RunConfig,
    pub potential_class: PotentialClass,
    pub spectrum_h0: Vec<f64>,
    pub u1: FunctionSummary,
    pub u2: FunctionSummary,
    pub chain_class: ChainClass,
    pub v1_poles: Vec<f64>,
    pub regularity: RegularityReport,
    pub w_identity_residual: f64,
    pub predicted: SpectralOutcome,
    pub verification: Option<OutcomeComparison>,
    pub algebra: Option<AlgebraReport>,
    pub annihilation: Option<[f64; 2]>,
    pub integrability: Option<IntegrabilityReport>,
    pub reversion: Option<ReversionReport>,
    pub completeness: Option<CompletenessReport>,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

pub struct PipelineOutput {
    pub report: RunReport,
    pub report_path: PathBuf,
    pub all_passed: bool,
}

fn summarize(wf: &darboux_core::WaveFunction) -> FunctionSummary {
    FunctionSummary {
        energy: wf.energy,
        node_count: wf.node_count,
        asym_left: format!("{:?}", wf.asym_left).to_lowercase(),
        asym_right: format!("{:?}", wf.asym_right).to_lowercase(),
    }
}

pub fn build_potential(spec: &PotentialSpec) -> Result<Potential, PipelineFailure> {
    match spec {
        PotentialSpec::Builtin { name, params } => {
            Potential::builtin(name, params).map_err(construction)
        }
        PotentialSpec::File { path } => Potential::from_csv(path).map_err(construction),
    }
}

/// Runs the full experiment. Writes the report bundle into the configured
/// output directory; returns the report together with the overall verdict.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput, PipelineFailure> {
    cfg.validate()?;
    let v0 = build_potential(&cfg.potential)?;
    let grid = Grid::new(cfg.x_min, cfg.x_max, cfg.n).map_err(construction)?;
    let opts = SolverOptions {
        energy_tol: cfg.tolerances.energy,
        defect_tol: cfg.tolerances.defect,
        ..SolverOptions::default()
    };
    let tol = cfg.tolerances;

    let potential_class = classify_potential(&v0, &grid).map_err(construction)?;

    // Base spectrum: enough levels for the gap and the partner comparison.
    let spectrum =
        compute_spectrum(&v0, cfg.k_max.max(cfg.k + 1), &grid, opts).map_err(construction)?;

    let tspec = TransformSpec {
        k: cfg.k,
        alpha1: cfg.alpha1,
        alpha2: cfg.alpha2,
        u1_selector: cfg.u1_selector,
        u2_selector: cfg.u2_selector,
    };
    tspec.validate(&spectrum).map_err(construction)?;

    let u1 = regularity::construct_u(&v0, cfg.alpha1, cfg.u1_selector, &spectrum, &grid)
        .map_err(construction)?;
    let u2 = regularity::construct_u(&v0, cfg.alpha2, cfg.u2_selector, &spectrum, &grid)
        .map_err(construction)?;

    let pair = darboux::second_order_transform(&v0, &u1, &u2).map_err(construction)?;
    let reg = regularity::verify_wronskian_regularity(&pair, &spectrum).map_err(construction)?;
    let w_identity_residual =
        regularity::w_derivative_identity_residual(&u1, &u2).map_err(construction)?;
    let predicted = susy::predict_outcome(&tspec, &u1, &u2, &spectrum).map_err(construction)?;

    let mut checks: Vec<Check> = Vec::new();
    let push = |checks: &mut Vec<Check>,
                name: &str,
                passed: bool,
                value: f64,
                threshold: f64,
                note: &str| {
        checks.push(Check {
            name: name.into(),
            passed,
            value,
            threshold,
            note: note.into(),
        });
    };

    push(
        &mut checks,
        "wronskian_zero_free",
        reg.zero_free,
        reg.window_ratio,
        regularity::ZERO_FREE_RATIO,
        "min|W|/max|W| over the central window, and no sign crossings",
    );
    push(
        &mut checks,
        "alternating_zeros",
        reg.alternating,
        if reg.alternating { 1.0 } else { 0.0 },
        1.0,
        "zeros of u1 and u2 interleave with counts differing by one",
    );
    push(
        &mut checks,
        "wronskian_extrema_at_u1u2_zeros",
        reg.extrema_aligned && reg.single_signed_core && reg.monotone_segments,
        if reg.extrema_aligned { 1.0 } else { 0.0 },
        1.0,
        "extrema of W on the zeros of u1·u2, single-signed monotone core",
    );
    push(
        &mut checks,
        "w_derivative_identity",
        w_identity_residual < tol.w_identity,
        w_identity_residual,
        tol.w_identity,
        "stencil W' against (alpha1 - alpha2) u1 u2",
    );

    let mut verification = None;
    let mut algebra = None;
    let mut annihilation = None;
    let mut integrability = None;
    let mut reversion = None;
    let mut completeness = None;

    if pair.regular {
        // Level-by-level partner spectrum comparison.
        match susy::verify_outcome(&pair, &predicted, &spectrum, cfg.k_max, opts) {
            Ok(cmp) => {
                push(
                    &mut checks,
                    "partner_spectrum_match",
                    cmp.matched,
                    cmp.max_deviation,
                    cmp.tolerance,
                    "computed spectrum of V2 against (h0 minus deletions) plus creations",
                );
                verification = Some(cmp);
            }
            Err(e) => {
                push(
                    &mut checks,
                    "partner_spectrum_match",
                    false,
                    f64::NAN,
                    tol.level_match,
                    &format!("partner spectrum failed: {e}"),
                );
            }
        }

        // Superalgebra residuals over psi_0..psi_7 (at least six survive the
        // kernel exclusions in every case).
        let test_levels: Vec<usize> = (0..spectrum.levels.len().min(8)).collect();
        match susy::factorization_residual(&pair, &spectrum, &test_levels) {
            Ok(rep) => {
                push(
                    &mut checks,
                    "intertwining",
                    rep.intertwining_residual < tol.algebra,
                    rep.intertwining_residual,
                    tol.algebra,
                    "h2(Lf) - E Lf over the test set",
                );
                push(
                    &mut checks,
                    "factorization_l_adj_l",
                    rep.factorization_residual_l_adj_l < tol.algebra,
                    rep.factorization_residual_l_adj_l,
                    tol.algebra,
                    "L+L = (h0-alpha1)(h0-alpha2) on eigenfunctions",
                );
                push(
                    &mut checks,
                    "factorization_l_l_adj",
                    rep.factorization_residual_l_l_adj < tol.algebra,
                    rep.factorization_residual_l_l_adj,
                    tol.algebra,
                    "LL+ = (h2-alpha1)(h2-alpha2) on transformed eigenfunctions",
                );
                algebra = Some(rep);
            }
            Err(e) => push(
                &mut checks,
                "intertwining",
                false,
                f64::NAN,
                tol.algebra,
                &format!("algebra test failed: {e}"),
            ),
        }

        match susy::annihilation_ratios(&pair) {
            Ok((a1, a2)) => {
                push(
                    &mut checks,
                    "kernel_annihilation",
                    a1 < tol.annihilation && a2 < tol.annihilation,
                    a1.max(a2),
                    tol.annihilation,
                    "‖L u1‖ and ‖L u2‖ relative to term scale",
                );
                annihilation = Some([a1, a2]);
            }
            Err(e) => push(
                &mut checks,
                "kernel_annihilation",
                false,
                f64::NAN,
                tol.annihilation,
                &format!("{e}"),
            ),
        }

        // Kernel functions of L+ and the integrability table.
        let kernel = match darboux::kernel_functions(&pair) {
            Ok(kf) => {
                let u1_sq = u1.asymptotic_class().ok() == Some(AsymClass::ZeroBoth);
                let u2_sq = u2.asymptotic_class().ok() == Some(AsymClass::ZeroBoth);
                let del = |a: f64| {
                    predicted
                        .deleted
                        .iter()
                        .any(|&d| (d - a).abs() <= ALPHA_MATCH_TOL)
                };
                let cre = |a: f64| {
                    predicted
                        .created
                        .iter()
                        .any(|&c| (c - a).abs() <= ALPHA_MATCH_TOL)
                };
                let consistent = (u1_sq == del(cfg.alpha1))
                    && (u2_sq == del(cfg.alpha2))
                    && (kf.v1_square_integrable == cre(cfg.alpha1))
                    && (kf.v2_square_integrable == cre(cfg.alpha2));
                push(
                    &mut checks,
                    "integrability_predicts_levels",
                    consistent,
                    if consistent { 1.0 } else { 0.0 },
                    1.0,
                    "square-integrability of u1, u2, v1, v2 matches deletions/creations",
                );
                integrability = Some(IntegrabilityReport {
                    u1: u1_sq,
                    u2: u2_sq,
                    v1: kf.v1_square_integrable,
                    v2: kf.v2_square_integrable,
                    consistent,
                });

                // Kernel of the adjoint and the eigen-residuals of v_j.
                let mut adj_worst = 0.0_f64;
                let mut eig_worst = 0.0_f64;
                for (vj, alpha) in [(&kf.v1, pair.alpha1), (&kf.v2, pair.alpha2)] {
                    if let Ok(out) = darboux::apply_l_adjoint(&pair, vj) {
                        let rng = 2..grid.n - 2;
                        let sup: f64 = out.values[rng.clone()]
                            .iter()
                            .fold(0.0, |m, v| m.max(v.abs()));
                        let scale: f64 = out.noise[rng].iter().fold(0.0, |m, v| m.max(*v));
                        if scale > 0.0 {
                            adj_worst = adj_worst.max(sup / scale);
                        }
                    }
                    eig_worst = eig_worst.max(eigen_residual(&pair, vj, alpha, &grid));
                }
                push(
                    &mut checks,
                    "adjoint_kernel",
                    adj_worst < tol.adjoint_kernel,
                    adj_worst,
                    tol.adjoint_kernel,
                    "‖L+ v_j‖ relative to term scale",
                );
                push(
                    &mut checks,
                    "kernel_eigen_residual",
                    eig_worst < tol.kernel_eigen,
                    eig_worst,
                    tol.kernel_eigen,
                    "v_j solve h2 v = alpha_j v away from the edges",
                );

                // Completeness evidence for the fully-degenerate cases.
                let wanted = match cfg.completeness {
                    CompletenessMode::On => true,
                    CompletenessMode::Off => false,
                    CompletenessMode::Auto => matches!(
                        predicted.case_label,
                        CaseLabel::ATwoCreated | CaseLabel::FKreinDoubleDelete
                    ),
                };
                if wanted {
                    let k_need = cfg.completeness_m_max + 2;
                    let big = if k_need > cfg.k_max {
                        compute_spectrum(&v0, k_need, &grid, opts)
                    } else {
                        Ok(spectrum.clone())
                    };
                    let m_values: Vec<usize> = (4..=cfg.completeness_m_max).collect();
                    match big.and_then(|sp| {
                        susy::completeness_check(
                            &pair,
                            &predicted,
                            &kf,
                            &sp,
                            &susy::DEFAULT_PROBES,
                            &m_values,
                        )
                    }) {
                        Ok(rep) => {
                            let v = susy::completeness_verdict(&rep, tol.completeness);
                            push(
                                &mut checks,
                                "completeness_residual",
                                v.passed,
                                v.endpoint,
                                tol.completeness,
                                "width-matched probe residual at max M; all probes non-increasing",
                            );
                            completeness = Some(rep);
                        }
                        Err(e) => push(
                            &mut checks,
                            "completeness_residual",
                            false,
                            f64::NAN,
                            tol.completeness,
                            &format!("completeness check failed: {e}"),
                        ),
                    }
                }

                Some(kf)
            }
            Err(e) => {
                push(
                    &mut checks,
                    "integrability_predicts_levels",
                    false,
                    f64::NAN,
                    1.0,
                    &format!("kernel functions unavailable: {e}"),
                );
                None
            }
        };

        reversion = darboux::reversion_models(&pair).map(|(left, right)| {
            let dev = darboux::reversion_deviation(&pair, 0.05).unwrap_or(f64::NAN);
            push(
                &mut checks,
                "asymptotic_reversion",
                dev < tol.reversion,
                dev,
                tol.reversion,
                "V2 - V0 against the per-side tail model on the outer 5%",
            );
            ReversionReport {
                left,
                right,
                max_deviation: dev,
            }
        });

        write_outputs(
            cfg,
            &grid,
            &pair,
            kernel.as_ref(),
            &spectrum,
            verification.as_ref(),
        )
        .map_err(|e| PipelineFailure::Construction(format!("writing outputs: {e}")))?;
    } else {
        // Non-regular pair: report what was measured; verification cannot run.
        write_outputs(cfg, &grid, &pair, None, &spectrum, None)
            .map_err(|e| PipelineFailure::Construction(format!("writing outputs: {e}")))?;
    }

    let all_passed = checks.iter().all(|c| c.passed);
    let report = RunReport {
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: cfg.clone(),
        potential_class,
        spectrum_h0: spectrum.levels.clone(),
        u1: summarize(&u1),
        u2: summarize(&u2),
        chain_class: pair.chain_class,
        v1_poles: pair.v1.poles.clone(),
        regularity: reg,
        w_identity_residual,
        predicted,
        verification,
        algebra,
        annihilation,
        integrability,
        reversion,
        completeness,
        checks,
        all_passed,
    };

    let report_path = cfg.output_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| PipelineFailure::Construction(format!("serializing report: {e}")))?;
    std::fs::write(&report_path, json + "\n")
        .map_err(|e| PipelineFailure::Construction(format!("writing report: {e}")))?;

    Ok(PipelineOutput {
        all_passed,
        report,
        report_path,
    })
}

/// Computes the h₀ spectrum only and exports it as CSV (`forge spectrum`).
pub fn run_spectrum(cfg: &RunConfig) -> Result<(Spectrum, PathBuf), PipelineFailure> {
    cfg.validate()?;
    let v0 = build_potential(&cfg.potential)?;
    let grid = Grid::new(cfg.x_min, cfg.x_max, cfg.n).map_err(construction)?;
    let opts = SolverOptions {
        energy_tol: cfg.tolerances.energy,
        defect_tol: cfg.tolerances.defect,
        ..SolverOptions::default()
    };
    let spectrum = compute_spectrum(&v0, cfg.k_max, &grid, opts).map_err(construction)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| PipelineFailure::Construction(format!("output dir: {e}")))?;
    let path = cfg.output_dir.join("spectrum_h0.csv");
    write_spectrum_csv(&path, &spectrum.levels)
        .map_err(|e| PipelineFailure::Construction(format!("writing spectrum: {e}")))?;
    Ok((spectrum, path))
}

fn eigen_residual(
    pair: &DarbouxPair,
    wf: &darboux_core::WaveFunction,
    alpha: f64,
    grid: &Grid,
) -> f64 {
    let dd = darboux_core::stencil::derivative2(&wf.values, grid.spacing());
    let skip = grid.n / 20;
    let mut worst = 0.0_f64;
    for i in skip..grid.n - skip {
        worst = worst.max((-dd[i] + (pair.v2_samples[i] - alpha) * wf.values[i]).abs());
    }
    worst / wf.max_abs()
}

/// Writes the per-quantity plot CSVs for a pair: V0, V1 (with pole markers),
/// V2, u1, u2, W. Returns the created paths.
pub fn emit_plot_data(pair: &DarbouxPair, outdir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(outdir)?;
    let grid = pair.grid();
    let mut written = Vec::new();

    let xy = |name: &str, values: &[f64]| -> std::io::Result<PathBuf> {
        let path = outdir.join(name);
        let mut out = String::from("x,value\n");
        for (i, x) in grid.points().enumerate() {
            out.push_str(&format!("{},{}\n", x, values[i]));
        }
        std::fs::write(&path, out)?;
        Ok(path)
    };
    let xy_pole = |name: &str, values: &[f64], mask: &[bool]| -> std::io::Result<PathBuf> {
        let path = outdir.join(name);
        let mut out = String::from("x,value,is_pole\n");
        for (i, x) in grid.points().enumerate() {
            let v = if mask[i] { 0.0 } else { values[i] };
            out.push_str(&format!("{},{},{}\n", x, v, u8::from(mask[i])));
        }
        std::fs::write(&path, out)?;
        Ok(path)
    };

    written.push(xy("V0.csv", &pair.v0_samples)?);
    written.push(xy_pole("V1.csv", &pair.v1.values, &pair.v1.pole_mask)?);
    if pair.regular {
        written.push(xy("V2.csv", &pair.v2_samples)?);
    } else {
        written.push(xy_pole("V2.csv", &pair.v2_samples, &pair.v2_pole_mask)?);
    }
    written.push(xy("u1.csv", &pair.u1.values)?);
    written.push(xy("u2.csv", &pair.u2.values)?);
    written.push(xy("W.csv", &pair.w.values)?);
    Ok(written)
}

fn write_outputs(
    cfg: &RunConfig,
    grid: &Grid,
    pair: &DarbouxPair,
    kernel: Option<&darboux_core::KernelFunctions>,
    spectrum: &Spectrum,
    verification: Option<&OutcomeComparison>,
) -> std::io::Result<()> {
    let outdir = &cfg.output_dir;
    emit_plot_data(pair, outdir)?;

    write_spectrum_csv(&outdir.join("spectrum_h0.csv"), &spectrum.levels)?;
    if let Some(cmp) = verification {
        write_spectrum_csv(&outdir.join("spectrum_h2.csv"), &cmp.computed)?;
    }

    let xy = |name: &str, values: &[f64]| -> std::io::Result<()> {
        let mut out = String::from("x,value\n");
        for (i, x) in grid.points().enumerate() {
            out.push_str(&format!("{},{}\n", x, values[i]));
        }
        std::fs::write(outdir.join(name), out)
    };
    if let Some(kf) = kernel {
        xy("v1.csv", &kf.v1.values)?;
        xy("v2.csv", &kf.v2.values)?;
    }

    // A few transformed eigenfunctions (surviving levels only).
    if pair.regular {
        let mut emitted = 0usize;
        for (n, psi) in spectrum.eigenfunctions.iter().enumerate() {
            if emitted >= 4 {
                break;
            }
            if let Ok(phi) = darboux::apply_l(pair, psi) {
                if susy::effectively_zero(&phi, 1e-10) {
                    continue;
                }
                let mut phi = phi;
                phi.normalize();
                xy(&format!("phi_{n}.csv"), &phi.values)?;
                emitted += 1;
            }
        }
    }
    Ok(())
}

fn write_spectrum_csv(path: &Path, levels: &[f64]) -> std::io::Result<()> {
    let mut out = String::from("k,E\n");
    for (k, e) in levels.iter().enumerate() {
        out.push_str(&format!("{k},{e}\n"));
    }
    std::fs::write(path, out)
}
