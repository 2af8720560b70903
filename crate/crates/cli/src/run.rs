//! Command dispatch.

use capflow_core::conformal::FlowSpec;
use capflow_core::functionals::{
    blowup_bound_check, energy_with, euclidean_limit_trace, monotonicity_trace, BlowupReport, EnergyValue,
    EuclideanSurface, TraceOptions,
};
use capflow_core::index_lab::{
    build_index_problem, dual_annulus, dual_form_identity_check, urbano_report_with, DualIdentityReport, DualSummary,
    Flavor,
};
use capflow_core::spectral::{
    dirichlet_spectrum, index_count, robin_spectrum, steklov_spectrum, IndexReport, SpectrumSummary,
};
use capflow_core::surface::builtin::builtin_surface;
use capflow_core::surface::ParametricSurface;
use log::info;
use serde::Serialize;

use crate::config::{
    CommandKind, ExperimentConfig, SpectrumChoice, DEFAULT_COUNT, DEFAULT_DUAL_TOL, DEFAULT_RADII, DEFAULT_SEED,
    DEFAULT_STEPS, DEFAULT_SUBSTEPS, DEFAULT_TRIALS, DEFAULT_T_MAX,
};
use crate::error::CliError;
use crate::output::{emit, to_json};
use crate::suites::{self, Suite};

/// Invariant checks that failed during a run.
#[derive(Debug, Default)]
pub struct RunStatus {
    pub violations: Vec<String>,
}

impl RunStatus {
    fn flag(&mut self, cond: bool, msg: impl FnOnce() -> String) {
        if cond {
            self.violations.push(msg());
        }
    }
}

fn build_surface(cfg: &ExperimentConfig) -> Result<ParametricSurface, CliError> {
    let spec = cfg.surface()?;
    builtin_surface(&spec.name, &spec.params).map_err(CliError::core("surface_geometry"))
}

/// Execute the configured command and write its artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    cfg.validate()?;
    let command = cfg.command.ok_or_else(|| CliError::Config("no command given".into()))?;
    info!("running {command:?}");
    match command {
        CommandKind::Flow => flow(cfg),
        CommandKind::Energy => energy(cfg),
        CommandKind::Spectrum => spectrum(cfg),
        CommandKind::Index => index(cfg),
        CommandKind::Dual => dual(cfg),
        CommandKind::Limit => limit(cfg),
        CommandKind::Verify => verify(cfg),
    }
}

fn flow(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let s = build_surface(cfg)?;
    let a = cfg.flow.a.as_ref().ok_or_else(|| CliError::Config("flow needs a direction `a`".into()))?;
    let spec = FlowSpec::from_slice(a).map_err(CliError::core("conformal_kernel"))?;
    let (t_max, steps) = (cfg.flow.t_max.unwrap_or(DEFAULT_T_MAX), cfg.flow.steps.unwrap_or(DEFAULT_STEPS));
    let times: Vec<f64> = (0..=steps).map(|i| t_max * i as f64 / steps as f64).collect();
    let opts = TraceOptions {
        quad: cfg.quad(),
        c_h: cfg.tolerances.c_h,
        substeps: cfg.tolerances.substeps.unwrap_or(DEFAULT_SUBSTEPS),
        slope_tol: cfg.tolerances.slope_tol,
    };
    let trace = monotonicity_trace(&s, &spec, &times, &opts).map_err(CliError::core("functionals"))?;
    emit(cfg.outputs.out.as_deref(), &trace.to_csv())?;
    let mut st = RunStatus::default();
    st.flag(!trace.is_monotone(), || {
        format!(
            "{:?} quantity increases at {} step(s), first at t = {}",
            trace.kind,
            trace.violations.len(),
            trace.violations[0].0
        )
    });
    Ok(st)
}

#[derive(Serialize)]
struct EnergyOutput {
    surface: String,
    energy: EnergyValue,
    blowup: Option<BlowupReport>,
}

fn energy(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let s = build_surface(cfg)?;
    let e = energy_with(&s, &cfg.quad()).map_err(CliError::core("functionals"))?;
    // The blowup bound is stated for capillary surfaces only.
    let blowup =
        if s.contact.is_some() { Some(blowup_bound_check(&s).map_err(CliError::core("functionals"))?) } else { None };
    let mut st = RunStatus::default();
    if let Some(b) = &blowup {
        st.flag(!b.holds, || format!("blowup bound fails by {}", b.margin));
    }
    emit(cfg.outputs.out.as_deref(), &to_json(&EnergyOutput { surface: s.name.clone(), energy: e, blowup }))?;
    Ok(st)
}

#[derive(Serialize)]
struct SpectrumOutput {
    surface: String,
    flavor: Flavor,
    h: f64,
    #[serde(flatten)]
    spectrum: SpectrumSummary,
}

fn spectrum(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let s = build_surface(cfg)?;
    let flavor = cfg.flavor.unwrap_or(Flavor::Spectral);
    let problem = build_index_problem(&s, flavor, cfg.h()).map_err(CliError::core("spectral_forms"))?;
    if let Some(p) = &cfg.outputs.mesh {
        emit(Some(p), &problem.form.mesh.dump())?;
    }
    let mut form = problem.assemble().map_err(CliError::core("spectral_forms"))?;
    if let Some(z) = cfg.tolerances.zero_tol {
        form = form.with_zero_tol(z);
    }
    let count = cfg.count.unwrap_or(DEFAULT_COUNT);
    let report = match cfg.spectrum.unwrap_or(SpectrumChoice::Robin) {
        SpectrumChoice::Robin => robin_spectrum(&form, count),
        SpectrumChoice::Dirichlet => dirichlet_spectrum(&form, count),
        SpectrumChoice::Steklov => steklov_spectrum(&form, count),
    }
    .map_err(CliError::core("spectral_forms"))?;
    if let Some(p) = &cfg.outputs.eigenfunctions {
        emit(Some(p), &report.eigenfunction_csv())?;
    }
    let out = SpectrumOutput { surface: s.name.clone(), flavor, h: cfg.h(), spectrum: report.summary() };
    emit(cfg.outputs.out.as_deref(), &to_json(&out))?;
    Ok(RunStatus::default())
}

#[derive(Serialize)]
struct IndexOutput {
    surface: String,
    flavor: Flavor,
    h: f64,
    #[serde(flatten)]
    index: IndexReport,
}

fn index(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let s = build_surface(cfg)?;
    let flavor = cfg.flavor.unwrap_or(Flavor::Morse);
    let mut st = RunStatus::default();
    if flavor == Flavor::Morse {
        let r = urbano_report_with(&s, cfg.h(), cfg.tolerances.zero_tol).map_err(CliError::core("index_lab"))?;
        for c in r.checks.iter().filter(|c| c.applicable && !c.holds) {
            st.violations.push(format!("check `{}` fails", c.name));
        }
        emit(cfg.outputs.out.as_deref(), &to_json(&r))?;
    } else {
        let mut form = build_index_problem(&s, flavor, cfg.h())
            .and_then(|p| p.assemble())
            .map_err(CliError::core("spectral_forms"))?;
        if let Some(z) = cfg.tolerances.zero_tol {
            form = form.with_zero_tol(z);
        }
        let r = index_count(&form).map_err(CliError::core("spectral_forms"))?;
        st.flag(!r.agreement, || format!("index sum {} + {} differs from the Robin count {}", r.a, r.b, r.ind_robin));
        emit(
            cfg.outputs.out.as_deref(),
            &to_json(&IndexOutput { surface: s.name.clone(), flavor, h: cfg.h(), index: r }),
        )?;
    }
    Ok(st)
}

#[derive(Serialize)]
struct DualOutput {
    dual: DualSummary,
    identities: Option<DualIdentityReport>,
}

fn dual(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let s = build_surface(cfg)?;
    let tol = cfg.tolerances.dual_tol.unwrap_or(DEFAULT_DUAL_TOL);
    let d = dual_annulus(&s, cfg.epsilon).map_err(CliError::core("index_lab"))?.summary();
    let trials = cfg.trials.unwrap_or(DEFAULT_TRIALS);
    // The form identities compare trial fields on hemisphere surfaces only.
    let hemisphere = s.radius().is_some_and(|r| (r - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    let identities = if trials > 0 && hemisphere {
        Some(
            dual_form_identity_check(&s, trials, cfg.seed.unwrap_or(DEFAULT_SEED))
                .map_err(CliError::core("index_lab"))?,
        )
    } else {
        None
    };
    let mut st = RunStatus::default();
    let worst = d.metric_residual.max(d.angle_residual).max(d.cap_residual).max(d.param_residual);
    st.flag(worst > tol, || format!("dual surface residual {worst} exceeds {tol}"));
    if let Some(r) = &identities {
        let w = r.morse_residual.max(r.modified_residual);
        st.flag(w > tol, || format!("dual form identity residual {w} exceeds {tol}"));
    }
    emit(cfg.outputs.out.as_deref(), &to_json(&DualOutput { dual: d, identities }))?;
    Ok(st)
}

fn limit(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let y = cfg.y.clone().unwrap_or_else(|| vec![0.0; 3]);
    let disc = EuclideanSurface::flat_disc([y[0], y[1], y[2]]).map_err(CliError::core("functionals"))?;
    let radii = cfg.radii.clone().unwrap_or_else(|| DEFAULT_RADII.to_vec());
    let table = euclidean_limit_trace(&disc, &radii, Some(&y), &cfg.quad()).map_err(CliError::core("functionals"))?;
    emit(cfg.outputs.out.as_deref(), &to_json(&table))?;
    Ok(RunStatus::default())
}

fn verify(cfg: &ExperimentConfig) -> Result<RunStatus, CliError> {
    let mut st = RunStatus::default();
    let mut lines = String::new();
    for check in suites::select(cfg.suite.unwrap_or(Suite::All)) {
        let r = suites::run_check(check);
        info!("{} ({:.1} s)", r.line(), r.seconds);
        lines.push_str(&r.line());
        lines.push('\n');
        st.flag(!r.passed, || format!("check {} ({}) failed", r.id, r.name));
    }
    emit(cfg.outputs.out.as_deref(), &lines)?;
    Ok(st)
}
