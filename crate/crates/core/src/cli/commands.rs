//! Subcommand pipelines: estimation with sensitivity analysis, rho-bound
//! derivation, and the simulation driver. All file writes are atomic
//! (write to a temp name, then rename).

use super::config::{AnalysisConfig, ScenarioFile};
use super::expand::expand_covariates;
use super::ingest::ingest;
use crate::aipw::{aipw_mean_y0, aipw_mean_y1, aipw_tau01, aipw_tau10, AipwResult, TargetParameter};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glmfit::{fit_nuisance, Arm, FitOptions, NuisanceFit};
use crate::sensitivity::{
    derive_rho_bounds, estimate_ate, uncertainty_interval, AteReport, IntervalReport,
    RhoBoundsReport, SensitivitySpec,
};
use crate::simulate::CoverageTable;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Build identifier embedded in reports (crate version + git describe).
pub fn version_string() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("HDSENS_GIT_DESCRIBE"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Ingest + expand + assemble the dataset a config describes.
pub fn build_dataset(config: &AnalysisConfig) -> Result<(Dataset, usize)> {
    let parsed = ingest(&config.input.path, config)?;
    let design = expand_covariates(&parsed, &config.expand)?;
    let n_dropped = parsed.n_dropped;
    Ok((Dataset::new(design, parsed.treat, parsed.y)?, n_dropped))
}

fn fit_options(config: &AnalysisConfig) -> Result<FitOptions> {
    Ok(FitOptions {
        outcome_penalty: config.fit.outcome_penalty.to_penalty()?,
        propensity_penalty: config.fit.propensity_penalty.to_penalty()?,
        trim_floor: config.fit.trim,
        cv_folds: config.fit.cv_folds,
        cv_seed: config.fit.seed,
        propensity_cv_rule: config.fit.cv_rule,
    })
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub arm: String,
    pub selected_outcome: Vec<usize>,
    pub selected_propensity: Vec<usize>,
    pub n_below_trim_floor: usize,
}

impl FitSummary {
    fn of(fit: &NuisanceFit) -> Self {
        FitSummary {
            arm: format!("{:?}", fit.arm),
            selected_outcome: fit.selected_outcome.clone(),
            selected_propensity: fit.selected_propensity.clone(),
            n_below_trim_floor: fit.n_below_floor,
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum TargetReport {
    Single(IntervalReport),
    Ate(AteReport),
}

/// Everything `estimate` writes into report.json.
#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub version: String,
    pub seed: u64,
    pub n: usize,
    pub n_treated: usize,
    pub n_dropped_rows: usize,
    pub design_columns: usize,
    pub target: TargetParameter,
    pub fits: Vec<FitSummary>,
    pub result: TargetReport,
    pub config: AnalysisConfig,
}

/// Run the full estimation pipeline and write report.json, intervals.csv and
/// plot data under the output directory. Returns the report.
pub fn cmd_estimate(config: &AnalysisConfig) -> Result<EstimateReport> {
    let (data, n_dropped) = build_dataset(config)?;
    let options = fit_options(config)?;
    let s = &config.sensitivity;
    let target = s.target;
    let out = &config.output.dir;

    let mut fits: Vec<FitSummary> = Vec::new();
    let result = match target {
        TargetParameter::Ate => {
            let fit1 = fit_nuisance(&data, Arm::Treated, &options)?;
            let fit0 = fit_nuisance(&data, Arm::Control, &options)?;
            fits.push(FitSummary::of(&fit1));
            fits.push(FitSummary::of(&fit0));
            let spec1 = SensitivitySpec::range(s.rho1_min, s.rho1_max, s.grid_size, s.sigma, s.alpha)?;
            let spec0 = SensitivitySpec::range(s.rho0_min, s.rho0_max, s.grid_size, s.sigma, s.alpha)?;
            let report = estimate_ate(&data, &fit1, &fit0, &spec1, &spec0, s.alpha)?;

            // per-arm interval reports back the plot data
            let a1 = aipw_mean_y1(&data, &fit1)?;
            let a0 = aipw_mean_y0(&data, &fit0)?;
            let r1 = uncertainty_interval(&data, &fit1, &a1, &spec1, TargetParameter::MeanY1)?;
            let r0 = uncertainty_interval(&data, &fit0, &a0, &spec0, TargetParameter::MeanY0)?;
            write_atomic(&out.join("plotdata_y1.csv"), plotdata_csv(&r1).as_bytes())?;
            write_atomic(&out.join("plotdata_y0.csv"), plotdata_csv(&r0).as_bytes())?;
            write_atomic(&out.join("intervals.csv"), ate_intervals_csv(&report).as_bytes())?;
            TargetReport::Ate(report)
        }
        single => {
            let arm = single.arm().expect("single targets have an arm");
            let fit = fit_nuisance(&data, arm, &options)?;
            fits.push(FitSummary::of(&fit));
            let aipw = single_aipw(&data, &fit, single)?;
            let spec = SensitivitySpec::range(s.rho_min, s.rho_max, s.grid_size, s.sigma, s.alpha)?;
            let report = uncertainty_interval(&data, &fit, &aipw, &spec, single)?;
            write_atomic(&out.join("intervals.csv"), intervals_csv(&report).as_bytes())?;
            write_atomic(&out.join("plotdata.csv"), plotdata_csv(&report).as_bytes())?;
            TargetReport::Single(report)
        }
    };

    let report = EstimateReport {
        version: version_string(),
        seed: config.fit.seed,
        n: data.n(),
        n_treated: data.n_treated(),
        n_dropped_rows: n_dropped,
        design_columns: data.design.p(),
        target,
        fits,
        result,
        config: config.clone(),
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn single_aipw(data: &Dataset, fit: &NuisanceFit, target: TargetParameter) -> Result<AipwResult> {
    match target {
        TargetParameter::MeanY1 => aipw_mean_y1(data, fit),
        TargetParameter::MeanY0 => aipw_mean_y0(data, fit),
        TargetParameter::MeanY1GivenT0 => aipw_tau10(data, fit),
        TargetParameter::MeanY0GivenT1 => aipw_tau01(data, fit),
        TargetParameter::Ate => Err(Error::InvalidArgument("ATE is not a single-arm target".into())),
    }
}

fn intervals_csv(r: &IntervalReport) -> String {
    let mut s = String::from("rho,point,ci_lower,ci_upper\n");
    for p in &r.per_rho {
        s.push_str(&format!("{},{},{},{}\n", p.rho, p.point, p.ci_lower, p.ci_upper));
    }
    s
}

fn ate_intervals_csv(r: &AteReport) -> String {
    let mut s = String::from("rho1,rho0,point,ci_lower,ci_upper\n");
    for p in &r.per_pair {
        s.push_str(&format!("{},{},{},{},{}\n", p.rho1, p.rho0, p.point, p.ci_lower, p.ci_upper));
    }
    s
}

/// Plot data: per-rho point line and CI band plus the constant rho = 0 CI
/// and uncertainty-interval band, ready for any external plotting tool.
fn plotdata_csv(r: &IntervalReport) -> String {
    let mut s = String::from(
        "rho,point,ci_lower,ci_upper,ci0_lower,ci0_upper,ui_lower,ui_upper\n",
    );
    for p in &r.per_rho {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.rho,
            p.point,
            p.ci_lower,
            p.ci_upper,
            r.unconfounded.ci_lower,
            r.unconfounded.ci_upper,
            r.ui_lower,
            r.ui_upper
        ));
    }
    s
}

#[derive(Debug, Serialize)]
pub struct BoundsReportFile {
    pub version: String,
    pub seed: u64,
    pub rho1_range: Option<(f64, f64)>,
    pub rho0_range: Option<(f64, f64)>,
    /// true when no grid point satisfied the ordering for the arm
    pub rho1_empty: bool,
    pub rho0_empty: bool,
    pub mean_y_treated: f64,
    pub mean_y_control: f64,
    pub config: AnalysisConfig,
}

/// Derive plausible rho ranges from the outcome ordering constraints and
/// write boundsdata.csv (the data behind the crossing plots) and
/// bounds.json. An empty feasible set is reported explicitly, not an error.
pub fn cmd_bounds(config: &AnalysisConfig) -> Result<BoundsReportFile> {
    let (data, _) = build_dataset(config)?;
    let options = fit_options(config)?;
    let fit1 = fit_nuisance(&data, Arm::Treated, &options)?;
    let fit0 = fit_nuisance(&data, Arm::Control, &options)?;
    let grid = config.bounds_grid();
    let report = derive_rho_bounds(&data, &fit1, &fit0, &grid, config.bounds.sigma)?;

    let out = &config.output.dir;
    write_atomic(&out.join("boundsdata.csv"), boundsdata_csv(&report).as_bytes())?;
    let file = BoundsReportFile {
        version: version_string(),
        seed: config.fit.seed,
        rho1_range: report.rho1_range,
        rho0_range: report.rho0_range,
        rho1_empty: report.rho1_range.is_none(),
        rho0_empty: report.rho0_range.is_none(),
        mean_y_treated: report.mean_y_treated,
        mean_y_control: report.mean_y_control,
        config: config.clone(),
    };
    write_json(&out.join("bounds.json"), &file)?;
    Ok(file)
}

fn boundsdata_csv(r: &RhoBoundsReport) -> String {
    let mut s =
        String::from("rho,middle_y1_t0,middle_y0_t1,mean_y_treated,mean_y_control\n");
    for (i, rho) in r.grid.iter().enumerate() {
        let fmt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            rho,
            fmt(&r.middle_y1_t0[i]),
            fmt(&r.middle_y0_t1[i]),
            r.mean_y_treated,
            r.mean_y_control
        ));
    }
    s
}

/// Run the coverage study a scenario file describes and write coverage.csv
/// plus a text rendering.
pub fn cmd_simulate(scenario_path: &Path, out_dir: &Path) -> Result<CoverageTable> {
    let file = ScenarioFile::load(scenario_path)?;
    let mut table = CoverageTable::default();
    for sc in file.scenarios() {
        log::info!("running scenario n={} rho={} ({} reps)", sc.n, sc.rho, sc.n_reps);
        table.merge(crate::simulate::run_coverage(&sc)?);
    }
    let mut csv_bytes = Vec::new();
    table.to_csv(&mut csv_bytes)?;
    write_atomic(&out_dir.join("coverage.csv"), &csv_bytes)?;
    write_atomic(&out_dir.join("coverage.txt"), table.render_text().as_bytes())?;
    Ok(table)
}

/// Scenario files live next to the binary in `configs/`; exposed for tests.
pub type OutPath = PathBuf;
