use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use copas_core::comparators::{Estimator, Side};
use copas_core::rng::child_seed;
use copas_core::scoretest::{GridZ, SkippedPoint};
use copas_core::sim::PowerStudy;
use copas_core::{
    bootstrap_pvalue, copas_naive_test, default_grid, egger_test, fit_null, fit_sensitivity,
    trim_and_fill, ComparatorResult, Dataset, GridPoint, GridSpec, Method, NullFit, PowerReport,
    SelectionModel, SensitivityFit, TestKind,
};

use crate::error::{CliError, CliResult};
use crate::input::read_studies;
use crate::{GridArgs, Model, SensitivityArgs, SimulateArgs, TestArgs};

pub const SCHEMA: u32 = 1;

/// Prints the report and, when asked, writes the same bytes to `out`.
pub fn emit<T: Serialize>(report: &T, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Numerical(format!("cannot encode report: {e}")))?;
    text.push('\n');
    if let Some(path) = out {
        write_file(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Lattice from the grid flags; the γ1 range defaults to the one derived
/// from the spread of standard errors.
fn build_grid(data: &Dataset, args: &GridArgs) -> CliResult<GridSpec> {
    let base = default_grid(data, 0.1, 0.9)?;
    let mut grid = GridSpec::new(
        args.gamma0_range.unwrap_or(base.gamma0_range),
        args.gamma1_range.unwrap_or(base.gamma1_range),
        args.lattice,
        args.lattice,
    )?;
    grid.range_fallback = args.gamma1_range.is_none() && base.range_fallback;
    Ok(grid)
}

#[derive(Serialize)]
struct GridReport {
    gamma0_range: (f64, f64),
    gamma1_range: (f64, f64),
    n_gamma0: usize,
    n_gamma1: usize,
    n_points_used: usize,
    seed: u64,
    range_fallback: bool,
    information: copas_core::InformationKind,
    points: Vec<GridPoint>,
}

#[derive(Serialize)]
struct ComparatorEntry {
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extras: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl ComparatorEntry {
    fn new(method: Method, r: copas_core::Result<ComparatorResult>) -> Self {
        match r {
            Ok(r) => ComparatorEntry {
                method,
                statistic: Some(r.statistic),
                p_value: Some(r.p_value),
                extras: Some(r.extras),
                error: None,
            },
            Err(e) => ComparatorEntry {
                method,
                statistic: None,
                p_value: None,
                extras: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Serialize)]
struct TestReport {
    schema: u32,
    command: &'static str,
    input: String,
    n_studies: usize,
    seed: u64,
    null_fit: NullFit,
    grid: GridReport,
    t_stat: f64,
    argmax_point: GridPoint,
    z_values: Vec<GridZ>,
    skipped: Vec<SkippedPoint>,
    p_value: f64,
    b_boot: usize,
    n_dropped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    boot_t: Option<Vec<f64>>,
    comparators: Vec<ComparatorEntry>,
}

fn comparator_methods(names: &[String]) -> CliResult<Vec<Method>> {
    let mut methods = Vec::new();
    for name in names {
        let m = match name.trim() {
            "none" => continue,
            "egger" => Method::Egger,
            "tf" | "trim_fill" | "trimfill" => Method::TrimFill,
            "naive" | "copas_naive" => Method::CopasNaive,
            other => {
                return Err(CliError::Data(format!(
                    "unknown comparator `{other}` (expected egger, tf, naive or none)"
                )))
            }
        };
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

pub fn test(args: &TestArgs) -> CliResult<()> {
    let methods = comparator_methods(&args.comparators)?;
    let input = read_studies(&args.input)?;
    let data = &input.data;
    let grid = build_grid(data, &args.grid)?
        .with_points(args.grid_points)?
        .with_seed(child_seed(args.seed, 0))
        .with_information(args.information.into());
    let result = bootstrap_pvalue(data, &grid, args.b_boot, child_seed(args.seed, 1))?;

    let comparators = methods
        .iter()
        .map(|&m| {
            let r = match m {
                Method::Egger => egger_test(data),
                Method::TrimFill => trim_and_fill(data, Estimator::L0, Side::Auto),
                Method::CopasNaive => copas_naive_test(data),
            };
            ComparatorEntry::new(m, r)
        })
        .collect();

    let report = TestReport {
        schema: SCHEMA,
        command: "test",
        input: args.input.display().to_string(),
        n_studies: data.n(),
        seed: args.seed,
        null_fit: result.null_fit,
        grid: GridReport {
            gamma0_range: grid.gamma0_range,
            gamma1_range: grid.gamma1_range,
            n_gamma0: grid.n_gamma0,
            n_gamma1: grid.n_gamma1,
            n_points_used: grid.n_points_used,
            seed: grid.seed,
            range_fallback: grid.range_fallback,
            information: grid.information,
            points: grid.points(),
        },
        t_stat: result.t_stat,
        argmax_point: result.argmax_point,
        z_values: result.z_values,
        skipped: result.skipped,
        p_value: result.p_value,
        b_boot: result.b_boot,
        n_dropped: result.n_dropped,
        boot_t: args.keep_boot.then_some(result.boot_t),
        comparators,
    };
    emit(&report, args.out.as_deref())
}

#[derive(Serialize)]
struct FitEntry {
    gamma0: f64,
    gamma1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<SensitivityFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct SensitivityReport {
    schema: u32,
    command: &'static str,
    input: String,
    n_studies: usize,
    null_fit: NullFit,
    fits: Vec<FitEntry>,
}

fn linspace((lo, hi): (f64, f64), k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

pub fn sensitivity(args: &SensitivityArgs) -> CliResult<()> {
    let input = read_studies(&args.input)?;
    let data = &input.data;
    let null_fit = fit_null(data)?;

    let points: Vec<(f64, f64)> = match (args.gamma0, args.gamma1) {
        (Some(g0), Some(g1)) => vec![(g0, g1)],
        _ => {
            if args.sweep_size == 0 {
                return Err(CliError::Data("--sweep-size must be at least 1".into()));
            }
            let grid = build_grid(data, &args.grid)?;
            let g0 = linspace(grid.gamma0_range, args.sweep_size);
            let g1 = linspace(grid.gamma1_range, args.sweep_size);
            g0.iter()
                .flat_map(|&a| g1.iter().map(move |&b| (a, b)))
                .collect()
        }
    };
    let outcomes: Vec<copas_core::Result<SensitivityFit>> = points
        .par_iter()
        .map(|&(g0, g1)| fit_sensitivity(data, g0, g1))
        .collect();
    if points.len() == 1 {
        if let Err(e) = &outcomes[0] {
            return Err(e.clone().into());
        }
    } else if outcomes.iter().all(|o| o.is_err()) {
        return Err(CliError::Numerical(format!(
            "every sensitivity fit failed; first: {}",
            outcomes[0].as_ref().unwrap_err()
        )));
    }
    let fits: Vec<FitEntry> = points
        .iter()
        .zip(outcomes)
        .map(|(&(gamma0, gamma1), o)| match o {
            Ok(fit) => FitEntry {
                gamma0,
                gamma1,
                fit: Some(fit),
                error: None,
            },
            Err(e) => FitEntry {
                gamma0,
                gamma1,
                fit: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    if let Some(path) = &args.csv {
        write_file(path, &sensitivity_csv(&fits)?)?;
    }
    let report = SensitivityReport {
        schema: SCHEMA,
        command: "sensitivity",
        input: args.input.display().to_string(),
        n_studies: data.n(),
        null_fit,
        fits,
    };
    emit(&report, args.out.as_deref())
}

fn sensitivity_csv(fits: &[FitEntry]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| CliError::Io(format!("cannot encode CSV: {e}"));
    w.write_record([
        "gamma0",
        "gamma1",
        "mu_adj",
        "tau2_adj",
        "rho_hat",
        "se_mu",
        "ci_lo",
        "ci_hi",
        "loglik",
        "converged",
        "error",
    ])
    .map_err(encode)?;
    for entry in fits {
        let mut row = vec![entry.gamma0.to_string(), entry.gamma1.to_string()];
        match &entry.fit {
            Some(f) => row.extend(
                [
                    f.mu_adj, f.tau2_adj, f.rho_hat, f.se_mu, f.mu_ci.0, f.mu_ci.1, f.loglik,
                ]
                .iter()
                .map(f64::to_string)
                .chain([f.converged.to_string(), String::new()]),
            ),
            None => {
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(entry.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&row).map_err(encode)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(format!("cannot encode CSV: {e}")))
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    schema: u32,
    command: &'static str,
    #[serde(flatten)]
    report: &'a PowerReport,
}

fn test_kinds(names: &[String]) -> CliResult<Vec<TestKind>> {
    let mut kinds = Vec::new();
    for name in names {
        let k = match name.trim() {
            "score" | "score_test" => TestKind::ScoreTest,
            "egger" => TestKind::Egger,
            "tf" | "trim_fill" => TestKind::TrimFill,
            "naive" | "copas_naive" => TestKind::CopasNaive,
            other => {
                return Err(CliError::Data(format!(
                    "unknown test `{other}` (expected score, egger, tf or naive)"
                )))
            }
        };
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    Ok(kinds)
}

fn power_study(args: &SimulateArgs) -> CliResult<PowerStudy> {
    let mut study = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<PowerStudy>(&text)
                .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?
        }
        None => PowerStudy::default(),
    };
    let cfg = &mut study.config;
    macro_rules! apply {
        ($($src:ident => $dst:expr),* $(,)?) => {
            $(if let Some(v) = args.$src { $dst = v; })*
        };
    }
    apply!(
        n => cfg.n, mu => cfg.mu, tau2 => cfg.tau2, rho => cfg.rho,
        gamma0 => cfg.gamma0, gamma1 => cfg.gamma1, c => cfg.c,
        s_loc => cfg.s_loc, s_scale => cfg.s_scale, seed => cfg.seed,
        replicates => study.n_replicates, b_boot => study.b_boot,
        grid_points => study.grid_points,
    );
    if let Some(m) = args.model {
        cfg.model = match m {
            Model::Copas => SelectionModel::Copas,
            Model::AltInvS2 => SelectionModel::AltInvS2,
            Model::AltZscore => SelectionModel::AltZscore,
        };
    }
    if args.zscore_noise {
        cfg.zscore_noise = true;
    }
    if let Some(info) = args.information {
        study.information = info.into();
    }
    if let Some(names) = &args.tests {
        study.tests = test_kinds(names)?;
    }
    if let Some(alpha) = &args.alpha {
        study.alpha_levels = alpha.clone();
    }
    if study.b_boot == 0 {
        return Err(CliError::Data("b_boot must be at least 1".into()));
    }
    Ok(study)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let study = power_study(args)?;
    let mut report = copas_core::run_power_study(&study)?;
    if !args.timing {
        report.mean_runtime = None;
    }
    if let Some(path) = &args.csv {
        write_file(path, report.to_csv().as_bytes())?;
    }
    emit(
        &SimulateReport {
            schema: SCHEMA,
            command: "simulate",
            report: &report,
        },
        args.out.as_deref(),
    )
}
