use std::path::Path;

use crossed_fields_core::eigenscan::{exclusion_report, ScanOptions};
use crossed_fields_core::funcalc::EigenOptions;
use crossed_fields_core::semiclassics::{c0, gamma0, predict_ssf_increment, tauberian_kernel, SymbolContext};
use crossed_fields_core::{
    Error, ExclusionReport, Grid2D, OperatorContext, OperatorParams, PotentialSpec, SsfEngine, SsfMethod, SsfQuery,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, Range};
use crate::output::{float, write_csv, write_json, SCHEMA_VERSION};
use crate::{CliError, Outcome};

pub fn verify_trace(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.potential()?;
    let params = cfg.params()?;
    let grids = cfg.grids()?;
    let lambdas = cfg.lambdas()?;
    let q = cfg.query()?;
    let engine = SsfEngine::default();
    let mut rows = Vec::new();
    let mut last_sup = 0.0;
    for grid in &grids {
        let ctx = OperatorContext::new(*grid, params, spec.clone());
        let r = engine.both(&SsfQuery::new(lambdas.clone(), q.sigma, SsfMethod::Both, ctx))?;
        let (diff, formula) = (r.difference.as_deref().unwrap_or(&[]), r.formula.as_deref().unwrap_or(&[]));
        let rel = r.relative_residuals().unwrap_or_default();
        for k in 0..r.lambdas.len() {
            rows.push(vec![
                float(grid.lx),
                float(r.lambdas[k]),
                float(diff[k]),
                float(formula[k]),
                float((diff[k] - formula[k]).abs()),
                float(rel[k]),
            ]);
        }
        last_sup = r.sup_relative_residual().unwrap_or(0.0);
        println!("L={} N={}x{}: sup relative residual {last_sup:.3e}", grid.lx, grid.nx, grid.ny);
    }
    write_csv(
        out,
        "trace_identity.csv",
        &["L", "lambda", "diff_route", "formula_route", "abs_residual", "rel_residual"],
        &rows,
    )?;
    if last_sup <= q.tolerance {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Fail(format!("final sup relative residual {last_sup:.3e} exceeds tolerance {:.3e}", q.tolerance)))
    }
}

pub fn semiclassical(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.potential()?;
    let hs = cfg.h_list()?;
    if hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Config("[operator] h list must be strictly descending".into()));
    }
    let q = cfg.query()?;
    let [l1, l2] = q.weyl_window;
    if l1 >= l2 {
        return Err(CliError::Config("[query] weyl_window must be increasing".into()));
    }
    let grid = *cfg.grids()?.last().expect("nonempty grid list");
    let sym = SymbolContext::new(spec.clone());
    let engine = SsfEngine::default();
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &h in &hs {
        let predicted = predict_ssf_increment(l1, l2, h, &sym)?;
        let ctx = OperatorContext::new(grid, cfg.params_at(h)?, spec.clone());
        let (es_h, es_0) = (engine.spectrum(&ctx, true)?, engine.spectrum(&ctx, false)?);
        let bottom = es_h.values[0].max(es_0.values[0]);
        let top = es_h.values[es_h.dim() - 1].min(es_0.values[es_0.dim() - 1]);
        let guard = l1 - 3.0 * q.sigma >= bottom && l2 + 3.0 * q.sigma <= top;
        let numeric = engine.increment(&ctx, l1, l2, q.sigma)?;
        let scaled = (numeric - predicted).abs() * (2.0 * std::f64::consts::PI * h).powi(2);
        let ratio = if predicted == 0.0 { f64::NAN } else { numeric / predicted };
        println!("h={h}: numeric {numeric:.6}, predicted {predicted:.6}, scaled residual {scaled:.4e}, guard {guard}");
        rows.push(vec![float(h), float(numeric), float(predicted), float(ratio), float(scaled), guard.to_string()]);
        if guard {
            results.push((numeric, predicted, ratio, scaled));
        }
    }
    write_csv(out, "weyl_sweep.csv", &["h", "numeric", "predicted", "ratio", "scaled_residual", "guard"], &rows)?;
    let Some(&(numeric, predicted, ratio, scaled)) = results.last() else {
        return Err(CliError::Precondition("spectral guard fails at every h; enlarge the box".into()));
    };
    let close = if predicted == 0.0 { numeric.abs() <= 1e-10 } else { (0.85..=1.15).contains(&ratio) };
    let monotone = results.len() < 2 || scaled <= results[results.len() - 2].3;
    match (close, monotone) {
        (true, true) => Ok(Outcome::Pass),
        (false, _) => Ok(Outcome::Fail(format!("ratio {ratio:.4} outside [0.85, 1.15]"))),
        (true, false) => Ok(Outcome::Fail("scaled residual increased over the final two h values".into())),
    }
}

#[derive(Serialize)]
struct ScanDocument<'a> {
    schema_version: &'static str,
    grid: Grid2D,
    params: OperatorParams,
    potential: &'a PotentialSpec,
    report: ExclusionReport,
}

pub fn scan(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.potential()?;
    let params = cfg.params()?;
    let q = cfg.query()?;
    let opts = ScanOptions::default();
    let limit = EigenOptions::default().dense_limit;
    let grid = cfg
        .grids()?
        .into_iter()
        .filter(|g| g.dim() <= limit)
        .max_by_key(Grid2D::dim)
        .ok_or_else(|| CliError::Precondition(format!("no grid fits the dense limit of {limit} unknowns")))?;
    let report = exclusion_report(&grid, &params, &spec, (q.window[0], q.window[1]), &opts)?;
    println!(
        "L={} N={}x{}: {} candidates, {} bulk, {} excluded, {} surviving{}",
        grid.lx,
        grid.nx,
        grid.ny,
        report.candidates.len(),
        report.bulk_count(),
        report.excluded_count,
        report.surviving.len(),
        if report.inconclusive { " (inconclusive)" } else { "" }
    );
    let outcome = if report.surviving.is_empty() || report.inconclusive {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("{} bulk candidates survive the virial test", report.surviving.len()))
    };
    write_json(
        out,
        "eigenscan.json",
        &ScanDocument { schema_version: SCHEMA_VERSION, grid, params, potential: &spec, report },
    )?;
    Ok(outcome)
}

#[derive(Default)]
struct Flags {
    budget: bool,
    degenerate: bool,
}

fn curve_row(x: f64, value: crossed_fields_core::Result<f64>, flags: &mut Flags) -> Result<Vec<String>, CliError> {
    let (v, status) = match value {
        Ok(v) => (v, "ok"),
        Err(Error::QuadratureBudget { estimate, .. }) => {
            flags.budget = true;
            (estimate, "quadrature-budget")
        }
        Err(Error::DegenerateLevelSet { .. }) => {
            flags.degenerate = true;
            (f64::NAN, "degenerate")
        }
        Err(e) => return Err(e.into()),
    };
    Ok(vec![float(x), float(v), status.to_string()])
}

pub fn curves(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.potential()?;
    let q = cfg.query()?;
    let h = cfg.h_list()?[0];
    let sym = SymbolContext::new(spec);
    let lambdas = q.c0_lambda.unwrap_or(Range { start: -8.0, stop: 30.0, step: 0.5 }).values("[query] c0_lambda")?;
    let taus = q.tau.unwrap_or(Range { start: -3.0, stop: 3.0, step: 0.25 }).values("[query] tau")?;
    let mut flags = Flags::default();
    let c0_rows = lambdas.iter().map(|&l| curve_row(l, c0(l, &sym), &mut flags)).collect::<Result<Vec<_>, _>>()?;
    write_csv(out, "c0_curve.csv", &["lambda", "c0", "status"], &c0_rows)?;
    let g_rows = taus.iter().map(|&t| curve_row(t, gamma0(t, &sym), &mut flags)).collect::<Result<Vec<_>, _>>()?;
    write_csv(out, "gamma0_curve.csv", &["tau", "gamma0", "status"], &g_rows)?;
    let kernel = tauberian_kernel(q.kernel_kind, q.kernel_c0, h)?;
    let k_rows: Vec<_> = kernel.taus.iter().zip(&kernel.values).map(|(&t, &v)| vec![float(t), float(v)]).collect();
    write_csv(out, "kernel.csv", &["t", "theta_breve"], &k_rows)?;
    println!(
        "{} c0 samples, {} gamma0 samples, {} kernel samples (min/max {:.2e})",
        c0_rows.len(),
        g_rows.len(),
        k_rows.len(),
        kernel.min_value / kernel.max_value
    );
    if flags.degenerate {
        return Err(CliError::Precondition("gamma0 requested on a degenerate level set; rows flagged".into()));
    }
    if flags.budget {
        return Ok(Outcome::Fail("quadrature budget exhausted; best estimates flagged".into()));
    }
    Ok(Outcome::Pass)
}
