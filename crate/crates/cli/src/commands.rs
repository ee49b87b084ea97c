use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use wqed_core::analysis::{feature_window, find_peaks, fit_fano, fit_lorentzian, select_window, AnalysisError};
use wqed_core::config::{FitModel, PopulationBasis, RunConfig};
use wqed_core::io::{
    parse_spectrum_csv, write_dressed_csv, write_levels_csv, write_map_csv, write_spectrum_csv, SpectrumCsv,
};
use wqed_core::oracle::{build_lattice_with, oracle_scatter, required_sites};
use wqed_core::scattering::{density_map, dressed_populations, reflection_transmission, sweep_spectrum, Scatterer, SpectrumOptions, SpectrumTable};
use wqed_core::spectrum::{converge_cutoff, eigendecompose, find_anticrossing, sweep_levels, LevelSweep, SpectrumError};
use wqed_core::BasisState;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn missing(block: &str) -> CliError {
    CliError::Config(format!("config has no `{block}` block"))
}

fn create(dir: &str, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = Path::new(dir).join(name);
    let f = File::create(&path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok((path, BufWriter::new(f)))
}

fn write_json(dir: &str, name: &str, value: &Value) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    use std::io::Write;
    writeln!(w).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(path)
}

fn config_value(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

pub fn levels(cfg: &RunConfig) -> Result<(), CliError> {
    let block = cfg.levels.as_ref().ok_or_else(|| missing("levels"))?;
    let params = cfg.system_params().map_err(|e| CliError::Config(e.to_string()))?;
    let [lo, hi] = block.delta_range;
    let n_max = match block.n_max {
        Some(n) => n,
        None => {
            converge_cutoff(&params, 0.5 * (lo + hi), block.n_levels.min(12), 1e-8)
                .map_err(numerical)?
                .n_max
                .max(block.n_levels.div_ceil(4))
        }
    };
    let sweep = LevelSweep {
        delta_min: lo,
        delta_max: hi,
        n_points: block.n_points,
        n_levels: block.n_levels,
        n_max,
        counter_rotating: cfg.counter_rotating,
    };
    let curves = sweep_levels(&params, &sweep).map_err(numerical)?;
    let (path, w) = create(&cfg.output_dir, "levels.csv")?;
    write_levels_csv(w, &curves, &cfg.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
    println!("wrote {} ({} points, n_max = {n_max})", path.display(), curves.delta_grid.len());

    if let Some([a, b]) = &block.anticrossing {
        let la: BasisState = a.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let lb: BasisState = b.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let record = match find_anticrossing(&curves, la, lb) {
            Ok(ac) => {
                println!(
                    "anticrossing {la}/{lb}: delta* = {:.6}, gap = {:.6e}{}",
                    ac.delta_star,
                    ac.gap,
                    if ac.is_crossing { " (true crossing)" } else { "" }
                );
                json!({ "config": config_value(cfg), "anticrossing": ac })
            }
            Err(e @ SpectrumError::NoSwapDetected(..)) => {
                println!("anticrossing {la}/{lb}: {e}");
                json!({ "config": config_value(cfg), "anticrossing": null, "reason": e.to_string() })
            }
            Err(e) => return Err(numerical(e)),
        };
        let path = write_json(&cfg.output_dir, "anticrossing.json", &record)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn spectrum_options(cfg: &RunConfig, refine: bool) -> SpectrumOptions {
    SpectrumOptions {
        counter_rotating: cfg.counter_rotating,
        refine_resonances: refine,
    }
}

fn run_spectra(cfg: &RunConfig) -> Result<Vec<(String, SpectrumTable)>, CliError> {
    let block = cfg.scatter.as_ref().ok_or_else(|| missing("scatter"))?;
    let variants = cfg
        .lambda2_variants(&block.lambda2_values)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let [lo, hi] = block.omega_range;
    variants
        .into_iter()
        .map(|(suffix, p)| {
            let t = sweep_spectrum(&p, lo, hi, block.n_points, &spectrum_options(cfg, block.refine_resonances))
                .map_err(numerical)?;
            Ok((suffix, t))
        })
        .collect()
}

fn write_spectrum(cfg: &RunConfig, name: &str, table: &SpectrumTable) -> Result<PathBuf, CliError> {
    let (path, w) = create(&cfg.output_dir, name)?;
    write_spectrum_csv(w, table, &cfg.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(path)
}

pub fn scatter(cfg: &RunConfig) -> Result<(), CliError> {
    let block = cfg.scatter.as_ref().ok_or_else(|| missing("scatter"))?;
    for (suffix, table) in run_spectra(cfg)? {
        let path = write_spectrum(cfg, &format!("spectrum{suffix}.csv"), &table)?;
        let flagged = table.rows.iter().filter(|r| !r.is_ok()).count();
        println!(
            "wrote {} ({} rows, {flagged} flagged)",
            path.display(),
            table.rows.len()
        );
        let peaks = find_peaks(&table, block.min_height, block.min_prominence).map_err(numerical)?;
        println!(
            "lambda = ({}, {}): {} peak(s)",
            table.params.lambda1(),
            table.params.lambda2(),
            peaks.len()
        );
        for p in &peaks {
            println!("  omega = {:.6}  R = {:.6}  prominence = {:.4}", p.omega, p.height, p.prominence);
        }
        write_json(
            &cfg.output_dir,
            &format!("peaks{suffix}.json"),
            &json!({ "config": config_value(cfg), "lambda2": table.params.lambda2(), "peaks": peaks }),
        )?;
    }
    Ok(())
}

pub fn populations(cfg: &RunConfig) -> Result<(), CliError> {
    let block = cfg.populations.as_ref().ok_or_else(|| missing("populations"))?;
    let variants = cfg
        .lambda2_variants(&block.lambda2_values)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let [lo, hi] = block.omega_range;
    for (suffix, p) in variants {
        let table = sweep_spectrum(&p, lo, hi, block.n_points, &spectrum_options(cfg, block.refine_resonances))
            .map_err(numerical)?;
        match block.basis {
            PopulationBasis::Bare => {
                let path = write_spectrum(cfg, &format!("populations{suffix}.csv"), &table)?;
                println!("wrote {}", path.display());
                let best = table
                    .valid_rows()
                    .filter_map(|r| r.populations.as_ref())
                    .max_by(|a, b| a.antisymmetric.total_cmp(&b.antisymmetric));
                if let Some(b) = best {
                    println!(
                        "lambda = ({}, {}): max antisymmetric population {:.6e} at omega = {:.6}",
                        p.lambda1(),
                        p.lambda2(),
                        b.antisymmetric,
                        b.omega
                    );
                }
            }
            PopulationBasis::Dressed => {
                let s = Scatterer::with_counter_rotating(p, cfg.counter_rotating);
                let eig = eigendecompose(&s.blocks().h_loc).map_err(numerical)?;
                let rows: Vec<(f64, Option<Vec<f64>>)> = table
                    .rows
                    .par_iter()
                    .map(|r| {
                        let pops = s.solve(r.omega).ok().and_then(|a| dressed_populations(&a, &eig).ok());
                        (r.omega, pops)
                    })
                    .collect();
                let (path, w) = create(&cfg.output_dir, &format!("populations_dressed{suffix}.csv"))?;
                write_dressed_csv(w, &eig.values, &rows, &cfg.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

pub fn map(cfg: &RunConfig) -> Result<(), CliError> {
    let block = cfg.map.as_ref().ok_or_else(|| missing("map"))?;
    let params = cfg.system_params().map_err(|e| CliError::Config(e.to_string()))?;
    let m = density_map(
        &params,
        (block.omega_range[0], block.omega_range[1]),
        (block.delta_range[0], block.delta_range[1]),
        block.n_omega,
        block.n_delta,
        cfg.counter_rotating,
    )
    .map_err(numerical)?;
    let (path, w) = create(&cfg.output_dir, "map.csv")?;
    write_map_csv(w, &m, &cfg.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
    println!("wrote {} ({} cells)", path.display(), m.values.len());
    let slice_max = m
        .deltas
        .iter()
        .enumerate()
        .flat_map(|(i, _)| m.omegas.iter().enumerate().map(move |(j, w)| (i, j, *w)))
        .filter(|(_, _, w)| (w - 1.0).abs() <= 0.01)
        .map(|(i, j, _)| m.get(i, j))
        .filter(|r| r.is_finite())
        .fold(f64::NAN, f64::max);
    println!("max R for |omega - 1| <= 0.01: {slice_max:.6}");
    write_json(
        &cfg.output_dir,
        "map.json",
        &json!({
            "config": config_value(cfg),
            "layout": "rows ordered by delta (outer) then omega (inner)",
            "n_omega": m.omegas.len(),
            "n_delta": m.deltas.len(),
            "omega_range": block.omega_range,
            "delta_range": block.delta_range,
            "singular_cells": m.values.iter().filter(|v| v.is_nan()).count(),
        }),
    )?;
    Ok(())
}

fn spectrum_as_csv(cfg: &RunConfig, table: &SpectrumTable) -> Result<SpectrumCsv, CliError> {
    let mut buf = Vec::new();
    write_spectrum_csv(&mut buf, table, &cfg.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
    parse_spectrum_csv(buf.as_slice()).map_err(|e| CliError::Io(e.to_string()))
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let block = cfg.fit.as_ref().ok_or_else(|| missing("fit"))?;
    let mut datasets: Vec<(String, SpectrumCsv)> = Vec::new();
    if block.inputs.is_empty() {
        for (suffix, table) in run_spectra(cfg)? {
            let path = write_spectrum(cfg, &format!("spectrum{suffix}.csv"), &table)?;
            println!("wrote {}", path.display());
            datasets.push((path.display().to_string(), spectrum_as_csv(cfg, &table)?));
        }
    } else {
        for input in &block.inputs {
            let f = File::open(input).map_err(|e| CliError::Io(format!("cannot read {input}: {e}")))?;
            let parsed = parse_spectrum_csv(f).map_err(|e| CliError::Config(format!("{input}: {e}")))?;
            datasets.push((input.clone(), parsed));
        }
    }

    let mut records = Vec::new();
    let mut failures = 0;
    for (name, data) in &datasets {
        for target in &block.targets {
            let (xs, ys) = data
                .series(&target.column)
                .ok_or_else(|| CliError::Config(format!("{name} has no column `{}`", target.column)))?;
            let window = match target.auto_window {
                Some(k) => feature_window(
                    &xs,
                    &ys,
                    (target.window[0], target.window[1]),
                    target.target,
                    k,
                    0.05,
                ),
                None => Ok((target.window[0], target.window[1])),
            };
            let result: Result<Value, AnalysisError> = window.and_then(|(lo, hi)| {
                let (x, y) = select_window(&xs, &ys, lo, hi);
                Ok(match target.model {
                    FitModel::Fano => json!({ "window": [lo, hi], "fit": fit_fano(&x, &y)? }),
                    FitModel::Lorentzian => json!({ "window": [lo, hi], "fit": fit_lorentzian(&x, &y)? }),
                })
            });
            let model = match target.model {
                FitModel::Fano => "fano",
                FitModel::Lorentzian => "lorentzian",
            };
            match result {
                Ok(v) => {
                    let f = &v["fit"];
                    let center = f.get("omega0").or_else(|| f.get("center")).cloned().unwrap_or(Value::Null);
                    println!(
                        "{name}: {model} fit of {} -> center {center}, width {}",
                        target.column, f["width"]
                    );
                    records.push(json!({ "input": name, "column": target.column, "model": model, "result": v }));
                }
                Err(e) => {
                    failures += 1;
                    println!("{name}: {model} fit of {} failed: {e}", target.column);
                    records.push(json!({ "input": name, "column": target.column, "model": model, "error": e.to_string() }));
                }
            }
        }
    }
    let path = write_json(&cfg.output_dir, "fits.json", &json!({ "config": config_value(cfg), "fits": records }))?;
    println!("wrote {}", path.display());
    if failures > 0 {
        return Err(CliError::Numerical(format!("{failures} fit(s) failed")));
    }
    Ok(())
}

pub fn oracle(cfg: &RunConfig) -> Result<(), CliError> {
    let block = cfg.oracle.as_ref().ok_or_else(|| missing("oracle"))?;
    let params = cfg.system_params().map_err(|e| CliError::Config(e.to_string()))?;
    let fwhm = block.packet_fwhm * params.gamma_wg();
    let n_sites = block.n_sites.unwrap_or_else(|| required_sites(&params, fwhm));
    let closed = Scatterer::with_counter_rotating(params, cfg.counter_rotating);
    let runs: Vec<Result<Value, CliError>> = block
        .omegas
        .par_iter()
        .map(|&omega| {
            let model = build_lattice_with(&params, omega, n_sites, fwhm, cfg.counter_rotating)
                .map_err(|e| CliError::Config(e.to_string()))?
                .with_dt(block.dt);
            let start = std::time::Instant::now();
            let res = oracle_scatter(&model, omega).map_err(numerical)?;
            let (r, t) = reflection_transmission(&closed.solve(omega).map_err(numerical)?);
            Ok(json!({
                "omega": omega,
                "oracle": res,
                "closed_form": { "R": r, "T": t },
                "abs_diff_R": (res.reflection - r).abs(),
                "abs_diff_T": (res.transmission - t).abs(),
                "seconds": start.elapsed().as_secs_f64(),
            }))
        })
        .collect();
    let runs: Vec<Value> = runs.into_iter().collect::<Result<_, _>>()?;
    for r in &runs {
        println!(
            "omega = {}: oracle R = {:.6}, T = {:.6} (residual {:.2e}); closed form R = {:.6}, T = {:.6}",
            r["omega"],
            r["oracle"]["reflection"].as_f64().unwrap_or(f64::NAN),
            r["oracle"]["transmission"].as_f64().unwrap_or(f64::NAN),
            r["oracle"]["residual"].as_f64().unwrap_or(f64::NAN),
            r["closed_form"]["R"].as_f64().unwrap_or(f64::NAN),
            r["closed_form"]["T"].as_f64().unwrap_or(f64::NAN),
        );
    }
    let path = write_json(&cfg.output_dir, "oracle.json", &json!({ "config": config_value(cfg), "runs": runs }))?;
    println!("wrote {}", path.display());
    Ok(())
}
