use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use mtlf_core::baselines::BaselineKind;
use mtlf_core::checkpoint;
use mtlf_core::dataset::{self, MonthlySeries, SplitSpec, Stage, SynthConfig, YearMonth};
use mtlf_core::diagnostics;
use mtlf_core::ensemble::run_ensemble;
use mtlf_core::metrics;
use mtlf_core::{Collection, Series};

use crate::config::RunConfig;
use crate::{BaselineArgs, EvaluateArgs, GradcheckArgs, SynthArgs, TrainArgs};

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_series(path: &Path, series: &[Series], column: &str) -> Result<()> {
    let mut w = create(path)?;
    dataset::write_csv(series, column, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load(path: &Path) -> Result<Collection> {
    dataset::load_csv(path).with_context(|| format!("loading {}", path.display()))
}

/// Pooled MAPE of forecasts against held-out actuals, for the run summary.
fn holdout_mape(forecasts: &BTreeMap<String, Vec<f64>>, targets: &[Series]) -> Result<f64> {
    let actuals = targets.iter().map(|s| (s.id.clone(), s.values.clone())).collect();
    Ok(metrics::evaluate(forecasts, &actuals)?.pooled.mape)
}

pub fn train(args: &TrainArgs) -> Result<ExitCode> {
    let cfg = RunConfig::from_args(args)?;
    let data = load(&args.data)?;
    let staged = dataset::stage_data(&data, cfg.split, cfg.stage)?;
    let checkpoints = args.out.join("checkpoints");
    let logs = args.out.join("logs");
    for dir in [&args.out, &checkpoints, &logs] {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let outcome = run_ensemble(&staged.train, &cfg.ensemble)?;
    let start = staged.forecast_start();

    let forecasts_path = args.out.join("forecasts.csv");
    let mut w = create(&forecasts_path)?;
    outcome.forecasts.write_csv(start, &mut w)?;
    w.flush()?;

    let members_path = args.out.join("members.csv");
    if args.emit_members {
        let mut w = create(&members_path)?;
        outcome.forecasts.write_members_csv(start, &mut w)?;
        w.flush()?;
    }

    let actuals_path = args.out.join("actuals.csv");
    if let Some(targets) = &staged.targets {
        write_series(&actuals_path, targets, "value")?;
    }

    let mut members = Vec::with_capacity(outcome.members.len());
    for m in &outcome.members {
        let stem = format!("run{}_pool{}", m.run, m.pool);
        let ckpt = checkpoints.join(format!("{stem}.json"));
        checkpoint::save_model(&m.model, &ckpt)?;
        let log = logs.join(format!("{stem}.csv"));
        let mut w = csv_writer(&log)?;
        w.write_record(["epoch", "batch", "loss"])?;
        for r in &m.model.log {
            w.write_record([r.epoch.to_string(), r.batch.to_string(), r.loss.to_string()])?;
        }
        w.flush()?;
        members.push(json!({
            "run": m.run,
            "pool": m.pool,
            "seed": m.seed,
            "held_out": m.held_out,
            "checkpoint": relative(&args.out, &ckpt),
            "log": relative(&args.out, &log),
        }));
    }

    let manifest = json!({
        "command": "train",
        "data": args.data.display().to_string(),
        "config": cfg,
        "training_end": staged.train.common_end.to_string(),
        "forecast_start": start.to_string(),
        "members": members,
        "partitions": outcome.partitions.iter().map(|p| &p.subsets).collect::<Vec<_>>(),
        "artifacts": {
            "forecasts": "forecasts.csv",
            "members": args.emit_members.then_some("members.csv"),
            "actuals": staged.targets.as_ref().map(|_| "actuals.csv"),
        },
    });
    write_json(&args.out.join("manifest.json"), &manifest)?;

    println!(
        "trained {} models on {} series; forecasts for {} onward in {}",
        outcome.members.len(),
        staged.train.len(),
        start,
        forecasts_path.display()
    );
    if let Some(targets) = &staged.targets {
        let mape = holdout_mape(&outcome.forecasts.aggregates(), targets)?;
        println!("hold-out MAPE: {mape:.3}");
    }
    Ok(ExitCode::SUCCESS)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn relative(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

/// Actual values of `forecast`'s months, taken from the matching series.
fn aligned_actuals(forecast: &Series, actual: &Series) -> Result<Vec<f64>> {
    let offset = forecast.start.ordinal() - actual.start.ordinal();
    if offset < 0 || offset as usize + forecast.len() > actual.len() {
        bail!(
            "actuals for {} cover {}..{}, forecasts need {}..{}",
            forecast.id,
            actual.start,
            actual.end(),
            forecast.start,
            forecast.end()
        );
    }
    let offset = offset as usize;
    Ok(actual.values[offset..offset + forecast.len()].to_vec())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<ExitCode> {
    let forecasts = load(&args.forecasts)?;
    let actuals = load(&args.actuals)?;
    let mut f_map = BTreeMap::new();
    let mut a_map = BTreeMap::new();
    for f in &forecasts.series {
        let a = actuals
            .get(&f.id)
            .with_context(|| format!("series {} has forecasts but no actuals", f.id))?;
        a_map.insert(f.id.clone(), aligned_actuals(f, a)?);
        f_map.insert(f.id.clone(), f.values.clone());
    }
    for a in &actuals.series {
        if forecasts.get(&a.id).is_none() {
            bail!("series {} has actuals but no forecasts", a.id);
        }
    }
    let report = metrics::evaluate(&f_map, &a_map)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join("report.json"), &json!({ "pe_convention": metrics::PE_CONVENTION, "report": report }))?;
    let table = report.to_table();
    fs::write(args.out.join("report.txt"), &table).context("writing report.txt")?;
    let mut w = create(&args.out.join("series_mape.csv"))?;
    report.write_series_mape(&mut w)?;
    w.flush()?;
    write_month_mape(&args.out.join("month_mape.csv"), forecasts.series[0].start, &report.per_step_mape)?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn write_month_mape(path: &Path, start: YearMonth, per_step: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "year", "month", "mape"])?;
    for (h, m) in per_step.iter().enumerate() {
        let at = start.offset(h as i64);
        w.write_record([(h + 1).to_string(), at.year.to_string(), at.month.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    let outcomes = diagnostics::run_all(args.seed, args.step)?;
    let mut ok = true;
    for o in &outcomes {
        println!("{}: {:e}", o.name, o.max_relative_error);
        if !o.passed(args.tolerance) {
            ok = false;
            eprintln!(
                "{}: relative error {:e} at leaf {} exceeds {:e}",
                o.name,
                o.max_relative_error,
                o.worst_leaf.as_deref().unwrap_or("?"),
                args.tolerance
            );
        }
        if o.kinks > 0 {
            eprintln!("{}: {} of {} leaves crossed a pinball kink and were skipped", o.name, o.kinks, o.leaves);
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn synth(args: &SynthArgs) -> Result<ExitCode> {
    let cfg = SynthConfig {
        noise: args.noise,
        ..SynthConfig::default()
    };
    let data = dataset::synthesize_with(&cfg, args.n, args.years, args.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    dataset::save_csv(&data, &args.out)?;
    println!("wrote {} series of {} months to {}", args.n, args.years * 12, args.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn baseline(args: &BaselineArgs) -> Result<ExitCode> {
    let kinds = match &args.kind {
        Some(k) => vec![k.parse::<BaselineKind>()?],
        None => BaselineKind::ALL.to_vec(),
    };
    let stage: Stage = args.stage.parse()?;
    let spec = SplitSpec {
        test_months: args.test_months,
        valid_months: args.valid_months,
    };
    let data = load(&args.data)?;
    let staged = dataset::stage_data(&data, spec, stage)?;
    let start = staged.forecast_start();
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for kind in kinds {
        let series = staged
            .train
            .series
            .iter()
            .map(|s| Ok(MonthlySeries::new(s.id.clone(), start, kind.forecast(s)?)?))
            .collect::<Result<Vec<_>>>()?;
        let path = args.out.join(format!("{kind}.csv"));
        write_series(&path, &series, "forecast")?;
        if let Some(targets) = &staged.targets {
            let forecasts = series.iter().map(|s| (s.id.clone(), s.values.clone())).collect();
            println!("{kind}: hold-out MAPE {:.3}", holdout_mape(&forecasts, targets)?);
        }
        written.push(path);
    }
    if let Some(targets) = &staged.targets {
        write_series(&args.out.join("actuals.csv"), targets, "value")?;
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
