//! Subcommand execution: binds validated configs to the core drivers and
//! writes the CSV/JSON outputs.

use crate::config::{
    default_pilot, default_reference, lookup_law, lookup_statistic, DynkinConfig, GenDiffConfig,
    GenEvalConfig, ModelChoice, MultitimeConfig, RateConfig, RunConfig, SimulateConfig,
    SimulateLimitConfig, SuiteRunConfig, TrotterConfig,
};
use crate::{dispatch_model, CliError};
use meanfield_core::experiment::{
    multi_time_polynomial_experiment, rate_experiment, LadderConfig, RateReport,
};
use meanfield_core::generator::{
    dynkin_residual, gen_diff, gen_limit, gen_particle, trotter_gap, DynkinOptions, DynkinTarget,
    GeneratorContext, TrotterOptions,
};
use meanfield_core::measure::DiscreteMeasure;
use meanfield_core::model::Model;
use meanfield_core::report::{
    write_check_rows, write_diagnostics, write_gap_rows, write_json, write_rate_rows,
    write_snapshots, DiagnosticRow, GapRow, RateSidecar, RunManifest, SnapshotRow,
};
use meanfield_core::sim::{
    simulate_limit_process, simulate_particle_system, steps_for, LimitRng, ParticleCloud,
    SystemRng,
};
use meanfield_core::suite::run_suite;
use meanfield_core::PolynomialFunctional;
use rayon::prelude::*;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Executes a loaded config, writing outputs under `out`.
pub fn execute(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    let started = Instant::now();
    // Property verdicts are deferred past the manifest write so failing runs
    // still leave complete outputs behind.
    let verdict = match config {
        RunConfig::Simulate(c) => run_simulate(c, out),
        RunConfig::SimulateLimit(c) => run_simulate_limit(c, out),
        RunConfig::Rate(c) => run_rate(c, out),
        RunConfig::Multitime(c) => run_multitime(c, out),
        RunConfig::GenEval(c) => run_gen_eval(c, out),
        RunConfig::GenDiff(c) => run_gen_diff(c, out),
        RunConfig::Dynkin(c) => run_dynkin(c, out),
        RunConfig::Trotter(c) => run_trotter(c, out),
        RunConfig::Suite(c) => run_suite_command(c, out),
    }?;

    let mut manifest = RunManifest::new(
        config.command_name(),
        config.seed(),
        rayon::current_num_threads(),
        serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?,
    );
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    write_output(out, "run_manifest.json", |w| write_json(w, &manifest))?;

    match verdict {
        Verdict::Pass => Ok(()),
        Verdict::Fail(message) => Err(CliError::Property(message)),
    }
}

enum Verdict {
    Pass,
    Fail(String),
}

fn write_output(
    out: &Path,
    name: &str,
    write: impl FnOnce(&mut BufWriter<File>) -> Result<(), meanfield_core::report::ReportError>,
) -> Result<PathBuf, CliError> {
    let path = out.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    write(&mut writer).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Snapshot rows of one replication: every observed statistic at every
/// recorded step.
fn snapshot_observer<'a>(
    rows: &'a mut Vec<SnapshotRow>,
    statistics: &'a [(String, PolynomialFunctional)],
    replication: u64,
    dt: f64,
    n_steps: usize,
    stride: usize,
) -> impl FnMut(usize, &ParticleCloud) + 'a {
    move |step, cloud| {
        if step % stride != 0 && step != n_steps {
            return;
        }
        let Ok(measure) = cloud.empirical_measure() else {
            return;
        };
        for (id, statistic) in statistics {
            rows.push(SnapshotRow {
                replication,
                time: step as f64 * dt,
                statistic_id: id.clone(),
                value: statistic.eval(&measure),
            });
        }
    }
}

fn resolve_statistics(ids: &[String]) -> Result<Vec<(String, PolynomialFunctional)>, CliError> {
    ids.iter()
        .map(|id| Ok((id.clone(), lookup_statistic(id)?)))
        .collect()
}

fn run_simulate(config: &SimulateConfig, out: &Path) -> Result<Verdict, CliError> {
    let choice = ModelChoice::parse(&config.model)?;
    let law = lookup_law(&config.law)?;
    let statistics = resolve_statistics(&config.statistics)?;
    let initial = config.initial.to_core()?;
    let n_steps = steps_for(config.horizon, config.dt).map_err(usage)?;

    let per_replication: Vec<Vec<SnapshotRow>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|replication| -> Result<Vec<SnapshotRow>, CliError> {
            let positions = initial
                .positions(config.particles, config.seed, replication)
                .map_err(usage)?;
            let mut rng = SystemRng::new(config.seed, replication, config.particles);
            let mut rows = Vec::new();
            dispatch_model!(choice, model => {
                let observe = snapshot_observer(
                    &mut rows,
                    &statistics,
                    replication,
                    config.dt,
                    n_steps,
                    config.snapshot_every,
                );
                simulate_particle_system(
                    &model, &law, positions, config.dt, n_steps, &mut rng, observe,
                )
                .map_err(usage)?;
            });
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;

    let rows: Vec<SnapshotRow> = per_replication.into_iter().flatten().collect();
    let path = write_output(out, "snapshots.csv", |w| write_snapshots(w, &rows))?;
    println!(
        "simulate: {} snapshot rows ({} replications x {} statistics) -> {}",
        rows.len(),
        config.replications,
        statistics.len(),
        path.display()
    );
    Ok(Verdict::Pass)
}

fn run_simulate_limit(config: &SimulateLimitConfig, out: &Path) -> Result<Verdict, CliError> {
    let choice = ModelChoice::parse(&config.model)?;
    let law = lookup_law(&config.law)?;
    let statistics = resolve_statistics(&config.statistics)?;
    let initial = config.initial.to_core()?;
    let n_steps = steps_for(config.horizon, config.dt).map_err(usage)?;
    let zeta = law.zeta();

    let per_replication: Vec<Vec<SnapshotRow>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|replication| -> Result<Vec<SnapshotRow>, CliError> {
            let positions = initial
                .positions(config.cloud_size, config.seed, replication)
                .map_err(usage)?;
            let mut rng = LimitRng::new(config.seed, replication, config.cloud_size);
            let mut rows = Vec::new();
            dispatch_model!(choice, model => {
                let observe = snapshot_observer(
                    &mut rows,
                    &statistics,
                    replication,
                    config.dt,
                    n_steps,
                    config.snapshot_every,
                );
                simulate_limit_process(
                    &model, zeta, positions, config.dt, n_steps, &mut rng, observe,
                )
                .map_err(usage)?;
            });
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;

    let rows: Vec<SnapshotRow> = per_replication.into_iter().flatten().collect();
    let path = write_output(out, "snapshots.csv", |w| write_snapshots(w, &rows))?;
    println!(
        "simulate-limit: {} snapshot rows (cloud size {}) -> {}",
        rows.len(),
        config.cloud_size,
        path.display()
    );
    Ok(Verdict::Pass)
}

fn write_rate_outputs(
    out: &Path,
    report: &RateReport,
    config_echo: &serde_json::Value,
) -> Result<(), CliError> {
    write_output(out, "rate.csv", |w| write_rate_rows(w, &report.rows))?;
    let sidecar = RateSidecar::new(report, config_echo);
    write_output(out, "rate_fit.json", |w| write_json(w, &sidecar))?;
    Ok(())
}

fn rate_verdict(report: &RateReport, band_limit: f64, slope_range: Option<(f64, f64)>) -> Verdict {
    let band_ratio = report.band_max / report.band_min;
    if band_ratio > band_limit {
        return Verdict::Fail(format!(
            "scaled-error band ratio {band_ratio:.3} exceeds {band_limit}"
        ));
    }
    if let (Some((lo, hi)), Some(fit)) = (slope_range, report.fit.as_ref()) {
        if fit.slope < lo || fit.slope > hi {
            return Verdict::Fail(format!(
                "fitted slope {:.4} outside [{lo}, {hi}]",
                fit.slope
            ));
        }
    }
    Verdict::Pass
}

fn print_rate_summary(label: &str, report: &RateReport) {
    for row in &report.rows {
        println!(
            "{label}: N={:>6} weak_error={:.6e} (se {:.2e}) scaled={:.6e}",
            row.particles, row.weak_error, row.std_error, row.scaled_error
        );
    }
    match report.fit.as_ref() {
        Some(fit) => println!(
            "{label}: slope {:.4} +- {:.4} over {} rungs; scaled band [{:.4e}, {:.4e}]",
            fit.slope, fit.slope_std_error, fit.rows_used, report.band_min, report.band_max
        ),
        None => println!(
            "{label}: no slope fit (fewer than 2 signal-dominated rungs); scaled band [{:.4e}, {:.4e}]",
            report.band_min, report.band_max
        ),
    }
}

fn ladder_config(
    dt: f64,
    replications: usize,
    pilot: Option<usize>,
    reference: Option<usize>,
    cloud_size: Option<usize>,
    initial: &crate::config::InitialSpec,
    seed: u64,
) -> Result<LadderConfig, CliError> {
    Ok(LadderConfig {
        dt,
        replications,
        pilot_replications: pilot.unwrap_or_else(|| default_pilot(replications)),
        reference_replications: reference.unwrap_or_else(|| default_reference(replications)),
        cloud_size,
        initial: initial.to_core()?,
        seed,
    })
}

fn run_rate(config: &RateConfig, out: &Path) -> Result<Verdict, CliError> {
    let choice = ModelChoice::parse(&config.model)?;
    let law = lookup_law(&config.law)?;
    let statistic = lookup_statistic(&config.statistic)?;
    let ladder = ladder_config(
        config.dt,
        config.replications,
        config.pilot_replications,
        config.reference_replications,
        config.cloud_size,
        &config.initial,
        config.seed,
    )?;
    let report = dispatch_model!(choice, model => {
        rate_experiment(&model, &law, &statistic, config.horizon, &config.ladder, &ladder)
            .map_err(usage)?
    });
    let echo = serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?;
    write_rate_outputs(out, &report, &echo)?;
    print_rate_summary("rate", &report);
    Ok(rate_verdict(
        &report,
        config.band_limit,
        Some(config.slope_range),
    ))
}

fn run_multitime(config: &MultitimeConfig, out: &Path) -> Result<Verdict, CliError> {
    let choice = ModelChoice::parse(&config.model)?;
    let law = lookup_law(&config.law)?;
    let observables: Vec<(f64, PolynomialFunctional)> = config
        .observables
        .iter()
        .map(|spec| Ok((spec.t, lookup_statistic(&spec.statistic)?)))
        .collect::<Result<_, CliError>>()?;
    let ladder = ladder_config(
        config.dt,
        config.replications,
        config.pilot_replications,
        config.reference_replications,
        config.cloud_size,
        &config.initial,
        config.seed,
    )?;
    let report = dispatch_model!(choice, model => {
        multi_time_polynomial_experiment(&model, &law, &observables, &config.ladder, &ladder)
            .map_err(usage)?
    });
    let echo = serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?;
    write_rate_outputs(out, &report, &echo)?;
    print_rate_summary("multitime", &report);
    // The theorem guarantees boundedness, not an exact order, for product
    // observables; only the band is enforced.
    Ok(rate_verdict(&report, config.band_limit, None))
}

fn run_gen_eval(config: &GenEvalConfig, out: &Path) -> Result<Verdict, CliError> {
    let choice = ModelChoice::parse(&config.model)?;
    let law = lookup_law(&config.law)?;
    let statistic = lookup_statistic(&config.statistic)?;
    let measure = DiscreteMeasure::new(config.measure.iter().copied()).map_err(usage)?;

    #[derive(serde::Serialize)]
    struct GenValues {
        statistic: String,
        gen_limit: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        gen_particle: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        gen_diff: Option<f64>,
    }

    let values = dispatch_model!(choice, model => {
        let ctx = GeneratorContext::diffusive(&model, &law);
        let limit = gen_limit(&statistic, &measure, &ctx).map_err(usage)?;
        let particle = config
            .particles
            .map(|n| gen_particle(&statistic, &measure, n, &ctx))
            .transpose()
            .map_err(usage)?;
        GenValues {
            statistic: config.statistic.clone(),
            gen_limit: limit,
            gen_particle: particle,
            gen_diff: particle.map(|p| p - limit),
        }
    });

    let path = write_output(out, "generator_values.json", |w| write_json(w, &values))?;
    match (values.gen_particle, values.gen_diff) {
        (Some(particle), Some(diff)) => println!(
            "gen-eval: limit {:.12e}, particle {particle:.12e}, gap {diff:.12e} -> {}",
            values.gen_limit,
            path.display()
        ),
        _ => println!(
            "gen-eval: limit {:.12e} -> {}",
            values.gen_limit,
            path.display()
        ),
    }
    Ok(Verdict::Pass)
}

fn run_gen_diff(config: &GenDiffConfig, out: &Path) -> Result<Verdict, CliError> {
    let choice = ModelChoice::parse(&config.model)?;
    let law = lookup_law(&config.law)?;
    let statistic = lookup_statistic(&config.statistic)?;
    let measure = DiscreteMeasure::new(config.measure.iter().copied()).map_err(usage)?;

    let rows = dispatch_model!(choice, model => {
        let ctx = GeneratorContext::diffusive(&model, &law);
        config
            .ladder
            .iter()
            .map(|&n| -> Result<GapRow, CliError> {
                let gap = gen_diff(&statistic, &measure, n, &ctx).map_err(usage)?;
                Ok(GapRow {
                    particles: n,
                    gen_diff: gap,
                    scaled_gen_diff: gap.abs() * (n as f64).sqrt(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?
    });

    let path = write_output(out, "generator_gap.csv", |w| write_gap_rows(w, &rows))?;
    for row in &rows {
        println!(
            "gen-diff: N={:>7} gap={:.6e} scaled={:.6e}",
            row.particles, row.gen_diff, row.scaled_gen_diff
        );
    }
    println!("gen-diff: {} rows -> {}", rows.len(), path.display());
    Ok(Verdict::Pass)
}

fn run_dynkin(config: &DynkinConfig, out: &Path) -> Result<Verdict, CliError> {
    let choice = ModelChoice::parse(&config.model)?;
    let law = lookup_law(&config.law)?;
    let statistic = lookup_statistic(&config.statistic)?;
    let start = DiscreteMeasure::from_points(&config.start_positions()).map_err(usage)?;
    let target = if config.limit_target {
        DynkinTarget::Limit {
            cloud_size: config.cloud_size.unwrap_or(16 * config.particles),
        }
    } else {
        DynkinTarget::Particle {
            particles: config.particles,
        }
    };
    let options = DynkinOptions {
        replications: config.replications,
        dt: config.dt,
        knots: config.knots,
        seed: config.seed,
        with_bias_budget: config.with_bias_budget,
    };

    let report = dispatch_model!(choice, model => {
        let ctx = GeneratorContext::diffusive(&model, &law);
        dynkin_residual(&statistic, &start, config.t, target, &ctx, &options).map_err(usage)?
    });

    let row = DiagnosticRow::from_dynkin(
        &format!("dynkin/{}", config.statistic),
        config.particles,
        config.t,
        &report,
    );
    let pass = row.pass;
    let path = write_output(out, "diagnostics.csv", |w| {
        write_diagnostics(w, std::slice::from_ref(&row))
    })?;
    println!(
        "dynkin: residual {:.6e} (se {:.2e}, bias budget {:.2e}) bound {:.6e} -> {}",
        report.residual,
        report.std_error,
        report.bias_budget,
        row.bound,
        path.display()
    );
    if pass {
        Ok(Verdict::Pass)
    } else {
        Ok(Verdict::Fail(format!(
            "martingale residual {:.6e} exceeds bound {:.6e}",
            report.residual, row.bound
        )))
    }
}

fn run_trotter(config: &TrotterConfig, out: &Path) -> Result<Verdict, CliError> {
    let choice = ModelChoice::parse(&config.model)?;
    let law = lookup_law(&config.law)?;
    let statistic = lookup_statistic(&config.statistic)?;
    let start = DiscreteMeasure::from_points(&config.start_positions()).map_err(usage)?;
    let options = TrotterOptions {
        dt: config.dt,
        knots: config.knots,
        pilot_replications: config.pilot_replications,
        lhs_replications: config.lhs_replications,
        outer_paths: config.outer_paths,
        training_measures: config.training_measures,
        inner_replications: config.inner_replications,
        ridge: config.ridge,
        seed: config.seed,
    };

    fn attempt<M: Model + Sync>(
        statistic: &PolynomialFunctional,
        start: &DiscreteMeasure,
        config: &TrotterConfig,
        model: &M,
        law: &meanfield_core::JumpLaw,
        options: &TrotterOptions,
    ) -> Result<meanfield_core::generator::TrotterReport, CliError> {
        let ctx = GeneratorContext::diffusive(model, law);
        trotter_gap(statistic, start, config.t, config.particles, &ctx, options).map_err(usage)
    }

    let (report, retried) = dispatch_model!(choice, model => {
        let first = attempt(&statistic, &start, config, &model, &law, &options)?;
        if !first.agrees(config.agreement_z) && config.retry_doubled {
            // Documented retry path of this high-variance diagnostic: one
            // rerun with every Monte Carlo budget doubled.
            let second = attempt(&statistic, &start, config, &model, &law, &options.doubled())?;
            (second, true)
        } else {
            (first, false)
        }
    });

    let row = DiagnosticRow::from_trotter(
        &format!("trotter/{}", config.statistic),
        config.particles,
        config.t,
        &report,
    );
    let path = write_output(out, "diagnostics.csv", |w| {
        write_diagnostics(w, std::slice::from_ref(&row))
    })?;
    println!(
        "trotter: lhs {:.6e} (se {:.2e}) vs rhs {:.6e} (se {:.2e}){} -> {}",
        report.lhs,
        report.lhs_std_error,
        report.rhs,
        report.rhs_std_error,
        if retried { " [after doubled retry]" } else { "" },
        path.display()
    );
    if report.agrees(config.agreement_z) {
        Ok(Verdict::Pass)
    } else {
        Ok(Verdict::Fail(format!(
            "semigroup sides disagree: |{:.6e} - {:.6e}| > {}·SE",
            report.lhs, report.rhs, config.agreement_z
        )))
    }
}

fn run_suite_command(config: &SuiteRunConfig, out: &Path) -> Result<Verdict, CliError> {
    let seed = config.seed.unwrap_or(0);
    let report = run_suite(&config.name, seed, config.instances).map_err(usage)?;
    let path = write_output(out, &format!("suite_{}.csv", report.name), |w| {
        write_check_rows(w, &report)
    })?;
    if report.vacuous {
        eprintln!("warning: suite `{}` checked zero instances", report.name);
    }
    let failures = report.failures();
    println!(
        "suite {}: {} checks, {} failures -> {}",
        report.name,
        report.rows.len(),
        failures,
        path.display()
    );
    if failures == 0 {
        Ok(Verdict::Pass)
    } else {
        Ok(Verdict::Fail(format!(
            "suite {}: {failures}/{} checks failed",
            report.name,
            report.rows.len()
        )))
    }
}

fn usage<E: std::fmt::Display>(error: E) -> CliError {
    CliError::Usage(error.to_string())
}
