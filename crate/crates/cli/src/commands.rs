use anyhow::anyhow;
use delaykit::compiler::CompiledSystem;
use delaykit::continuation::{
    continue_equilibrium, continue_limit_cycle, find_equilibrium, hopf_to_cycle,
    pd_to_doubled_cycle, Branch, ContinuerConfig, Direction, LimitCycleShooting,
};
use delaykit::export;
use delaykit::integrator::{integrate_with_events, EventSpec, IvpConfig, Trajectory};
use delaykit::lyapunov::{lyapunov_spectrum, lyapunov_sweep, LyapunovConfig};
use delaykit::observable::Observable;
use delaykit::system::DynamicalSystem;

use crate::args::*;
use crate::branch_file::BranchFile;
use crate::failure::*;
use crate::output::*;
use crate::setup::*;

/// Human-readable summaries go to standard output unless it carries the
/// result itself.
fn report(cli: &Cli, line: &str) {
    if cli.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

pub fn compile(cli: &Cli, a: &CompileArgs) -> CliResult<u8> {
    let path = model_path(&cli.model)?;
    let sys = match read_input(path)? {
        Input::Model(mut file) => {
            file.set_degrees(a.m, a.q);
            compile_file(path, &file)?
        }
        Input::Compiled(desc) => {
            if a.m.is_some() || a.q.is_some() {
                return Err(Failure::validation(
                    "compile",
                    "a compiled system pins M and Q; compile the model file again to change them",
                ));
            }
            from_description(&desc)?
        }
    };
    let desc = sys.describe();
    emit(cli.out.as_ref(), &pretty(&serde_json::to_value(&desc).expect("serialisable")))?;
    eprintln!(
        "compiled {}: dimension {}, M = {}, Q = {}",
        desc.name, desc.dimension, desc.collocation_degree, desc.quadrature_degree
    );
    Ok(0)
}

fn ivp_config(a: &IvpArgs, t_end: f64) -> IvpConfig {
    IvpConfig {
        max_step: a.max_step,
        t_end,
        ..IvpConfig::default().with_tolerances(a.rel_tol, a.abs_tol)
    }
}

/// Dense-output samples `0, dt, 2dt, ..., t_max`.
fn sample(traj: &Trajectory, dt: f64, t_max: f64) -> CliResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = (t_max / dt * (1.0 + 1e-12)).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    if t_max - times[n] > 1e-12 * t_max.max(1.0) {
        times.push(t_max);
    }
    let states = times
        .iter()
        .map(|&t| {
            if t <= traj.times[0] {
                Ok(traj.states[0].clone())
            } else if t >= traj.final_time() {
                Ok(traj.final_state().to_vec())
            } else {
                traj.interpolate(t).ok_or_else(|| {
                    Failure::new(FAILURE, "output", anyhow!("no dense output at t = {t}"))
                })
            }
        })
        .collect::<CliResult<_>>()?;
    Ok((times, states))
}

/// `<coord>_rec` columns: the current value of each renewal coordinate.
fn reconstructed(
    sys: &CompiledSystem,
    p: &[f64],
    states: &[Vec<f64>],
) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let layout = sys.layout();
    let re: Vec<usize> = (0..layout.d()).filter(|&c| layout.is_renewal(c)).collect();
    if re.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let names = re.iter().map(|&c| format!("{}_rec", layout.coords()[c])).collect();
    let mut ctx = sys.context(p).map_err(|e| Failure::new(system_code(&e), "reconstruction", e))?;
    let rows = states
        .iter()
        .map(|y| {
            ctx.reconstruct(y)
                .map(|v| re.iter().map(|&c| v[c]).collect())
                .map_err(|e| Failure::new(system_code(&e), "reconstruction", e))
        })
        .collect::<CliResult<_>>()?;
    Ok((names, rows))
}

pub fn simulate(cli: &Cli, a: &SimulateArgs) -> CliResult<u8> {
    let sys = load_system(&cli.model)?;
    let p = resolve_params(&sys, &a.params)?;
    if !(a.t_max.is_finite() && a.t_max >= 0.0) {
        return Err(Failure::validation("simulate", "--t-max must be finite and nonnegative"));
    }
    if matches!(a.dt, Some(dt) if !(dt > 0.0)) {
        return Err(Failure::validation("simulate", "--dt must be positive"));
    }
    sys.delay_guard(&p)
        .map_err(|e| Failure::new(system_code(&e), "delay guard", e))?;
    let y0 = initial_state(&sys, &p, &a.state)?;

    let labels = sys.labels();
    let observables = a
        .events
        .iter()
        .map(|text| {
            Observable::parse(text, &labels, &sys.param_names()).map_err(|e| {
                Failure::new(model_code(&e), "events", anyhow!("--event {text}: {e}"))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let directions = match a.directions.len() {
        0 => vec![0; observables.len()],
        1 => vec![a.directions[0]; observables.len()],
        n if n == observables.len() => a.directions.clone(),
        n => {
            return Err(Failure::validation(
                "events",
                format!("{n} directions for {} events", observables.len()),
            ))
        }
    };
    let mut specs: Vec<EventSpec<'_>> = observables
        .iter()
        .zip(&directions)
        .map(|(g, &dir)| {
            let p = p.clone();
            EventSpec::new(move |_, y: &[f64]| g.eval(y, &p), dir, false)
        })
        .collect();

    let cfg = IvpConfig {
        dense: a.dt.is_some(),
        ..ivp_config(&a.ivp, a.t_max)
    };
    let (traj, events) = integrate_with_events(&sys, &y0, &p, &cfg, &mut specs)
        .map_err(|e| Failure::new(integration_code(&e), "integration", e))?;

    let (times, states) = match a.dt {
        Some(dt) => sample(&traj, dt, a.t_max)?,
        None => (traj.times.clone(), traj.states.clone()),
    };
    let (extra_labels, extra) = reconstructed(&sys, &p, &states)?;
    let text = match cli.format {
        Format::Csv => export::trajectory_csv(&labels, &extra_labels, &times, &states, &extra),
        Format::Json => pretty(&trajectory_json(&labels, &extra_labels, &times, &states, &extra)),
    };
    emit(cli.out.as_ref(), &text)?;
    if let Some(path) = &a.events_out {
        let text = match cli.format {
            Format::Csv => export::events_csv(&labels, &events),
            Format::Json => pretty(&events_json(&labels, &events)),
        };
        emit(Some(path), &text)?;
    }
    report(
        cli,
        &format!(
            "simulated to t = {} in {} steps; {} rows, {} events",
            traj.final_time(),
            traj.stats.accepted,
            times.len(),
            events.len()
        ),
    );
    Ok(0)
}

fn continuer_config(a: &StepArgs) -> ContinuerConfig {
    ContinuerConfig {
        init_stepsize: a.init_step,
        min_stepsize: a.min_step,
        max_stepsize: a.max_step,
        max_points: a.max_points,
        corrector_tol: a.corrector_tol,
        test_tol: a.test_tol,
        direction: if a.backward {
            Direction::Backward
        } else {
            Direction::Forward
        },
        param_range: (a.p_min.is_some() || a.p_max.is_some()).then(|| {
            (
                a.p_min.unwrap_or(f64::NEG_INFINITY),
                a.p_max.unwrap_or(f64::INFINITY),
            )
        }),
        ..Default::default()
    }
}

fn checked(cfg: ContinuerConfig) -> CliResult<ContinuerConfig> {
    cfg.validate().stage(VALIDATION, "configuration")?;
    Ok(cfg)
}

/// Write the branch, summarise its events and map the stop reason to the
/// exit code.
fn finish_branch(cli: &Cli, sys: &CompiledSystem, b: &Branch) -> CliResult<u8> {
    let text = match cli.format {
        Format::Csv => b.to_csv(),
        Format::Json => pretty(&branch_json(b, &sys.param_names())),
    };
    emit(cli.out.as_ref(), &text)?;
    for e in &b.events {
        report(
            cli,
            &format!(
                "{:<3} {} = {:.10}  (after point {}, residual {:.1e})",
                e.kind.tag(),
                b.param_name,
                e.point.param,
                e.after,
                e.residual
            ),
        );
    }
    let range = match (b.points.first(), b.points.last()) {
        (Some(a), Some(z)) => format!(", {} from {} to {}", b.param_name, a.param, z.param),
        _ => String::new(),
    };
    report(cli, &format!("stop: {} ({} points{range})", b.stop, b.points.len()));
    let code = stop_code(b.stop);
    if code != 0 {
        eprintln!("delaykit: continuation stopped: {}", b.stop);
    }
    Ok(code)
}

pub fn eq_continue(cli: &Cli, a: &EqContinueArgs) -> CliResult<u8> {
    let sys = load_system(&cli.model)?;
    let p = resolve_params(&sys, &a.params)?;
    let active = param_index(&sys, &a.param)?;
    let cfg = checked(continuer_config(&a.steps))?;
    let guess = initial_state(&sys, &p, &a.state)?;
    let start = find_equilibrium(&sys, &guess, &p)
        .map_err(|e| Failure::new(continuation_code(&e), "equilibrium", e))?;
    let b = continue_equilibrium(&sys, &start, &p, active, &cfg)
        .map_err(|e| Failure::new(continuation_code(&e), "continuation", e))?;
    finish_branch(cli, &sys, &b)
}

pub fn lc_continue(cli: &Cli, a: &LcContinueArgs) -> CliResult<u8> {
    let sys = load_system(&cli.model)?;
    let mut p = resolve_params(&sys, &a.params)?;
    let cfg = checked(ContinuerConfig {
        shooting_rel_tol: a.rel_tol,
        shooting_abs_tol: a.abs_tol,
        ..continuer_config(&a.steps)
    })?;
    let text = std::fs::read_to_string(&a.from)
        .map_err(|e| Failure::new(FAILURE, "branch file", anyhow!("{}: {e}", a.from.display())))?;
    let branch = BranchFile::parse(&text, &sys.labels())
        .map_err(|e| Failure::new(PARSE, "branch file", e.context(a.from.display().to_string())))?;
    let active = param_index(&sys, &branch.param_name)?;
    let row = branch.find(&a.start, a.occurrence).ok_or_else(|| {
        Failure::validation(
            "branch file",
            format!("{} has no row #{} tagged `{}`", a.from.display(), a.occurrence, a.start),
        )
    })?;
    p[active] = row.param;
    let switching = |e| Failure::new(continuation_code(&e), "branch switching", e);
    let cycle = if branch.cycle {
        let period = row.period.ok_or_else(|| Failure::validation("branch file", "row without period"))?;
        let orbit = LimitCycleShooting::evaluate(&sys, &row.state, period, &p, active, &cfg)
            .map_err(switching)?;
        if a.start == "PD" {
            pd_to_doubled_cycle(&sys, &orbit, a.amplitude, &cfg).map_err(switching)?
        } else {
            orbit
        }
    } else if a.start == "H" {
        hopf_to_cycle(&sys, &row.state, &p, active, a.amplitude, &cfg).map_err(switching)?
    } else {
        return Err(Failure::validation(
            "branch file",
            format!("an equilibrium branch is left at a Hopf row (`H`), not `{}`", a.start),
        ));
    };
    eprintln!(
        "initial orbit: {} = {:.10}, period {:.10}",
        branch.param_name,
        cycle.param(),
        cycle.period
    );
    let b = continue_limit_cycle(&sys, &cycle, &cfg)
        .map_err(|e| Failure::new(continuation_code(&e), "continuation", e))?;
    finish_branch(cli, &sys, &b)
}

fn lyapunov_config(a: &LyapOptions) -> LyapunovConfig {
    LyapunovConfig {
        renorm_interval: a.renorm_interval,
        transient: a.transient,
        horizon: a.horizon,
        k: a.k,
    }
}

fn joined(v: &[f64], top: Option<usize>) -> String {
    let k = top.map_or(v.len(), |t| t.min(v.len()));
    v[..k]
        .iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

pub fn lyap(cli: &Cli, a: &LyapArgs) -> CliResult<u8> {
    let sys = load_system(&cli.model)?;
    let p = resolve_params(&sys, &a.params)?;
    let y0 = initial_state(&sys, &p, &a.state)?;
    let s = lyapunov_spectrum(&sys, &y0, &p, &lyapunov_config(&a.lyap), &ivp_config(&a.ivp, 0.0))
        .map_err(|e| Failure::new(lyapunov_code(&e), "lyapunov", e))?;
    let text = match cli.format {
        Format::Csv => export::lyapunov_series_csv(&s, a.lyap.top),
        Format::Json => pretty(&series_json(&s, a.lyap.top)),
    };
    emit(cli.out.as_ref(), &text)?;
    report(cli, &format!("exponents: {}", joined(&s.final_exponents, a.lyap.top)));
    report(cli, &format!("sum: {:.6}", s.final_exponents.iter().sum::<f64>()));
    Ok(0)
}

/// `START:STOP:STEP`, both ends included; values are rounded to 12
/// significant digits so that `4.0:4.6:0.05` ends exactly at 4.6.
fn parse_range(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || Failure::validation("sweep", format!("--range {spec}: expected START:STOP:STEP"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(Failure::validation("sweep", "--range needs STEP > 0 and STOP >= START"));
    }
    let n = ((stop - start) / step * (1.0 + 1e-12)).floor() as usize;
    Ok((0..=n)
        .map(|i| {
            format!("{:.11e}", start + i as f64 * step)
                .parse()
                .expect("formatted float parses")
        })
        .collect())
}

pub fn lyap_sweep(cli: &Cli, a: &LyapSweepArgs) -> CliResult<u8> {
    let sys = load_system(&cli.model)?;
    let mut p = resolve_params(&sys, &a.params)?;
    let active = param_index(&sys, &a.param)?;
    let values = match &a.range {
        Some(r) => parse_range(r)?,
        None => a.values.clone(),
    };
    if values.is_empty() {
        return Err(Failure::validation("sweep", "no parameter values"));
    }
    p[active] = values[0];
    let y0 = initial_state(&sys, &p, &a.state)?;
    let sweep = lyapunov_sweep(
        &sys,
        &y0,
        &p,
        active,
        &values,
        &lyapunov_config(&a.lyap),
        &ivp_config(&a.ivp, 0.0),
        !a.no_carry,
    );
    let text = match cli.format {
        Format::Csv => export::lyapunov_sweep_csv(&sweep, a.lyap.top),
        Format::Json => pretty(&sweep_json(&a.param, &sweep, a.lyap.top)),
    };
    emit(cli.out.as_ref(), &text)?;
    for ((v, e), err) in sweep.values.iter().zip(&sweep.exponents).zip(&sweep.errors) {
        match (e, err) {
            (Some(e), _) => report(cli, &format!("{} = {v}: {}", a.param, joined(e, a.lyap.top))),
            (None, err) => eprintln!(
                "delaykit: lyapunov failed at {} = {v}: {}",
                a.param,
                err.as_deref().unwrap_or("unknown error")
            ),
        }
    }
    Ok(if sweep.exponents.iter().all(Option::is_none) {
        FAILURE
    } else {
        0
    })
}
