use crate::config::RunConfig;
use crate::Failure;
use phsim::output::write_trace_csv;
use phsim::scenarios::{list_scenarios, tag_consistent, Overrides, Scenario};
use phsim::simulate::{SimError, SolverSummary};
use phsim::stability::ConditionReport;
use phsim::transfer::{sample_right_half_plane, transfer_at};
use phsim::{build_model, estimate_decay, Complex64, Profile};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA: u32 = 1;
const FIT_WINDOW: f64 = 0.5;

#[derive(Debug, Serialize)]
pub struct DecaySummary {
    pub omega_hat: f64,
    pub m_hat: f64,
    pub fit_quality: f64,
    pub samples: usize,
    pub window_fraction: f64,
}

#[derive(Debug, Serialize)]
pub struct EnergySummary {
    pub initial: f64,
    pub r#final: f64,
    pub ratio: f64,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub schema: u32,
    pub scenario: String,
    pub seed: u64,
    pub expected: Option<phsim::OutcomeTag>,
    pub profile: Profile,
    pub stepper: phsim::Stepper,
    pub n_cells: usize,
    pub dt: f64,
    pub t_end: f64,
    pub decay: Option<DecaySummary>,
    pub decay_error: Option<String>,
    pub energy: EnergySummary,
    pub max_power_residual: f64,
    pub conditions: Vec<ConditionReport>,
    pub conditions_error: Option<String>,
    pub tag_consistent: Option<bool>,
    pub solver: SolverSummary,
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Parameter(_) | SimError::Dimension { .. } | SimError::Controller(_) => Failure::Config(e.to_string()),
        other => Failure::Solver(other.to_string()),
    }
}

fn build_failure(e: phsim::scenarios::ScenarioError) -> Failure {
    match e {
        phsim::scenarios::ScenarioError::Sim(s) => sim_failure(s),
        other => Failure::Config(other.to_string()),
    }
}

/// Builds, simulates and writes `trace.csv` / `summary.json` into `out`.
pub fn execute(scenario: &Scenario, seed: u64, out: &Path, emit: crate::config::Emit) -> Result<RunSummary, Failure> {
    let inst = scenario.build(seed).map_err(build_failure)?;
    let (conditions, conditions_error) = match inst.conditions(seed) {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let trace = inst.closed_loop.run(&inst.x0, &inst.xc0).map_err(sim_failure)?;
    let (decay, decay_error) = match estimate_decay(&trace, FIT_WINDOW) {
        Ok(f) => (
            Some(DecaySummary {
                omega_hat: f.omega_hat,
                m_hat: f.m_hat,
                fit_quality: f.fit_quality,
                samples: f.samples,
                window_fraction: FIT_WINDOW,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    let total = trace.total_energy();
    let (initial, last) = (total[0], total[total.len() - 1]);
    let summary = RunSummary {
        schema: SCHEMA,
        scenario: scenario.name.clone(),
        seed,
        expected: scenario.tag,
        profile: scenario.profile,
        stepper: scenario.stepper,
        n_cells: scenario.n_cells,
        dt: scenario.dt,
        t_end: scenario.t_end,
        decay,
        decay_error,
        energy: EnergySummary { initial, r#final: last, ratio: if initial > 0.0 { last / initial } else { 0.0 } },
        max_power_residual: trace.max_power_residual(),
        tag_consistent: match (scenario.tag, conditions_error.is_none()) {
            (Some(tag), true) => Some(tag_consistent(tag, &conditions)),
            _ => None,
        },
        conditions,
        conditions_error,
        solver: trace.solver,
    };
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    if emit.trace {
        let path = out.join("trace.csv");
        let file = std::fs::File::create(&path).map_err(|e| io_failure(&path, e))?;
        write_trace_csv(&trace, std::io::BufWriter::new(file)).map_err(|e| io_failure(&path, e))?;
    }
    if emit.summary {
        write_json(&out.join("summary.json"), &summary)?;
    }
    Ok(summary)
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn say(text: &str) -> Result<(), Failure> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out").join(cfg.name()))
}

pub fn run(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), Failure> {
    let scenario = cfg.resolve(&Overrides::default())?;
    let dir = output_dir(cfg, out);
    let s = execute(&scenario, cfg.seed, &dir, cfg.emit)?;
    match &s.decay {
        Some(d) => eprintln!(
            "{}: {} steps, E(T)/E(0) = {:.3e}, omega_hat = {:.4e} (R^2 {:.4}); wrote {}",
            s.scenario,
            s.solver.steps,
            s.energy.ratio,
            d.omega_hat,
            d.fit_quality,
            dir.display()
        ),
        None => eprintln!("{}: {} steps, E(T)/E(0) = {:.3e}; wrote {}", s.scenario, s.solver.steps, s.energy.ratio, dir.display()),
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    schema: u32,
    scenario: &'a str,
    profile: Profile,
    passed: bool,
    reports: &'a [ConditionReport],
}

pub fn check(cfg: &RunConfig, profile: Option<Profile>) -> Result<(), Failure> {
    let mut scenario = cfg.resolve(&Overrides::default())?;
    if let Some(p) = profile {
        scenario.profile = p;
    }
    let inst = scenario.build(cfg.seed).map_err(build_failure)?;
    let reports = inst.conditions(cfg.seed).map_err(|e| Failure::Config(e.to_string()))?;
    let passed = reports.iter().all(|r| r.passed);
    let out = CheckOutput { schema: SCHEMA, scenario: &scenario.name, profile: scenario.profile, passed, reports: &reports };
    let text = serde_json::to_string_pretty(&out).map_err(|e| Failure::Io(e.to_string()))?;
    say(&text)?;
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
        Err(Failure::Check(format!("failed: {}", failed.join(", "))))
    }
}

/// "2", "0.5+3i", "-1.5i", "1e-2-4i"
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("cannot read '{s}' as a complex number");
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not the leading one or part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    Ok(Complex64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?))
}

pub fn transfer(cfg: &RunConfig, lambdas: &[String], grid: usize, out: Option<PathBuf>) -> Result<(), Failure> {
    let scenario = cfg.resolve(&Overrides::default())?;
    let model = build_model(&scenario.model).map_err(|e| Failure::Config(e.to_string()))?;
    let mut points = lambdas.iter().map(|s| parse_complex(s).map_err(Failure::Config)).collect::<Result<Vec<_>, _>>()?;
    points.extend(sample_right_half_plane(grid, cfg.seed));
    if points.is_empty() {
        return Err(Failure::Config("no evaluation points: pass --lambda or --grid".into()));
    }
    if let Some(l) = points.iter().find(|l| !(l.re > 0.0)) {
        return Err(Failure::Config(format!("transfer function needs Re lambda > 0, got {l}")));
    }
    let n = model.port_dim();
    let sink: Box<dyn Write> = match &out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| io_failure(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    let mut header = vec!["re".to_string(), "im".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("g{i}{j}_re"));
            header.push(format!("g{i}{j}_im"));
        }
    }
    header.push("min_sym_eig".into());
    let csv_err = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    let mut worst = f64::INFINITY;
    for &l in &points {
        let ev = transfer_at(&model, l).map_err(|e| Failure::Solver(e.to_string()))?;
        let mut row = vec![format!("{:e}", l.re), format!("{:e}", l.im)];
        for i in 0..n {
            for j in 0..n {
                row.push(format!("{:e}", ev.g[(i, j)].re));
                row.push(format!("{:e}", ev.g[(i, j)].im));
            }
        }
        row.push(format!("{:e}", ev.min_sym_eig));
        worst = worst.min(ev.min_sym_eig);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    if worst > 0.0 {
        Ok(())
    } else {
        Err(Failure::Check(format!("symmetric part not positive definite (min eigenvalue {worst:e})")))
    }
}

#[derive(Serialize)]
struct SweepRun {
    index: usize,
    seed: u64,
    directory: String,
    overrides: Overrides,
    exit_code: i32,
    error: Option<String>,
    omega_hat: Option<f64>,
    fit_quality: Option<f64>,
    energy_ratio: Option<f64>,
}

#[derive(Serialize)]
struct SweepOutput {
    schema: u32,
    scenario: String,
    runs: Vec<SweepRun>,
}

pub fn sweep(cfg: &RunConfig, out: Option<PathBuf>, jobs: usize) -> Result<(), Failure> {
    let spec = cfg.sweep.clone().ok_or_else(|| Failure::Config("config has no [sweep] table".into()))?;
    if spec.variants.is_empty() {
        return Err(Failure::Config("[sweep] needs at least one variant".into()));
    }
    let seeds = if spec.seeds.is_empty() { vec![cfg.seed] } else { spec.seeds.clone() };
    let dir = output_dir(cfg, out);
    // resolve everything up front so config errors surface before any work starts
    let mut tasks = Vec::new();
    for (v, variant) in spec.variants.iter().enumerate() {
        let scenario = cfg.resolve(variant)?;
        for &seed in &seeds {
            let index = tasks.len();
            let sub = if seeds.len() > 1 { format!("{v:03}-seed{seed}") } else { format!("{v:03}") };
            tasks.push((index, seed, dir.join(sub), cfg.overrides.merged(variant), scenario.clone()));
        }
    }
    let jobs = jobs.max(1).min(tasks.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<SweepRun>>> = tasks.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((index, seed, sub, overrides, scenario)) = tasks.get(k) else { break };
                let outcome = execute(scenario, *seed, sub, cfg.emit);
                let run = SweepRun {
                    index: *index,
                    seed: *seed,
                    directory: sub.display().to_string(),
                    overrides: overrides.clone(),
                    exit_code: outcome.as_ref().map_or_else(Failure::code, |_| 0),
                    error: outcome.as_ref().err().map(|e| e.to_string()),
                    omega_hat: outcome.as_ref().ok().and_then(|s| s.decay.as_ref().map(|d| d.omega_hat)),
                    fit_quality: outcome.as_ref().ok().and_then(|s| s.decay.as_ref().map(|d| d.fit_quality)),
                    energy_ratio: outcome.as_ref().ok().map(|s| s.energy.ratio),
                };
                *results[k].lock().expect("no panics while holding the lock") = Some(run);
            });
        }
    });
    let runs: Vec<SweepRun> = results.into_iter().map(|m| m.into_inner().expect("worker finished").expect("every task ran")).collect();
    let worst = runs.iter().map(|r| r.exit_code).max().unwrap_or(0);
    for r in &runs {
        match &r.error {
            None => eprintln!("[{:03}] ok   {}", r.index, r.directory),
            Some(e) => eprintln!("[{:03}] exit {} {}: {e}", r.index, r.exit_code, r.directory),
        }
    }
    std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    write_json(&dir.join("sweep.json"), &SweepOutput { schema: SCHEMA, scenario: cfg.name().to_string(), runs })?;
    match worst {
        0 => Ok(()),
        2 => Err(Failure::Solver("some sweep runs did not converge".into())),
        _ => Err(Failure::Config("some sweep runs failed".into())),
    }
}

#[derive(Serialize)]
struct ListEntry {
    name: String,
    expected: Option<phsim::OutcomeTag>,
    profile: Profile,
    summary: String,
    n_cells: usize,
    dt: f64,
    t_end: f64,
    stepper: phsim::Stepper,
}

pub fn list(json: bool) -> Result<(), Failure> {
    let entries: Vec<ListEntry> = list_scenarios()
        .into_iter()
        .map(|s| ListEntry {
            name: s.name,
            expected: s.tag,
            profile: s.profile,
            summary: s.summary,
            n_cells: s.n_cells,
            dt: s.dt,
            t_end: s.t_end,
            stepper: s.stepper,
        })
        .collect();
    if json {
        say(&serde_json::to_string_pretty(&entries).map_err(|e| Failure::Io(e.to_string()))?)?;
        return Ok(());
    }
    for e in entries {
        let tag = e.expected.map(|t| serde_json::to_value(t).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default());
        say(&format!("{:<28} {:<18} {}", e.name, tag.unwrap_or_default(), e.summary))?;
    }
    Ok(())
}
