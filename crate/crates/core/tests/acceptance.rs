//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use nalgebra::DVector;
use phsim::discrete::build_discrete;
use phsim::model::{build_model, presets};
use phsim::monotone::{verify_sector, verify_sector_on, MonotoneMap};
use phsim::output::write_trace_csv;
use phsim::scenarios::{instantiate, InitialDatum, Instance, Overrides};
use phsim::simulate::{contraction_resolve, solve_port_inclusion, verify_controller, SolverSettings};
use phsim::stability::{
    check_eb_condition, check_order2_condition, descent_start, estimate_decay, first_order_multiplier, Lyapunov, Profile,
};
use phsim::transfer::transfer_at;
use phsim::{Complex64, Feedback, HamiltonianDensity, Mat, ScalarProfile, Stepper};
use rand::Rng;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn transfer_oracle() -> Outcome {
    let start = Instant::now();
    let model = build_model(&presets::unit_wave()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for lambda in [c(1.0, 0.0), c(2.0, 0.0), c(0.5, 3.0), c(10.0, 0.0)] {
        let g = transfer_at(&model, lambda).map_err(|e| e.to_string())?.g;
        let coth = lambda.cosh() / lambda.sinh();
        let csch = lambda.sinh().inv();
        let exact = [[coth, csch], [csch, coth]];
        for (i, row) in exact.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                worst = worst.max((g[(i, j)] - v).norm());
            }
        }
    }
    let t = start.elapsed();
    ensure(worst <= 1e-10 && within(t, 1.0), format!("max |G - closed form| = {worst:.2e}, {t:.2?}"))
}

fn positivity() -> Outcome {
    let start = Instant::now();
    let mut rng = phsim::rng::stream(7, "acceptance-positivity");
    let grid: Vec<Complex64> = (0..50).map(|_| c(10f64.powf(rng.gen_range(-2.0..1.0)), rng.gen_range(-20.0..20.0))).collect();
    let mut worst = f64::INFINITY;
    for spec in [presets::unit_wave(), presets::unit_beam()] {
        let model = build_model(&spec).map_err(|e| e.to_string())?;
        for &l in &grid {
            worst = worst.min(transfer_at(&model, l).map_err(|e| e.to_string())?.min_sym_eig);
        }
    }
    let t = start.elapsed();
    ensure(worst > 0.0 && within(t, 5.0), format!("min sym eig over 2 x 50 points = {worst:.3e}, {t:.2?}"))
}

fn power_balance() -> Outcome {
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut ok = true;
    for name in ["wave-sector-damper", "wave-relay-damper"] {
        let o = Overrides {
            n_cells: Some(128),
            dt: Some(1.0 / 256.0),
            t_end: Some(10_000.0 / 256.0),
            stepper: Some(Stepper::Midpoint),
            ..Default::default()
        };
        let inst = instantiate(name, &o, 1).map_err(|e| e.to_string())?;
        let trace = inst.closed_loop.run(&inst.x0, &inst.xc0).map_err(|e| e.to_string())?;
        let bound = 1e-10f64.max(1e-8 * trace.e_state[0]);
        let worst = trace.max_power_residual();
        ok &= worst <= bound && trace.len() == 10_001;
        detail.push(format!("{name}: max residual {worst:.2e} (bound {bound:.1e})"));
    }
    let t = start.elapsed();
    ensure(ok && within(t, 30.0), format!("{}, {t:.2?}", detail.join("; ")))
}

fn conservation() -> Outcome {
    let o = Overrides { n_cells: Some(128), t_end: Some(10.0), stepper: Some(Stepper::Midpoint), ..Default::default() };
    let inst = instantiate("wave-neumann-conservative", &o, 1).map_err(|e| e.to_string())?;
    let trace = inst.closed_loop.run(&inst.x0, &inst.xc0).map_err(|e| e.to_string())?;
    let e0 = trace.e_state[0];
    let drift = (trace.e_state[trace.len() - 1] - e0).abs() / e0;
    ensure(drift <= 1e-9, format!("|E(T) - E(0)| / E(0) = {drift:.2e}"))
}

fn random_state(inst: &Instance, seed: u64) -> Result<(DVector<f64>, DVector<f64>), String> {
    let datum = InitialDatum::Random { bumps: 3, amplitude: 1.0 };
    let x = datum.sample(&inst.closed_loop.sys, seed, "acceptance-contraction").map_err(|e| e.to_string())?;
    let mut rng = phsim::rng::stream(seed, "acceptance-controller");
    let xc = DVector::from_fn(inst.xc0.len(), |_, _| rng.gen_range(-1.0..1.0));
    Ok((x, xc))
}

fn contraction_semigroup() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for name in ["wave-sector-damper", "wave-relay-damper", "wave-saturating-damper", "eb-beam-collocated"] {
        let o = Overrides { n_cells: Some(32), dt: Some(1.0 / 64.0), t_end: Some(200.0 / 64.0), ..Default::default() };
        let inst = instantiate(name, &o, 1).map_err(|e| e.to_string())?;
        let cl = &inst.closed_loop;
        let mut worst = f64::NEG_INFINITY;
        for pair in 0..10u64 {
            let (mut a, mut ac) = random_state(&inst, 2 * pair + 11)?;
            let (mut b, mut bc) = random_state(&inst, 2 * pair + 12)?;
            let d0 = cl.distance2((&a, &ac), (&b, &bc)).sqrt();
            let mut d = d0;
            for _ in 0..cl.steps() {
                let sa = cl.step(&a, &ac).map_err(|e| e.to_string())?;
                let sb = cl.step(&b, &bc).map_err(|e| e.to_string())?;
                (a, ac, b, bc) = (sa.x, sa.xc, sb.x, sb.xc);
                let next = cl.distance2((&a, &ac), (&b, &bc)).sqrt();
                worst = worst.max((next - d) / d0);
                d = next;
            }
        }
        ok &= worst <= 1e-9;
        detail.push(format!("{name} {worst:.1e}"));
    }
    ensure(ok, format!("max relative distance increase per step: {}", detail.join(", ")))
}

fn inclusion_oracle() -> Outcome {
    let settings = SolverSettings::default();
    let sys = build_discrete(&build_model(&presets::scalar_transport()).map_err(|e| e.to_string())?, 32).map_err(|e| e.to_string())?;
    let maps = sys.io_maps(0.05).map_err(|e| e.to_string())?;
    if maps.g.nrows() != 1 {
        return Err(format!("toy has {} ports", maps.g.nrows()));
    }
    let a = maps.g_inv[(0, 0)];
    let level = 0.3;
    let relay = MonotoneMap::Relay { level };
    let k = Mat::from_element(1, 1, 1.7);
    let linear = MonotoneMap::linear(k.clone());
    let mut rng = phsim::rng::stream(5, "acceptance-inclusion");
    let (mut relay_err, mut linear_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let f = DVector::from_fn(sys.size(), |_, _| rng.gen_range(-1.0..1.0));
        let b = (&maps.g_inv * &maps.f * &f)[0];
        // a y + level·sgn(y) ∋ b, monotone in y
        let h = |y: f64| a * y - b + if y > 0.0 { level } else if y < 0.0 { -level } else { 0.0 };
        let oracle = if b.abs() <= level {
            0.0
        } else {
            let (mut lo, mut hi) = if b > 0.0 { (0.0, b / a + 1.0) } else { (b / a - 1.0, 0.0) };
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if h(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let y = solve_port_inclusion(&maps, &relay, &f, &settings).map_err(|e| e.to_string())?.y[0];
        relay_err = relay_err.max((y - oracle).abs());
        let dense = b / (a + k[(0, 0)]);
        let y = solve_port_inclusion(&maps, &linear, &f, &settings).map_err(|e| e.to_string())?.y[0];
        linear_err = linear_err.max((y - dense).abs());
    }
    ensure(relay_err <= 1e-8 && linear_err <= 1e-10, format!("relay vs bisection {relay_err:.2e}, linear vs dense {linear_err:.2e}"))
}

fn contraction_path() -> Outcome {
    let settings = SolverSettings::default();
    let mut detail = Vec::new();
    let mut ok = true;
    let phi = MonotoneMap::block(vec![MonotoneMap::zero(1), MonotoneMap::sector_damper(2.0, 0.25)]);
    for h in [Mat::from_diagonal(&nalgebra::dvector![1.2, 0.9]), Mat::identity(2, 2) * 5.0] {
        let spec = presets::wave(HamiltonianDensity::Constant { matrix: h }, presets::wave_dirichlet_left_ports());
        let sys = build_discrete(&build_model(&spec).map_err(|e| e.to_string())?, 32).map_err(|e| e.to_string())?;
        let f = sys.sample(|z| nalgebra::dvector![(3.0 * z).sin(), z * (1.0 - z)]);
        let tau = 0.05;
        let r = contraction_resolve(&sys, &phi, &f, tau, &settings).map_err(|e| e.to_string())?;
        let direct = solve_port_inclusion(&sys.io_maps(tau).map_err(|e| e.to_string())?, &phi, &f, &settings)
            .map_err(|e| e.to_string())?
            .x;
        let err = (&r.x - &direct).amax();
        ok &= err <= 1e-8 && r.report.rho < 1.0;
        detail.push(format!("{} stage(s), rho {:.3}, error {err:.1e}", r.report.stages, r.report.rho));
    }
    ensure(ok, detail.join("; "))
}

struct DecayRun {
    omega: [f64; 2],
    quality: [f64; 2],
    lyapunov_worst: f64,
}

fn decay_run() -> Result<DecayRun, String> {
    let mut omega = [0.0; 2];
    let mut quality = [0.0; 2];
    let mut lyapunov_worst = f64::NEG_INFINITY;
    for (i, n) in [128usize, 256].into_iter().enumerate() {
        let o = Overrides { n_cells: Some(n), dt: Some(1.0 / 256.0), t_end: Some(20.0), kappa: Some(2.0), ..Default::default() };
        let inst = instantiate("wave-sector-damper", &o, 1).map_err(|e| e.to_string())?;
        let sys = &inst.closed_loop.sys;
        let eta = first_order_multiplier(&sys.model).map_err(|e| e.to_string())?;
        let lyapunov = Lyapunov::new(sys, Profile::N1, eta).map_err(|e| e.to_string())?;
        let t0 = descent_start(&eta, 0.25);
        let mut phi_n = Vec::new();
        let trace = inst
            .closed_loop
            .run_observed(&inst.x0, &inst.xc0, |_, t, x, _| phi_n.push((t, t * sys.inner_h(x, x) + lyapunov.q(sys, x))))
            .map_err(|e| e.to_string())?;
        let fit = estimate_decay(&trace, 0.5).map_err(|e| e.to_string())?;
        omega[i] = fit.omega_hat;
        quality[i] = fit.fit_quality;
        if i == 0 {
            let e0 = trace.e_state[0];
            for w in phi_n.windows(2) {
                if w[0].0 >= t0 {
                    lyapunov_worst = lyapunov_worst.max((w[1].1 - w[0].1) / e0);
                }
            }
        }
    }
    Ok(DecayRun { omega, quality, lyapunov_worst })
}

fn exponential_decay(run: &Result<DecayRun, String>) -> Outcome {
    let r = run.as_ref().map_err(Clone::clone)?;
    let change = ((r.omega[1] - r.omega[0]) / r.omega[0]).abs();
    ensure(
        r.omega[0] < -0.01 && r.quality[0] >= 0.99 && change <= 0.2,
        format!(
            "omega_hat {:.4} (R^2 {:.4}) at 128 cells, {:.4} (R^2 {:.4}) at 256, relative change {:.1}%",
            r.omega[0],
            r.quality[0],
            r.omega[1],
            r.quality[1],
            100.0 * change
        ),
    )
}

fn lyapunov_descent(run: &Result<DecayRun, String>) -> Outcome {
    let r = run.as_ref().map_err(Clone::clone)?;
    ensure(r.lyapunov_worst <= 1e-8, format!("max increment of t|x|^2 + q(x) after t0: {:.2e} E(0)", r.lyapunov_worst))
}

fn asymptotic_only() -> Outcome {
    let inst = instantiate("wave-saturating-damper", &Overrides::default(), 1).map_err(|e| e.to_string())?;
    let trace = inst.closed_loop.run(&inst.x0, &inst.xc0).map_err(|e| e.to_string())?;
    let e0 = trace.e_state[0];
    let hit = trace.e_state.iter().position(|&e| e <= 1e-3 * e0).map(|i| trace.times[i]);
    let Feedback::Static(MonotoneMap::Block { parts }) = &inst.closed_loop.feedback else {
        return Err("unexpected feedback".into());
    };
    let global = verify_sector(&parts[1], 2.0, 512);
    let local = verify_sector_on(&parts[1], 2.0, 512, 1e-6, 1.0);
    ensure(
        hit.is_some_and(|t| t <= 200.0) && !global.ok && local.ok,
        format!("E <= 1e-3 E(0) first at t = {hit:?}; sector global ok = {}, on |v| <= 1 ok = {}", global.ok, local.ok),
    )
}

fn dynamic_controller() -> Outcome {
    let inst = instantiate("eb-beam-collocated", &Overrides::default(), 1).map_err(|e| e.to_string())?;
    let Feedback::Dynamic(ctrl) = &inst.closed_loop.feedback else {
        return Err("unexpected feedback".into());
    };
    let report = verify_controller(ctrl, 64, 1.0, 3);
    let trace = inst.closed_loop.run(&inst.x0, &inst.xc0).map_err(|e| e.to_string())?;
    let total = trace.total_energy();
    let rise = total.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max) / total[0];
    let fit = estimate_decay(&trace, 0.5).map_err(|e| e.to_string())?;
    ensure(
        report.passed() && report.rho >= 0.4 && fit.omega_hat < 0.0 && rise <= 1e-12,
        format!(
            "controller checks {} (rho {:.3}), omega_hat {:.4}, max total-energy increment {rise:.1e} E(0)",
            if report.passed() { "pass" } else { "fail" },
            report.rho,
            fit.omega_hat
        ),
    )
}

fn condition_checkers() -> Outcome {
    let model = |h: HamiltonianDensity| build_model(&presets::beam(h, Mat::zeros(2, 2))).map_err(|e| e.to_string());
    let eb = check_order2_condition(&build_model(&presets::unit_beam()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let steep = ScalarProfile::Exp { scale: 1.0, rate: 3.0 };
    let counter = check_order2_condition(&model(HamiltonianDensity::Diagonal { profiles: vec![steep.clone(), steep] })?)
        .map_err(|e| e.to_string())?;
    let one = ScalarProfile::Constant { value: 1.0 };
    let rho = check_eb_condition(&model(presets::beam_hamiltonian(ScalarProfile::Exp { scale: 1.0, rate: 0.5 }, one.clone()))?)
        .map_err(|e| e.to_string())?;
    let ei = check_eb_condition(&model(presets::beam_hamiltonian(one, ScalarProfile::Exp { scale: 1.0, rate: 2.0 }))?)
        .map_err(|e| e.to_string())?;
    ensure(
        eb.value == 0.0 && eb.passed && !counter.passed && (rho.value - 0.5).abs() <= 1e-3 && (ei.value - 2.0).abs() <= 1e-3,
        format!(
            "order-2: beam {} ({}), counterexample {:.3} ({}); EB: {:.4} and {:.4}",
            eb.value,
            if eb.passed { "pass" } else { "fail" },
            counter.value,
            if counter.passed { "pass" } else { "fail" },
            rho.value,
            ei.value
        ),
    )
}

fn komura_kato() -> Outcome {
    let o = Overrides { stepper: Some(Stepper::BackwardEuler), dt: Some(1.0 / 128.0), t_end: Some(1000.0 / 128.0), ..Default::default() };
    let inst = instantiate("wave-relay-damper", &o, 1).map_err(|e| e.to_string())?;
    let trace = inst.closed_loop.run(&inst.x0, &inst.xc0).map_err(|e| e.to_string())?;
    let d = &trace.diffquot[1..];
    let worst = d.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(f64::NEG_INFINITY, f64::max);
    ensure(d.len() == 1000 && worst <= 1e-9, format!("{} steps, largest relative uptick {worst:.1e}", d.len()))
}

fn determinism() -> Outcome {
    let csv = || -> Result<Vec<u8>, String> {
        let mut s = phsim::scenarios::configure("wave-relay-damper", &Overrides { t_end: Some(2.0), ..Default::default() })
            .map_err(|e| e.to_string())?;
        s.initial = InitialDatum::Random { bumps: 4, amplitude: 1.0 };
        let inst = s.build(42).map_err(|e| e.to_string())?;
        let trace = inst.closed_loop.run(&inst.x0, &inst.xc0).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        write_trace_csv(&trace, &mut out).map_err(|e| e.to_string())?;
        Ok(out)
    };
    let (a, b) = (csv()?, csv()?);
    ensure(a == b && !a.is_empty(), format!("{} bytes, identical = {}", a.len(), a == b))
}

fn main() {
    let decay = decay_run();
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("transfer function oracle", Box::new(transfer_oracle)),
        ("positivity of Re G", Box::new(positivity)),
        ("discrete power balance", Box::new(power_balance)),
        ("conservation", Box::new(conservation)),
        ("contraction semigroup", Box::new(contraction_semigroup)),
        ("boundary inclusion solver", Box::new(inclusion_oracle)),
        ("contraction resolvent path", Box::new(contraction_path)),
        ("exponential decay", Box::new(|| exponential_decay(&decay))),
        ("Lyapunov descent", Box::new(|| lyapunov_descent(&decay))),
        ("asymptotic-only scenario", Box::new(asymptotic_only)),
        ("dynamic controller", Box::new(dynamic_controller)),
        ("condition checkers", Box::new(condition_checkers)),
        ("backward Euler difference quotient", Box::new(komura_kato)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:2} {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
