//! Ready-made experiments: model, feedback, grid, stepper, initial datum and
//! the qualitative outcome the stability theory predicts for them.

use crate::densekit::Mat;
use crate::discrete::{build_discrete, DiscreteError, DiscreteSystem};
use crate::model::{build_model, presets, HamiltonianDensity, ModelError, ModelSpec};
use crate::monotone::{verify_monotone, verify_sector, verify_sector_on, MonotoneMap};
use crate::rng;
use crate::simulate::{verify_controller, ClosedLoop, Controller, ControllerSpec, Feedback, SimError, SolverSettings, Stepper};
use crate::stability::{
    check_boundary_bound, check_eb_condition, check_order2_condition, default_profile, static_projection, ConditionReport, ConditionTerm, Profile,
    StabilityError,
};
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}'")]
    Unknown(String),
    #[error("invalid override: {0}")]
    Override(String),
    #[error("feedback is not monotone (worst pairing {0:e})")]
    NotMonotone(f64),
    #[error("initial datum: {0}")]
    Initial(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Discrete(#[from] DiscreteError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeTag {
    ExponentialDecay,
    Conservative,
    AsymptoticOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackSpec {
    Static { phi: MonotoneMap },
    Dynamic { controller: ControllerSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    /// (1 − r²)³ on |ζ − c| < radius: C² with vanishing derivatives at the rim.
    pub fn eval(&self, z: f64) -> f64 {
        let r2 = ((z - self.center) / self.radius).powi(2);
        if r2 < 1.0 {
            self.amplitude * (1.0 - r2).powi(3)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    Zero,
    /// one list of bumps per state component
    Bumps { components: Vec<Vec<Bump>> },
    /// seeded random bumps in every component
    Random { bumps: usize, amplitude: f64 },
}

impl InitialDatum {
    /// Samples on the grid, then drops any uncontrollable invariant part
    /// (see `DiscreteSystem::project_compatible`).
    pub fn sample(&self, sys: &DiscreteSystem, seed: u64, stream: &str) -> Result<DVector<f64>, ScenarioError> {
        let d = sys.dim();
        match self {
            InitialDatum::Zero => Ok(DVector::zeros(sys.size())),
            InitialDatum::Bumps { components } => {
                if components.len() != d {
                    return Err(ScenarioError::Initial(format!("{} component lists for a {d}-dimensional state", components.len())));
                }
                if components.iter().flatten().any(|b| !(b.radius > 0.0) || !b.amplitude.is_finite() || !b.center.is_finite()) {
                    return Err(ScenarioError::Initial("bumps need radius > 0 and finite center/amplitude".into()));
                }
                let x = sys.sample(|z| DVector::from_iterator(d, components.iter().map(|c| c.iter().map(|b| b.eval(z)).sum())));
                Ok(sys.project_compatible(&x)?)
            }
            InitialDatum::Random { bumps, amplitude } => {
                let mut r = rng::stream(seed, stream);
                let components: Vec<Vec<Bump>> = (0..d)
                    .map(|_| {
                        (0..*bumps)
                            .map(|_| {
                                let center: f64 = r.gen_range(0.15..0.85);
                                // support stays inside (0, 1)
                                let radius = r.gen_range(0.08..0.3f64.min(center).min(1.0 - center));
                                Bump { center, radius, amplitude: amplitude * r.gen_range(-1.0..1.0) }
                            })
                            .collect()
                    })
                    .collect();
                InitialDatum::Bumps { components }.sample(sys, seed, stream)
            }
        }
    }
}

/// Sector hypothesis on one scalar part of a block feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    /// index of the part inside the feedback block
    pub part: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub summary: String,
    pub model: ModelSpec,
    pub feedback: FeedbackSpec,
    pub n_cells: usize,
    pub stepper: Stepper,
    pub dt: f64,
    pub t_end: f64,
    pub solver: SolverSettings,
    pub initial: InitialDatum,
    pub controller_state: Vec<f64>,
    /// qualitative outcome the theory predicts, when known
    pub tag: Option<OutcomeTag>,
    pub profile: Profile,
    pub sector: Option<SectorSpec>,
}

/// Parameters a scenario may be instantiated with; all optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub n_cells: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub stepper: Option<Stepper>,
    pub solver: Option<SolverSettings>,
    /// sector constant of the damper
    pub kappa: Option<f64>,
    /// saturation level of the damper
    pub damper_limit: Option<f64>,
    /// relay level at the left end
    pub relay_level: Option<f64>,
    /// scale of the default initial datum
    pub amplitude: Option<f64>,
}

impl Overrides {
    /// Field-wise: values set in `over` win.
    pub fn merged(&self, over: &Overrides) -> Overrides {
        Overrides {
            n_cells: over.n_cells.or(self.n_cells),
            dt: over.dt.or(self.dt),
            t_end: over.t_end.or(self.t_end),
            stepper: over.stepper.or(self.stepper),
            solver: over.solver.or(self.solver),
            kappa: over.kappa.or(self.kappa),
            damper_limit: over.damper_limit.or(self.damper_limit),
            relay_level: over.relay_level.or(self.relay_level),
            amplitude: over.amplitude.or(self.amplitude),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Params {
    kappa: f64,
    damper_limit: f64,
    relay_level: f64,
    amplitude: f64,
}

pub const NAMES: [&str; 7] = [
    "wave-sector-damper",
    "wave-relay-damper",
    "wave-saturating-damper",
    "wave-neumann-conservative",
    "eb-beam-damped",
    "eb-beam-collocated",
    "order2-small-coupling",
];

fn default_datum(amplitude: f64) -> InitialDatum {
    InitialDatum::Bumps {
        components: vec![
            vec![Bump { center: 0.5, radius: 0.2, amplitude }],
            vec![Bump { center: 0.4, radius: 0.15, amplitude: 0.5 * amplitude }],
        ],
    }
}

fn collocated_controller(n: usize) -> ControllerSpec {
    ControllerSpec {
        a_c: MonotoneMap::identity(n),
        b_c: Mat::identity(n, n),
        c_c: None,
        d_c: MonotoneMap::identity(n),
        pi: Mat::identity(n, n),
        weight: None,
    }
}

fn preset(name: &str, p: Params) -> Result<Scenario, ScenarioError> {
    let identity = HamiltonianDensity::identity(2);
    let base = |summary: &str, model: ModelSpec, feedback: FeedbackSpec, tag: OutcomeTag, profile: Profile| Scenario {
        name: name.to_string(),
        summary: summary.to_string(),
        model,
        feedback,
        n_cells: 64,
        stepper: Stepper::Midpoint,
        dt: 1.0 / 128.0,
        t_end: 10.0,
        solver: SolverSettings::default(),
        initial: default_datum(p.amplitude),
        controller_state: Vec::new(),
        tag: Some(tag),
        profile,
        sector: None,
    };
    let damper = MonotoneMap::sector_damper(p.kappa, p.damper_limit);
    let s = match name {
        "wave-sector-damper" => Scenario {
            sector: Some(SectorSpec { part: 1, kappa: p.kappa }),
            ..base(
                "unit wave, fixed left end, sector-bounded nonlinear damper at the right end",
                presets::wave(identity, presets::wave_dirichlet_left_ports()),
                FeedbackSpec::Static { phi: MonotoneMap::block(vec![MonotoneMap::zero(1), damper]) },
                OutcomeTag::ExponentialDecay,
                Profile::N1,
            )
        },
        // backward Euler: the relay's kinks excite grid-scale modes that an
        // energy-conserving stepper carries around almost undamped
        "wave-relay-damper" => Scenario {
            sector: Some(SectorSpec { part: 1, kappa: p.kappa }),
            stepper: Stepper::BackwardEuler,
            t_end: 20.0,
            ..base(
                "unit wave, Coulomb friction (relay) at the left end, sector damper at the right end",
                presets::wave(identity, presets::wave_neumann_ports()),
                FeedbackSpec::Static {
                    phi: MonotoneMap::block(vec![MonotoneMap::Relay { level: p.relay_level }, damper]),
                },
                OutcomeTag::ExponentialDecay,
                Profile::N1,
            )
        },
        "wave-saturating-damper" => Scenario {
            sector: Some(SectorSpec { part: 1, kappa: p.kappa }),
            t_end: 200.0,
            dt: 1.0 / 32.0,
            ..base(
                "unit wave, fixed left end, damper force saturating at a fixed level",
                presets::wave(identity, presets::wave_dirichlet_left_ports()),
                FeedbackSpec::Static {
                    phi: MonotoneMap::block(vec![MonotoneMap::zero(1), MonotoneMap::Saturation { gain: 1.0, limit: p.damper_limit }]),
                },
                OutcomeTag::AsymptoticOnly,
                Profile::N1,
            )
        },
        "wave-neumann-conservative" => base(
            "unit wave, free at both ends, no damping",
            presets::unit_wave(),
            FeedbackSpec::Static { phi: MonotoneMap::zero(2) },
            OutcomeTag::Conservative,
            Profile::N1,
        ),
        "eb-beam-damped" => base(
            "uniform Euler-Bernoulli beam, linear dampers on all four boundary ports",
            presets::unit_beam(),
            FeedbackSpec::Static { phi: MonotoneMap::identity(4) },
            OutcomeTag::ExponentialDecay,
            Profile::Eb,
        ),
        "eb-beam-collocated" => Scenario {
            controller_state: vec![0.0; 4],
            ..base(
                "uniform Euler-Bernoulli beam, collocated first-order dynamic controller on all ports",
                presets::unit_beam(),
                FeedbackSpec::Dynamic { controller: collocated_controller(4) },
                OutcomeTag::ExponentialDecay,
                Profile::Eb,
            )
        },
        "order2-small-coupling" => base(
            "second-order system with weak interior damping, linear dampers on all ports",
            presets::beam(HamiltonianDensity::identity(2), Mat::identity(2, 2) * -0.1),
            FeedbackSpec::Static { phi: MonotoneMap::identity(4) },
            OutcomeTag::ExponentialDecay,
            Profile::N2,
        ),
        other => return Err(ScenarioError::Unknown(other.to_string())),
    };
    Ok(s)
}

const DEFAULTS: Params = Params { kappa: 2.0, damper_limit: 0.25, relay_level: 0.1, amplitude: 1.0 };

fn defaults_for(name: &str) -> Params {
    match name {
        "wave-saturating-damper" => Params { damper_limit: 1.0, amplitude: 3.0, ..DEFAULTS },
        _ => DEFAULTS,
    }
}

pub fn list_scenarios() -> Vec<Scenario> {
    NAMES.iter().map(|n| scenario(n).expect("catalog entries build")).collect()
}

pub fn scenario(name: &str) -> Result<Scenario, ScenarioError> {
    preset(name, defaults_for(name))
}

/// Catalog entry with overrides applied; not yet built.
pub fn configure(name: &str, o: &Overrides) -> Result<Scenario, ScenarioError> {
    let mut p = defaults_for(name);
    let plain = preset(name, p)?;
    let has_damper = plain.sector.is_some();
    let positive = |what: &str, v: Option<f64>| -> Result<Option<f64>, ScenarioError> {
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(ScenarioError::Override(format!("{what} must be positive, got {x}"))),
            _ => Ok(v),
        }
    };
    if let Some(k) = positive("kappa", o.kappa)? {
        if !has_damper {
            return Err(ScenarioError::Override(format!("'{name}' has no sector damper")));
        }
        p.kappa = k;
    }
    if let Some(l) = positive("damper_limit", o.damper_limit)? {
        if !has_damper {
            return Err(ScenarioError::Override(format!("'{name}' has no damper")));
        }
        p.damper_limit = l;
    }
    if let Some(r) = o.relay_level {
        if name != "wave-relay-damper" {
            return Err(ScenarioError::Override(format!("'{name}' has no relay")));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(ScenarioError::Override(format!("relay_level must be >= 0, got {r}")));
        }
        p.relay_level = r;
    }
    if let Some(a) = o.amplitude {
        if !a.is_finite() {
            return Err(ScenarioError::Override("amplitude must be finite".into()));
        }
        p.amplitude = a;
    }
    let mut s = preset(name, p)?;
    s.apply_numerics(o)?;
    Ok(s)
}

fn default_cells() -> usize {
    64
}
fn default_dt() -> f64 {
    1.0 / 128.0
}
fn default_t_end() -> f64 {
    10.0
}
fn default_stepper() -> Stepper {
    Stepper::Midpoint
}
fn default_initial() -> InitialDatum {
    InitialDatum::Random { bumps: 3, amplitude: 1.0 }
}

/// A hand-written setup: full model and feedback, numerical defaults as in the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSpec {
    pub model: ModelSpec,
    pub feedback: FeedbackSpec,
    #[serde(default = "default_cells")]
    pub n_cells: usize,
    #[serde(default = "default_stepper")]
    pub stepper: Stepper,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_initial")]
    pub initial: InitialDatum,
    #[serde(default)]
    pub controller_state: Vec<f64>,
    #[serde(default)]
    pub expected: Option<OutcomeTag>,
    /// derived from the model when absent
    #[serde(default)]
    pub profile: Option<Profile>,
    #[serde(default)]
    pub sector: Option<SectorSpec>,
}

impl InlineSpec {
    pub fn into_scenario(self, name: &str) -> Result<Scenario, ScenarioError> {
        let profile = match self.profile {
            Some(p) => p,
            None => default_profile(&build_model(&self.model)?),
        };
        Ok(Scenario {
            name: name.to_string(),
            summary: "user-defined setup".into(),
            model: self.model,
            feedback: self.feedback,
            n_cells: self.n_cells,
            stepper: self.stepper,
            dt: self.dt,
            t_end: self.t_end,
            solver: self.solver,
            initial: self.initial,
            controller_state: self.controller_state,
            tag: self.expected,
            profile,
            sector: self.sector,
        })
    }
}

/// A built scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub closed_loop: ClosedLoop,
    pub x0: DVector<f64>,
    pub xc0: DVector<f64>,
}

pub fn instantiate(name: &str, overrides: &Overrides, seed: u64) -> Result<Instance, ScenarioError> {
    configure(name, overrides)?.build(seed)
}

impl Scenario {
    /// Applies the grid, time and solver overrides. Physical parameters are
    /// left alone; [`configure`] handles those for catalog entries.
    pub fn apply_numerics(&mut self, o: &Overrides) -> Result<(), ScenarioError> {
        if let Some(n) = o.n_cells {
            self.n_cells = n;
        }
        if let Some(dt) = o.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(ScenarioError::Override(format!("dt must be positive, got {dt}")));
            }
            self.dt = dt;
        }
        if let Some(t) = o.t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ScenarioError::Override(format!("t_end must be >= 0, got {t}")));
            }
            self.t_end = t;
        }
        if let Some(st) = o.stepper {
            self.stepper = st;
        }
        if let Some(sv) = o.solver {
            if !(sv.tol > 0.0) || sv.max_iter == 0 {
                return Err(ScenarioError::Override("solver needs tol > 0 and max_iter > 0".into()));
            }
            self.solver = sv;
        }
        Ok(())
    }

    /// Overrides for a hand-written setup: only the numerical ones make sense.
    pub fn apply_inline_overrides(&mut self, o: &Overrides) -> Result<(), ScenarioError> {
        if o.kappa.is_some() || o.damper_limit.is_some() || o.relay_level.is_some() || o.amplitude.is_some() {
            return Err(ScenarioError::Override("kappa, damper_limit, relay_level and amplitude only apply to catalog scenarios".into()));
        }
        self.apply_numerics(o)
    }

    pub fn build(&self, seed: u64) -> Result<Instance, ScenarioError> {
        let model = build_model(&self.model)?;
        let sys = build_discrete(&model, self.n_cells)?;
        let feedback = match &self.feedback {
            FeedbackSpec::Static { phi } => {
                phi.validate().map_err(|e| ScenarioError::Override(e.to_string()))?;
                let report = verify_monotone(phi, 64, seed);
                if !report.passed {
                    return Err(ScenarioError::NotMonotone(report.worst_pairing));
                }
                Feedback::Static(phi.clone())
            }
            FeedbackSpec::Dynamic { controller } => Feedback::Dynamic(Controller::new(controller).map_err(SimError::from)?),
        };
        let nc = match &feedback {
            Feedback::Dynamic(c) => c.n_c,
            Feedback::Static(_) => 0,
        };
        let xc0 = if self.controller_state.is_empty() {
            DVector::zeros(nc)
        } else {
            DVector::from_vec(self.controller_state.clone())
        };
        let x0 = self.initial.sample(&sys, seed, &self.name)?;
        let closed_loop = ClosedLoop::new(sys, feedback, self.stepper, self.dt, self.t_end, self.solver)?;
        Ok(Instance { scenario: self.clone(), closed_loop, x0, xc0 })
    }
}

fn report(name: &str, value: f64, threshold: f64, passed: bool, note: Option<String>) -> ConditionReport {
    ConditionReport { name: name.into(), value, threshold, passed, terms: Vec::<ConditionTerm>::new(), note }
}

impl Instance {
    /// Projection Π entering the boundary bound.
    pub fn projection(&self) -> Mat {
        match &self.closed_loop.feedback {
            Feedback::Static(phi) => static_projection(phi),
            Feedback::Dynamic(c) => c.pi.clone(),
        }
    }

    /// Every sufficient condition that applies to this loop.
    pub fn conditions(&self, seed: u64) -> Result<Vec<ConditionReport>, ScenarioError> {
        let model = &self.closed_loop.sys.model;
        let mut out = Vec::new();
        match self.scenario.profile {
            Profile::N1 => {}
            Profile::N2 => out.push(check_order2_condition(model)?),
            Profile::Eb => out.push(check_eb_condition(model)?),
        }
        out.push(check_boundary_bound(model, &self.projection(), self.scenario.profile)?);
        match &self.closed_loop.feedback {
            Feedback::Static(phi) => {
                if let (Some(spec), MonotoneMap::Block { parts }) = (self.scenario.sector, phi) {
                    let part = parts.get(spec.part).ok_or_else(|| ScenarioError::Override("sector part out of range".into()))?;
                    out.push(sector_report("sector", &verify_sector(part, spec.kappa, 512)));
                    if self.scenario.tag == Some(OutcomeTag::AsymptoticOnly) {
                        out.push(sector_report("sector_local", &verify_sector_on(part, spec.kappa, 512, 1e-6, 1.0)));
                    }
                }
            }
            Feedback::Dynamic(c) => {
                let r = verify_controller(c, 64, 1.0, seed);
                out.push(ConditionReport {
                    name: "controller".into(),
                    value: r.rho,
                    threshold: 0.0,
                    passed: r.passed(),
                    terms: vec![
                        ConditionTerm { name: "rho".into(), value: r.rho },
                        ConditionTerm { name: "output_constant".into(), value: r.output_constant },
                        ConditionTerm { name: "delta".into(), value: r.delta },
                        ConditionTerm { name: "input_gain".into(), value: r.input_gain },
                    ],
                    note: r.violation.clone(),
                });
            }
        }
        Ok(out)
    }
}

fn sector_report(name: &str, r: &crate::monotone::SectorReport) -> ConditionReport {
    report(
        name,
        r.kappa_tilde.unwrap_or(0.0),
        0.0,
        r.ok,
        r.violation.map(|v| format!("sector violated at v = {v:e}")),
    )
}

/// Global conditions the outcome tag relies on: all must pass for exponential
/// decay; at least one global one must fail otherwise.
pub fn tag_consistent(tag: OutcomeTag, reports: &[ConditionReport]) -> bool {
    let global = reports.iter().filter(|r| r.name != "sector_local");
    match tag {
        OutcomeTag::ExponentialDecay => reports.iter().all(|r| r.passed),
        OutcomeTag::Conservative => global.clone().any(|r| !r.passed),
        OutcomeTag::AsymptoticOnly => {
            global.clone().any(|r| !r.passed) && reports.iter().filter(|r| r.name == "sector_local").all(|r| r.passed)
        }
    }
}
