//! Implicit time stepping of the closed loop.
//!
//! Every step solves one resolvent problem (I − τA_h)x = f whose boundary
//! input is fixed by a finite-dimensional monotone inclusion on the ports.
//! Backward Euler uses τ = Δt. The implicit midpoint rule uses τ = Δt/2,
//! solves for the half state and extrapolates x_{n+1} = 2x_{n+½} − x_n; the
//! boundary inclusion holds at the half state.

mod contraction;
mod controller;
mod inclusion;

pub use contraction::{contraction_resolve, ContractionSolve};
pub use controller::{verify_controller, Controller, ControllerError, ControllerReport, ControllerSpec};
pub use inclusion::{solve_port_inclusion, InclusionSolution, InclusionStats, SolverSettings, StaticInclusion};

use crate::densekit::{spectral_norm, sym_part_bounds, LinalgError, Mat};
use crate::discrete::{DiscreteError, DiscreteIoMaps, DiscreteSystem};
use crate::monotone::MonotoneMap;
use inclusion::ForwardBackward;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("inner solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("contraction iteration did not converge (rho estimate {rho:.3})")]
    Contraction { rho: f64 },
    #[error("inclusion operator is not strongly monotone (min eigenvalue {min_sym_eig:e})")]
    NotStronglyMonotone { min_sym_eig: f64 },
    #[error("invalid loop parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Discrete(#[from] DiscreteError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    BackwardEuler,
    Midpoint,
}

impl Stepper {
    pub fn tau(self, dt: f64) -> f64 {
        match self {
            Stepper::BackwardEuler => dt,
            Stepper::Midpoint => 0.5 * dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// 𝔅x ∈ −φ(ℭx)
    Static(MonotoneMap),
    /// u = −y_c, u_c = y
    Dynamic(Controller),
}

#[derive(Debug, Clone, PartialEq)]
enum Engine {
    Static(StaticInclusion),
    Dynamic { fb: ForwardBackward, ff: Mat },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub sys: DiscreteSystem,
    pub feedback: Feedback,
    pub stepper: Stepper,
    pub dt: f64,
    pub t_end: f64,
    pub solver: SolverSettings,
    maps: DiscreteIoMaps,
    engine: Engine,
}

/// Everything one step produces besides the new state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x: DVector<f64>,
    pub xc: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    /// feedback output: −u in both cases (element of φ(y), or y_c)
    pub y_c: DVector<f64>,
    pub power_residual: f64,
    pub diffquot: f64,
    pub stats: InclusionStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolverSummary {
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub e_state: Vec<f64>,
    pub e_ctrl: Vec<f64>,
    pub power_residual: Vec<f64>,
    pub diffquot: Vec<f64>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub y_c: Vec<DVector<f64>>,
    pub solver: SolverSummary,
}

impl EnergyTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_energy(&self) -> Vec<f64> {
        self.e_state.iter().zip(&self.e_ctrl).map(|(a, b)| a + b).collect()
    }

    pub fn max_power_residual(&self) -> f64 {
        self.power_residual.iter().copied().fold(0.0, f64::max)
    }
}

impl ClosedLoop {
    pub fn new(
        sys: DiscreteSystem,
        feedback: Feedback,
        stepper: Stepper,
        dt: f64,
        t_end: f64,
        solver: SolverSettings,
    ) -> Result<Self, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::Parameter(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(SimError::Parameter(format!("final time must be nonnegative, got {t_end}")));
        }
        if !(solver.tol > 0.0) || solver.max_iter == 0 {
            return Err(SimError::Parameter("solver needs tol > 0 and max_iter > 0".into()));
        }
        let nd = sys.port_dim();
        let maps = sys.io_maps(stepper.tau(dt))?;
        let engine = match &feedback {
            Feedback::Static(phi) => {
                phi.validate().map_err(|e| SimError::Parameter(e.to_string()))?;
                if phi.dim() != nd {
                    return Err(SimError::Dimension(format!("feedback acts on R^{}, ports are R^{nd}", phi.dim())));
                }
                Engine::Static(StaticInclusion::new(&maps)?)
            }
            Feedback::Dynamic(ctrl) => {
                if ctrl.input_dim() != nd {
                    return Err(SimError::Dimension(format!("controller takes R^{}, ports are R^{nd}", ctrl.input_dim())));
                }
                // y ↦ C_c x_c(y) is monotone with Lipschitz constant τ‖B_cᵀ W_c B_c‖
                let (strong, _) = sym_part_bounds(&maps.g_inv)?;
                let coupling = maps.tau * spectral_norm(&(ctrl.b_c.transpose() * &ctrl.weight * &ctrl.b_c));
                let fb = ForwardBackward::new(strong, spectral_norm(&maps.g_inv) + coupling)?;
                Engine::Dynamic { fb, ff: &maps.g_inv * &maps.f }
            }
        };
        Ok(ClosedLoop { sys, feedback, stepper, dt, t_end, solver, maps, engine })
    }

    pub fn maps(&self) -> &DiscreteIoMaps {
        &self.maps
    }

    pub fn controller_dim(&self) -> usize {
        match &self.feedback {
            Feedback::Static(_) => 0,
            Feedback::Dynamic(c) => c.n_c,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn controller_energy(&self, xc: &DVector<f64>) -> f64 {
        match &self.feedback {
            Feedback::Static(_) => 0.0,
            Feedback::Dynamic(c) => c.energy(xc),
        }
    }

    /// ‖x − x'‖_h² + ‖x_c − x_c'‖²_W
    pub fn distance2(&self, a: (&DVector<f64>, &DVector<f64>), b: (&DVector<f64>, &DVector<f64>)) -> f64 {
        let dx = a.0 - b.0;
        let mut d = self.sys.inner_h(&dx, &dx);
        if let Feedback::Dynamic(c) = &self.feedback {
            d += c.norm2(&(a.1 - b.1));
        }
        d
    }

    fn check_state(&self, x: &DVector<f64>, xc: &DVector<f64>) -> Result<(), SimError> {
        self.sys.check_len(x)?;
        if xc.len() != self.controller_dim() {
            return Err(SimError::Dimension(format!("controller state has length {}, expected {}", xc.len(), self.controller_dim())));
        }
        if x.iter().chain(xc.iter()).any(|v| !v.is_finite()) {
            return Err(SimError::Parameter("initial state is not finite".into()));
        }
        Ok(())
    }

    /// Resolvent solve at f = x_n; returns the solved state and the port data.
    fn solve(
        &self,
        x: &DVector<f64>,
        xc: &DVector<f64>,
        warm: Option<&DVector<f64>>,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, f64, InclusionStats), SimError> {
        let tau = self.maps.tau;
        match (&self.engine, &self.feedback) {
            (Engine::Static(inc), Feedback::Static(phi)) => {
                let s = inc.solve(&self.maps, phi, x, warm, &self.solver)?;
                let d_fb = -s.u.dot(&s.y);
                Ok((s.x, DVector::zeros(0), s.u, s.y, d_fb, s.stats))
            }
            (Engine::Dynamic { fb, ff }, Feedback::Dynamic(ctrl)) => {
                // The joint unknown is (x_c, y). Given y, the controller row
                // x_c/τ + α_c(x_c) ∋ x_c,n/τ + B_c y is solved exactly by the
                // resolvent of α_c, leaving a strongly monotone inclusion in y:
                //   G⁻¹y + C_c x_c(y) + δ_c(y) ∋ G⁻¹F f
                let nd = ctrl.input_dim();
                let b = ff * x;
                let x_c_of = |y: &DVector<f64>| ctrl.a_c.resolve(tau, &(xc + &ctrl.b_c * y * tau));
                let forward = |y: &DVector<f64>| &self.maps.g_inv * y + &ctrl.c_c * x_c_of(y) - &b;
                let y0 = warm.cloned().unwrap_or_else(|| DVector::zeros(nd));
                let (y, stats) = fb.solve(forward, |a, v, out| ctrl.d_c.resolve_into(a, v, out), y0, &self.solver)?;
                let xcs = x_c_of(&y);
                let u = &self.maps.g_inv * (&y - &self.maps.f * x);
                let xs = &self.maps.phi * x + &self.maps.psi * &u;
                let a = (xc - &xcs) / tau + &ctrl.b_c * &y;
                let d = -&u - &ctrl.c_c * &xcs;
                let d_fb = xcs.dot(&(&ctrl.weight * a)) + y.dot(&d);
                Ok((xs, xcs, u, y, d_fb, stats))
            }
            _ => unreachable!("engine matches feedback by construction"),
        }
    }

    pub fn step(&self, x: &DVector<f64>, xc: &DVector<f64>) -> Result<StepOutput, SimError> {
        self.step_warm(x, xc, None)
    }

    fn step_warm(&self, x: &DVector<f64>, xc: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<StepOutput, SimError> {
        let (xs, xcs, u, y, d_fb, stats) = self.solve(x, xc, warm)?;
        let (xn, xcn) = match self.stepper {
            Stepper::BackwardEuler => (xs.clone(), xcs.clone()),
            Stepper::Midpoint => (&xs * 2.0 - x, &xcs * 2.0 - xc),
        };
        let de = self.sys.energy(&xn) - self.sys.energy(x) + self.controller_energy(&xcn) - self.controller_energy(xc);
        let internal = self.sys.internal_power(&self.sys.co_energy(&xs));
        let power_residual = (de / self.dt - internal + d_fb).abs();
        let diffquot = self.distance2((&xn, &xcn), (x, xc)).max(0.0).sqrt() / self.dt;
        let y_c = -&u;
        Ok(StepOutput { x: xn, xc: xcn, u, y, y_c, power_residual, diffquot, stats })
    }

    pub fn run(&self, x0: &DVector<f64>, xc0: &DVector<f64>) -> Result<EnergyTrace, SimError> {
        self.run_observed(x0, xc0, |_, _, _, _| {})
    }

    /// Runs to the final time, calling `observe(step, t, x, x_c)` on every state including the initial one.
    pub fn run_observed(
        &self,
        x0: &DVector<f64>,
        xc0: &DVector<f64>,
        mut observe: impl FnMut(usize, f64, &DVector<f64>, &DVector<f64>),
    ) -> Result<EnergyTrace, SimError> {
        self.check_state(x0, xc0)?;
        let steps = self.steps();
        let mut tr = EnergyTrace::default();
        let (u0, y0) = self.sys.ports(x0);
        tr.times.push(0.0);
        tr.e_state.push(self.sys.energy(x0));
        tr.e_ctrl.push(self.controller_energy(xc0));
        tr.power_residual.push(0.0);
        tr.diffquot.push(0.0);
        tr.y_c.push(-&u0);
        tr.u.push(u0);
        tr.y.push(y0);
        observe(0, 0.0, x0, xc0);
        let (mut x, mut xc) = (x0.clone(), xc0.clone());
        let mut warm: Option<DVector<f64>> = None;
        for k in 1..=steps {
            let out = self.step_warm(&x, &xc, warm.as_ref())?;
            let t = k as f64 * self.dt;
            warm = Some(out.y.clone());
            let s = &mut tr.solver;
            s.steps += 1;
            s.total_iterations += out.stats.iterations;
            s.max_iterations = s.max_iterations.max(out.stats.iterations);
            s.max_residual = s.max_residual.max(out.stats.residual);
            x = out.x;
            xc = out.xc;
            tr.times.push(t);
            tr.e_state.push(self.sys.energy(&x));
            tr.e_ctrl.push(self.controller_energy(&xc));
            tr.power_residual.push(out.power_residual);
            tr.diffquot.push(out.diffquot);
            tr.u.push(out.u);
            tr.y.push(out.y);
            tr.y_c.push(out.y_c);
            observe(k, t, &x, &xc);
        }
        Ok(tr)
    }
}
