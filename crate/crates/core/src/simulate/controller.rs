//! Finite-dimensional dissipative controllers
//!
//! ```text
//! ẋ_c ∈ −α_c(x_c) + B_c u_c,   y_c ∈ C_c x_c + δ_c(u_c)
//! ```
//!
//! with α_c, δ_c maximal monotone and C_c = B_c* in the weighted inner
//! product ⟨a, b⟩ = aᵀ W_c b.

use crate::densekit::Mat;
use crate::monotone::MonotoneMap;
use crate::rng;
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("C_c is not the adjoint of B_c (residual {0:e})")]
    NotCollocated(f64),
    #[error("Pi is not an orthogonal projection (residual {0:e})")]
    Projection(f64),
    #[error("controller weight is not symmetric positive definite")]
    Weight,
    #[error("{0} does not contain the origin in its graph")]
    Origin(&'static str),
    #[error(transparent)]
    Monotone(#[from] crate::monotone::MonotoneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    /// the dissipative part α_c (the state equation uses −α_c)
    pub a_c: MonotoneMap,
    #[serde(with = "crate::serde_mat")]
    pub b_c: Mat,
    /// optional explicit output matrix; must equal B_cᵀ W_c
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_mat")]
    pub c_c: Option<Mat>,
    pub d_c: MonotoneMap,
    #[serde(with = "crate::serde_mat")]
    pub pi: Mat,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_mat")]
    pub weight: Option<Mat>,
}

mod opt_mat {
    use crate::densekit::Mat;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => crate::serde_mat::serialize(m, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        rows.map(|r| crate::serde_mat::from_rows(&r).map_err(serde::de::Error::custom)).transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub n_c: usize,
    pub a_c: MonotoneMap,
    pub b_c: Mat,
    pub c_c: Mat,
    pub d_c: MonotoneMap,
    pub pi: Mat,
    pub weight: Mat,
}

impl Controller {
    pub fn new(spec: &ControllerSpec) -> Result<Self, ControllerError> {
        let n_c = spec.b_c.nrows();
        let nd = spec.b_c.ncols();
        spec.a_c.validate()?;
        spec.d_c.validate()?;
        if spec.a_c.dim() != n_c {
            return Err(ControllerError::Dimension(format!("A_c acts on R^{}, state is R^{n_c}", spec.a_c.dim())));
        }
        if spec.d_c.dim() != nd {
            return Err(ControllerError::Dimension(format!("D_c acts on R^{}, inputs are R^{nd}", spec.d_c.dim())));
        }
        let weight = spec.weight.clone().unwrap_or_else(|| Mat::identity(n_c, n_c));
        if weight.nrows() != n_c || weight.ncols() != n_c {
            return Err(ControllerError::Dimension("weight must be n_c x n_c".into()));
        }
        if (&weight - weight.transpose()).amax() > 1e-12 * (1.0 + weight.amax()) || weight.clone().cholesky().is_none() {
            return Err(ControllerError::Weight);
        }
        let c_c = spec.b_c.transpose() * &weight;
        if let Some(given) = &spec.c_c {
            if given.shape() != c_c.shape() {
                return Err(ControllerError::Dimension("C_c must be Nd x n_c".into()));
            }
            let r = (given - &c_c).amax();
            if r > 1e-12 * (1.0 + c_c.amax()) {
                return Err(ControllerError::NotCollocated(r));
            }
        }
        let pi = &spec.pi;
        if pi.nrows() != nd || pi.ncols() != nd {
            return Err(ControllerError::Dimension("Pi must be Nd x Nd".into()));
        }
        let r = (pi * pi - pi).amax().max((pi - pi.transpose()).amax());
        if r > 1e-12 {
            return Err(ControllerError::Projection(r));
        }
        if spec.a_c.resolve(1.0, &DVector::zeros(n_c)).amax() != 0.0 {
            return Err(ControllerError::Origin("A_c"));
        }
        if spec.d_c.resolve(1.0, &DVector::zeros(nd)).amax() != 0.0 {
            return Err(ControllerError::Origin("D_c"));
        }
        Ok(Controller { n_c, a_c: spec.a_c.clone(), b_c: spec.b_c.clone(), c_c, d_c: spec.d_c.clone(), pi: pi.clone(), weight })
    }

    pub fn input_dim(&self) -> usize {
        self.b_c.ncols()
    }

    pub fn energy(&self, xc: &DVector<f64>) -> f64 {
        0.5 * xc.dot(&(&self.weight * xc))
    }

    pub fn norm2(&self, xc: &DVector<f64>) -> f64 {
        xc.dot(&(&self.weight * xc))
    }

    /// Backward Euler step of the controller alone.
    pub fn step_alone(&self, xc: &DVector<f64>, uc: &DVector<f64>, dt: f64) -> DVector<f64> {
        // x + dt α(x) ∋ x_n + dt B u
        self.a_c.resolve(dt, &(xc + &self.b_c * uc * dt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerReport {
    /// dissipation constant estimated from graph samples (item i)
    pub rho: f64,
    pub dissipation_ok: bool,
    /// output bound constant (item ii); infinite when y_c ≠ 0 on the kernel of the bound
    pub output_constant: f64,
    pub output_ok: bool,
    /// contraction margin δ and input gain c from controller-only runs (item iii)
    pub delta: f64,
    pub input_gain: f64,
    pub decay_ok: bool,
    pub violation: Option<String>,
}

impl ControllerReport {
    pub fn passed(&self) -> bool {
        self.dissipation_ok && self.output_ok && self.decay_ok
    }
}

const OUTPUT_CAP: f64 = 1e8;

/// Estimates the constants of the dissipativity, output-bound and decay
/// conditions by sampling. The numbers are estimates, not certificates.
pub fn verify_controller(ctrl: &Controller, trials: usize, horizon: f64, seed: u64) -> ControllerReport {
    let mut rng = rng::stream(seed, "controller");
    let (n_c, nd) = (ctrl.n_c, ctrl.input_dim());
    let mut violation = None;

    // graph samples (x, a ∈ α(x)) and (u, d ∈ δ(u)), origin included
    let mut xs = vec![(DVector::zeros(n_c), DVector::zeros(n_c))];
    let mut us = vec![(DVector::zeros(nd), DVector::zeros(nd))];
    for _ in 0..trials {
        let s = 10f64.powf(rng.gen_range(-2.0..1.0));
        let al = 10f64.powf(rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(n_c, |_, _| s * rng.gen_range(-1.0..1.0));
        let x = ctrl.a_c.resolve(al, &v);
        xs.push(((v.clone() - &x) / al, x).swap());
        let v = DVector::from_fn(nd, |_, _| s * rng.gen_range(-1.0..1.0));
        let u = ctrl.d_c.resolve(al, &v);
        us.push(((v.clone() - &u) / al, u).swap());
    }

    // (i): ⟨a − a', x − x'⟩_W + ⟨d − d', u − u'⟩ ≥ ρ (‖x − x'‖²_W + |Π(u − u')|²)
    let mut rho = f64::INFINITY;
    for i in 0..xs.len() {
        for j in 0..i.min(8).max(1) {
            let k = (i + j * 7) % us.len();
            let (dx, da) = (&xs[i].0 - &xs[j].0, &xs[i].1 - &xs[j].1);
            let (du, dd) = (&us[k].0 - &us[(k + 1) % us.len()].0, &us[k].1 - &us[(k + 1) % us.len()].1);
            let num = dx.dot(&(&ctrl.weight * &da)) + du.dot(&dd);
            let den = ctrl.norm2(&dx) + (&ctrl.pi * &du).norm_squared();
            if den > 1e-24 {
                rho = rho.min(num / den);
            } else if num < -1e-14 {
                rho = f64::NEG_INFINITY;
            }
        }
    }
    if !rho.is_finite() && rho > 0.0 {
        rho = 0.0;
    }
    let dissipation_ok = rho > 0.0;
    if !dissipation_ok {
        violation.get_or_insert_with(|| format!("dissipation constant estimate {rho:e} is not positive"));
    }

    // (ii): |y_c|² ≤ c'(‖x_c‖² + |Πu_c|²), probing the kernel of Π explicitly
    let mut c_prime: f64 = 0.0;
    let kernel = Mat::identity(nd, nd) - &ctrl.pi;
    for (i, (x, _)) in xs.iter().enumerate() {
        let (u0, _) = &us[i % us.len()];
        for (xc, uc) in [(x.clone(), u0.clone()), (DVector::zeros(n_c), &kernel * u0)] {
            let yc = &ctrl.c_c * &xc + ctrl.d_c.minimal_section(&uc);
            let den = ctrl.norm2(&xc) + (&ctrl.pi * &uc).norm_squared();
            let num = yc.norm_squared();
            if den > 1e-24 {
                c_prime = c_prime.max(num / den);
            } else if num > 1e-24 {
                c_prime = f64::INFINITY;
            }
        }
    }
    let output_ok = c_prime <= OUTPUT_CAP;
    if !output_ok {
        violation.get_or_insert_with(|| "output is not bounded by the state and the projected input".to_string());
    }

    // (iii): ‖x_c(t₀)‖² ≤ (1 − δ)‖x_c(0)‖² + c‖Πu_c‖²_{L²(0,t₀)}
    let steps = 200;
    let dt = horizon / steps as f64;
    let run = |x0: &DVector<f64>, inputs: &[DVector<f64>]| {
        let mut x = x0.clone();
        let mut l2 = 0.0;
        for k in 0..steps {
            let u = &inputs[k * inputs.len() / steps];
            x = ctrl.step_alone(&x, u, dt);
            l2 += dt * (&ctrl.pi * u).norm_squared();
        }
        (ctrl.norm2(&x), l2)
    };
    let mut worst_ratio: f64 = 0.0;
    let mut gain: f64 = 0.0;
    let mut trial_data = Vec::new();
    for _ in 0..trials.clamp(4, 32) {
        let x0 = DVector::from_fn(n_c, |_, _| rng.gen_range(-1.0..1.0));
        let inputs: Vec<DVector<f64>> = (0..8).map(|_| DVector::from_fn(nd, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let (free, _) = run(&x0, &[DVector::zeros(nd)]);
        let n0 = ctrl.norm2(&x0);
        if n0 > 0.0 {
            worst_ratio = worst_ratio.max(free / n0);
        }
        let (forced, l2) = run(&DVector::zeros(n_c), &inputs);
        if l2 > 1e-24 {
            gain = gain.max(forced / l2);
        } else if forced > 1e-24 {
            gain = f64::INFINITY;
        }
        trial_data.push((x0, inputs));
    }
    let delta = 1.0 - worst_ratio;
    // mixed runs may need a larger gain for nonlinear controllers
    for (x0, inputs) in &trial_data {
        let (end, l2) = run(x0, inputs);
        let excess = end - (1.0 - delta) * ctrl.norm2(x0);
        if excess > 0.0 {
            gain = if l2 > 1e-24 { gain.max(excess / l2) } else { f64::INFINITY };
        }
    }
    let decay_ok = delta > 0.0 && gain.is_finite();
    if !decay_ok {
        violation.get_or_insert_with(|| format!("controller-only runs give delta = {delta:e}, c = {gain:e}"));
    }
    ControllerReport {
        rho,
        dissipation_ok,
        output_constant: c_prime,
        output_ok,
        delta,
        input_gain: gain,
        decay_ok,
        violation,
    }
}

trait Swap {
    fn swap(self) -> Self;
}

impl<T> Swap for (T, T) {
    fn swap(self) -> Self {
        (self.1, self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collocated(n: usize) -> ControllerSpec {
        ControllerSpec {
            a_c: MonotoneMap::identity(n),
            b_c: Mat::identity(n, n),
            c_c: None,
            d_c: MonotoneMap::identity(n),
            pi: Mat::identity(n, n),
            weight: None,
        }
    }

    #[test]
    fn collocated_controller_passes() {
        let c = Controller::new(&collocated(4)).unwrap();
        let r = verify_controller(&c, 64, 1.0, 3);
        assert!(r.passed(), "{r:?}");
        assert!(r.rho >= 0.5 && (r.rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relay_feedthrough_on_kernel_of_pi_fails() {
        let mut spec = collocated(2);
        spec.b_c = Mat::zeros(2, 2);
        spec.d_c = MonotoneMap::block(vec![MonotoneMap::Relay { level: 1.0 }, MonotoneMap::Relay { level: 1.0 }]);
        spec.pi = Mat::from_diagonal(&nalgebra::dvector![1.0, 0.0]);
        let r = verify_controller(&Controller::new(&spec).unwrap(), 32, 1.0, 5);
        assert!(!r.output_ok && r.output_constant.is_infinite());
        spec.pi = Mat::identity(2, 2);
        let r = verify_controller(&Controller::new(&spec).unwrap(), 32, 1.0, 5);
        assert!(r.output_ok);
    }

    #[test]
    fn validation_errors() {
        let mut spec = collocated(2);
        spec.c_c = Some(Mat::identity(2, 2) * 2.0);
        assert!(matches!(Controller::new(&spec), Err(ControllerError::NotCollocated(_))));
        let mut spec = collocated(2);
        spec.pi = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(Controller::new(&spec), Err(ControllerError::Projection(_))));
        let mut spec = collocated(2);
        spec.weight = Some(Mat::from_diagonal(&nalgebra::dvector![1.0, -1.0]));
        assert_eq!(Controller::new(&spec), Err(ControllerError::Weight));
        let mut spec = collocated(2);
        spec.weight = Some(Mat::from_diagonal(&nalgebra::dvector![2.0, 1.0]));
        spec.c_c = Some(Mat::from_diagonal(&nalgebra::dvector![2.0, 1.0]));
        Controller::new(&spec).unwrap();
    }

    #[test]
    fn zero_state_and_input_is_tight() {
        let c = Controller::new(&collocated(2)).unwrap();
        let x = c.step_alone(&DVector::zeros(2), &DVector::zeros(2), 0.1);
        assert_eq!(x, DVector::zeros(2));
    }
}
