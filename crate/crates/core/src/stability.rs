//! Stability diagnostics: multipliers, Lyapunov functionals, the sufficient
//! conditions for exponential stability and decay-rate fits of traces.

use crate::densekit::{inverse, spectral_norm, sym_part_bounds, LinalgError, Mat};
use crate::discrete::DiscreteSystem;
use crate::model::{audit_grid, PhsModel, AUDIT_POINTS};
use crate::monotone::MonotoneMap;
use crate::simulate::EnergyTrace;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("profile {profile:?} does not fit this model: {reason}")]
    Profile { profile: Profile, reason: String },
    #[error("multiplier {0} is not admissible for this profile")]
    Multiplier(String),
    #[error("decay fit undefined: {0}")]
    Fit(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which Lyapunov functional and boundary bound apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// first-order systems with invertible P₁
    N1,
    /// general second-order systems
    N2,
    /// second-order systems with the block structure of the Euler-Bernoulli beam
    Eb,
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "n1" => Ok(Profile::N1),
            "n2" => Ok(Profile::N2),
            "eb" => Ok(Profile::Eb),
            other => Err(format!("unknown profile '{other}' (expected n1, n2 or eb)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MultiplierForm {
    /// s·(e^{λζ} − 1)
    Exponential { s: f64, lambda: f64 },
    /// 1 − ζ
    OneMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub form: MultiplierForm,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Multiplier {
    pub fn one_minus() -> Self {
        Multiplier { form: MultiplierForm::OneMinus, alpha: 0.0, beta: 0.0, gamma: 0.0 }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self.form {
            MultiplierForm::Exponential { s, lambda } => s * (lambda * z).exp_m1(),
            MultiplierForm::OneMinus => 1.0 - z,
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self.form {
            MultiplierForm::Exponential { s, lambda } => s * lambda * (lambda * z).exp(),
            MultiplierForm::OneMinus => -1.0,
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.eval(0.0).abs().max(self.eval(1.0).abs())
    }

    /// min over the audit grid of αη' − βη − γ
    pub fn audit_margin(&self, points: usize) -> f64 {
        audit_grid(points)
            .map(|z| self.alpha * self.derivative(z) - self.beta * self.eval(z) - self.gamma)
            .fold(f64::INFINITY, f64::min)
    }
}

/// η(0) = 0, η' > 0 and αη' − βη ≥ γ on the audit grid.
pub fn make_multiplier(alpha: f64, beta: f64, gamma: f64) -> Result<Multiplier, StabilityError> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta >= 0.0 && beta.is_finite()) || !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(StabilityError::Parameter(format!("need alpha > 0, beta >= 0, gamma >= 0; got {alpha}, {beta}, {gamma}")));
    }
    let target = gamma.max(beta);
    let (mut s, mut lambda) = if target > 0.0 { (1.0, target / alpha) } else { (1e3, 1e-3) };
    lambda *= 1.0 + 8.0 * f64::EPSILON;
    loop {
        let m = Multiplier { form: MultiplierForm::Exponential { s, lambda }, alpha, beta, gamma };
        if m.audit_margin(AUDIT_POINTS) >= 0.0 {
            return Ok(m);
        }
        lambda *= 2.0;
        s = s.min(1.0);
    }
}

/// Constants of the first-order decay argument: m₀ ≤ H⁻¹ ≤ M₀, (H⁻¹)' ≤ M₁,
/// |Re(H⁻¹P₁⁻¹P₀)| ≤ M₃ on the audit grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderConstants {
    pub m0: f64,
    pub big_m0: f64,
    pub m1: f64,
    pub m3: f64,
}

pub fn first_order_constants(model: &PhsModel) -> Result<FirstOrderConstants, StabilityError> {
    gate_profile(model, Profile::N1)?;
    let p1_inv = inverse(&model.p[1])?;
    let (mut m0, mut big_m0, mut m1, mut m3) = (f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
    for z in audit_grid(AUDIT_POINTS) {
        let h_inv = inverse(&model.hamiltonian.eval(z))?;
        let (lo, hi) = sym_part_bounds(&h_inv)?;
        m0 = m0.min(lo);
        big_m0 = big_m0.max(hi);
        let dh_inv = -(&h_inv * model.hamiltonian.derivative(z) * &h_inv);
        m1 = m1.max(sym_part_bounds(&dh_inv)?.1);
        let r = &h_inv * &p1_inv * &model.p[0];
        let (a, b) = sym_part_bounds(&r)?;
        m3 = m3.max(a.abs()).max(b.abs());
    }
    Ok(FirstOrderConstants { m0, big_m0, m1, m3 })
}

/// The multiplier of the first-order decay proof: α = m₀, β = M₁ + 2M₃, γ = M₀.
pub fn first_order_multiplier(model: &PhsModel) -> Result<Multiplier, StabilityError> {
    let c = first_order_constants(model)?;
    make_multiplier(c.m0, c.m1.max(0.0) + 2.0 * c.m3, c.big_m0)
}

/// N1 for first-order models, EB when the second-order structure allows it, N2 otherwise.
pub fn default_profile(model: &PhsModel) -> Profile {
    match model.order {
        1 => Profile::N1,
        _ if eb_structure(model).is_ok() => Profile::Eb,
        _ => Profile::N2,
    }
}

fn gate_profile(model: &PhsModel, profile: Profile) -> Result<(), StabilityError> {
    let bad = |reason: &str| Err(StabilityError::Profile { profile, reason: reason.to_string() });
    match profile {
        Profile::N1 => {
            if model.order != 1 {
                return bad("needs a first-order model");
            }
            if inverse(&model.p[1]).is_err() {
                return bad("P1 must be invertible");
            }
        }
        Profile::N2 => {
            if model.order != 2 {
                return bad("needs a second-order model");
            }
        }
        Profile::Eb => {
            if model.order != 2 {
                return bad("needs a second-order model");
            }
            if let Err(reason) = eb_structure(model) {
                return bad(&reason);
            }
        }
    }
    Ok(())
}

/// Checks d even, P₁ = P₀ = 0, P₂ = [[0, −P*], [P, 0]] and block-diagonal H; returns P.
fn eb_structure(model: &PhsModel) -> Result<Mat, String> {
    let d = model.dim;
    if d % 2 != 0 {
        return Err("dimension must be even".into());
    }
    let k = d / 2;
    if model.p[0].amax() != 0.0 || model.p[1].amax() != 0.0 {
        return Err("P0 and P1 must vanish".into());
    }
    let p2 = &model.p[2];
    let p = p2.view((k, 0), (k, k)).into_owned();
    let scale = 1e-12 * (1.0 + p2.amax());
    if p2.view((0, 0), (k, k)).amax() > scale
        || p2.view((k, k), (k, k)).amax() > scale
        || (p2.view((0, k), (k, k)) + p.transpose()).amax() > scale
    {
        return Err("P2 must have the form [[0, -P*], [P, 0]]".into());
    }
    for z in audit_grid(64) {
        let h = model.hamiltonian.eval(z);
        if h.view((0, k), (k, k)).amax() > 0.0 || h.view((k, 0), (k, k)).amax() > 0.0 {
            return Err("H must be block diagonal".into());
        }
    }
    Ok(p)
}

/// Trapezoid running integral ∫₀^ζ on the nodal grid, per component.
fn running_integral(sys: &DiscreteSystem, x: &DVector<f64>) -> DVector<f64> {
    let d = sys.dim();
    let nodes = &sys.grid.nodes;
    let mut out = DVector::zeros(x.len());
    for j in 1..nodes.len() {
        let h = nodes[j] - nodes[j - 1];
        for c in 0..d {
            out[j * d + c] = out[(j - 1) * d + c] + 0.5 * h * (x[(j - 1) * d + c] + x[j * d + c]);
        }
    }
    out
}

/// Norm of the discrete running integral in the grid's weighted norm.
fn running_integral_norm(sys: &DiscreteSystem) -> f64 {
    let m = sys.nodes();
    let w: Vec<f64> = sys.grid.weights.clone();
    let mut a = Mat::zeros(m, m);
    for j in 1..m {
        let h = sys.grid.nodes[j] - sys.grid.nodes[j - 1];
        for i in 0..m {
            a[(j, i)] = a[(j - 1, i)];
        }
        a[(j, j - 1)] += 0.5 * h;
        a[(j, j)] += 0.5 * h;
    }
    for j in 0..m {
        for i in 0..m {
            a[(j, i)] *= (w[j] / w[i]).sqrt();
        }
    }
    spectral_norm(&a)
}

/// A quadratic functional q with |q(x)| ≤ ĉ‖x‖²_h.
#[derive(Debug, Clone, PartialEq)]
pub struct Lyapunov {
    pub profile: Profile,
    pub eta: Multiplier,
    pub c_hat: f64,
    eta_nodes: Vec<f64>,
    a: Mat,
    b: Mat,
}

impl Lyapunov {
    pub fn new(sys: &DiscreteSystem, profile: Profile, eta: Multiplier) -> Result<Self, StabilityError> {
        let model = &sys.model;
        gate_profile(model, profile)?;
        let d = model.dim;
        match (profile, eta.form) {
            (Profile::N1, MultiplierForm::OneMinus) => {
                return Err(StabilityError::Multiplier("1 - zeta (needs eta(0) = 0, eta' > 0)".into()))
            }
            (Profile::Eb, MultiplierForm::Exponential { .. }) => {
                return Err(StabilityError::Multiplier("s(e^(lambda zeta) - 1) (needs eta(1) = 0)".into()))
            }
            _ => {}
        }
        let m_h = model.hamiltonian_audit().min_eig;
        let sup_eta = eta.sup_abs();
        let (a, b, c_hat) = match profile {
            Profile::N1 => {
                let a = inverse(&model.p[1])?;
                let c = sup_eta * spectral_norm(&a) / m_h;
                (a, Mat::zeros(d, d), c)
            }
            Profile::N2 => {
                let p2_inv = inverse(&model.p[2])?;
                let b = p2_inv.transpose() * &model.p[1] * &p2_inv;
                let ci = running_integral_norm(sys);
                let c = sup_eta * (spectral_norm(&p2_inv) * ci + 0.5 * spectral_norm(&b) * ci * ci) / m_h;
                (p2_inv, b, c)
            }
            Profile::Eb => {
                let p = eb_structure(model).map_err(|reason| StabilityError::Profile { profile, reason })?;
                let k = d / 2;
                let p_inv = inverse(&p)?;
                let mut a = Mat::zeros(d, d);
                a.view_mut((0, k), (k, k)).copy_from(&p_inv);
                let c = sup_eta * spectral_norm(&p_inv) * running_integral_norm(sys) / m_h;
                (a, Mat::zeros(d, d), c)
            }
        };
        let eta_nodes = sys.grid.nodes.iter().map(|&z| eta.eval(z)).collect();
        Ok(Lyapunov { profile, eta, c_hat, eta_nodes, a, b })
    }

    pub fn q(&self, sys: &DiscreteSystem, x: &DVector<f64>) -> f64 {
        let d = sys.dim();
        let w = &sys.grid.weights;
        let v = match self.profile {
            Profile::N1 => x.clone(),
            Profile::N2 | Profile::Eb => running_integral(sys, x),
        };
        let mut q = 0.0;
        for j in 0..sys.nodes() {
            let xj = x.rows(j * d, d);
            let vj = v.rows(j * d, d);
            let mut term = xj.dot(&(&self.a * vj));
            if self.profile == Profile::N2 {
                term -= 0.5 * vj.dot(&(&self.b * vj));
            }
            q += w[j] * self.eta_nodes[j] * term;
        }
        q
    }
}

/// Time from which t‖x‖²_h + q(x) is nonincreasing under a damper with
/// sector constant κ̃ = ½min{κ, κ⁻¹}.
pub fn descent_start(eta: &Multiplier, kappa_tilde: f64) -> f64 {
    eta.eval(1.0) / (2.0 * kappa_tilde)
}

pub fn lyapunov_q(sys: &DiscreteSystem, profile: Profile, eta: Multiplier, x: &DVector<f64>) -> Result<f64, StabilityError> {
    sys.check_len(x).map_err(|e| StabilityError::Parameter(e.to_string()))?;
    Ok(Lyapunov::new(sys, profile, eta)?.q(sys, x))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionTerm {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub terms: Vec<ConditionTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn term(name: &str, value: f64) -> ConditionTerm {
    ConditionTerm { name: name.to_string(), value }
}

/// ‖(H'H⁻¹ + P₂⁻¹P₁)(ζ−1)‖_∞ + ‖P₀*P₂⁻¹ + P₂⁻¹P₀ − P₁P₂⁻¹P₁P₂⁻¹‖/√2 + ½‖(P₂⁻¹P₀)*P₂⁻¹P₀‖ < 2
pub fn check_order2_condition(model: &PhsModel) -> Result<ConditionReport, StabilityError> {
    gate_profile(model, Profile::N2)?;
    let p = &model.p;
    let p2_inv = inverse(&p[2])?;
    let c = &p2_inv * &p[1];
    let mut t1: f64 = 0.0;
    for z in audit_grid(AUDIT_POINTS) {
        let h_inv = inverse(&model.hamiltonian.eval(z))?;
        let m = (model.hamiltonian.derivative(z) * h_inv + &c) * (z - 1.0);
        t1 = t1.max(spectral_norm(&m));
    }
    let t2 = spectral_norm(&(p[0].transpose() * &p2_inv + &p2_inv * &p[0] - &p[1] * &p2_inv * &p[1] * &p2_inv))
        * std::f64::consts::FRAC_1_SQRT_2;
    let r = &p2_inv * &p[0];
    let t3 = 0.5 * spectral_norm(&(r.transpose() * &r));
    let value = t1 + t2 + t3;
    Ok(ConditionReport {
        name: "order2".into(),
        value,
        threshold: 2.0,
        passed: value < 2.0,
        terms: vec![term("hamiltonian_gradient", t1), term("p0_p1_coupling", t2), term("p0_square", t3)],
        note: None,
    })
}

/// sup{‖H₂'H₂⁻¹‖_∞, ‖H₁'H₁⁻¹‖_∞} < 1
pub fn check_eb_condition(model: &PhsModel) -> Result<ConditionReport, StabilityError> {
    gate_profile(model, Profile::Eb)?;
    let k = model.dim / 2;
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for z in audit_grid(AUDIT_POINTS) {
        let h = model.hamiltonian.eval(z);
        let dh = model.hamiltonian.derivative(z);
        let block = |off: usize| -> Result<f64, StabilityError> {
            let hi = inverse(&h.view((off, off), (k, k)).into_owned())?;
            Ok(spectral_norm(&(dh.view((off, off), (k, k)) * hi)))
        };
        s1 = s1.max(block(0)?);
        s2 = s2.max(block(k)?);
    }
    let value = s1.max(s2);
    Ok(ConditionReport {
        name: "euler_bernoulli".into(),
        value,
        threshold: 1.0,
        passed: value < 1.0,
        terms: vec![term("h1_gradient", s1), term("h2_gradient", s2)],
        note: None,
    })
}

/// Π for static feedback: the coordinates on which φ can act.
pub fn static_projection(phi: &MonotoneMap) -> Mat {
    let active = phi.active_components();
    Mat::from_diagonal(&DVector::from_iterator(active.len(), active.iter().map(|&a| if a { 1.0 } else { 0.0 })))
}

/// Rows of the trace stack the profile's boundary bound must control.
fn required_traces(model: &PhsModel, profile: Profile) -> Vec<usize> {
    let d = model.dim;
    match profile {
        // stack (z(1), z(0))
        Profile::N1 => (0..d).collect(),
        // stack (z(1), z'(1), z(0), z'(0))
        Profile::N2 => (0..d).chain(2 * d..4 * d).collect(),
        Profile::Eb => {
            let k = d / 2;
            (2 * d..3 * d).chain(3 * d..3 * d + k).chain(k..d).collect()
        }
    }
}

/// Smallest c with |S t|² ≤ c (|U t|² + |Π Y t|²) on the trace space, where S
/// selects the profile's trace combination. Infinite when the port form has a
/// kernel that S does not annihilate.
pub fn check_boundary_bound(model: &PhsModel, pi: &Mat, profile: Profile) -> Result<ConditionReport, StabilityError> {
    gate_profile(model, profile)?;
    let nd = model.port_dim();
    if pi.nrows() != nd || pi.ncols() != nd {
        return Err(StabilityError::Parameter(format!("projection must be {nd}x{nd}")));
    }
    let u = model.input_rows();
    let y = model.output_rows();
    let width = u.ncols();
    let k_form = u.transpose() * u + y.transpose() * pi.transpose() * pi * y;
    let rows = required_traces(model, profile);
    let mut s = Mat::zeros(rows.len(), width);
    for (i, &j) in rows.iter().enumerate() {
        s[(i, j)] = 1.0;
    }
    let eig = k_form.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1.0);
    let mut kernel_leak: f64 = 0.0;
    let mut c: f64 = 0.0;
    // restricted to range(K): c = λ_max(K^{-1/2} SᵀS K^{-1/2})
    let range: Vec<usize> = (0..width).filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
    for i in 0..width {
        if !range.contains(&i) {
            kernel_leak = kernel_leak.max((&s * eig.eigenvectors.column(i)).norm());
        }
    }
    if kernel_leak > 1e-10 {
        c = f64::INFINITY;
    } else if !range.is_empty() {
        let mut basis = Mat::zeros(width, range.len());
        for (k, &i) in range.iter().enumerate() {
            basis.set_column(k, &(eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt()));
        }
        let sb = &s * basis;
        c = sym_part_bounds(&(sb.transpose() * sb))?.1;
    }
    Ok(ConditionReport {
        name: format!("boundary_bound_{}", match profile {
            Profile::N1 => "n1",
            Profile::N2 => "n2",
            Profile::Eb => "eb",
        }),
        value: c,
        threshold: f64::INFINITY,
        passed: c.is_finite(),
        terms: vec![term("kernel_leak", kernel_leak)],
        note: (!c.is_finite()).then(|| "the port form misses part of the required traces".to_string()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub m_hat: f64,
    pub omega_hat: f64,
    pub fit_quality: f64,
    pub samples: usize,
}

const MIN_FIT_SAMPLES: usize = 32;
/// energy (relative to E(0)) below which a trace is treated as extinct
pub const ROUNDOFF_ENERGY: f64 = 1e-24;

/// Least-squares line through (t, log E) over the trailing window of the total
/// energy; ω̂ is half the slope, M̂ comes from the intercept relative to E(0).
/// Samples from the first one at or below `ROUNDOFF_ENERGY`·E(0) on are dropped
/// before the window is taken.
pub fn estimate_decay(trace: &EnergyTrace, window_fraction: f64) -> Result<DecayFit, StabilityError> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(StabilityError::Parameter(format!("window fraction must be in (0, 1], got {window_fraction}")));
    }
    let e = trace.total_energy();
    // once the state is down at roundoff, log E is noise: fit only what precedes
    let floor = ROUNDOFF_ENERGY * e.first().copied().unwrap_or(0.0);
    let n = e.iter().position(|&v| v <= floor).filter(|&k| k > 0).unwrap_or(e.len());
    let start = n - ((n as f64 * window_fraction).round() as usize).min(n);
    let (t, e_w) = (&trace.times[start..n], &e[start..n]);
    if t.len() < MIN_FIT_SAMPLES {
        return Err(StabilityError::Fit(format!("{} samples in the window, need {MIN_FIT_SAMPLES}", t.len())));
    }
    if e_w.iter().any(|&v| !(v > 0.0 && v.is_finite())) || !(e[0] > 0.0) {
        return Err(StabilityError::Fit("energy is not positive in the fit window".into()));
    }
    let k = t.len() as f64;
    let log_e: Vec<f64> = e_w.iter().map(|v| v.ln()).collect();
    let tm = t.iter().sum::<f64>() / k;
    let lm = log_e.iter().sum::<f64>() / k;
    let sxx: f64 = t.iter().map(|ti| (ti - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&log_e).map(|(ti, li)| (ti - tm) * (li - lm)).sum();
    let slope = sxy / sxx;
    let intercept = lm - slope * tm;
    let ss_tot: f64 = log_e.iter().map(|l| (l - lm).powi(2)).sum();
    let ss_res: f64 = t.iter().zip(&log_e).map(|(ti, li)| (li - intercept - slope * ti).powi(2)).sum();
    let fit_quality = if ss_tot <= 1e-24 * k * (1.0 + lm * lm) { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(DecayFit {
        m_hat: ((intercept - e[0].ln()) / 2.0).exp(),
        omega_hat: slope / 2.0,
        fit_quality,
        samples: t.len(),
    })
}
