//! Continuous port-Hamiltonian systems on [0, 1]:
//!
//! ```text
//! x_t = P_N (Hx)^(N) + ... + P_1 (Hx)' + P_0 Hx,   N in {1, 2}
//! ```
//!
//! with boundary inputs u = W_B (f; e) and outputs y = W_C (e; f), where the
//! boundary flow and effort come from the trace stack
//! `t = ((Hx)(1), .., (Hx)^(N-1)(1), (Hx)(0), .., (Hx)^(N-1)(0))` via `(f; e) = R_ext t`.

use crate::densekit::{condition_number, inverse, spectral_norm, sym_part_bounds, LinalgError, Mat};
use crate::rng;
use nalgebra::{DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of points of the grid used to audit ζ-dependent quantities.
pub const AUDIT_POINTS: usize = 1024;

pub fn audit_grid(points: usize) -> impl Iterator<Item = f64> {
    let last = (points.max(2) - 1) as f64;
    (0..points.max(2)).map(move |i| i as f64 / last)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("order {0} is not supported (only 1 and 2)")]
    UnsupportedOrder(usize),
    #[error("P_{k} violates P_k^T = (-1)^(k+1) P_k (residual {residual:e})")]
    Symmetry { k: usize, residual: f64 },
    #[error("symmetric part of P_0 is not negative semidefinite (largest eigenvalue {max_eig:e})")]
    Dissipation { max_eig: f64 },
    #[error("leading coefficient P_N is singular (condition {cond:e})")]
    SingularLeading { cond: f64 },
    #[error("H({zeta}) is not symmetric (residual {residual:e})")]
    HamiltonianAsymmetric { zeta: f64, residual: f64 },
    #[error("H is not coercive: smallest eigenvalue {min_eig:e} at zeta = {zeta}")]
    NonCoercive { zeta: f64, min_eig: f64 },
    #[error("H is not Lipschitz on the audit grid")]
    NotLipschitz,
    #[error("boundary port matrices are singular (condition {cond:e})")]
    SingularPorts { cond: f64 },
    #[error("invalid Hamiltonian description: {0}")]
    Hamiltonian(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Scalar coefficient profile ζ ↦ p(ζ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarProfile {
    Constant { value: f64 },
    /// scale · e^(rate·ζ)
    Exp { scale: f64, rate: f64 },
    /// a + b·ζ
    Affine { a: f64, b: f64 },
    /// 1 / p(ζ), convenient for H_1 = 1/ρ
    Reciprocal { of: Box<ScalarProfile> },
}

impl ScalarProfile {
    pub fn value(&self, z: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Exp { scale, rate } => scale * (rate * z).exp(),
            Self::Affine { a, b } => a + b * z,
            Self::Reciprocal { of } => 1.0 / of.value(z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Exp { scale, rate } => scale * rate * (rate * z).exp(),
            Self::Affine { b, .. } => *b,
            Self::Reciprocal { of } => {
                let p = of.value(z);
                -of.derivative(z) / (p * p)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Exp { rate, .. } => *rate == 0.0,
            Self::Affine { b, .. } => *b == 0.0,
            Self::Reciprocal { of } => of.is_constant(),
        }
    }
}

/// Hamiltonian density H(ζ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianDensity {
    Constant {
        #[serde(with = "crate::serde_mat")]
        matrix: Mat,
    },
    /// Samples at increasing nodes covering [0, 1], linear in between.
    Table {
        nodes: Vec<f64>,
        #[serde(with = "crate::serde_mat::vec")]
        values: Vec<Mat>,
    },
    Diagonal { profiles: Vec<ScalarProfile> },
}

impl HamiltonianDensity {
    pub fn identity(d: usize) -> Self {
        Self::Constant { matrix: Mat::identity(d, d) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant { matrix } => matrix.nrows(),
            Self::Table { values, .. } => values.first().map_or(0, |m| m.nrows()),
            Self::Diagonal { profiles } => profiles.len(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Table { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
            Self::Diagonal { profiles } => profiles.iter().all(ScalarProfile::is_constant),
        }
    }

    fn segment(nodes: &[f64], z: f64) -> usize {
        let k = nodes.partition_point(|&n| n <= z);
        k.clamp(1, nodes.len() - 1) - 1
    }

    pub fn eval(&self, z: f64) -> Mat {
        match self {
            Self::Constant { matrix } => matrix.clone(),
            Self::Table { nodes, values } => {
                if nodes.len() == 1 {
                    return values[0].clone();
                }
                let k = Self::segment(nodes, z);
                let s = ((z - nodes[k]) / (nodes[k + 1] - nodes[k])).clamp(0.0, 1.0);
                &values[k] * (1.0 - s) + &values[k + 1] * s
            }
            Self::Diagonal { profiles } => {
                Mat::from_diagonal(&DVector::from_iterator(profiles.len(), profiles.iter().map(|p| p.value(z))))
            }
        }
    }

    /// dH/dζ; for tables the slope of the segment containing ζ.
    pub fn derivative(&self, z: f64) -> Mat {
        let d = self.dim();
        match self {
            Self::Constant { .. } => Mat::zeros(d, d),
            Self::Table { nodes, values } => {
                if nodes.len() == 1 {
                    return Mat::zeros(d, d);
                }
                let k = Self::segment(nodes, z);
                (&values[k + 1] - &values[k]) / (nodes[k + 1] - nodes[k])
            }
            Self::Diagonal { profiles } => Mat::from_diagonal(&DVector::from_iterator(
                profiles.len(),
                profiles.iter().map(|p| p.derivative(z)),
            )),
        }
    }

    fn check_shape(&self) -> Result<(), ModelError> {
        match self {
            Self::Constant { matrix } if !matrix.is_square() => {
                Err(ModelError::Hamiltonian("constant H must be square".into()))
            }
            Self::Table { nodes, values } => {
                if nodes.is_empty() || nodes.len() != values.len() {
                    return Err(ModelError::Hamiltonian("table needs one matrix per node".into()));
                }
                if nodes.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(ModelError::Hamiltonian("table nodes must increase strictly".into()));
                }
                if nodes.len() > 1 && (nodes[0] > 0.0 || *nodes.last().unwrap() < 1.0) {
                    return Err(ModelError::Hamiltonian("table nodes must cover [0, 1]".into()));
                }
                let d = values[0].nrows();
                if values.iter().any(|m| m.nrows() != d || m.ncols() != d) {
                    return Err(ModelError::Hamiltonian("table matrices must share one square shape".into()));
                }
                Ok(())
            }
            Self::Diagonal { profiles } if profiles.is_empty() => {
                Err(ModelError::Hamiltonian("diagonal H needs at least one profile".into()))
            }
            _ => Ok(()),
        }
    }

    /// Self-adjointness, coercivity floor and Lipschitz bound on the audit grid.
    pub fn audit(&self, points: usize) -> Result<HamiltonianAudit, ModelError> {
        self.check_shape()?;
        let mut out = HamiltonianAudit { min_eig: f64::INFINITY, max_eig: 0.0, lipschitz: 0.0 };
        for z in audit_grid(points) {
            let h = self.eval(z);
            let asym = (&h - h.transpose()).amax();
            if !(asym <= 1e-12 * (1.0 + h.amax())) {
                return Err(ModelError::HamiltonianAsymmetric { zeta: z, residual: asym });
            }
            let (lo, hi) = sym_part_bounds(&h)?;
            if !(lo > 0.0) {
                return Err(ModelError::NonCoercive { zeta: z, min_eig: lo });
            }
            out.min_eig = out.min_eig.min(lo);
            out.max_eig = out.max_eig.max(hi);
            out.lipschitz = out.lipschitz.max(spectral_norm(&self.derivative(z)));
        }
        if !out.lipschitz.is_finite() {
            return Err(ModelError::NotLipschitz);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianAudit {
    /// coercivity floor m₀
    pub min_eig: f64,
    pub max_eig: f64,
    /// sup ‖H'(ζ)‖ over the audit grid
    pub lipschitz: f64,
}

/// How the boundary ports are described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PortSpec {
    /// u = W_B (f; e), y = W_C (e; f)
    Boundary {
        #[serde(with = "crate::serde_mat")]
        w_b: Mat,
        #[serde(with = "crate::serde_mat")]
        w_c: Mat,
    },
    /// u = U t, y = Y t directly on the trace stack t.
    Trace {
        #[serde(with = "crate::serde_mat")]
        u: Mat,
        #[serde(with = "crate::serde_mat")]
        y: Mat,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub order: usize,
    pub dim: usize,
    /// P_0, .., P_N
    #[serde(with = "crate::serde_mat::vec")]
    pub p: Vec<Mat>,
    pub hamiltonian: HamiltonianDensity,
    pub ports: PortSpec,
}

/// A validated model. Immutable after [`build_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhsModel {
    pub order: usize,
    pub dim: usize,
    pub p: Vec<Mat>,
    pub hamiltonian: HamiltonianDensity,
    pub w_b: Mat,
    pub w_c: Mat,
    q: Mat,
    r_ext: Mat,
    u_trace: Mat,
    y_trace: Mat,
    audit: HamiltonianAudit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortVector {
    pub f: DVector<f64>,
    pub e: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
}

/// Q from P_1..P_N: P_1 for N = 1, [[P_1, P_2], [-P_2, 0]] for N = 2.
fn assemble_q(order: usize, p: &[Mat]) -> Mat {
    let d = p[0].nrows();
    let mut q = Mat::zeros(order * d, order * d);
    for i in 0..order {
        for j in 0..order - i {
            let k = i + j + 1;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            q.view_mut((i * d, j * d), (d, d)).copy_from(&(&p[k] * sign));
        }
    }
    q
}

fn assemble_r_ext(q: &Mat) -> Mat {
    let n = q.nrows();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut r = Mat::zeros(2 * n, 2 * n);
    r.view_mut((0, 0), (n, n)).copy_from(&(q * s));
    r.view_mut((0, n), (n, n)).copy_from(&(q * -s));
    r.view_mut((n, 0), (n, n)).fill_with_identity();
    r.view_mut((n, n), (n, n)).fill_with_identity();
    r.view_mut((n, 0), (n, 2 * n)).scale_mut(s);
    r
}

/// Permutation (f; e) ↦ (e; f).
pub fn swap_halves(n: usize) -> Mat {
    let mut s = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(i, n + i)] = 1.0;
        s[(n + i, i)] = 1.0;
    }
    s
}

fn check_square(name: &str, m: &Mat, d: usize) -> Result<(), ModelError> {
    if m.nrows() != d || m.ncols() != d {
        return Err(ModelError::Dimension(format!("{name} is {}x{}, expected {d}x{d}", m.nrows(), m.ncols())));
    }
    Ok(())
}

pub fn build_model(spec: &ModelSpec) -> Result<PhsModel, ModelError> {
    let (n, d) = (spec.order, spec.dim);
    if !(1..=2).contains(&n) {
        return Err(ModelError::UnsupportedOrder(n));
    }
    if d == 0 {
        return Err(ModelError::Dimension("state dimension must be positive".into()));
    }
    if spec.p.len() != n + 1 {
        return Err(ModelError::Dimension(format!("expected {} coefficient matrices, got {}", n + 1, spec.p.len())));
    }
    for (k, pk) in spec.p.iter().enumerate() {
        check_square(&format!("P_{k}"), pk, d)?;
        if pk.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::Dimension(format!("P_{k} has non-finite entries")));
        }
        if k >= 1 {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let residual = (pk.transpose() - pk * sign).amax();
            if residual > 1e-12 * (1.0 + pk.amax()) {
                return Err(ModelError::Symmetry { k, residual });
            }
        }
    }
    let (_, max_eig) = sym_part_bounds(&spec.p[0])?;
    if max_eig > 1e-12 * (1.0 + spec.p[0].amax()) {
        return Err(ModelError::Dissipation { max_eig });
    }
    let cond = condition_number(&spec.p[n]);
    if !(cond < 1e12) {
        return Err(ModelError::SingularLeading { cond });
    }
    if spec.hamiltonian.dim() != d {
        return Err(ModelError::Dimension(format!("H has dimension {}, expected {d}", spec.hamiltonian.dim())));
    }
    let audit = spec.hamiltonian.audit(AUDIT_POINTS)?;

    let q = assemble_q(n, &spec.p);
    let r_ext = assemble_r_ext(&q);
    let r_inv = inverse(&r_ext)?;
    let swap = swap_halves(n * d);
    let (nd, td) = (n * d, 2 * n * d);
    let (a, b) = match &spec.ports {
        PortSpec::Boundary { w_b, w_c } => (w_b, w_c),
        PortSpec::Trace { u, y } => (u, y),
    };
    for (name, m) in [("input matrix", a), ("output matrix", b)] {
        if m.nrows() != nd || m.ncols() != td {
            return Err(ModelError::Dimension(format!("{name} is {}x{}, expected {nd}x{td}", m.nrows(), m.ncols())));
        }
    }
    let (w_b, w_c, u_trace, y_trace) = match &spec.ports {
        PortSpec::Boundary { w_b, w_c } => (w_b.clone(), w_c.clone(), w_b * &r_ext, w_c * &swap * &r_ext),
        PortSpec::Trace { u, y } => (u * &r_inv, y * &r_inv * &swap, u.clone(), y.clone()),
    };
    // The port map acting on traces is [W_B; W_C·swap]·R_ext; that is what has to
    // be invertible for the boundary value problem to be well posed.
    let mut stack = Mat::zeros(td, td);
    stack.view_mut((0, 0), (nd, td)).copy_from(&u_trace);
    stack.view_mut((nd, 0), (nd, td)).copy_from(&y_trace);
    let cond = condition_number(&stack);
    if !(cond < 1e12) {
        return Err(ModelError::SingularPorts { cond });
    }
    Ok(PhsModel {
        order: n,
        dim: d,
        p: spec.p.clone(),
        hamiltonian: spec.hamiltonian.clone(),
        w_b,
        w_c,
        q,
        r_ext,
        u_trace,
        y_trace,
        audit,
    })
}

impl PhsModel {
    pub fn port_dim(&self) -> usize {
        self.order * self.dim
    }

    pub fn trace_dim(&self) -> usize {
        2 * self.order * self.dim
    }

    /// Rows mapping the trace stack to u.
    pub fn input_rows(&self) -> &Mat {
        &self.u_trace
    }

    /// Rows mapping the trace stack to y.
    pub fn output_rows(&self) -> &Mat {
        &self.y_trace
    }

    pub fn hamiltonian_audit(&self) -> &HamiltonianAudit {
        &self.audit
    }

    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            order: self.order,
            dim: self.dim,
            p: self.p.clone(),
            hamiltonian: self.hamiltonian.clone(),
            ports: PortSpec::Boundary { w_b: self.w_b.clone(), w_c: self.w_c.clone() },
        }
    }

    /// The same system with H replaced.
    pub fn with_hamiltonian(&self, h: HamiltonianDensity) -> Result<Self, ModelError> {
        let mut spec = self.to_spec();
        spec.hamiltonian = h;
        build_model(&spec)
    }

    pub fn extract_ports(&self, trace: &DVector<f64>) -> Result<PortVector, ModelError> {
        if trace.len() != self.trace_dim() {
            return Err(ModelError::Dimension(format!(
                "trace has length {}, expected {}",
                trace.len(),
                self.trace_dim()
            )));
        }
        let nd = self.port_dim();
        let fe = &self.r_ext * trace;
        let f = fe.rows(0, nd).into_owned();
        let e = fe.rows(nd, nd).into_owned();
        let mut ef = DVector::zeros(2 * nd);
        ef.rows_mut(0, nd).copy_from(&e);
        ef.rows_mut(nd, nd).copy_from(&f);
        Ok(PortVector { u: &self.w_b * &fe, y: &self.w_c * ef, f, e })
    }

    /// Monte-Carlo check of Re⟨𝔄x, x⟩_H ≤ Re⟨u, y⟩ on polynomial states.
    pub fn sample_passivity(&self, trials: usize, seed: u64) -> PassivityReport {
        sample_passivity(self, trials, seed)
    }
}

pub fn port_transform(model: &PhsModel) -> (Mat, Mat) {
    (model.q.clone(), model.r_ext.clone())
}

pub fn extract_ports(model: &PhsModel, trace: &DVector<f64>) -> Result<PortVector, ModelError> {
    model.extract_ports(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassivityReport {
    pub trials: usize,
    /// min over trials of (Re⟨u,y⟩ − Re⟨𝔄x,x⟩_H) / scale
    pub worst_margin: f64,
    /// max over trials of |Re⟨u,y⟩ − Re⟨𝔄x,x⟩_H| / scale
    pub max_abs_margin: f64,
    pub passed: bool,
}

const POLY_DEGREE: usize = 6;

/// Gauss-Legendre nodes and weights on [0, 1] (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = Mat::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (0.5 * (eig.eigenvalues[i] + 1.0), eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn poly_eval(c: &[DVector<f64>], k: usize, z: f64) -> DVector<f64> {
    // k-th derivative of Σ c_j ζ^j
    let mut out = DVector::zeros(c[0].len());
    for (j, cj) in c.iter().enumerate().skip(k) {
        let fall: f64 = (j + 1 - k..=j).map(|i| i as f64).product();
        out += cj * (fall * z.powi((j - k) as i32));
    }
    out
}

pub fn sample_passivity(model: &PhsModel, trials: usize, seed: u64) -> PassivityReport {
    let mut rng = rng::stream(seed, "passivity");
    let (nodes, weights) = gauss_legendre(16);
    let (n, d) = (model.order, model.dim);
    let mut worst = f64::INFINITY;
    let mut max_abs: f64 = 0.0;
    for _ in 0..trials {
        // z = Hx is the polynomial, so x = H⁻¹z is as smooth as H allows
        let c: Vec<DVector<f64>> =
            (0..=POLY_DEGREE).map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let mut lhs = 0.0;
        for (&z, &w) in nodes.iter().zip(&weights) {
            let zv = poly_eval(&c, 0, z);
            let mut ax = DVector::zeros(d);
            for k in 0..=n {
                ax += &model.p[k] * poly_eval(&c, k, z);
            }
            lhs += w * ax.dot(&zv);
        }
        let mut trace = DVector::zeros(2 * n * d);
        for (end, z) in [(0, 1.0), (1, 0.0)] {
            for k in 0..n {
                trace.rows_mut((end * n + k) * d, d).copy_from(&poly_eval(&c, k, z));
            }
        }
        let ports = model.extract_ports(&trace).expect("trace length matches model");
        let rhs = ports.u.dot(&ports.y);
        let scale = 1f64.max(lhs.abs()).max(rhs.abs());
        let margin = (rhs - lhs) / scale;
        worst = worst.min(margin);
        max_abs = max_abs.max(margin.abs());
    }
    if trials == 0 {
        worst = 0.0;
    }
    PassivityReport { trials, worst_margin: worst, max_abs_margin: max_abs, passed: worst >= -1e-8 }
}

/// Handy constructors for the systems used throughout the crate.
pub mod presets {
    use super::*;

    pub fn swap2() -> Mat {
        Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    /// Trace rows picking out single entries, with signs: `(index, sign)`.
    pub fn selector(width: usize, rows: &[(usize, f64)]) -> Mat {
        let mut m = Mat::zeros(rows.len(), width);
        for (i, &(j, s)) in rows.iter().enumerate() {
            m[(i, j)] = s;
        }
        m
    }

    // wave trace stack: (z1(1), z2(1), z1(0), z2(0))

    /// u = (-z2(0), z2(1)), y = (z1(0), z1(1)): force-controlled at both ends.
    pub fn wave_neumann_ports() -> PortSpec {
        PortSpec::Trace { u: selector(4, &[(3, -1.0), (1, 1.0)]), y: selector(4, &[(2, 1.0), (0, 1.0)]) }
    }

    /// u = (z1(0), z2(1)), y = (-z2(0), z1(1)): the left input prescribes the velocity.
    pub fn wave_dirichlet_left_ports() -> PortSpec {
        PortSpec::Trace { u: selector(4, &[(2, 1.0), (1, 1.0)]), y: selector(4, &[(3, -1.0), (0, 1.0)]) }
    }

    pub fn wave(h: HamiltonianDensity, ports: PortSpec) -> ModelSpec {
        ModelSpec { order: 1, dim: 2, p: vec![Mat::zeros(2, 2), swap2()], hamiltonian: h, ports }
    }

    /// ρ = EI = 1 wave with force ports at both ends.
    pub fn unit_wave() -> ModelSpec {
        wave(HamiltonianDensity::identity(2), wave_neumann_ports())
    }

    pub fn beam_p2() -> Mat {
        Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    // beam trace stack: (z1(1), z2(1), z1'(1), z2'(1), z1(0), z2(0), z1'(0), z2'(0))

    /// y = velocities and moments at both ends, u the matching shear forces and
    /// angular velocities, signed so that u·y is the boundary power.
    pub fn beam_ports() -> PortSpec {
        PortSpec::Trace {
            u: selector(8, &[(3, -1.0), (2, 1.0), (7, 1.0), (6, -1.0)]),
            y: selector(8, &[(0, 1.0), (1, 1.0), (4, 1.0), (5, 1.0)]),
        }
    }

    pub fn beam(h: HamiltonianDensity, p0: Mat) -> ModelSpec {
        ModelSpec { order: 2, dim: 2, p: vec![p0, Mat::zeros(2, 2), beam_p2()], hamiltonian: h, ports: beam_ports() }
    }

    /// H = diag(1/ρ, EI).
    pub fn beam_hamiltonian(rho: ScalarProfile, ei: ScalarProfile) -> HamiltonianDensity {
        HamiltonianDensity::Diagonal { profiles: vec![ScalarProfile::Reciprocal { of: Box::new(rho) }, ei] }
    }

    pub fn unit_beam() -> ModelSpec {
        beam(HamiltonianDensity::identity(2), Mat::zeros(2, 2))
    }

    /// Scalar transport x_t = (Hx)' with u = (z(1) − z(0))/√2, y = (z(1) + z(0))/√2.
    pub fn scalar_transport() -> ModelSpec {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        ModelSpec {
            order: 1,
            dim: 1,
            p: vec![Mat::zeros(1, 1), Mat::identity(1, 1)],
            hamiltonian: HamiltonianDensity::identity(1),
            ports: PortSpec::Trace {
                u: Mat::from_row_slice(1, 2, &[s, -s]),
                y: Mat::from_row_slice(1, 2, &[s, s]),
            },
        }
    }
}
