//! Summation-by-parts discretization on a uniform grid of [0, 1].
//!
//! First-order systems use a dual pair of upwind-biased operators (D₊, D₋)
//! that satisfy
//!
//! ```text
//! ⟨D₊a, b⟩_w + ⟨a, D₋b⟩_w = a_n b_n − a_0 b_0
//! ```
//!
//! in the norm w = (1/4, 5/4, 1, …, 1, 5/4, 1/4)·Δζ. The generator is
//! I⊗P₀ + D₊⊗M + D₋⊗Mᵀ with M the strict upper triangle of P₁ plus half its
//! diagonal, so W·L + Lᵀ·W = B⊗P₁ holds exactly. A centered pair on the
//! trapezoid norm would have the same identity but carries an undamped
//! odd-even mode that no boundary feedback reaches.
//!
//! Second-order systems use the trapezoid norm, central D₁ for P₁ and a
//! narrow second derivative D₂ = W⁻¹(−A + B·S): A is the Neumann stiffness
//! matrix and S holds one-sided second-order derivative rows at the ends,
//! which are also the derivative traces fed to the ports.
//!
//! Boundary conditions are imposed weakly:
//!
//! ```text
//! W ẋ = (W L − ℭᵀ𝔅) z + ℭᵀ u,   y = ℭ z,   z = Hx
//! ```
//!
//! where 𝔅 and ℭ are the input and output rows applied to the discrete trace
//! stack. With z·W·L·z = 𝔅z·ℭz + Σ w zᵀP₀z this gives dE/dt = u·y + Σ w zᵀP₀z.

use crate::densekit::{null_space, sym_part_bounds, DenseLu, LinalgError, Mat};
use crate::model::{HamiltonianDensity, ModelError, PhsModel};
use crate::rng;
use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscreteError {
    #[error("grid with {n_cells} cells is too coarse; need at least {min}")]
    TooCoarse { n_cells: usize, min: usize },
    #[error("summation-by-parts identity violated (relative residual {residual:e})")]
    Sbp { residual: f64 },
    #[error("resolvent factorization failed for tau = {tau}: {source}")]
    Factorization { tau: f64, source: LinalgError },
    #[error("Re G_h is not positive definite for tau = {tau} (min eigenvalue {min_sym_eig:e})")]
    NotPositive { tau: f64, min_sym_eig: f64 },
    #[error("resolvent scale must be positive, got {0}")]
    Tau(f64),
    #[error("state has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("projection onto compatible states failed: {0}")]
    Projection(LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub n_cells: usize,
    pub h: f64,
    pub nodes: Vec<f64>,
    /// quadrature weights of the discrete norm; they sum to one
    pub weights: Vec<f64>,
}

impl Grid {
    fn with_ends(n_cells: usize, ends: &[f64]) -> Self {
        let h = 1.0 / n_cells as f64;
        let m = n_cells + 1;
        let mut weights = vec![h; m];
        for (k, &e) in ends.iter().enumerate() {
            weights[k] = e * h;
            weights[m - 1 - k] = e * h;
        }
        Grid { n_cells, h, nodes: (0..m).map(|j| j as f64 * h).collect(), weights }
    }

    /// (½, 1, …, 1, ½)·Δζ
    pub fn trapezoid(n_cells: usize) -> Self {
        Self::with_ends(n_cells, &[0.5])
    }

    /// (¼, 5/4, 1, …, 1, 5/4, ¼)·Δζ
    pub fn upwind(n_cells: usize) -> Self {
        Self::with_ends(n_cells, &[0.25, 1.25])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// The upwind dual pair (D₊, D₋) on `n_cells` cells, with its grid.
pub fn upwind_pair(n_cells: usize) -> (Mat, Mat, Grid) {
    let n = n_cells;
    let m = n + 1;
    let grid = Grid::upwind(n);
    let mut q = Mat::zeros(m, m);
    for i in 0..m {
        for (off, c) in [(0, -1.5), (1, 2.0), (2, -0.5)] {
            if i + off <= n {
                q[(i, i + off)] = c;
            }
        }
    }
    let mut set = |i: usize, j0: usize, row: &[f64]| {
        for (k, &c) in row.iter().enumerate() {
            q[(i, j0 + k)] = c;
        }
    };
    set(0, 0, &[-0.75, 1.25, -0.5]);
    set(1, 0, &[-0.25, -1.25, 2.0, -0.5]);
    set(n - 1, n - 2, &[0.0, -1.25, 1.25]);
    set(n, n - 2, &[0.0, -0.25, 0.25]);
    let mut bq = -q.transpose();
    bq[(0, 0)] -= 1.0;
    bq[(n, n)] += 1.0;
    for i in 0..m {
        let w = grid.weights[i];
        q.row_mut(i).unscale_mut(w);
        bq.row_mut(i).unscale_mut(w);
    }
    (q, bq, grid)
}

/// Central D₁, narrow D₂ and the boundary derivative rows S on the trapezoid grid.
pub fn second_order_ops(n_cells: usize) -> (Mat, Mat, Mat, Grid) {
    let n = n_cells;
    let m = n + 1;
    let grid = Grid::trapezoid(n);
    let h = grid.h;
    let mut d1 = Mat::zeros(m, m);
    for j in 1..n {
        d1[(j, j + 1)] = 0.5 / h;
        d1[(j, j - 1)] = -0.5 / h;
    }
    d1[(0, 0)] = -1.0 / h;
    d1[(0, 1)] = 1.0 / h;
    d1[(n, n - 1)] = -1.0 / h;
    d1[(n, n)] = 1.0 / h;

    let mut s = Mat::zeros(m, m);
    for (k, c) in [-1.5, 2.0, -0.5].iter().enumerate() {
        s[(0, k)] = c / h;
        s[(n, n - k)] = -c / h;
    }
    let mut d2 = Mat::zeros(m, m);
    for j in 0..m {
        let diag = if j == 0 || j == n { 1.0 } else { 2.0 };
        d2[(j, j)] = -diag / h;
        if j > 0 {
            d2[(j, j - 1)] = 1.0 / h;
        }
        if j < n {
            d2[(j, j + 1)] = 1.0 / h;
        }
    }
    for k in 0..m {
        d2[(n, k)] += s[(n, k)];
        d2[(0, k)] -= s[(0, k)];
    }
    for j in 0..m {
        d2.row_mut(j).unscale_mut(grid.weights[j]);
    }
    (d1, d2, s, grid)
}

#[derive(Debug, Clone, PartialEq)]
enum Operators {
    First { dplus: Mat, dminus: Mat },
    Second { d1: Mat, d2: Mat, s: Mat },
}

/// A discretized model. Immutable after [`build_discrete`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub model: PhsModel,
    pub grid: Grid,
    ops: Operators,
    h_nodes: Vec<Mat>,
    hbig: Mat,
    wdiag: DVector<f64>,
    l: Mat,
    trace: Mat,
    bport: Mat,
    cport: Mat,
    a_sat: Mat,
    b_in: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBalance {
    /// ⟨A_h x, x⟩_h with the uncorrected generator
    pub lhs: f64,
    /// u·y from the discrete ports
    pub rhs: f64,
    /// Σ w zᵀ P₀ z, the interior dissipation (≤ 0)
    pub internal: f64,
}

fn block_diag(blocks: &[Mat]) -> Mat {
    let d = blocks[0].nrows();
    let mut out = Mat::zeros(d * blocks.len(), d * blocks.len());
    for (j, b) in blocks.iter().enumerate() {
        out.view_mut((j * d, j * d), (d, d)).copy_from(b);
    }
    out
}

pub fn build_discrete(model: &PhsModel, n_cells: usize) -> Result<DiscreteSystem, DiscreteError> {
    let min = 8 * model.order;
    if n_cells < min {
        return Err(DiscreteError::TooCoarse { n_cells, min });
    }
    let d = model.dim;
    let eye_d = Mat::identity(d, d);
    let (ops, grid) = if model.order == 1 {
        let (dplus, dminus, grid) = upwind_pair(n_cells);
        (Operators::First { dplus, dminus }, grid)
    } else {
        let (d1, d2, s, grid) = second_order_ops(n_cells);
        (Operators::Second { d1, d2, s }, grid)
    };
    let m = grid.len();
    let eye_m = Mat::identity(m, m);
    let p = &model.p;
    let mut l = eye_m.kronecker(&p[0]);
    let unit_row = |j: usize| {
        let mut r = Mat::zeros(1, m);
        r[(0, j)] = 1.0;
        r
    };
    let mut trace_rows: Vec<Mat> = Vec::new();
    match &ops {
        Operators::First { dplus, dminus } => {
            let half = p[1].upper_triangle() - Mat::from_diagonal(&p[1].diagonal()) * 0.5;
            l += dplus.kronecker(&half) + dminus.kronecker(&half.transpose());
            trace_rows.push(unit_row(n_cells).kronecker(&eye_d));
            trace_rows.push(unit_row(0).kronecker(&eye_d));
        }
        Operators::Second { d1, d2, s } => {
            l += d1.kronecker(&p[1]) + d2.kronecker(&p[2]);
            for j in [n_cells, 0] {
                trace_rows.push(unit_row(j).kronecker(&eye_d));
                trace_rows.push(s.rows(j, 1).into_owned().kronecker(&eye_d));
            }
        }
    }
    let size = m * d;
    let mut trace = Mat::zeros(trace_rows.len() * d, size);
    for (k, r) in trace_rows.iter().enumerate() {
        trace.view_mut((k * d, 0), (d, size)).copy_from(r);
    }
    let bport = model.input_rows() * &trace;
    let cport = model.output_rows() * &trace;
    let h_nodes: Vec<Mat> = grid.nodes.iter().map(|&z| model.hamiltonian.eval(z)).collect();
    let hbig = block_diag(&h_nodes);
    let wdiag = DVector::from_iterator(size, grid.weights.iter().flat_map(|&w| std::iter::repeat(w).take(d)));
    let mut b_in = cport.transpose();
    let mut corr = cport.transpose() * &bport;
    for i in 0..size {
        b_in.row_mut(i).unscale_mut(wdiag[i]);
        corr.row_mut(i).unscale_mut(wdiag[i]);
    }
    let a_sat = (&l - corr) * &hbig;
    let sys = DiscreteSystem { model: model.clone(), grid, ops, h_nodes, hbig, wdiag, l, trace, bport, cport, a_sat, b_in };
    let residual = sys.sbp_residual(8, 0x5eed);
    if !(residual <= 1e-13) {
        return Err(DiscreteError::Sbp { residual });
    }
    Ok(sys)
}

impl DiscreteSystem {
    pub fn dim(&self) -> usize {
        self.model.dim
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// Length of a nodal state vector: (n_cells + 1)·d, node-major.
    pub fn size(&self) -> usize {
        self.grid.len() * self.model.dim
    }

    pub fn port_dim(&self) -> usize {
        self.model.port_dim()
    }

    pub fn h_nodes(&self) -> &[Mat] {
        &self.h_nodes
    }

    pub fn hamiltonian_matrix(&self) -> &Mat {
        &self.hbig
    }

    /// Norm weights repeated per state component.
    pub fn weights(&self) -> &DVector<f64> {
        &self.wdiag
    }

    /// Σ_k P_k D^k acting on z = Hx, without boundary closure.
    pub fn generator(&self) -> &Mat {
        &self.l
    }

    /// Closed-loop generator with the port input set to zero, acting on x.
    pub fn closed_generator(&self) -> &Mat {
        &self.a_sat
    }

    /// ẋ = A x + B u
    pub fn input_matrix(&self) -> &Mat {
        &self.b_in
    }

    /// z ↦ discrete trace stack
    pub fn trace_matrix(&self) -> &Mat {
        &self.trace
    }

    /// z ↦ u rows (𝔅)
    pub fn input_rows(&self) -> &Mat {
        &self.bport
    }

    /// z ↦ y rows (ℭ)
    pub fn output_rows(&self) -> &Mat {
        &self.cport
    }

    pub fn check_len(&self, x: &DVector<f64>) -> Result<(), DiscreteError> {
        if x.len() != self.size() {
            return Err(DiscreteError::Length { expected: self.size(), got: x.len() });
        }
        Ok(())
    }

    pub fn co_energy(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hbig * x
    }

    /// ⟨a, b⟩_h = Σ w aᵀ H b
    pub fn inner_h(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let hb = &self.hbig * b;
        a.iter().zip(hb.iter()).zip(self.wdiag.iter()).map(|((a, b), w)| a * b * w).sum()
    }

    pub fn norm_h(&self, x: &DVector<f64>) -> f64 {
        self.inner_h(x, x).max(0.0).sqrt()
    }

    /// E = ½‖x‖²_h
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.inner_h(x, x)
    }

    /// Σ w aᵀ b (no H)
    pub fn inner_w(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(self.wdiag.iter()).map(|((a, b), w)| a * b * w).sum()
    }

    /// Σ w zᵀ P₀ z
    pub fn internal_power(&self, z: &DVector<f64>) -> f64 {
        let d = self.dim();
        (0..self.nodes())
            .map(|j| {
                let zj = z.rows(j * d, d);
                self.grid.weights[j] * zj.dot(&(&self.model.p[0] * zj))
            })
            .sum()
    }

    /// Nodal samples of a profile ζ ↦ ℝᵈ.
    pub fn sample(&self, f: impl Fn(f64) -> DVector<f64>) -> DVector<f64> {
        let d = self.dim();
        let mut x = DVector::zeros(self.size());
        for (j, &z) in self.grid.nodes.iter().enumerate() {
            x.rows_mut(j * d, d).copy_from(&f(z));
        }
        x
    }

    pub fn ports(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let z = self.co_energy(x);
        (&self.bport * &z, &self.cport * &z)
    }

    pub fn discrete_power_balance(&self, x: &DVector<f64>) -> PowerBalance {
        let z = self.co_energy(x);
        let lz = &self.l * &z;
        let lhs = self.inner_w(&lz, &z);
        let rhs = (&self.bport * &z).dot(&(&self.cport * &z));
        PowerBalance { lhs, rhs, internal: self.internal_power(&z) }
    }

    /// Largest relative residual of the summation-by-parts identities on random vectors.
    pub fn sbp_residual(&self, trials: usize, seed: u64) -> f64 {
        let mut rng = rng::stream(seed, "sbp");
        let m = self.nodes();
        let w = &self.grid.weights;
        let n = m - 1;
        let dot_w = |a: &DVector<f64>, b: &DVector<f64>| -> (f64, f64) {
            let s: f64 = (0..m).map(|i| w[i] * a[i] * b[i]).sum();
            let mag: f64 = (0..m).map(|i| (w[i] * a[i] * b[i]).abs()).sum();
            (s, mag)
        };
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let a = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let (res, mag) = match &self.ops {
                Operators::First { dplus, dminus } => {
                    let (s1, m1) = dot_w(&(dplus * &a), &b);
                    let (s2, m2) = dot_w(&a, &(dminus * &b));
                    let bd = a[n] * b[n] - a[0] * b[0];
                    (s1 + s2 - bd, m1 + m2 + bd.abs())
                }
                Operators::Second { d1, d2, s } => {
                    let (s1, m1) = dot_w(&(d1 * &a), &b);
                    let (s2, m2) = dot_w(&a, &(d1 * &b));
                    let bd = a[n] * b[n] - a[0] * b[0];
                    let r1 = (s1 + s2 - bd) / (m1 + m2 + bd.abs()).max(1.0);
                    let (sa, sb) = (s * &a, s * &b);
                    let (t1, n1) = dot_w(&b, &(d2 * &a));
                    let (t2, n2) = dot_w(&a, &(d2 * &b));
                    let green = b[n] * sa[n] - b[0] * sa[0] - a[n] * sb[n] + a[0] * sb[0];
                    let r2 = (t1 - t2 - green) / (n1 + n2 + green.abs()).max(1.0);
                    worst = worst.max(r1.abs());
                    (r2, 1.0)
                }
            };
            worst = worst.max(res.abs() / mag.max(1.0));
        }
        worst
    }

    /// Functionals ℓ (columns) with ℓᵀA = 0 and ℓᵀB = 0, i.e. conserved for
    /// every input and so out of reach of any feedback. The continuous
    /// systems have none. On the grid one appears when both ends impose
    /// their input on the same component, e.g. the wave with force inputs at
    /// both ends: a boundary-layer mode with zero outputs that never moves.
    pub fn uncontrollable_invariants(&self) -> Mat {
        let mut stacked = Mat::zeros(self.a_sat.ncols() + self.b_in.ncols(), self.size());
        stacked.rows_mut(0, self.a_sat.ncols()).copy_from(&self.a_sat.transpose());
        stacked.rows_mut(self.a_sat.ncols(), self.b_in.ncols()).copy_from(&self.b_in.transpose());
        null_space(&stacked, 1e-10)
    }

    /// Removes the uncontrollable invariant components of x with the smallest
    /// change in the energy norm; identity when there are none.
    pub fn project_compatible(&self, x: &DVector<f64>) -> Result<DVector<f64>, DiscreteError> {
        self.check_len(x)?;
        let l = self.uncontrollable_invariants();
        if l.ncols() == 0 {
            return Ok(x.clone());
        }
        // energy-norm gradient of ℓᵀx is (WH)⁻¹ℓ
        let mut metric = self.hbig.clone();
        for (i, mut row) in metric.row_iter_mut().enumerate() {
            row *= self.wdiag[i];
        }
        let r = DenseLu::new(&metric).and_then(|lu| lu.solve(&l)).map_err(DiscreteError::Projection)?;
        let gram = l.transpose() * &r;
        let coef = DenseLu::new(&gram).and_then(|lu| lu.solve(&Mat::from_column_slice(l.ncols(), 1, (l.transpose() * x).as_slice()))).map_err(DiscreteError::Projection)?;
        Ok(x - r * coef.column(0))
    }

    /// The same discretization with H replaced by the identity.
    pub fn with_identity_hamiltonian(&self) -> Result<DiscreteSystem, DiscreteError> {
        let model = self.model.with_hamiltonian(HamiltonianDensity::identity(self.dim()))?;
        build_discrete(&model, self.grid.n_cells)
    }

    pub fn io_maps(&self, tau: f64) -> Result<DiscreteIoMaps, DiscreteError> {
        discrete_io_maps(self, tau)
    }
}

/// x = Φ f + Ψ u and y = F f + G u for the solution of (I − τA_h)x = f with port input u.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteIoMaps {
    pub tau: f64,
    pub phi: Mat,
    pub psi: Mat,
    pub f: Mat,
    pub g: Mat,
    pub g_inv: Mat,
    /// smallest eigenvalue of the symmetric part of G_h
    pub min_sym_eig: f64,
}

impl DiscreteIoMaps {
    pub fn apply(&self, f: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.phi * f + &self.psi * u, &self.f * f + &self.g * u)
    }
}

pub fn discrete_io_maps(sys: &DiscreteSystem, tau: f64) -> Result<DiscreteIoMaps, DiscreteError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(DiscreteError::Tau(tau));
    }
    let n = sys.size();
    let resolvent = Mat::identity(n, n) - sys.closed_generator() * tau;
    let phi = DenseLu::new(&resolvent)
        .and_then(|lu| lu.inverse())
        .map_err(|source| DiscreteError::Factorization { tau, source })?;
    let psi = &phi * sys.input_matrix() * tau;
    let out = sys.output_rows() * sys.hamiltonian_matrix();
    let f = &out * &phi;
    let g = &out * &psi;
    let (min_sym_eig, _) = sym_part_bounds(&g).map_err(|source| DiscreteError::Factorization { tau, source })?;
    if !(min_sym_eig > 0.0) {
        return Err(DiscreteError::NotPositive { tau, min_sym_eig });
    }
    let g_inv = DenseLu::new(&g)
        .and_then(|lu| lu.inverse())
        .map_err(|source| DiscreteError::Factorization { tau, source })?;
    Ok(DiscreteIoMaps { tau, phi, psi, f, g, g_inv, min_sym_eig })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, presets, ScalarProfile};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn wave(n: usize) -> DiscreteSystem {
        build_discrete(&build_model(&presets::unit_wave()).unwrap(), n).unwrap()
    }

    fn beam(n: usize) -> DiscreteSystem {
        build_discrete(&build_model(&presets::unit_beam()).unwrap(), n).unwrap()
    }

    fn graded_wave(n: usize) -> DiscreteSystem {
        let h = presets::beam_hamiltonian(ScalarProfile::Exp { scale: 1.0, rate: 0.5 }, ScalarProfile::Affine { a: 1.0, b: 0.5 });
        build_discrete(&build_model(&presets::wave(h, presets::wave_dirichlet_left_ports())).unwrap(), n).unwrap()
    }

    #[test]
    fn invariants_only_for_same_component_inputs() {
        let w = wave(32);
        let l = w.uncontrollable_invariants();
        assert_eq!(l.ncols(), 1);
        assert!((l.transpose() * &w.a_sat).norm() < 1e-9);
        assert!((l.transpose() * &w.b_in).norm() < 1e-9);
        let mut r = rand::thread_rng();
        let x = DVector::from_fn(w.size(), |_, _| r.gen_range(-1.0..1.0));
        let p = w.project_compatible(&x).unwrap();
        assert!((l.transpose() * &p).norm() < 1e-10);
        // idempotent
        assert!((w.project_compatible(&p).unwrap() - &p).norm() < 1e-10);
        assert_eq!(beam(16).uncontrollable_invariants().ncols(), 0);
    }

    #[test]
    fn too_coarse_rejected() {
        let m = build_model(&presets::unit_wave()).unwrap();
        assert_eq!(build_discrete(&m, 4), Err(DiscreteError::TooCoarse { n_cells: 4, min: 8 }));
        let b = build_model(&presets::unit_beam()).unwrap();
        assert!(build_discrete(&b, 12).is_err());
    }

    #[test]
    fn weights_sum_to_one() {
        for g in [Grid::trapezoid(37), Grid::upwind(37)] {
            assert_relative_eq!(g.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sbp_identity_at_100_cells() {
        assert!(wave(100).sbp_residual(20, 1) <= 1e-13);
        assert!(beam(100).sbp_residual(20, 1) <= 1e-13);
    }

    #[test]
    fn upwind_pair_is_exact_on_linears() {
        let (dp, dm, g) = upwind_pair(16);
        let x = DVector::from_vec(g.nodes.clone());
        let one = DVector::from_element(17, 1.0);
        assert!((&dp * &x - &one).amax() < 1e-12 && (&dm * &x - &one).amax() < 1e-12);
        assert!((&dp * &one).amax() < 1e-12 && (&dm * &one).amax() < 1e-12);
    }

    #[test]
    fn second_derivative_exact_on_quadratics() {
        let (d1, d2, s, g) = second_order_ops(16);
        let x2 = DVector::from_iterator(17, g.nodes.iter().map(|z| z * z));
        let x = DVector::from_vec(g.nodes.clone());
        let two = d2 * &x2;
        assert!((1..16).all(|j| (two[j] - 2.0).abs() < 1e-9));
        let sx = &s * &x2;
        assert_relative_eq!(sx[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(sx[16], 2.0, epsilon = 1e-12);
        assert!((d1 * x).iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn constant_state_has_zero_interior_derivative() {
        let sys = wave(32);
        let x = sys.sample(|_| nalgebra::dvector![1.0, -2.0]);
        let ax = sys.generator() * sys.co_energy(&x);
        let d = 2;
        for j in 2..31 {
            assert!(ax.rows(j * d, d).amax() < 1e-12);
        }
    }

    #[test]
    fn power_balance_with_p0() {
        let mut spec = presets::unit_beam();
        spec.p[0] = Mat::identity(2, 2) * -1.0;
        let sys = build_discrete(&build_model(&spec).unwrap(), 40).unwrap();
        let x = sys.sample(|z| nalgebra::dvector![z.sin(), (3.0 * z).cos()]);
        let pb = sys.discrete_power_balance(&x);
        let norm2: f64 = sys.inner_w(&x, &x);
        assert_relative_eq!(pb.internal, -norm2, epsilon = 1e-12);
        assert!(pb.lhs <= pb.rhs - norm2 + 1e-10);
        assert_relative_eq!(pb.lhs, pb.rhs + pb.internal, epsilon = 1e-10);
    }

    #[test]
    fn io_maps_vanish_on_zero_data() {
        let maps = wave(32).io_maps(0.5).unwrap();
        let (x, y) = maps.apply(&DVector::zeros(66), &DVector::zeros(2));
        assert_eq!(x.amax(), 0.0);
        assert_eq!(y.amax(), 0.0);
        assert!(maps.min_sym_eig > 0.0);
        assert!(wave(32).io_maps(0.0).is_err());
    }

    #[test]
    fn io_maps_solve_the_resolvent_equation() {
        let sys = graded_wave(24);
        let maps = sys.io_maps(0.3).unwrap();
        let f = sys.sample(|z| nalgebra::dvector![z.exp(), 1.0 - z]);
        let u = nalgebra::dvector![0.4, -1.1];
        let (x, y) = maps.apply(&f, &u);
        let res = &x - sys.closed_generator() * &x * 0.3 - sys.input_matrix() * &u * 0.3 - &f;
        assert!(res.amax() < 1e-11);
        assert_relative_eq!(y, sys.output_rows() * sys.co_energy(&x), epsilon = 1e-11);
    }

    proptest! {
        #[test]
        fn discrete_power_balance_is_exact(seed in any::<u64>(), graded in any::<bool>()) {
            for sys in [if graded { graded_wave(20) } else { wave(20) }, beam(20)] {
                let mut rng = rng::stream(seed, "pb");
                let x = DVector::from_fn(sys.size(), |_, _| rng.gen_range(-1.0..1.0));
                let pb = sys.discrete_power_balance(&x);
                let scale = sys.norm_h(&x).powi(2) * sys.grid.n_cells as f64;
                prop_assert!((pb.lhs - pb.rhs).abs() <= 1e-12 * scale.max(1.0));
            }
        }

        #[test]
        fn io_maps_superpose(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let sys = beam(20);
            let maps = sys.io_maps(0.2).unwrap();
            let f1 = sys.sample(|z| nalgebra::dvector![z, z * z]);
            let f2 = sys.sample(|z| nalgebra::dvector![1.0, -z]);
            let u1 = DVector::from_vec(vec![1.0, 0.0, -1.0, 2.0]);
            let u2 = DVector::from_vec(vec![0.0, 0.5, 0.5, 0.0]);
            let (x, y) = maps.apply(&(&f1 * a + &f2 * b), &(&u1 * a + &u2 * b));
            let (x1, y1) = maps.apply(&f1, &u1);
            let (x2, y2) = maps.apply(&f2, &u2);
            let tol = 1e-11 * (1.0 + a.abs() + b.abs());
            prop_assert!((x - (x1 * a + x2 * b)).amax() <= tol);
            prop_assert!((y - (y1 * a + y2 * b)).amax() <= tol);
        }
    }
}
