//! Transfer function G(λ) of the continuous system for constant H, from the
//! companion form of the stationary equation λx = 𝔄x.

use crate::densekit::{condition_number, hermitian_part, inverse, mat_exp, sym_part_bounds, to_complex, CMat, DenseLu, LinalgError};
use crate::model::PhsModel;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("transfer function needs Re λ > 0, got {0}")]
    OutsideHalfPlane(Complex64),
    #[error("H varies along the interval; use the discrete input/output maps instead")]
    VariableHamiltonian,
    #[error("boundary system singular at λ = {lambda}: the model is not impedance passive there")]
    NotPassiveAt { lambda: Complex64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferEvaluation {
    pub lambda: Complex64,
    pub g: CMat,
    /// smallest eigenvalue of the Hermitian part of G(λ)
    pub min_sym_eig: f64,
    /// condition number of the boundary system W_B·R_ext·[E_λ; I]
    pub boundary_system_condition: f64,
}

fn check_lambda(lambda: Complex64) -> Result<(), TransferError> {
    if !(lambda.re > 0.0) || !lambda.im.is_finite() {
        return Err(TransferError::OutsideHalfPlane(lambda));
    }
    Ok(())
}

/// B_λ with identity super-diagonal blocks and last block row
/// (P_N⁻¹(λH⁻¹ − P_0), −P_N⁻¹P_1, .., −P_N⁻¹P_{N−1}).
pub fn assemble_companion(model: &PhsModel, lambda: Complex64) -> Result<CMat, TransferError> {
    check_lambda(lambda)?;
    if !model.hamiltonian.is_constant() {
        return Err(TransferError::VariableHamiltonian);
    }
    let (n, d) = (model.order, model.dim);
    let h_inv = to_complex(&inverse(&model.hamiltonian.eval(0.0))?);
    let pn_inv = to_complex(&inverse(&model.p[n])?);
    let mut b = CMat::zeros(n * d, n * d);
    for k in 0..n - 1 {
        b.view_mut((k * d, (k + 1) * d), (d, d)).fill_with_identity();
    }
    let last = (n - 1) * d;
    let first = &pn_inv * (h_inv * lambda - to_complex(&model.p[0]));
    b.view_mut((last, 0), (d, d)).copy_from(&first);
    for k in 1..n {
        let blk = -(&pn_inv * to_complex(&model.p[k]));
        b.view_mut((last, k * d), (d, d)).copy_from(&blk);
    }
    Ok(b)
}

pub fn transfer_at(model: &PhsModel, lambda: Complex64) -> Result<TransferEvaluation, TransferError> {
    let b = assemble_companion(model, lambda)?;
    let nd = model.port_dim();
    let lift = match dichotomy_lift(&b) {
        Some(lift) => lift,
        None => {
            // trace stack = [E; I] ξ(0)
            let e = mat_exp(&b)?;
            let mut lift = CMat::zeros(2 * nd, nd);
            lift.view_mut((0, 0), (nd, nd)).copy_from(&e);
            lift.view_mut((nd, 0), (nd, nd)).fill_with_identity();
            lift
        }
    };
    let k = to_complex(model.input_rows()) * &lift;
    let out = to_complex(model.output_rows()) * &lift;
    let cond = condition_number(&k);
    // G = out·K⁻¹, solved as Kᵀ Gᵀ = outᵀ
    let g = DenseLu::new(&k.transpose())
        .and_then(|lt| lt.solve(&out.transpose()))
        .map_err(|_| TransferError::NotPassiveAt { lambda })?
        .transpose();
    let (min_sym_eig, _) = sym_part_bounds(&hermitian_part(&g))?;
    Ok(TransferEvaluation { lambda, g, min_sym_eig, boundary_system_condition: cond })
}

/// Trace stack [ξ(1); ξ(0)] as a bounded linear image of modal coordinates:
/// modes with Re μ > 0 are anchored at ζ = 1, the rest at ζ = 0, so no
/// entry exceeds the eigenvector scale. None when B is not safely diagonalizable.
fn dichotomy_lift(b: &CMat) -> Option<CMat> {
    let n = b.nrows();
    let (q, t) = b.clone().schur().unpack();
    let scale = t.norm().max(1.0);
    let mut vt = CMat::zeros(n, n);
    for k in 0..n {
        let mu = t[(k, k)];
        vt[(k, k)] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let gap = t[(j, j)] - mu;
            if gap.norm() < 1e-8 * scale {
                return None;
            }
            let mut s = Complex64::new(0.0, 0.0);
            for l in j + 1..=k {
                s += t[(j, l)] * vt[(l, k)];
            }
            vt[(j, k)] = -s / gap;
        }
    }
    let v = q * vt;
    if !(condition_number(&v) < 1e8) {
        return None;
    }
    let mut lift = CMat::zeros(2 * n, n);
    for k in 0..n {
        let mu = t[(k, k)];
        let (right, left) = if mu.re > 0.0 { (Complex64::new(1.0, 0.0), (-mu).exp()) } else { (mu.exp(), Complex64::new(1.0, 0.0)) };
        for i in 0..n {
            lift[(i, k)] = v[(i, k)] * right;
            lift[(n + i, k)] = v[(i, k)] * left;
        }
    }
    Some(lift)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityPoint {
    pub re: f64,
    pub im: f64,
    pub min_sym_eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityScan {
    pub points: Vec<PositivityPoint>,
    pub min_sym_eig: Option<f64>,
    /// indices of grid points with min_sym_eig ≤ 0
    pub flagged: Vec<usize>,
}

/// Seeded points in the right half-plane: Re λ log-uniform on [0.01, 10],
/// Im λ uniform on [−20, 20].
pub fn sample_right_half_plane(n: usize, seed: u64) -> Vec<Complex64> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, "transfer-grid");
    (0..n).map(|_| Complex64::new(10f64.powf(rng.gen_range(-2.0..1.0)), rng.gen_range(-20.0..20.0))).collect()
}

pub fn scan_positivity(model: &PhsModel, grid: &[Complex64]) -> Result<PositivityScan, TransferError> {
    let mut points = Vec::with_capacity(grid.len());
    let mut flagged = Vec::new();
    for (i, &lambda) in grid.iter().enumerate() {
        let ev = transfer_at(model, lambda)?;
        if !(ev.min_sym_eig > 0.0) {
            flagged.push(i);
        }
        points.push(PositivityPoint { re: lambda.re, im: lambda.im, min_sym_eig: ev.min_sym_eig });
    }
    let min_sym_eig = points.iter().map(|p| p.min_sym_eig).reduce(f64::min);
    Ok(PositivityScan { points, min_sym_eig, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, presets};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn closed_form(l: Complex64) -> [Complex64; 2] {
        [l.cosh() / l.sinh(), 1.0 / l.sinh()]
    }

    #[test]
    fn wave_companion_is_lambda_p1() {
        let m = build_model(&presets::unit_wave()).unwrap();
        let b = assemble_companion(&m, c(2.0, 1.0)).unwrap();
        assert!((b - to_complex(&presets::swap2()) * c(2.0, 1.0)).norm() < 1e-15);
        assert!(matches!(assemble_companion(&m, c(0.0, 0.0)), Err(TransferError::OutsideHalfPlane(_))));
    }

    #[test]
    fn beam_companion_pattern() {
        let m = build_model(&presets::unit_beam()).unwrap();
        let b = assemble_companion(&m, c(3.0, 0.0)).unwrap();
        let p2inv = to_complex(&inverse(&presets::beam_p2()).unwrap());
        assert!((b.view((0, 2), (2, 2)).into_owned() - CMat::identity(2, 2)).norm() == 0.0);
        assert!((b.view((2, 0), (2, 2)).into_owned() - p2inv * c(3.0, 0.0)).norm() < 1e-15);
        assert!(b.view((0, 0), (2, 2)).norm() == 0.0 && b.view((2, 2), (2, 2)).norm() == 0.0);
    }

    #[test]
    fn unit_wave_matches_closed_form() {
        let m = build_model(&presets::unit_wave()).unwrap();
        for l in [c(1.0, 0.0), c(2.0, 0.0), c(0.5, 3.0), c(10.0, 0.0)] {
            let ev = transfer_at(&m, l).unwrap();
            let [d, o] = closed_form(l);
            let exact = CMat::from_row_slice(2, 2, &[d, o, o, d]);
            assert!((&ev.g - exact).norm() < 1e-10, "λ = {l}");
        }
        let ev = transfer_at(&m, c(1.0, 0.0)).unwrap();
        assert!((ev.g[(0, 0)].re - 1.3130352854993313).abs() < 1e-12);
        assert!((ev.g[(0, 1)].re - 0.8509181282393216).abs() < 1e-12);
        assert!((ev.min_sym_eig - 0.46211715726000974).abs() < 1e-10);
        assert!(ev.g.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn large_lambda_tends_to_identity() {
        let m = build_model(&presets::unit_wave()).unwrap();
        let ev = transfer_at(&m, c(50.0, 0.0)).unwrap();
        assert!((ev.g - CMat::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn scan_flags_nothing_for_passive_models() {
        let grid = [c(1.0, 0.0), c(2.0, 1.0), c(10.0, 0.0), c(0.1, 5.0)];
        for spec in [presets::unit_wave(), presets::unit_beam()] {
            let m = build_model(&spec).unwrap();
            let s = scan_positivity(&m, &grid).unwrap();
            assert!(s.flagged.is_empty() && s.min_sym_eig.unwrap() > 0.0);
        }
        let m = build_model(&presets::unit_wave()).unwrap();
        let empty = scan_positivity(&m, &[]).unwrap();
        assert!(empty.points.is_empty() && empty.min_sym_eig.is_none() && empty.flagged.is_empty());
    }

    #[test]
    fn variable_h_is_routed_elsewhere() {
        use crate::model::{HamiltonianDensity, ScalarProfile};
        let h = HamiltonianDensity::Diagonal {
            profiles: vec![ScalarProfile::Exp { scale: 1.0, rate: 1.0 }, ScalarProfile::Constant { value: 1.0 }],
        };
        let m = build_model(&presets::wave(h, presets::wave_neumann_ports())).unwrap();
        assert_eq!(transfer_at(&m, c(1.0, 0.0)), Err(TransferError::VariableHamiltonian));
    }
}
