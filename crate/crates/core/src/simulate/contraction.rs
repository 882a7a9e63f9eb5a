//! Resolvent of the H-weighted system through the H = I resolvent.
//!
//! With v = Px the weighted problem x − τA_I(Px) = f becomes
//! x = P⁻¹R_I(f + (P − I)x), a contraction with constant ‖P⁻¹‖·‖P − I‖.
//! When P is far from the identity it is split as P = Qⁿ with Q = P^{1/n}
//! node by node and the iteration is nested over the n factors.

use super::{SimError, SolverSettings, StaticInclusion};
use crate::densekit::{spectral_norm, sym_apply, Mat};
use crate::discrete::{DiscreteIoMaps, DiscreteSystem};
use crate::monotone::MonotoneMap;
use nalgebra::DVector;
use serde::Serialize;

const SPLIT_THRESHOLD: f64 = 0.5;
const MAX_STAGES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionSolve {
    pub x: DVector<f64>,
    pub report: ContractionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    /// number of factors Q in P = Qⁿ
    pub stages: usize,
    /// sup ‖Q⁻¹‖ · sup ‖Q − I‖ over the nodes
    pub rho: f64,
    /// outer fixed-point iterations
    pub iterations: usize,
    /// base resolvent evaluations over all stages
    pub base_solves: usize,
}

struct Base<'a> {
    maps: DiscreteIoMaps,
    inc: StaticInclusion,
    phi: &'a MonotoneMap,
    settings: SolverSettings,
    solves: usize,
}

impl Base<'_> {
    fn resolve(&mut self, g: &DVector<f64>) -> Result<DVector<f64>, SimError> {
        self.solves += 1;
        Ok(self.inc.solve(&self.maps, self.phi, g, None, &self.settings)?.x)
    }
}

fn node_apply(blocks: &[Mat], x: &DVector<f64>) -> DVector<f64> {
    let d = blocks[0].nrows();
    let mut out = DVector::zeros(x.len());
    for (j, b) in blocks.iter().enumerate() {
        out.rows_mut(j * d, d).copy_from(&(b * x.rows(j * d, d)));
    }
    out
}

struct Stages {
    depth: usize,
    q_inv: Vec<Mat>,
    q_minus_i: Vec<Mat>,
    tol: f64,
    cap: usize,
    outer_iterations: usize,
}

impl Stages {
    /// R_k(g): the resolvent of the system weighted by Q^k.
    fn resolve(&mut self, base: &mut Base, k: usize, g: &DVector<f64>, warm: &mut DVector<f64>) -> Result<DVector<f64>, SimError> {
        if k == 0 {
            return base.resolve(g);
        }
        let mut x = warm.clone();
        let mut inner_warm = x.clone();
        for _ in 0..self.cap {
            if k == self.depth {
                self.outer_iterations += 1;
            }
            let v = self.resolve(base, k - 1, &(g + node_apply(&self.q_minus_i, &x)), &mut inner_warm)?;
            inner_warm = v.clone();
            let next = node_apply(&self.q_inv, &v);
            let change = (&next - &x).amax();
            x = next;
            if change <= self.tol * (1.0 + x.amax()) {
                *warm = x.clone();
                return Ok(x);
            }
        }
        Err(SimError::Contraction { rho: f64::NAN })
    }
}

/// Solves x − τA_h x = f with the static boundary feedback φ using only the
/// resolvent of the H = I system. Agrees with the direct weighted solve up to
/// the fixed-point tolerance.
pub fn contraction_resolve(
    sys: &DiscreteSystem,
    phi: &MonotoneMap,
    f: &DVector<f64>,
    tau: f64,
    settings: &SolverSettings,
) -> Result<ContractionSolve, SimError> {
    sys.check_len(f)?;
    let identity_sys = sys.with_identity_hamiltonian()?;
    let maps = identity_sys.io_maps(tau)?;
    let inc = StaticInclusion::new(&maps)?;
    let mut base = Base { maps, inc, phi, settings: *settings, solves: 0 };
    let d = sys.dim();
    let eye = Mat::identity(d, d);
    let p = sys.h_nodes();
    let dist = |blocks: &[Mat]| blocks.iter().map(|b| spectral_norm(&(b - &eye))).fold(0.0, f64::max);

    if dist(p) == 0.0 {
        let x = base.resolve(f)?;
        return Ok(ContractionSolve { x, report: ContractionReport { stages: 0, rho: 0.0, iterations: 0, base_solves: 1 } });
    }

    let mut n = 1;
    let mut q: Vec<Mat> = p.to_vec();
    while dist(&q) >= SPLIT_THRESHOLD {
        n += 1;
        if n > MAX_STAGES {
            return Err(SimError::Contraction { rho: f64::INFINITY });
        }
        let e = 1.0 / n as f64;
        q = p.iter().map(|b| sym_apply(b, |t| t.powf(e))).collect();
    }
    let q_inv: Vec<Mat> = q.iter().map(|b| sym_apply(b, |t| 1.0 / t)).collect();
    let q_minus_i: Vec<Mat> = q.iter().map(|b| b - &eye).collect();
    let inv_norm = q_inv.iter().map(spectral_norm).fold(0.0, f64::max);
    let rho = inv_norm * dist(&q);

    let tol = (settings.tol * 10.0).max(1e-13);
    let mut stages = Stages { depth: n, q_inv, q_minus_i, tol, cap: settings.max_iter.min(1000), outer_iterations: 0 };
    let mut warm = f.clone();
    let x = stages.resolve(&mut base, n, f, &mut warm).map_err(|e| match e {
        SimError::Contraction { .. } => SimError::Contraction { rho },
        other => other,
    })?;
    Ok(ContractionSolve {
        x,
        report: ContractionReport { stages: n, rho, iterations: stages.outer_iterations, base_solves: base.solves },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::build_discrete;
    use crate::model::{build_model, presets, HamiltonianDensity};

    fn sys_with(h: Mat) -> DiscreteSystem {
        let spec = presets::wave(HamiltonianDensity::Constant { matrix: h }, presets::wave_dirichlet_left_ports());
        build_discrete(&build_model(&spec).unwrap(), 16).unwrap()
    }

    fn datum(sys: &DiscreteSystem) -> DVector<f64> {
        sys.sample(|z| nalgebra::dvector![(3.0 * z).sin(), z * (1.0 - z)])
    }

    fn direct(sys: &DiscreteSystem, phi: &MonotoneMap, f: &DVector<f64>, tau: f64) -> DVector<f64> {
        let maps = sys.io_maps(tau).unwrap();
        super::super::solve_port_inclusion(&maps, phi, f, &SolverSettings::default()).unwrap().x
    }

    #[test]
    fn identity_is_a_single_solve() {
        let sys = sys_with(Mat::identity(2, 2));
        let phi = MonotoneMap::identity(2);
        let r = contraction_resolve(&sys, &phi, &datum(&sys), 0.1, &SolverSettings::default()).unwrap();
        assert_eq!(r.report.iterations, 0);
        assert_eq!(r.report.base_solves, 1);
    }

    #[test]
    fn mild_weight_single_stage() {
        let sys = sys_with(Mat::from_diagonal(&nalgebra::dvector![1.2, 0.9]));
        let phi = MonotoneMap::block(vec![MonotoneMap::zero(1), MonotoneMap::sector_damper(2.0, 0.25)]);
        let f = datum(&sys);
        let r = contraction_resolve(&sys, &phi, &f, 0.1, &SolverSettings::default()).unwrap();
        assert_eq!(r.report.stages, 1);
        assert!(r.report.rho < 1.0);
        assert!((r.x - direct(&sys, &phi, &f, 0.1)).amax() < 1e-9);
    }

    #[test]
    fn large_weight_needs_four_stages() {
        let sys = sys_with(Mat::identity(2, 2) * 5.0);
        let phi = MonotoneMap::identity(2);
        let f = datum(&sys);
        let r = contraction_resolve(&sys, &phi, &f, 0.1, &SolverSettings::default()).unwrap();
        assert_eq!(r.report.stages, 4);
        assert!(r.report.rho < 1.0);
        assert!((r.x - direct(&sys, &phi, &f, 0.1)).amax() < 1e-9);
    }
}
