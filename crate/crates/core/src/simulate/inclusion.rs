//! Forward-backward solver for strongly monotone inclusions
//! `0 ∈ F(w) + Φ(w)` on the port space, with F single-valued, m-strongly
//! monotone and L-Lipschitz, and Φ maximal monotone with a cheap resolvent.
//! The step α = m/L² makes the iteration a strict contraction.

use super::SimError;
use crate::densekit::{spectral_norm, sym_part_bounds, Mat};
use crate::discrete::DiscreteIoMaps;
use crate::monotone::MonotoneMap;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// absolute tolerance on the inclusion residual
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-12, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct InclusionStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ForwardBackward {
    pub alpha: f64,
    pub strong: f64,
    pub lipschitz: f64,
}

const HISTORY: usize = 16;

impl ForwardBackward {
    pub fn new(strong: f64, lipschitz: f64) -> Result<Self, SimError> {
        if !(strong > 0.0) {
            return Err(SimError::NotStronglyMonotone { min_sym_eig: strong });
        }
        Ok(ForwardBackward { alpha: strong / (lipschitz * lipschitz), strong, lipschitz })
    }

    /// Constants of a linear forward operator w ↦ Lin·w.
    pub fn linear(lin: &Mat) -> Result<Self, SimError> {
        let (strong, _) = sym_part_bounds(lin)?;
        Self::new(strong, spectral_norm(lin))
    }

    /// The residual (w − w⁺)/α − F(w) + F(w⁺) lies in F(w⁺) + Φ(w⁺); its norm is the stopping test.
    pub fn solve(
        &self,
        forward: impl Fn(&DVector<f64>) -> DVector<f64>,
        prox: impl Fn(f64, &[f64], &mut [f64]),
        mut w: DVector<f64>,
        settings: &SolverSettings,
    ) -> Result<(DVector<f64>, InclusionStats), SimError> {
        let mut next = DVector::zeros(w.len());
        let mut fw = forward(&w);
        let mut history = Vec::with_capacity(HISTORY);
        for it in 1..=settings.max_iter {
            let v = &w - &fw * self.alpha;
            prox(self.alpha, v.as_slice(), next.as_mut_slice());
            let f_next = forward(&next);
            let residual = ((&w - &next) / self.alpha - &fw + &f_next).norm();
            if !residual.is_finite() {
                return Err(SimError::NonConvergence { iterations: it, residual, history });
            }
            std::mem::swap(&mut w, &mut next);
            fw = f_next;
            if residual <= settings.tol {
                return Ok((w, InclusionStats { iterations: it, residual }));
            }
            if history.len() == HISTORY {
                history.remove(0);
            }
            history.push(residual);
        }
        let residual = history.last().copied().unwrap_or(f64::NAN);
        Err(SimError::NonConvergence { iterations: settings.max_iter, residual, history })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionSolution {
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    pub x: DVector<f64>,
    pub stats: InclusionStats,
}

/// Precomputed solver for G⁻¹y + φ(y) ∋ G⁻¹F f on fixed resolvent maps.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticInclusion {
    fb: ForwardBackward,
    rhs_map: Mat,
}

impl StaticInclusion {
    pub fn new(maps: &DiscreteIoMaps) -> Result<Self, SimError> {
        Ok(StaticInclusion { fb: ForwardBackward::linear(&maps.g_inv)?, rhs_map: &maps.g_inv * &maps.f })
    }

    /// Step size m/‖G⁻¹‖² of the forward-backward iteration.
    pub fn step_size(&self) -> f64 {
        self.fb.alpha
    }

    /// Strong monotonicity m and Lipschitz constant L of G⁻¹.
    pub fn constants(&self) -> (f64, f64) {
        (self.fb.strong, self.fb.lipschitz)
    }

    pub fn solve(
        &self,
        maps: &DiscreteIoMaps,
        phi: &MonotoneMap,
        f: &DVector<f64>,
        warm: Option<&DVector<f64>>,
        settings: &SolverSettings,
    ) -> Result<InclusionSolution, SimError> {
        let nd = maps.g.nrows();
        if phi.dim() != nd {
            return Err(SimError::Dimension(format!("feedback acts on R^{}, ports are R^{nd}", phi.dim())));
        }
        let b = &self.rhs_map * f;
        let w0 = warm.cloned().unwrap_or_else(|| DVector::zeros(nd));
        let forward = |w: &DVector<f64>| &maps.g_inv * w - &b;
        let (y, stats) = self.fb.solve(forward, |a, v, out| phi.resolve_into(a, v, out), w0, settings)?;
        let ff = &maps.f * f;
        let u = &maps.g_inv * (&y - ff);
        let x = &maps.phi * f + &maps.psi * &u;
        Ok(InclusionSolution { y, u, x, stats })
    }
}

/// One resolvent solve with static feedback: returns y, u = G⁻¹(y − F f) and x = Φ f + Ψ u.
pub fn solve_port_inclusion(
    maps: &DiscreteIoMaps,
    phi: &MonotoneMap,
    f: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<InclusionSolution, SimError> {
    StaticInclusion::new(maps)?.solve(maps, phi, f, None, settings)
}
