//! Maximal monotone maps on ℝⁿ, accessed only through their resolvent
//! (I + αφ)⁻¹ and their minimal section.

use crate::densekit::{sym_part_bounds, Mat};
use crate::rng;
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonotoneError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: map acts on R^{expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonotoneMap {
    Zero {
        dim: usize,
    },
    /// v ↦ S v; monotone iff the symmetric part of S is PSD.
    Linear {
        #[serde(with = "crate::serde_mat")]
        matrix: Mat,
    },
    /// F·sign(v), with φ(0) = [−F, F].
    Relay { level: f64 },
    /// clamp(k·v, −u_max, u_max)
    Saturation { gain: f64, limit: f64 },
    /// 0 on [−δ, δ], v ∓ δ outside.
    Deadzone { width: f64 },
    /// |v|^(p−1) v
    PowerLaw { exponent: f64 },
    /// a·v + m·tanh(b·v/m): slope a + b at the origin, a at infinity.
    TanhSector { slope: f64, gain: f64, limit: f64 },
    /// Direct sum acting on consecutive coordinate blocks.
    Block { parts: Vec<MonotoneMap> },
}

const NEWTON_CAP: usize = 200;

impl MonotoneMap {
    pub fn zero(dim: usize) -> Self {
        Self::Zero { dim }
    }

    pub fn linear(matrix: Mat) -> Self {
        Self::Linear { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self::Linear { matrix: Mat::identity(dim, dim) }
    }

    pub fn block(parts: Vec<MonotoneMap>) -> Self {
        Self::Block { parts }
    }

    /// A smooth damper g with κ⁻¹|v| ≤ |g(v)| ≤ κ|v|, g'(0) = κ, g'(∞) = 1/κ.
    pub fn sector_damper(kappa: f64, limit: f64) -> Self {
        let k = if kappa >= 1.0 { kappa } else { 1.0 / kappa };
        Self::TanhSector { slope: 1.0 / k, gain: k - 1.0 / k, limit }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } => *dim,
            Self::Linear { matrix } => matrix.nrows(),
            Self::Block { parts } => parts.iter().map(Self::dim).sum(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), MonotoneError> {
        let bad = |what: &str| Err(MonotoneError::Parameter(what.to_string()));
        match self {
            Self::Zero { .. } => Ok(()),
            Self::Linear { matrix } => {
                if !matrix.is_square() || matrix.iter().any(|x| !x.is_finite()) {
                    return bad("linear map needs a finite square matrix");
                }
                Ok(())
            }
            Self::Relay { level } if !(*level >= 0.0 && level.is_finite()) => bad("relay level must be >= 0"),
            Self::Saturation { gain, limit } if !(*gain > 0.0 && *limit > 0.0 && gain.is_finite() && limit.is_finite()) => {
                bad("saturation needs gain > 0 and limit > 0")
            }
            Self::Deadzone { width } if !(*width >= 0.0 && width.is_finite()) => bad("deadzone width must be >= 0"),
            Self::PowerLaw { exponent } if !(*exponent >= 1.0 && exponent.is_finite()) => bad("power-law exponent must be >= 1"),
            Self::TanhSector { slope, gain, limit }
                if !(*slope >= 0.0 && *gain >= 0.0 && *limit > 0.0 && (slope + gain).is_finite() && limit.is_finite()) =>
            {
                bad("tanh sector needs slope, gain >= 0 and limit > 0")
            }
            Self::Block { parts } => parts.iter().try_for_each(Self::validate),
            _ => Ok(()),
        }
    }

    /// The matrix of a linear map (zero maps included), None otherwise.
    pub fn as_matrix(&self) -> Option<Mat> {
        match self {
            Self::Zero { dim } => Some(Mat::zeros(*dim, *dim)),
            Self::Linear { matrix } => Some(matrix.clone()),
            Self::Block { parts } => {
                let n = self.dim();
                let mut m = Mat::zeros(n, n);
                let mut off = 0;
                for p in parts {
                    let k = p.dim();
                    m.view_mut((off, off), (k, k)).copy_from(&p.as_matrix()?);
                    off += k;
                }
                Some(m)
            }
            _ => None,
        }
    }

    /// Coordinates the map can act on; the rest are identically zero.
    pub fn active_components(&self) -> Vec<bool> {
        match self {
            Self::Zero { dim } => vec![false; *dim],
            Self::Linear { matrix } => {
                (0..matrix.nrows()).map(|i| matrix.row(i).amax() > 0.0 || matrix.column(i).amax() > 0.0).collect()
            }
            Self::Relay { level } => vec![*level > 0.0],
            Self::Block { parts } => parts.iter().flat_map(Self::active_components).collect(),
            _ => vec![true],
        }
    }

    fn check_len(&self, n: usize) -> Result<(), MonotoneError> {
        if n != self.dim() {
            return Err(MonotoneError::Dimension { expected: self.dim(), got: n });
        }
        Ok(())
    }

    /// The unique w with w + α·φ(w) ∋ v.
    pub fn resolve(&self, alpha: f64, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        self.resolve_into(alpha, v.as_slice(), out.as_mut_slice());
        out
    }

    /// Slice form of [`resolve`](Self::resolve) used by the inner solvers.
    pub fn resolve_into(&self, alpha: f64, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        match self {
            Self::Zero { .. } => out.copy_from_slice(v),
            Self::Linear { matrix } => {
                let n = matrix.nrows();
                let a = Mat::identity(n, n) + matrix * alpha;
                let rhs = DVector::from_column_slice(v);
                match a.lu().solve(&rhs) {
                    Some(w) => out.copy_from_slice(w.as_slice()),
                    None => out.fill(f64::NAN),
                }
            }
            Self::Block { parts } => {
                let mut off = 0;
                for p in parts {
                    let k = p.dim();
                    p.resolve_into(alpha, &v[off..off + k], &mut out[off..off + k]);
                    off += k;
                }
            }
            scalar => out[0] = scalar.resolve_scalar(alpha, v[0]),
        }
    }

    fn resolve_scalar(&self, alpha: f64, v: f64) -> f64 {
        let (s, a) = (v.signum(), v.abs());
        match *self {
            Self::Relay { level } => s * (a - alpha * level).max(0.0),
            Self::Saturation { gain, limit } => {
                if a * gain <= (1.0 + alpha * gain) * limit {
                    v / (1.0 + alpha * gain)
                } else {
                    v - s * alpha * limit
                }
            }
            Self::Deadzone { width } => {
                if a <= width {
                    v
                } else {
                    s * (a + alpha * width) / (1.0 + alpha)
                }
            }
            Self::PowerLaw { exponent: p } => {
                if p == 1.0 {
                    return v / (1.0 + alpha);
                }
                if a == 0.0 {
                    return 0.0;
                }
                // r(t) = t + α tᵖ − a is convex and increasing on t ≥ 0, so Newton
                // started right of the root decreases monotonically onto it.
                let mut t = a.min((a / alpha).powf(1.0 / p));
                for _ in 0..NEWTON_CAP {
                    let r = t + alpha * t.powf(p) - a;
                    let next = (t - r / (1.0 + alpha * p * t.powf(p - 1.0))).max(0.0);
                    if !(next < t) {
                        break;
                    }
                    t = next;
                }
                s * t
            }
            Self::TanhSector { slope, gain, limit } => {
                if a == 0.0 {
                    return 0.0;
                }
                // concave increasing residual: Newton from the left is monotone
                let c = 1.0 + alpha * slope;
                let mut t = a / (c + alpha * gain);
                for _ in 0..NEWTON_CAP {
                    let th = (gain * t / limit).tanh();
                    let r = c * t + alpha * limit * th - a;
                    let next = (t - r / (c + alpha * gain * (1.0 - th * th))).min(a / c);
                    if !(next > t) {
                        break;
                    }
                    t = next;
                }
                s * t
            }
            _ => unreachable!("vector kinds are handled in resolve_into"),
        }
    }

    fn eval_scalar(&self, w: f64) -> f64 {
        match *self {
            Self::Relay { level } => {
                if w == 0.0 {
                    0.0
                } else {
                    level * w.signum()
                }
            }
            Self::Saturation { gain, limit } => (gain * w).clamp(-limit, limit),
            Self::Deadzone { width } => w.signum() * (w.abs() - width).max(0.0),
            Self::PowerLaw { exponent } => w.signum() * w.abs().powf(exponent),
            Self::TanhSector { slope, gain, limit } => slope * w + limit * (gain * w / limit).tanh(),
            _ => unreachable!(),
        }
    }

    /// Least-norm element of φ(v).
    pub fn minimal_section(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Zero { dim } => DVector::zeros(*dim),
            Self::Linear { matrix } => matrix * v,
            Self::Block { parts } => {
                let mut out = DVector::zeros(v.len());
                let mut off = 0;
                for p in parts {
                    let k = p.dim();
                    out.rows_mut(off, k).copy_from(&p.minimal_section(&v.rows(off, k).into_owned()));
                    off += k;
                }
                out
            }
            scalar => DVector::from_element(1, scalar.eval_scalar(v[0])),
        }
    }

    /// Euclidean distance from z to the set φ(w).
    pub fn graph_distance(&self, w: &DVector<f64>, z: &DVector<f64>) -> f64 {
        match self {
            Self::Block { parts } => {
                let mut off = 0;
                let mut s = 0.0;
                for p in parts {
                    let k = p.dim();
                    s += p.graph_distance(&w.rows(off, k).into_owned(), &z.rows(off, k).into_owned()).powi(2);
                    off += k;
                }
                s.sqrt()
            }
            Self::Relay { level } if w[0] == 0.0 => (z[0].abs() - level).max(0.0),
            _ => (z - self.minimal_section(w)).norm(),
        }
    }

    pub fn contains(&self, w: &DVector<f64>, z: &DVector<f64>, tol: f64) -> bool {
        self.graph_distance(w, z) <= tol
    }
}

pub fn resolve(phi: &MonotoneMap, alpha: f64, v: &DVector<f64>) -> Result<DVector<f64>, MonotoneError> {
    phi.check_len(v.len())?;
    if !(alpha > 0.0) {
        return Err(MonotoneError::Parameter(format!("resolvent step must be positive, got {alpha}")));
    }
    Ok(phi.resolve(alpha, v))
}

pub fn minimal_section(phi: &MonotoneMap, v: &DVector<f64>) -> Result<DVector<f64>, MonotoneError> {
    phi.check_len(v.len())?;
    Ok(phi.minimal_section(v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub samples: usize,
    /// smallest normalized pairing ⟨z − z', w − w'⟩ found
    pub worst_pairing: f64,
    pub passed: bool,
}

/// Samples graph points (w, (v − w)/α) through the resolvent and checks pairwise monotonicity.
pub fn verify_monotone(phi: &MonotoneMap, trials: usize, seed: u64) -> MonotoneReport {
    let mut rng = rng::stream(seed, "monotone");
    let n = phi.dim();
    // (w, z, rounding bound on z)
    let mut pts: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::with_capacity(trials);
    for _ in 0..trials {
        let scale = 10f64.powf(rng.gen_range(-3.0..2.0));
        let alpha = 10f64.powf(rng.gen_range(-2.0..2.0));
        let v = DVector::from_fn(n, |_, _| scale * rng.gen_range(-1.0..1.0));
        let w = phi.resolve(alpha, &v);
        let z = (&v - &w) / alpha;
        let err = 4.0 * f64::EPSILON * (v.norm() + w.norm()) / alpha;
        pts.push((w, z, err));
    }
    let mut worst = if pts.len() < 2 { 0.0 } else { f64::INFINITY };
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dw = &pts[i].0 - &pts[j].0;
            let dz = &pts[i].1 - &pts[j].1;
            // forming (v − w)/α loses a few ulps; that much negativity is not a violation
            let raw = dz.dot(&dw);
            let slack = dw.norm() * (pts[i].2 + pts[j].2);
            let pairing = if raw >= 0.0 { raw } else { (raw + slack).min(0.0) };
            let normalized = if pairing.is_nan() { f64::NEG_INFINITY } else { pairing / (1.0 + dz.norm() * dw.norm()) };
            worst = worst.min(normalized);
        }
    }
    MonotoneReport { samples: pts.len(), worst_pairing: worst, passed: worst >= -1e-12 }
}

/// Quick PSD test for the linear kind, exact up to the eigen solver.
pub fn linear_is_monotone(matrix: &Mat) -> bool {
    sym_part_bounds(matrix).map(|(lo, _)| lo >= -1e-12).unwrap_or(false)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorReport {
    pub ok: bool,
    pub kappa: f64,
    /// ½·min{κ, κ⁻¹} when ok
    pub kappa_tilde: Option<f64>,
    /// first sample violating the sector, if any
    pub violation: Option<f64>,
}

/// Checks κ⁻¹|v| ≤ |φ⁰(v)| ≤ κ|v| on |v| ∈ [1e-6, 1e3], log-spaced, both signs.
pub fn verify_sector(phi: &MonotoneMap, kappa: f64, samples: usize) -> SectorReport {
    verify_sector_on(phi, kappa, samples, 1e-6, 1e3)
}

pub fn verify_sector_on(phi: &MonotoneMap, kappa: f64, samples: usize, v_min: f64, v_max: f64) -> SectorReport {
    let fail = |v| SectorReport { ok: false, kappa, kappa_tilde: None, violation: Some(v) };
    if !(kappa > 0.0) {
        return fail(f64::NAN);
    }
    let n = phi.dim();
    let samples = samples.max(2);
    let (lo, hi) = (v_min.ln(), v_max.ln());
    for i in 0..samples {
        let mag = (lo + (hi - lo) * i as f64 / (samples - 1) as f64).exp();
        for sign in [1.0, -1.0] {
            for c in 0..n {
                let mut v = DVector::zeros(n);
                v[c] = sign * mag;
                let z = phi.minimal_section(&v)[c].abs();
                let tol = 1e-12 * mag;
                if z < mag / kappa - tol || z > kappa * mag + tol {
                    return fail(sign * mag);
                }
            }
        }
    }
    SectorReport { ok: true, kappa, kappa_tilde: Some(0.5 * kappa.min(1.0 / kappa)), violation: None }
}
