//! Schrödinger propagation in the Dicke subspace (`ħ = 1`).
//!
//! Fixed-step classical Runge-Kutta on a grid aligned to the stage
//! boundaries. Every step stays inside one stage and evaluates the
//! counterdiabatic Hamiltonian with that stage's formulas.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::drive::{hamiltonian_in, DriveParams, DriveStage};
use crate::error::{Error, Result};
use crate::gauge::{cd_hamiltonian_in, CorrectionScheme, DEFAULT_GAP_TOL_FACTOR};
use crate::spin_algebra::{OperatorMatrix, SpinBasis, SpinOperators};

/// Drift allowed between renormalizations before a run is rejected.
pub const MAX_NORM_DRIFT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(DVector<C64>);

impl StateVector {
    pub fn new(amplitudes: DVector<C64>) -> Self {
        Self(amplitudes)
    }

    pub fn basis_vector(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self(DVector::from_iterator(
            values.len(),
            values.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        self.0.unscale_mut(n);
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }
}

/// The stretched state `|S, S⟩`, row 0 of the basis.
pub fn initial_css(basis: &SpinBasis) -> StateVector {
    StateVector::basis_vector(basis.dim(), 0)
}

/// Preparation target: `|S, 0⟩` for even `N`, the symmetric combination of
/// `|S, ±1/2⟩` for odd `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetState {
    pub state: StateVector,
    /// Basis rows the target is built from.
    pub components: Vec<usize>,
}

impl TargetState {
    /// Population inside the target's component subspace.
    pub fn subspace_population(&self, psi: &StateVector) -> f64 {
        self.components.iter().map(|&i| psi.0[i].norm_sqr()).sum()
    }
}

pub fn target_state(basis: &SpinBasis) -> TargetState {
    let dim = basis.dim();
    if basis.n_atoms().is_multiple_of(2) {
        let i = basis.index_of(0.0).expect("even N has m = 0");
        TargetState {
            state: StateVector::basis_vector(dim, i),
            components: vec![i],
        }
    } else {
        let up = basis.index_of(0.5).expect("odd N has m = 1/2");
        let down = basis.index_of(-0.5).expect("odd N has m = -1/2");
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = DVector::zeros(dim);
        v[up] = C64::new(r, 0.0);
        v[down] = C64::new(r, 0.0);
        TargetState {
            state: StateVector(v),
            components: vec![up, down],
        }
    }
}

pub fn populations(psi: &StateVector) -> Vec<f64> {
    psi.0.iter().map(|a| a.norm_sqr()).collect()
}

/// `|⟨target|ψ⟩|²`.
pub fn fidelity_to(psi: &StateVector, target: &StateVector) -> Result<f64> {
    if psi.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            left: psi.dim(),
            right: target.dim(),
        });
    }
    Ok(target.inner(psi).norm_sqr())
}

/// Weight of `psi` on the ground level of `h`; levels within `degeneracy_tol`
/// of the lowest eigenvalue count as ground.
pub fn ground_state_fidelity(
    h: &OperatorMatrix,
    psi: &StateVector,
    degeneracy_tol: f64,
) -> Result<f64> {
    if psi.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            left: psi.dim(),
            right: h.dim(),
        });
    }
    let eig = h.eigh()?;
    let e0 = eig.values[0];
    let mut weight = 0.0;
    for (k, &e) in eig.values.iter().enumerate() {
        if e - e0 > degeneracy_tol {
            break;
        }
        let overlap: C64 = eig.vectors.column(k).dotc(&psi.0);
        weight += overlap.norm_sqr();
    }
    Ok(weight)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Nominal step in units of `1/χ`. Each stage uses the largest step not
    /// exceeding it that divides the stage evenly.
    pub step: f64,
    pub renormalize_every: usize,
    pub method: Method,
    /// Observables are recorded every this many steps and at every stage
    /// boundary. Set by the caller, not read from config files.
    #[serde(skip)]
    pub record_every: usize,
    /// Full state vectors are kept on the same schedule.
    #[serde(skip)]
    pub state_every: usize,
    #[serde(skip)]
    pub track_ground_state: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            renormalize_every: 100,
            method: Method::Rk4,
            record_every: 1,
            state_every: 100,
            track_ground_state: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config {
                key: "integrator.step".into(),
                reason: "must be > 0".into(),
            });
        }
        for (key, v) in [
            ("integrator.renormalize_every", self.renormalize_every),
            ("integrator.record_every", self.record_every),
            ("integrator.state_every", self.state_every),
        ] {
            if v == 0 {
                return Err(Error::Config {
                    key: key.into(),
                    reason: "must be >= 1".into(),
                });
            }
        }
        Ok(())
    }

    pub fn halved(&self) -> Self {
        Self {
            step: self.step / 2.0,
            record_every: self.record_every.saturating_mul(2),
            state_every: self.state_every.saturating_mul(2),
            renormalize_every: self.renormalize_every.saturating_mul(2),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    pub target_fidelity: Vec<f64>,
    /// Empty unless ground-state tracking was requested.
    pub gs_fidelity: Vec<f64>,
    pub states: Vec<(f64, StateVector)>,
    pub final_state: StateVector,
    /// Largest `|‖ψ‖ - 1|` seen before any renormalization.
    pub max_norm_drift: f64,
    /// Largest `|‖ψ‖ - 1|` at recorded times.
    pub max_recorded_norm_error: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_populations(&self) -> &[f64] {
        self.populations
            .last()
            .expect("trajectory has at least one record")
    }

    pub fn final_target_fidelity(&self) -> f64 {
        *self
            .target_fidelity
            .last()
            .expect("trajectory has at least one record")
    }

    pub fn min_gs_fidelity(&self) -> Option<f64> {
        self.gs_fidelity.iter().cloned().reduce(f64::min)
    }
}

struct Recorder<'a> {
    params: &'a DriveParams,
    ops: &'a SpinOperators,
    target: StateVector,
    cfg: &'a IntegratorConfig,
    traj: Trajectory,
}

impl Recorder<'_> {
    fn record(
        &mut self,
        stage: DriveStage,
        t: f64,
        psi: &StateVector,
        step: usize,
        force: bool,
    ) -> Result<()> {
        if force || step.is_multiple_of(self.cfg.record_every) {
            self.traj.times.push(t);
            self.traj.populations.push(populations(psi));
            self.traj
                .target_fidelity
                .push(fidelity_to(psi, &self.target)?);
            self.traj.max_recorded_norm_error = self
                .traj
                .max_recorded_norm_error
                .max((psi.norm() - 1.0).abs());
            if self.cfg.track_ground_state {
                let h = hamiltonian_in(self.params, self.ops, stage, t);
                let tol = DEFAULT_GAP_TOL_FACTOR * self.params.chi();
                self.traj
                    .gs_fidelity
                    .push(ground_state_fidelity(&h, psi, tol)?);
            }
        }
        if force || step.is_multiple_of(self.cfg.state_every) {
            self.traj.states.push((t, psi.clone()));
        }
        Ok(())
    }
}

fn rhs(h: &OperatorMatrix, y: &DVector<C64>) -> DVector<C64> {
    // -i H y
    h.apply(y) * C64::new(0.0, -1.0)
}

/// Propagates `psi0` from the start of the turn-on ramp to the end of the
/// turn-off ramp under `H + λ̇A_λ` for the given scheme.
pub fn evolve(
    params: &DriveParams,
    ops: &SpinOperators,
    scheme: &CorrectionScheme,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    scheme.validate(ops.basis.n_atoms())?;
    if psi0.dim() != ops.dim() {
        return Err(Error::DimensionMismatch {
            left: psi0.dim(),
            right: ops.dim(),
        });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter {
            field: "psi0",
            reason: format!("norm {} is not 1", psi0.norm()),
        });
    }

    let nominal = cfg.step / params.chi();
    let mut rec = Recorder {
        params,
        ops,
        target: target_state(&ops.basis).state,
        cfg,
        traj: Trajectory {
            times: Vec::new(),
            populations: Vec::new(),
            target_fidelity: Vec::new(),
            gs_fidelity: Vec::new(),
            states: Vec::new(),
            final_state: psi0.clone(),
            max_norm_drift: 0.0,
            max_recorded_norm_error: 0.0,
            steps: 0,
        },
    };

    let segments = params.segments();
    let mut psi = psi0.clone();
    let mut step = 0usize;
    rec.record(segments[0].0, segments[0].1, &psi, step, true)?;

    for &(stage, t0, t1) in segments.iter() {
        let n_steps = (((t1 - t0) / nominal) - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n_steps as f64;
        let ham = |t: f64| cd_hamiltonian_in(params, ops, stage, t, scheme);
        let mut h_left = ham(t0)?;
        for k in 0..n_steps {
            let t = t0 + k as f64 * h;
            let t_next = if k + 1 == n_steps {
                t1
            } else {
                t0 + (k + 1) as f64 * h
            };
            let h_mid = ham(t + 0.5 * h)?;
            let h_right = ham(t_next)?;

            let y = &psi.0;
            let k1 = rhs(&h_left, y);
            let k2 = rhs(&h_mid, &(y + &k1 * C64::from(0.5 * h)));
            let k3 = rhs(&h_mid, &(y + &k2 * C64::from(0.5 * h)));
            let k4 = rhs(&h_right, &(y + &k3 * C64::from(h)));
            let incr = (k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(h / 6.0);
            psi.0 += incr;
            h_left = h_right;
            step += 1;

            if step.is_multiple_of(cfg.renormalize_every) {
                let drift = (psi.norm() - 1.0).abs();
                if drift > MAX_NORM_DRIFT {
                    return Err(Error::NormDrift { t: t_next, drift });
                }
                rec.traj.max_norm_drift = rec.traj.max_norm_drift.max(drift);
                psi.normalize();
            }

            rec.record(stage, t_next, &psi, step, k + 1 == n_steps)?;
        }
    }

    let drift = (psi.norm() - 1.0).abs();
    if drift > MAX_NORM_DRIFT {
        return Err(Error::NormDrift {
            t: params.t_end(),
            drift,
        });
    }
    rec.traj.max_norm_drift = rec.traj.max_norm_drift.max(drift);
    rec.traj.final_state = psi;
    rec.traj.steps = step;
    Ok(rec.traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::hamiltonian;

    fn ops(n: usize) -> SpinOperators {
        SpinOperators::new(SpinBasis::new(n).unwrap())
    }

    #[test]
    fn css_vectors() {
        let b = SpinBasis::new(2).unwrap();
        assert_eq!(initial_css(&b), StateVector::from_real(&[1.0, 0.0, 0.0]));
        let b = SpinBasis::new(3).unwrap();
        assert_eq!(
            initial_css(&b),
            StateVector::from_real(&[1.0, 0.0, 0.0, 0.0])
        );
    }

    #[test]
    fn css_is_initial_ground_state() {
        let p = DriveParams::reference();
        for n in 1..=6 {
            let o = ops(n);
            let h = hamiltonian(&p, &o, p.t_start());
            let f = ground_state_fidelity(&h, &initial_css(&o.basis), 1e-7).unwrap();
            assert!(f > 0.999, "N={n} f={f}");
        }
    }

    #[test]
    fn targets() {
        let t = target_state(&SpinBasis::new(2).unwrap());
        assert_eq!(t.state, StateVector::from_real(&[0.0, 1.0, 0.0]));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let t = target_state(&SpinBasis::new(3).unwrap());
        assert_eq!(t.state, StateVector::from_real(&[0.0, r, r, 0.0]));
        assert_eq!(t.components, vec![1, 2]);
        let t = target_state(&SpinBasis::new(4).unwrap());
        assert_eq!(t.state, StateVector::basis_vector(5, 2));
    }

    #[test]
    fn populations_and_fidelity() {
        let a = StateVector::basis_vector(3, 1);
        assert_eq!(populations(&a), vec![0.0, 1.0, 0.0]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let sup = StateVector::from_real(&[r, r, 0.0]);
        let p = populations(&sup);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);

        assert_eq!(fidelity_to(&a, &a).unwrap(), 1.0);
        assert_eq!(
            fidelity_to(&a, &StateVector::basis_vector(3, 0)).unwrap(),
            0.0
        );
        assert!((fidelity_to(&sup, &StateVector::basis_vector(3, 0)).unwrap() - 0.5).abs() < 1e-15);
        assert!(fidelity_to(&a, &StateVector::basis_vector(4, 0)).is_err());
    }

    #[test]
    fn degenerate_ground_subspace() {
        let o = ops(3);
        let h = o.sz2.scale(10.0);
        let psi = StateVector::basis_vector(4, 2);
        assert!((ground_state_fidelity(&h, &psi, 1e-7).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn post_protocol_ground_state_is_m0() {
        let p = DriveParams::reference();
        let o = ops(4);
        let h = hamiltonian(&p, &o, p.t_end() + 1.0);
        let r = 0.5f64.sqrt();
        let psi = StateVector::from_real(&[0.0, r, 0.5, 0.5, 0.0]);
        let gs = ground_state_fidelity(&h, &psi, 1e-7).unwrap();
        let direct = fidelity_to(&psi, &StateVector::basis_vector(5, 2)).unwrap();
        assert!((gs - direct).abs() < 1e-12);
    }

    #[test]
    fn stationary_state_stays_put() {
        // Ω_max = 0 leaves the Hamiltonian diagonal throughout.
        let p = DriveParams::new(10.0, 100.0, 0.0).unwrap();
        let o = ops(2);
        let cfg = IntegratorConfig::default();
        let traj = evolve(
            &p,
            &o,
            &CorrectionScheme::none(),
            &initial_css(&o.basis),
            &cfg,
        )
        .unwrap();
        for pops in &traj.populations {
            assert!((pops[0] - 1.0).abs() < 1e-6);
            assert_eq!(&pops[1..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn grid_hits_stage_boundaries() {
        let p = DriveParams::from_factors(10.0, 0.7, 0.88).unwrap();
        let o = ops(2);
        let cfg = IntegratorConfig {
            step: 2e-3,
            record_every: 1,
            track_ground_state: false,
            ..Default::default()
        };
        let traj = evolve(
            &p,
            &o,
            &CorrectionScheme::none(),
            &initial_css(&o.basis),
            &cfg,
        )
        .unwrap();
        for b in [p.t_start(), p.t_plateau(), 0.0, p.t_end()] {
            assert!(
                traj.times.iter().any(|&t| (t - b).abs() < 1e-12),
                "missing {b}"
            );
        }
        assert_eq!(*traj.times.last().unwrap(), p.t_end());
    }

    #[test]
    fn norm_and_population_sums() {
        let p = DriveParams::from_factors(10.0, 0.5, 0.88).unwrap();
        let o = ops(3);
        let cfg = IntegratorConfig::default();
        let traj = evolve(
            &p,
            &o,
            &"off-cd1+mid-cd2".parse().unwrap(),
            &initial_css(&o.basis),
            &cfg,
        )
        .unwrap();
        assert!(traj.max_norm_drift < 1e-8);
        for pops in &traj.populations {
            assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            assert!(pops.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let p = DriveParams::from_factors(10.0, 0.1, 0.88).unwrap();
        let o = ops(6);
        let cfg = IntegratorConfig {
            step: 0.5,
            renormalize_every: 1,
            ..Default::default()
        };
        let err = evolve(
            &p,
            &o,
            &CorrectionScheme::none(),
            &initial_css(&o.basis),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NormDrift { .. }), "{err}");
    }

    #[test]
    fn bad_inputs() {
        let p = DriveParams::reference();
        let o = ops(2);
        let cfg = IntegratorConfig::default();
        let unnormalized = StateVector::from_real(&[1.0, 1.0, 0.0]);
        assert!(evolve(&p, &o, &CorrectionScheme::none(), &unnormalized, &cfg).is_err());
        let wrong = StateVector::basis_vector(4, 0);
        assert!(evolve(&p, &o, &CorrectionScheme::none(), &wrong, &cfg).is_err());
        let bad_cfg = IntegratorConfig {
            step: 0.0,
            ..Default::default()
        };
        assert!(evolve(
            &p,
            &o,
            &CorrectionScheme::none(),
            &initial_css(&o.basis),
            &bad_cfg
        )
        .is_err());
    }
}
