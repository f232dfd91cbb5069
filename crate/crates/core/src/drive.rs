//! Pulse schedule of the chirped passage: the linear chirp `β(t)`, the
//! three-stage Rabi envelope `Ω(t)` and the resulting Hamiltonian
//! `χSz² + β(t)Sz + Ω(t)Sx`.
//!
//! Stage boundaries live on the scaled time `s = αt/χ`:
//! turn-on `[-12, -10)`, plateau `[-10, 0)`, turn-off `[0, 2]`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin_algebra::{OperatorMatrix, SpinBasis, SpinOperators};

pub const DEFAULT_CHI: f64 = 10.0;
/// `α / χ²` of the reference runs.
pub const DEFAULT_ALPHA_FACTOR: f64 = 0.1;
/// `Ω_max / χ` of the reference runs.
pub const DEFAULT_OMEGA_MAX_FACTOR: f64 = 0.88;

const S_START: f64 = -12.0;
const S_PLATEAU: f64 = -10.0;
const S_END: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    chi: f64,
    alpha: f64,
    omega_max: f64,
}

impl DriveParams {
    pub fn new(chi: f64, alpha: f64, omega_max: f64) -> Result<Self> {
        if !(chi.is_finite() && chi > 0.0) {
            return Err(Error::InvalidParameter {
                field: "chi",
                reason: format!("{chi} is not > 0"),
            });
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter {
                field: "alpha",
                reason: format!("{alpha} is not > 0"),
            });
        }
        if !(omega_max.is_finite() && omega_max >= 0.0) {
            return Err(Error::InvalidParameter {
                field: "omega_max",
                reason: format!("{omega_max} is negative"),
            });
        }
        Ok(Self {
            chi,
            alpha,
            omega_max,
        })
    }

    /// `α = alpha_factor·χ²`, `Ω_max = omega_factor·χ`.
    pub fn from_factors(chi: f64, alpha_factor: f64, omega_factor: f64) -> Result<Self> {
        Self::new(chi, alpha_factor * chi * chi, omega_factor * chi)
    }

    /// `χ = 10`, `α = 0.1χ²`, `Ω_max = 0.88χ`.
    pub fn reference() -> Self {
        Self::from_factors(DEFAULT_CHI, DEFAULT_ALPHA_FACTOR, DEFAULT_OMEGA_MAX_FACTOR)
            .expect("reference parameters are valid")
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// `n = α / (0.1χ²)`.
    pub fn scan_factor(&self) -> f64 {
        self.alpha / (0.1 * self.chi * self.chi)
    }

    /// Time between consecutive adjacent-level crossings, `2χ/α`.
    pub fn tau(&self) -> f64 {
        2.0 * self.chi / self.alpha
    }

    pub fn scaled_time(&self, t: f64) -> f64 {
        self.alpha * t / self.chi
    }

    pub fn time_from_scaled(&self, s: f64) -> f64 {
        s * self.chi / self.alpha
    }

    pub fn t_start(&self) -> f64 {
        self.time_from_scaled(S_START)
    }

    /// End of the turn-on ramp, start of the plateau.
    pub fn t_plateau(&self) -> f64 {
        self.time_from_scaled(S_PLATEAU)
    }

    pub fn t_end(&self) -> f64 {
        self.time_from_scaled(S_END)
    }

    /// The three driven stages with their `[start, end]` times, in order.
    pub fn segments(&self) -> [(DriveStage, f64, f64); 3] {
        [
            (DriveStage::TurnOn, self.t_start(), self.t_plateau()),
            (DriveStage::Plateau, self.t_plateau(), 0.0),
            (DriveStage::TurnOff, 0.0, self.t_end()),
        ]
    }

    /// Half-open, left-closed stage membership. Times outside the protocol
    /// window are `Off`.
    pub fn stage_of(&self, t: f64) -> DriveStage {
        if t < self.t_start() {
            DriveStage::Off
        } else if t < self.t_plateau() {
            DriveStage::TurnOn
        } else if t < 0.0 {
            DriveStage::Plateau
        } else if t <= self.t_end() {
            DriveStage::TurnOff
        } else {
            DriveStage::Off
        }
    }

    /// `β(t) = αt·u(-t)` with `u(0) = 1`, so `β(0) = 0`.
    pub fn beta(&self, t: f64) -> f64 {
        if t < 0.0 {
            self.alpha * t
        } else {
            0.0
        }
    }

    pub fn beta_rate(&self, t: f64) -> f64 {
        if t < 0.0 {
            self.alpha
        } else {
            0.0
        }
    }

    pub fn omega(&self, t: f64) -> f64 {
        self.omega_in(self.stage_of(t), t)
    }

    pub fn omega_rate(&self, t: f64) -> f64 {
        self.omega_rate_in(self.stage_of(t), t)
    }

    /// `Ω` evaluated with the formula of `stage`, regardless of which stage
    /// `t` falls in. Integrators use this to keep a step inside one stage.
    pub fn omega_in(&self, stage: DriveStage, t: f64) -> f64 {
        match stage {
            DriveStage::TurnOn | DriveStage::TurnOff => self.ramp(self.scaled_time(t)),
            DriveStage::Plateau => self.omega_max,
            DriveStage::Off => 0.0,
        }
    }

    pub fn omega_rate_in(&self, stage: DriveStage, t: f64) -> f64 {
        match stage {
            DriveStage::TurnOn | DriveStage::TurnOff => self.ramp_rate(self.scaled_time(t)),
            DriveStage::Plateau | DriveStage::Off => 0.0,
        }
    }

    pub fn beta_in(&self, stage: DriveStage, t: f64) -> f64 {
        match stage {
            DriveStage::TurnOn | DriveStage::Plateau => self.alpha * t,
            DriveStage::TurnOff => 0.0,
            DriveStage::Off => self.beta(t),
        }
    }

    pub fn beta_rate_in(&self, stage: DriveStage, t: f64) -> f64 {
        match stage {
            DriveStage::TurnOn | DriveStage::Plateau => self.alpha,
            DriveStage::TurnOff => 0.0,
            DriveStage::Off => self.beta_rate(t),
        }
    }

    fn ramp_phase(s: f64) -> f64 {
        PI * ((s + 5.0).abs() - 5.0) / 2.0
    }

    fn ramp(&self, s: f64) -> f64 {
        0.5 * self.omega_max * (1.0 + Self::ramp_phase(s).cos())
    }

    fn ramp_rate(&self, s: f64) -> f64 {
        let ds_dt = self.alpha / self.chi;
        let sign = if s + 5.0 >= 0.0 { 1.0 } else { -1.0 };
        -0.5 * self.omega_max * Self::ramp_phase(s).sin() * 0.5 * PI * sign * ds_dt
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DriveStage {
    TurnOn,
    Plateau,
    TurnOff,
    Off,
}

impl fmt::Display for DriveStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriveStage::TurnOn => "turn-on",
            DriveStage::Plateau => "plateau",
            DriveStage::TurnOff => "turn-off",
            DriveStage::Off => "off",
        })
    }
}

/// `χSz² + βSz + ΩSx`.
pub fn assemble_hamiltonian(
    ops: &SpinOperators,
    chi: f64,
    beta: f64,
    omega: f64,
) -> OperatorMatrix {
    let mut h = ops.sz2.scale(chi);
    h.add_scaled(beta.into(), &ops.sz);
    h.add_scaled(omega.into(), &ops.sx);
    h
}

pub fn hamiltonian(params: &DriveParams, ops: &SpinOperators, t: f64) -> OperatorMatrix {
    assemble_hamiltonian(ops, params.chi, params.beta(t), params.omega(t))
}

pub fn hamiltonian_in(
    params: &DriveParams,
    ops: &SpinOperators,
    stage: DriveStage,
    t: f64,
) -> OperatorMatrix {
    assemble_hamiltonian(
        ops,
        params.chi,
        params.beta_in(stage, t),
        params.omega_in(stage, t),
    )
}

/// `E_m = χm² + β(t)m` in basis order.
pub fn diabatic_energies(params: &DriveParams, basis: &SpinBasis, t: f64) -> Vec<f64> {
    let beta = params.beta(t);
    basis
        .m_values()
        .into_iter()
        .map(|m| params.chi * m * m + beta * m)
        .collect()
}

/// Ascending eigenvalues of the bare Hamiltonian at `t`.
pub fn instantaneous_spectrum(
    params: &DriveParams,
    ops: &SpinOperators,
    t: f64,
) -> Result<Vec<f64>> {
    Ok(hamiltonian(params, ops, t).eigh()?.values)
}

/// `β` at which diabatic levels `m` and `m - 1` cross: `-χ(2m - 1)`.
pub fn adjacent_crossing_beta(chi: f64, m: f64) -> f64 {
    -chi * (2.0 * m - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn reference() -> DriveParams {
        DriveParams::reference()
    }

    #[test]
    fn parameter_validation() {
        assert!(DriveParams::new(0.0, 1.0, 1.0).is_err());
        assert!(DriveParams::new(1.0, -1.0, 1.0).is_err());
        assert!(DriveParams::new(1.0, 1.0, -0.1).is_err());
        assert!(DriveParams::new(1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn derived_quantities() {
        let p = reference();
        assert_eq!(p.alpha(), 10.0);
        assert!((p.omega_max() - 8.8).abs() < 1e-12);
        assert!((p.scan_factor() - 1.0).abs() < 1e-15);
        assert_eq!(p.tau(), 2.0);
        assert_eq!(p.t_start(), -12.0);
        assert_eq!(p.t_end(), 2.0);

        let fast = DriveParams::from_factors(10.0, 1.0, 0.88).unwrap();
        assert!((fast.scan_factor() - 10.0).abs() < 1e-12);
        assert!(fast.t_start() < -10.0 * fast.chi() / fast.alpha());
    }

    #[test]
    fn beta_values() {
        let p = reference();
        assert!((p.beta(p.t_start()) + 12.0 * p.chi()).abs() < 1e-12);
        assert_eq!(p.beta(0.0), 0.0);
        assert_eq!(p.beta(1.0), 0.0);
        assert_eq!(p.beta(-0.5), -5.0);
    }

    #[test]
    fn omega_values() {
        let p = reference();
        let om = p.omega_max();
        // n = 1, so nt = t here.
        assert!(p.omega(-12.0).abs() < 1e-12);
        assert!((p.omega(-10.0) - om).abs() < 1e-12);
        assert!((p.omega(0.0) - om).abs() < 1e-12);
        assert!((p.omega(1.0) - om / 2.0).abs() < 1e-12);
        assert!(p.omega(2.0).abs() < 1e-12);
        assert_eq!(p.omega(-5.0), om);
        assert_eq!(p.omega(3.0), 0.0);
        assert_eq!(p.omega(-13.0), 0.0);
    }

    #[test]
    fn omega_continuity_at_boundaries() {
        for factor in [0.1, 0.37, 1.0] {
            let p = DriveParams::from_factors(10.0, factor, 0.88).unwrap();
            for b in [p.t_start(), p.t_plateau(), 0.0, p.t_end()] {
                let eps = 1e-9 * p.chi() / p.alpha();
                assert!(
                    (p.omega(b - eps) - p.omega(b + eps)).abs() < 1e-6,
                    "boundary {b}"
                );
            }
        }
    }

    #[test]
    fn omega_rate_values() {
        let p = reference();
        assert_eq!(p.omega_rate(-5.0), 0.0);
        let expect = -p.omega_max() * PI * p.scan_factor() / 4.0;
        assert!((p.omega_rate(1.0) - expect).abs() < 1e-12);
        assert_eq!(p.omega_rate(5.0), 0.0);
        // Rising ramp has positive rate.
        assert!(p.omega_rate(-11.0) > 0.0);
    }

    #[test]
    fn omega_rate_matches_finite_difference() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let factor = rng.gen_range(0.05..1.5);
            let p = DriveParams::from_factors(10.0, factor, 0.88).unwrap();
            let s = if rng.gen_bool(0.5) {
                rng.gen_range(-11.99..-10.01)
            } else {
                rng.gen_range(0.01..1.99)
            };
            let t = p.time_from_scaled(s);
            let h = 1e-6;
            let fd = (p.omega(t + h) - p.omega(t - h)) / (2.0 * h);
            let rate = p.omega_rate(t);
            let scale = p.omega_max() * p.alpha() / p.chi();
            assert!(
                (fd - rate).abs() <= 1e-6 * rate.abs().max(1e-3 * scale),
                "s={s} fd={fd} rate={rate}"
            );
        }
    }

    #[test]
    fn stages() {
        let p = reference();
        let u = p.chi() / p.alpha();
        assert_eq!(p.stage_of(-11.0 * u), DriveStage::TurnOn);
        assert_eq!(p.stage_of(-5.0 * u), DriveStage::Plateau);
        assert_eq!(p.stage_of(u), DriveStage::TurnOff);
        assert_eq!(p.stage_of(p.t_start()), DriveStage::TurnOn);
        assert_eq!(p.stage_of(p.t_plateau()), DriveStage::Plateau);
        assert_eq!(p.stage_of(0.0), DriveStage::TurnOff);
        assert_eq!(p.stage_of(p.t_end()), DriveStage::TurnOff);
        assert_eq!(p.stage_of(2.5 * u), DriveStage::Off);
    }

    #[test]
    fn hamiltonian_n2_layout() {
        let ops = SpinOperators::new(SpinBasis::new(2).unwrap());
        let (chi, beta, omega) = (10.0, -3.0, 8.8);
        let h = assemble_hamiltonian(&ops, chi, beta, omega);
        let r = omega / 2f64.sqrt();
        let expect = [[chi + beta, r, 0.0], [r, 0.0, r], [0.0, r, chi - beta]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (h.get(i, j) - num_complex::Complex64::new(expect[i][j], 0.0)).norm() < 1e-12
                );
            }
        }
        assert!(h.is_hermitian(1e-12));
    }

    #[test]
    fn hamiltonian_after_protocol_is_diagonal() {
        let p = reference();
        let ops = SpinOperators::new(SpinBasis::new(4).unwrap());
        let h = hamiltonian(&p, &ops, 3.0);
        assert_eq!(h.max_off_diagonal(), 0.0);
        assert!(h.max_abs_diff(&ops.sz2.scale(p.chi())) < 1e-15);
    }

    #[test]
    fn odd_n_degeneracy_at_zero_chirp() {
        let p = reference();
        let basis = SpinBasis::new(3).unwrap();
        let ops = SpinOperators::new(basis);
        let h = hamiltonian_in(&p, &ops, DriveStage::Plateau, -1e-12);
        let chi = p.chi();
        assert!((h.get(1, 1).re - chi / 4.0).abs() < 1e-9);
        assert!((h.get(2, 2).re - chi / 4.0).abs() < 1e-9);
        let e = diabatic_energies(&p, &basis, 0.0);
        assert_eq!(e[1], chi / 4.0);
        assert_eq!(e[2], chi / 4.0);
    }

    #[test]
    fn diabatic_crossings() {
        let p = reference();
        let basis = SpinBasis::new(4).unwrap();
        let chi = p.chi();
        for m in [2.0, 1.0] {
            let beta = adjacent_crossing_beta(chi, m);
            let t = beta / p.alpha();
            let e = diabatic_energies(&p, &basis, t);
            let i = basis.index_of(m).unwrap();
            assert!((e[i] - e[i + 1]).abs() < 1e-10);
        }
        let dt = (adjacent_crossing_beta(chi, 1.0) - adjacent_crossing_beta(chi, 2.0)) / p.alpha();
        assert!((dt - p.tau()).abs() < 1e-12);
        // m = 0 track is flat.
        for t in [-12.0, -3.0, 0.5] {
            assert_eq!(diabatic_energies(&p, &basis, t)[2], 0.0);
        }
    }

    #[test]
    fn spectrum_without_drive_is_diabatic() {
        let p = DriveParams::new(10.0, 10.0, 0.0).unwrap();
        let basis = SpinBasis::new(3).unwrap();
        let ops = SpinOperators::new(basis);
        for t in [-11.0, -4.2, -0.3, 1.0] {
            let mut dia = diabatic_energies(&p, &basis, t);
            dia.sort_by(f64::total_cmp);
            let ad = instantaneous_spectrum(&p, &ops, t).unwrap();
            for (a, d) in ad.iter().zip(&dia) {
                assert!((a - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn avoided_crossing_gap_positive() {
        let p = reference();
        let ops = SpinOperators::new(SpinBasis::new(2).unwrap());
        let t_cross = adjacent_crossing_beta(p.chi(), 1.0) / p.alpha();
        let mut min_gap = f64::INFINITY;
        for k in -200..=200 {
            let t = t_cross + k as f64 * 1e-3;
            let e = instantaneous_spectrum(&p, &ops, t).unwrap();
            min_gap = min_gap.min(e[1] - e[0]);
        }
        assert!(min_gap > 1.0, "gap {min_gap}");
    }
}
