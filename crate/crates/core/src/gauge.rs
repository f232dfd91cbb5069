//! Adiabatic gauge potentials and the counterdiabatic Hamiltonian.
//!
//! Each driven stage picks its own control `λ`: the Rabi envelope on the
//! ramps (`∂λH = Sx`) and the chirp on the plateau (`∂λH = Sz`). The gauge
//! potential is either exact (from the instantaneous eigenbasis) or the
//! variational nested-commutator ansatz
//!
//! ```text
//! A(ℓ) = i Σ_k ξ_k O_{2k-1},   O_0 = ∂λH,   O_k = [H, O_{k-1}]
//! ```
//!
//! with `ξ` minimizing `Tr[G²]`, `G = O_0 + Σ_k ξ_k O_{2k}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::drive::{assemble_hamiltonian, DriveParams, DriveStage};
use crate::error::{Error, Result};
use crate::spin_algebra::{anticommutator, commutator, OperatorMatrix, SpinOperators};

/// Relative cutoff on the eigenvalues of the Gram matrix `C`.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-12;
/// Exact-AGP degeneracy threshold in units of `χ`.
pub const DEFAULT_GAP_TOL_FACTOR: f64 = 1e-8;
const TRACE_IMAG_TOL: f64 = 1e-10;

const I: C64 = C64::new(0.0, 1.0);

/// Control parameter, its rate and the Hamiltonian pieces of one stage.
#[derive(Clone, Debug)]
pub struct StageControl {
    pub stage: DriveStage,
    pub chi: f64,
    pub beta: f64,
    pub omega: f64,
    pub lambda: f64,
    pub lambda_rate: f64,
    pub h_a: OperatorMatrix,
    pub dh: OperatorMatrix,
}

impl StageControl {
    /// Control at `t` using the stage `t` belongs to. `None` outside the
    /// driven window.
    pub fn at(params: &DriveParams, ops: &SpinOperators, t: f64) -> Option<Self> {
        Self::in_stage(params, ops, params.stage_of(t), t)
    }

    /// Control at `t` evaluated with the formulas of `stage`.
    pub fn in_stage(
        params: &DriveParams,
        ops: &SpinOperators,
        stage: DriveStage,
        t: f64,
    ) -> Option<Self> {
        let chi = params.chi();
        let beta = params.beta_in(stage, t);
        let omega = params.omega_in(stage, t);
        let (lambda, lambda_rate, dh) = match stage {
            DriveStage::TurnOn | DriveStage::TurnOff => {
                (omega, params.omega_rate_in(stage, t), ops.sx.clone())
            }
            DriveStage::Plateau => (beta, params.beta_rate_in(stage, t), ops.sz.clone()),
            DriveStage::Off => return None,
        };
        Some(Self {
            stage,
            chi,
            beta,
            omega,
            lambda,
            lambda_rate,
            h_a: assemble_hamiltonian(ops, chi, beta, omega),
            dh,
        })
    }
}

/// `O_0 … O_{2ℓ}`.
#[derive(Clone, Debug)]
pub struct NestedCommutators {
    pub order: usize,
    pub ops: Vec<OperatorMatrix>,
}

pub fn nested_commutators(ctrl: &StageControl, ell: usize) -> NestedCommutators {
    nested_commutators_of(&ctrl.h_a, &ctrl.dh, ell)
}

pub fn nested_commutators_of(
    h: &OperatorMatrix,
    dh: &OperatorMatrix,
    ell: usize,
) -> NestedCommutators {
    let mut ops = Vec::with_capacity(2 * ell + 1);
    ops.push(dh.clone());
    for k in 1..=2 * ell {
        let next = commutator(h, &ops[k - 1]).expect("operators share the Dicke dimension");
        ops.push(next);
    }
    NestedCommutators { order: ell, ops }
}

/// `S(ξ) = A + 2B·ξ + ξᵀCξ`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticAction {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: DMatrix<f64>,
}

impl QuadraticAction {
    pub fn order(&self) -> usize {
        self.b.len()
    }

    pub fn evaluate(&self, xi: &[f64]) -> f64 {
        let l = self.order();
        let mut s = self.a;
        for i in 0..l {
            s += 2.0 * self.b[i] * xi[i];
            for j in 0..l {
                s += xi[i] * self.c[(i, j)] * xi[j];
            }
        }
        s
    }

    /// `B + Cξ`, half the gradient.
    pub fn half_gradient(&self, xi: &[f64]) -> Vec<f64> {
        (0..self.order())
            .map(|i| {
                self.b[i]
                    + (0..self.order())
                        .map(|j| self.c[(i, j)] * xi[j])
                        .sum::<f64>()
            })
            .collect()
    }
}

fn real_trace(x: &OperatorMatrix, y: &OperatorMatrix) -> Result<f64> {
    let tr = x.trace_product(y);
    let scale = 1.0 + x.frobenius_norm() * y.frobenius_norm();
    if tr.im.abs() > TRACE_IMAG_TOL * scale {
        return Err(Error::ImaginaryResidue(tr.im));
    }
    Ok(tr.re)
}

/// `A = Tr[O_0²]`, `B_i = Tr[O_0 O_2i]`, `C_ij = Tr[O_2i O_2j]`.
pub fn quadratic_action(nc: &NestedCommutators) -> Result<QuadraticAction> {
    let l = nc.order;
    let o = &nc.ops;
    let a = real_trace(&o[0], &o[0])?;
    let b = (1..=l)
        .map(|i| real_trace(&o[0], &o[2 * i]))
        .collect::<Result<Vec<_>>>()?;
    let mut c = DMatrix::zeros(l, l);
    for i in 1..=l {
        for j in i..=l {
            let v = real_trace(&o[2 * i], &o[2 * j])?;
            c[(i - 1, j - 1)] = v;
            c[(j - 1, i - 1)] = v;
        }
    }
    Ok(QuadraticAction { a, b, c })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub xi: Vec<f64>,
}

impl Coefficients {
    pub fn order(&self) -> usize {
        self.xi.len()
    }
}

/// Minimizes the action by diagonalizing `C = U D Uᵀ`; directions with
/// `D_kk <= cutoff·max D` get `ξ'_k = 0`.
pub fn solve_coefficients(qa: &QuadraticAction) -> Coefficients {
    let l = qa.order();
    if l == 0 {
        return Coefficients { xi: Vec::new() };
    }
    let eig = SymmetricEigen::new(qa.c.clone());
    let d_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let u = &eig.eigenvectors;
    let mut xi = vec![0.0; l];
    if d_max <= 0.0 {
        return Coefficients { xi };
    }
    for k in 0..l {
        let d = eig.eigenvalues[k];
        if d <= PSEUDO_INVERSE_CUTOFF * d_max {
            continue;
        }
        let b_prime: f64 = (0..l).map(|i| u[(i, k)] * qa.b[i]).sum();
        let xi_prime = -b_prime / d;
        for i in 0..l {
            xi[i] += u[(i, k)] * xi_prime;
        }
    }
    Coefficients { xi }
}

/// Same minimizer as [`solve_coefficients`], computed as the least-squares
/// problem `min ‖O_0 + Σ ξ_k O_2k‖_F` on column-normalized vectorized
/// operators. Columns are orthogonalized in order (Gram-Schmidt, twice) and a
/// column is dropped only when it lies in the span of the earlier ones to
/// within the cutoff, so the order-`ℓ` search space always contains the
/// order-`ℓ-1` one. Working on the columns instead of the Gram matrix also
/// halves the digits lost to conditioning.
fn solve_least_squares(nc: &NestedCommutators) -> Coefficients {
    let l = nc.order;
    let vectorize = |op: &OperatorMatrix| -> DVector<f64> {
        let m = op.matrix();
        DVector::from_iterator(
            2 * m.len(),
            m.iter().map(|z| z.re).chain(m.iter().map(|z| z.im)),
        )
    };
    let rhs = -vectorize(&nc.ops[0]);

    // Orthonormal basis q, triangular factor r over the kept columns.
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(l);
    let mut r = DMatrix::<f64>::zeros(l, l);
    let mut kept: Vec<(usize, f64)> = Vec::with_capacity(l);
    for k in 0..l {
        let col = vectorize(&nc.ops[2 * k + 2]);
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = col / norm;
        let mut coeffs = vec![0.0; q.len()];
        for _ in 0..2 {
            for (j, qj) in q.iter().enumerate() {
                let c = qj.dot(&v);
                coeffs[j] += c;
                v.axpy(-c, qj, 1.0);
            }
        }
        let rest = v.norm();
        if rest <= PSEUDO_INVERSE_CUTOFF {
            continue;
        }
        let slot = q.len();
        for (j, c) in coeffs.into_iter().enumerate() {
            r[(j, slot)] = c;
        }
        r[(slot, slot)] = rest;
        q.push(v / rest);
        kept.push((k, norm));
    }

    // Back substitution for R y = Qᵀ b.
    let n = q.len();
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = q[i].dot(&rhs);
        for j in i + 1..n {
            acc -= r[(i, j)] * y[j];
        }
        y[i] = acc / r[(i, i)];
    }
    let mut xi = vec![0.0; l];
    for (slot, &(k, norm)) in kept.iter().enumerate() {
        xi[k] = y[slot] / norm;
    }
    Coefficients { xi }
}

/// Variational coefficients and gauge potential.
#[derive(Clone, Debug)]
pub struct VariationalAgp {
    pub coefficients: Coefficients,
    pub agp: OperatorMatrix,
}

/// Variational AGP of order `ell` for an arbitrary pair `(H, ∂λH)`.
///
/// The commutator chain is built from `H/E`, `E = ‖H‖_F`, and solved as a
/// least-squares problem; the coefficients are rescaled by `E^{-2k}`
/// afterwards.
pub fn variational_agp_of(
    h: &OperatorMatrix,
    dh: &OperatorMatrix,
    ell: usize,
) -> Result<VariationalAgp> {
    if ell == 0 {
        return Err(Error::InvalidParameter {
            field: "order",
            reason: "must be >= 1".into(),
        });
    }
    let dim = h.dim();
    let energy = h.frobenius_norm();
    if energy == 0.0 {
        return Ok(VariationalAgp {
            coefficients: Coefficients { xi: vec![0.0; ell] },
            agp: OperatorMatrix::zeros(dim),
        });
    }
    let hs = h.scale(1.0 / energy);
    let nc = nested_commutators_of(&hs, dh, ell);
    // Reject non-Hermitian input the same way the trace route does.
    quadratic_action(&NestedCommutators {
        order: 1,
        ops: nc.ops[..3].to_vec(),
    })?;
    let scaled = solve_least_squares(&nc);

    let mut agp = OperatorMatrix::zeros(dim);
    for (k, xk) in scaled.xi.iter().enumerate() {
        agp.add_scaled(I * (*xk / energy), &nc.ops[2 * k + 1]);
    }
    // Hermitian by construction up to round-off.
    let agp = (&agp + &agp.adjoint()).scale(0.5);

    let xi = scaled
        .xi
        .iter()
        .enumerate()
        .map(|(k, xk)| xk / energy.powi(2 * (k as i32 + 1)))
        .collect();
    Ok(VariationalAgp {
        coefficients: Coefficients { xi },
        agp,
    })
}

pub fn agp_variational(ctrl: &StageControl, ell: usize) -> Result<OperatorMatrix> {
    Ok(variational_agp_of(&ctrl.h_a, &ctrl.dh, ell)?.agp)
}

/// `G = ∂λH - i[H, A]`.
pub fn action_operator(
    h: &OperatorMatrix,
    dh: &OperatorMatrix,
    agp: &OperatorMatrix,
) -> OperatorMatrix {
    let mut g = dh.clone();
    g.add_scaled(-I, &commutator(h, agp).expect("same dimension"));
    g
}

/// `Tr[G²]` at the variational optimum of order `ell`.
pub fn minimized_action(h: &OperatorMatrix, dh: &OperatorMatrix, ell: usize) -> Result<f64> {
    let agp = variational_agp_of(h, dh, ell)?.agp;
    let g = action_operator(h, dh, &agp);
    Ok(g.trace_product(&g).re)
}

/// Exact gauge potential, `⟨m|A|n⟩ = -i⟨m|∂λH|n⟩/(ε_m - ε_n)` with zero
/// diagonal.
pub fn agp_exact(h: &OperatorMatrix, dh: &OperatorMatrix, gap_tol: f64) -> Result<OperatorMatrix> {
    if h.dim() != dh.dim() {
        return Err(Error::DimensionMismatch {
            left: h.dim(),
            right: dh.dim(),
        });
    }
    let eig = h.eigh()?;
    let v = &eig.vectors;
    let d = v.adjoint() * dh.matrix() * v;
    let n = h.dim();
    let mut a = DMatrix::<C64>::zeros(n, n);
    for m in 0..n {
        for k in 0..n {
            if m == k {
                continue;
            }
            let gap = eig.values[m] - eig.values[k];
            let coupling = d[(m, k)];
            if gap.abs() < gap_tol {
                if coupling.norm() > gap_tol {
                    return Err(Error::DegenerateSpectrum {
                        m,
                        n: k,
                        gap,
                        coupling: coupling.norm(),
                    });
                }
                continue;
            }
            a[(m, k)] = -I * coupling / gap;
        }
    }
    let back = v * a * v.adjoint();
    let back = OperatorMatrix::from_matrix(back);
    Ok((&back + &back.adjoint()).scale(0.5))
}

/// First-order plateau coefficient for two atoms: `-1/(Ω² + λ² + χ²)`.
pub fn xi1_plateau_closed_form(chi: f64, lam: f64, om: f64) -> Result<f64> {
    let den = om * om + lam * lam + chi * chi;
    if den == 0.0 {
        return Err(Error::SingularClosedForm(
            "xi1 plateau: chi, lambda and omega all vanish",
        ));
    }
    Ok(-1.0 / den)
}

/// Second-order plateau coefficients `(ξ_1, ξ_2)` for two atoms.
pub fn xi_second_order_closed_form(chi: f64, lam: f64, om: f64) -> Result<(f64, f64)> {
    let (c2, l2, o2) = (chi * chi, lam * lam, om * om);
    let den = 4.0 * l2 * l2 * l2 + o2 * o2 * o2 - 8.0 * c2 * l2 * l2
        + 4.0 * c2 * c2 * l2
        + 33.0 * l2 * o2 * o2
        + 36.0 * l2 * l2 * o2
        + 28.0 * c2 * l2 * o2;
    if den == 0.0 {
        return Err(Error::SingularClosedForm(
            "xi second order: vanishing denominator",
        ));
    }
    let num1 = 8.0 * l2 * l2 + 2.0 * o2 * o2 + 8.0 * c2 * l2 + c2 * o2 + 37.0 * l2 * o2;
    let num2 = 4.0 * l2 + o2;
    Ok((-num1 / den, num2 / den))
}

/// First-order ramp coefficient for two atoms with `λ = Ω`.
pub fn xi1_turn_on_closed_form(chi: f64, beta: f64, lam: f64) -> Result<f64> {
    let (b2, c2, l2) = (beta * beta, chi * chi, lam * lam);
    let den = b2 * b2 + 6.0 * b2 * c2 + b2 * l2 + c2 * c2 + 4.0 * c2 * l2;
    if den == 0.0 {
        return Err(Error::SingularClosedForm(
            "xi1 turn-on: vanishing denominator",
        ));
    }
    Ok(-(b2 + c2) / den)
}

/// Correction applied during one stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StageCorrection {
    #[default]
    None,
    Variational(usize),
    ClosedForm1,
    ClosedForm2,
    Exact,
}

/// Per-stage correction choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CorrectionScheme {
    pub turn_on: StageCorrection,
    pub plateau: StageCorrection,
    pub turn_off: StageCorrection,
}

impl CorrectionScheme {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn exact() -> Self {
        Self {
            turn_on: StageCorrection::Exact,
            plateau: StageCorrection::Exact,
            turn_off: StageCorrection::Exact,
        }
    }

    pub fn for_stage(&self, stage: DriveStage) -> StageCorrection {
        match stage {
            DriveStage::TurnOn => self.turn_on,
            DriveStage::Plateau => self.plateau,
            DriveStage::TurnOff => self.turn_off,
            DriveStage::Off => StageCorrection::None,
        }
    }

    /// Closed forms come from the two-atom derivation and only exist for
    /// the stages it covers.
    pub fn validate(&self, n_atoms: usize) -> Result<()> {
        let stages = [
            (DriveStage::TurnOn, self.turn_on),
            (DriveStage::Plateau, self.plateau),
            (DriveStage::TurnOff, self.turn_off),
        ];
        for (stage, entry) in stages {
            match entry {
                StageCorrection::Variational(0) => {
                    return Err(Error::InvalidParameter {
                        field: "scheme",
                        reason: format!("variational order must be >= 1 ({stage})"),
                    })
                }
                StageCorrection::ClosedForm1 | StageCorrection::ClosedForm2 if n_atoms != 2 => {
                    return Err(Error::ClosedFormUnavailable(format!(
                        "{stage} closed form exists for N = 2 only (N = {n_atoms})"
                    )))
                }
                StageCorrection::ClosedForm2 if stage != DriveStage::Plateau => {
                    return Err(Error::ClosedFormUnavailable(format!(
                        "second-order closed form exists for the plateau only, not {stage}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn stage_prefix(stage: DriveStage) -> &'static str {
    match stage {
        DriveStage::TurnOn => "on",
        DriveStage::Plateau => "mid",
        DriveStage::TurnOff => "off",
        DriveStage::Off => "",
    }
}

impl fmt::Display for CorrectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::none() {
            return f.write_str("none");
        }
        if *self == Self::exact() {
            return f.write_str("exact");
        }
        let mut parts = Vec::new();
        for (stage, entry) in [
            (DriveStage::TurnOff, self.turn_off),
            (DriveStage::Plateau, self.plateau),
            (DriveStage::TurnOn, self.turn_on),
        ] {
            let p = stage_prefix(stage);
            match entry {
                StageCorrection::None => {}
                StageCorrection::Variational(l) => parts.push(format!("{p}-cd{l}")),
                StageCorrection::ClosedForm1 => parts.push(format!("{p}-cf1")),
                StageCorrection::ClosedForm2 => parts.push(format!("{p}-cf2")),
                StageCorrection::Exact => parts.push(format!("{p}-exact")),
            }
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for CorrectionScheme {
    type Err = Error;

    /// `none`, `exact`, or `+`-joined `<stage>-<kind>` tokens where stage is
    /// `on`/`mid`/`off` and kind is `cd<ℓ>`, `cf1`, `cf2` or `exact`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownScheme(s.to_string());
        let mut scheme = Self::none();
        let mut seen = [false; 3];
        for token in s.trim().split('+').map(str::trim) {
            match token {
                "none" => continue,
                "exact" => {
                    scheme = Self::exact();
                    seen = [true; 3];
                    continue;
                }
                _ => {}
            }
            let (prefix, kind) = token.split_once('-').ok_or_else(unknown)?;
            let (slot, idx) = match prefix {
                "on" => (&mut scheme.turn_on, 0),
                "mid" => (&mut scheme.plateau, 1),
                "off" => (&mut scheme.turn_off, 2),
                _ => return Err(unknown()),
            };
            if seen[idx] {
                return Err(unknown());
            }
            seen[idx] = true;
            *slot = match kind {
                "cf1" => StageCorrection::ClosedForm1,
                "cf2" => StageCorrection::ClosedForm2,
                "exact" => StageCorrection::Exact,
                k => {
                    let order: usize = k
                        .strip_prefix("cd")
                        .and_then(|o| o.parse().ok())
                        .ok_or_else(unknown)?;
                    if order == 0 {
                        return Err(unknown());
                    }
                    StageCorrection::Variational(order)
                }
            };
        }
        Ok(scheme)
    }
}

impl Serialize for CorrectionScheme {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CorrectionScheme {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Gauge potential for `ctrl` under one stage entry. `None` for no
/// correction.
pub fn stage_agp(
    ops: &SpinOperators,
    ctrl: &StageControl,
    entry: StageCorrection,
) -> Result<Option<OperatorMatrix>> {
    let n_atoms = ops.basis.n_atoms();
    let agp = match entry {
        StageCorrection::None => return Ok(None),
        StageCorrection::Variational(ell) => agp_variational(ctrl, ell)?,
        StageCorrection::Exact => {
            agp_exact(&ctrl.h_a, &ctrl.dh, DEFAULT_GAP_TOL_FACTOR * ctrl.chi)?
        }
        StageCorrection::ClosedForm1 | StageCorrection::ClosedForm2 if n_atoms != 2 => {
            return Err(Error::ClosedFormUnavailable(format!(
                "closed form exists for N = 2 only (N = {n_atoms})"
            )))
        }
        StageCorrection::ClosedForm1 => match ctrl.stage {
            DriveStage::Plateau => {
                let xi1 = xi1_plateau_closed_form(ctrl.chi, ctrl.lambda, ctrl.omega)?;
                ops.sy.scale(xi1 * ctrl.omega)
            }
            DriveStage::TurnOn | DriveStage::TurnOff => {
                let xi1 = xi1_turn_on_closed_form(ctrl.chi, ctrl.beta, ctrl.lambda)?;
                let mut a = anticommutator(&ops.sz, &ops.sy)?.scale(ctrl.chi);
                a.add_scaled(ctrl.beta.into(), &ops.sy);
                a.scale(-xi1)
            }
            DriveStage::Off => return Ok(None),
        },
        StageCorrection::ClosedForm2 => {
            if ctrl.stage != DriveStage::Plateau {
                return Err(Error::ClosedFormUnavailable(format!(
                    "second-order closed form exists for the plateau only, not {}",
                    ctrl.stage
                )));
            }
            second_order_plateau_agp(ops, ctrl.chi, ctrl.lambda, ctrl.omega)?
        }
    };
    Ok(Some(agp))
}

/// Explicit second-order plateau AGP for two atoms.
pub fn second_order_plateau_agp(
    ops: &SpinOperators,
    chi: f64,
    lam: f64,
    om: f64,
) -> Result<OperatorMatrix> {
    let (xi1, xi2) = xi_second_order_closed_form(chi, lam, om)?;
    let (sx, sy, sz) = (&ops.sx, &ops.sy, &ops.sz);
    let sz2 = &ops.sz2;
    let mut a = sy.scale(om * xi1 + xi2 * om * lam * lam + xi2 * om.powi(3));
    let cubic = &(&(sz2 * sy) + &(sy * sz2)) + &(&(sz * sy) * sz).scale(2.0);
    a.add_scaled((xi2 * om * chi * chi).into(), &cubic);
    a.add_scaled(
        (2.0 * xi2 * om * chi * lam).into(),
        &anticommutator(sz, sy)?,
    );
    a.add_scaled((-xi2 * om * om * chi).into(), &anticommutator(sx, sy)?);
    Ok(a)
}

/// `H(t) + λ̇ A_λ` using the stage `t` belongs to.
pub fn cd_hamiltonian(
    params: &DriveParams,
    ops: &SpinOperators,
    t: f64,
    scheme: &CorrectionScheme,
) -> Result<OperatorMatrix> {
    cd_hamiltonian_in(params, ops, params.stage_of(t), t, scheme)
}

/// `H + λ̇ A_λ` evaluated with the formulas of `stage`.
pub fn cd_hamiltonian_in(
    params: &DriveParams,
    ops: &SpinOperators,
    stage: DriveStage,
    t: f64,
    scheme: &CorrectionScheme,
) -> Result<OperatorMatrix> {
    let Some(ctrl) = StageControl::in_stage(params, ops, stage, t) else {
        return Ok(crate::drive::hamiltonian_in(params, ops, stage, t));
    };
    let entry = scheme.for_stage(stage);
    let mut h = ctrl.h_a.clone();
    if let Some(agp) = stage_agp(ops, &ctrl, entry)? {
        h.add_scaled(ctrl.lambda_rate.into(), &agp);
    }
    Ok(h)
}
