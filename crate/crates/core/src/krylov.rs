//! Extended Krylov approximation of `e^{tA} b`.
//!
//! The decoder works in the symmetric setting: with `b_sym = R A b` and
//! `W` an orthonormal basis of `K_{m−1}((γ̃I − A_sym)⁻¹, b_sym)`,
//!
//! ```text
//! f_m = b + Rᵀ (‖b_sym‖ W · tφ₁(tS̃) e₁),   S̃ = Wᵀ A_sym W,
//! ```
//!
//! which equals `‖b‖ V_m e^{tS_m} e₁` for the basis `V_m` of the extended
//! space `span{b, Ab, (γ̃I − A)⁻¹b, …}`. The shift is `γ̃ = γ_opt(m)/t`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{InpaintMask, PixelField};
use crate::gridcore::{dot, norm, phi1, MaskedOperator};
use crate::linalg::jacobi_eigen;
use crate::multigrid::{DirectSolver, Multigrid, MultigridConfig};

/// One row of the optimal-shift table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaRow {
    pub m: usize,
    /// Linear solves per approximation.
    pub lss: usize,
    /// Minimax error `E_m(γ_opt)` of the rational approximation of `φ₁` on `(−∞, 0]`.
    pub error: f64,
    pub gamma_opt: f64,
}

const fn row(m: usize, error: f64, gamma_opt: f64) -> GammaRow {
    GammaRow {
        m,
        lss: m - 2,
        error,
        gamma_opt,
    }
}

/// Optimal shifts and minimax errors for `m = 3..=22`.
pub const GAMMA_TABLE: [GammaRow; 20] = [
    row(3, 2.6e-2, 1.5),
    row(4, 6.6e-3, 3.5),
    row(5, 2.2e-3, 5.5),
    row(6, 6.9e-4, 3.5),
    row(7, 2.0e-4, 5.0),
    row(8, 8.9e-5, 7.0),
    row(9, 2.8e-5, 8.5),
    row(10, 1.0e-5, 6.5),
    row(11, 3.8e-6, 8.5),
    row(12, 1.1e-6, 10.0),
    row(13, 5.3e-7, 8.5),
    row(14, 1.8e-7, 10.0),
    row(15, 5.7e-8, 11.5),
    row(16, 2.5e-8, 10.0),
    row(17, 8.6e-9, 11.5),
    row(18, 3.1e-9, 13.0),
    row(19, 1.3e-9, 11.5),
    row(20, 4.8e-10, 13.0),
    row(21, 1.9e-10, 14.5),
    row(22, 8.3e-11, 16.0),
];

pub const MIN_DIMENSION: usize = 2;
pub const MAX_DIMENSION: usize = 22;

/// Table lookup for `m ∈ 2..=22`.
///
/// `m = 2` needs no solve: the approximation of `φ₁` is a constant, whose
/// best uniform error on `(−∞, 0]` is `1/2`. It borrows the shift of `m = 3`.
pub fn gamma_row(m: usize) -> Result<GammaRow> {
    match m {
        2 => Ok(GammaRow {
            m: 2,
            lss: 0,
            error: 0.5,
            gamma_opt: GAMMA_TABLE[0].gamma_opt,
        }),
        3..=MAX_DIMENSION => Ok(GAMMA_TABLE[m - 3]),
        _ => Err(Error::InvalidParameter(format!(
            "Krylov dimension m must lie in {MIN_DIMENSION}..={MAX_DIMENSION}, got {m}"
        ))),
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("diffusion time must be > 0, got {t}")));
    }
    Ok(())
}

/// `γ̃ = γ_opt(m) / t`.
pub fn choose_shift(m: usize, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(gamma_row(m)?.gamma_opt / t)
}

/// A-priori bound `2 t E_m(γ_opt) ‖b_sym‖` on `‖e^{tA}b − f_m‖`.
pub fn error_bound(m: usize, t: f64, bsym_norm: f64) -> Result<f64> {
    check_time(t)?;
    Ok(2.0 * t * gamma_row(m)?.error * bsym_norm)
}

/// Solver for `(γ̃I − A_sym) x = rhs` on interior vectors.
pub trait ShiftedSolve {
    fn shift(&self) -> f64;
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>>;
}

impl ShiftedSolve for Multigrid {
    fn shift(&self) -> f64 {
        Multigrid::shift(self)
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_interior(rhs)?.0)
    }
}

impl ShiftedSolve for DirectSolver {
    fn shift(&self) -> f64 {
        DirectSolver::shift(self)
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solve_interior(rhs)
    }
}

/// How each new basis vector is orthogonalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orthogonalization {
    /// Against every previous vector, twice.
    #[default]
    Full,
    /// Against the previous two vectors only (the short symmetric recurrence).
    TwoTerm,
}

/// Basis and projection produced by [`symmetric_arnoldi`].
#[derive(Debug, Clone)]
pub struct KrylovState {
    /// Orthonormal interior vectors `w_1, …, w_k` (`k ≤ m − 1`).
    pub basis: Vec<Vec<f64>>,
    /// `S̃ = Wᵀ A_sym W`.
    pub projected: DMatrix<f64>,
    pub b_norm: f64,
    pub bsym_norm: f64,
    pub t: f64,
    pub gamma_scaled: f64,
    pub m: usize,
    /// Shifted solves performed.
    pub solves: usize,
}

impl KrylovState {
    /// `max |WᵀW − I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let k = self.basis.len();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&self.basis[i], &self.basis[j]) - target).abs());
            }
        }
        worst
    }

    /// Coefficients `tφ₁(tS̃) e₁` in the basis `W`.
    pub fn phi_coefficients(&self) -> DVector<f64> {
        let eig = jacobi_eigen(&self.projected);
        let k = self.basis.len();
        let mut c = DVector::zeros(k);
        for (j, &lambda) in eig.values.iter().enumerate() {
            let weight = self.t * phi1(self.t * lambda) * eig.vectors[(0, j)];
            for i in 0..k {
                c[i] += weight * eig.vectors[(i, j)];
            }
        }
        c
    }

    /// The `m × m` matrix `S_m = [[0, 0], [u, S̃]]` with `u = (‖b_sym‖/‖b‖) e₁`.
    pub fn extended_projection(&self) -> DMatrix<f64> {
        let k = self.basis.len();
        let mut s = DMatrix::zeros(k + 1, k + 1);
        if self.b_norm > 0.0 {
            s[(1, 0)] = self.bsym_norm / self.b_norm;
        }
        s.view_mut((1, 1), (k, k)).copy_from(&self.projected);
        s
    }
}

/// Symmetric Arnoldi for `K_{m−1}((γ̃I − A_sym)⁻¹, b_sym)` followed by the
/// explicit projection `S̃ = Wᵀ A_sym W`. Performs `m − 2` shifted solves
/// unless the space becomes invariant earlier.
pub fn symmetric_arnoldi(
    op: &MaskedOperator,
    b: &[f64],
    t: f64,
    m: usize,
    solver: &dyn ShiftedSolve,
    orth: Orthogonalization,
) -> Result<KrylovState> {
    check_time(t)?;
    gamma_row(m)?;
    let b_sym = op.b_sym(b)?;
    let bsym_norm = norm(&b_sym);
    if bsym_norm == 0.0 {
        return Err(Error::EmptyMask);
    }
    let mut basis: Vec<Vec<f64>> = vec![b_sym.iter().map(|v| v / bsym_norm).collect()];
    let mut solves = 0;
    while basis.len() < m - 1 {
        let mut w = solver.solve(basis.last().expect("non-empty"))?;
        solves += 1;
        let before = norm(&w);
        let passes = match orth {
            Orthogonalization::Full => 2,
            Orthogonalization::TwoTerm => 1,
        };
        let first = match orth {
            Orthogonalization::Full => 0,
            Orthogonalization::TwoTerm => basis.len().saturating_sub(2),
        };
        for _ in 0..passes {
            for v in &basis[first..] {
                let h = dot(&w, v);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= h * vi;
                }
            }
        }
        let after = norm(&w);
        if !(after > 1e-12 * before) {
            // Invariant subspace: the basis already spans the exact solution.
            break;
        }
        w.iter_mut().for_each(|v| *v /= after);
        basis.push(w);
    }

    let applied: Vec<Vec<f64>> = basis
        .iter()
        .map(|w| op.apply_a_sym(w))
        .collect::<Result<_>>()?;
    let k = basis.len();
    let mut projected = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = 0.5 * (dot(&basis[i], &applied[j]) + dot(&basis[j], &applied[i]));
            projected[(i, j)] = v;
            projected[(j, i)] = v;
        }
    }
    Ok(KrylovState {
        basis,
        projected,
        b_norm: norm(b),
        bsym_norm,
        t,
        gamma_scaled: solver.shift(),
        m,
        solves,
    })
}

/// `f_m = b + Rᵀ(‖b_sym‖ W tφ₁(tS̃) e₁)`. Stored pixels are copied from `b`.
pub fn assemble_approximation(state: &KrylovState, op: &MaskedOperator, b: &[f64]) -> Result<Vec<f64>> {
    let c = state.phi_coefficients();
    let mut x = vec![0.0; op.interior_len()];
    for (w, &cj) in state.basis.iter().zip(c.iter()) {
        let s = state.bsym_norm * cj;
        for (xi, wi) in x.iter_mut().zip(w) {
            *xi += s * wi;
        }
    }
    let mut out = b.to_vec();
    op.embed_add(&mut out, &x)?;
    Ok(out)
}

/// Result of approximating one channel.
#[derive(Debug, Clone)]
pub struct ChannelApproximation {
    pub values: Vec<f64>,
    pub solves: usize,
    pub bsym_norm: f64,
    pub basis_size: usize,
}

/// `f_m ≈ e^{tA} b` for one channel. A channel without interior forcing
/// (`b_sym = 0`) is already stationary and is returned unchanged.
pub fn approximate_channel(
    op: &MaskedOperator,
    b: &[f64],
    t: f64,
    m: usize,
    solver: &dyn ShiftedSolve,
) -> Result<ChannelApproximation> {
    check_time(t)?;
    gamma_row(m)?;
    let b_sym = op.b_sym(b)?;
    if op.interior_len() == 0 || b_sym.iter().all(|&v| v == 0.0) {
        return Ok(ChannelApproximation {
            values: b.to_vec(),
            solves: 0,
            bsym_norm: 0.0,
            basis_size: 0,
        });
    }
    let state = symmetric_arnoldi(op, b, t, m, solver, Orthogonalization::Full)?;
    let values = assemble_approximation(&state, op, b)?;
    Ok(ChannelApproximation {
        values,
        solves: state.solves,
        bsym_norm: state.bsym_norm,
        basis_size: state.basis.len(),
    })
}

/// Dense Arnoldi-like construction of the extended basis `V_m` and
/// `S_m = V_mᵀ A V_m` with exact resolvent solves. Small grids only.
pub fn arnoldi_like(op: &MaskedOperator, b: &[f64], m: usize, gamma: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("m must be >= 2, got {m}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("shift must be > 0, got {gamma}")));
    }
    let n = op.mask().len();
    let a = DMatrix::from_row_slice(n, n, &op.dense_a()?);
    let shifted = DMatrix::<f64>::identity(n, n) * gamma - &a;
    let lu = shifted.clone().lu();
    let b = DVector::from_column_slice(b);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Err(Error::InvalidParameter("b must be nonzero".into()));
    }
    let mut vs: Vec<DVector<f64>> = vec![&b / b_norm];
    while vs.len() < m {
        let k = vs.len();
        let mut v = match k {
            1 => &a * &vs[0],
            _ => {
                let rhs = if k == 2 { &vs[0] } else { &vs[k - 1] };
                let mut x = lu.solve(rhs).ok_or(Error::NotPositiveDefinite)?;
                // One step of iterative refinement.
                let r = rhs - &shifted * &x;
                x += lu.solve(&r).ok_or(Error::NotPositiveDefinite)?;
                x
            }
        };
        for _ in 0..2 {
            for u in &vs {
                let h = v.dot(u);
                v -= u * h;
            }
        }
        let nv = v.norm();
        if nv == 0.0 {
            break;
        }
        vs.push(v / nv);
    }
    let v = DMatrix::from_columns(&vs);
    let s = v.transpose() * &a * &v;
    Ok((v, s))
}

/// Decoder settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeParams {
    pub t: f64,
    pub m: usize,
    pub multigrid: MultigridConfig,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            t: 1e7,
            m: 3,
            multigrid: MultigridConfig::default(),
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        check_time(self.t)?;
        gamma_row(self.m)?;
        self.multigrid.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub t: f64,
    pub m: usize,
    pub gamma_scaled: f64,
    /// Shifted solves per channel.
    pub solves: Vec<usize>,
    pub levels: usize,
}

impl DecodeReport {
    pub fn total_solves(&self) -> usize {
        self.solves.iter().sum()
    }
}

/// Reconstructs an image from its compressed form `b = c∘f` by evolving the
/// masked heat equation to time `t`. Values are not clamped.
pub fn decode(b: &PixelField, mask: &InpaintMask, params: &DecodeParams) -> Result<(PixelField, DecodeReport)> {
    params.validate()?;
    mask.check_shape(b.shape())?;
    if !mask.has_stored() {
        return Err(Error::EmptyMask);
    }
    let gamma = choose_shift(params.m, params.t)?;
    let op = MaskedOperator::new(mask.clone(), b.spacing(), gamma)?;
    let mut report = DecodeReport {
        t: params.t,
        m: params.m,
        gamma_scaled: gamma,
        solves: vec![0; b.channels()],
        levels: 0,
    };
    if op.interior_len() == 0 {
        return Ok((b.clone(), report));
    }
    let mg = Multigrid::new(mask, b.spacing(), gamma, &params.multigrid)?;
    report.levels = mg.levels().len();
    let results: Vec<ChannelApproximation> = (0..b.channels())
        .into_par_iter()
        .map(|c| approximate_channel(&op, b.channel(c), params.t, params.m, &mg))
        .collect::<Result<_>>()?;
    let mut planes = Vec::with_capacity(results.len());
    for (c, r) in results.into_iter().enumerate() {
        report.solves[c] = r.solves;
        planes.push(r.values);
    }
    let out = PixelField::from_planes(b.width(), b.height(), planes)?.with_spacing(b.spacing());
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Spacing;
    use crate::linalg::expm;

    fn example() -> (MaskedOperator, Vec<f64>) {
        let mask = InpaintMask::from_rows(&[&[0, 0, 1], &[0, 1, 0]]).unwrap();
        let b = vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        (MaskedOperator::unshifted(mask), b)
    }

    fn direct(op: &MaskedOperator, gamma: f64) -> DirectSolver {
        DirectSolver::new(op.mask(), op.spacing(), gamma).unwrap()
    }

    #[test]
    fn table_rows_from_the_literature() {
        let r3 = gamma_row(3).unwrap();
        assert_eq!((r3.lss, r3.error, r3.gamma_opt), (1, 2.6e-2, 1.5));
        let r10 = gamma_row(10).unwrap();
        assert_eq!((r10.lss, r10.error, r10.gamma_opt), (8, 1.0e-5, 6.5));
        assert_eq!(gamma_row(12).unwrap().gamma_opt, 10.0);
        assert_eq!(gamma_row(22).unwrap().error, 8.3e-11);
        assert!(gamma_row(1).is_err());
        assert!(gamma_row(23).is_err());
        for pair in GAMMA_TABLE.windows(2) {
            assert!(pair[1].error < pair[0].error);
        }
    }

    #[test]
    fn shift_examples() {
        assert!((choose_shift(3, 1e7).unwrap() - 1.5e-7).abs() < 1e-22);
        assert_eq!(choose_shift(12, 1.0).unwrap(), 10.0);
        let t = 37.0;
        assert_eq!(choose_shift(5, 2.0 * t).unwrap(), choose_shift(5, t).unwrap() / 2.0);
        assert!(choose_shift(3, 0.0).is_err());
    }

    #[test]
    fn bound_examples() {
        assert!((error_bound(3, 25.0, 2.0).unwrap() - 2.0 * 25.0 * 2.6e-2 * 2.0).abs() < 1e-12);
        assert_eq!(error_bound(10, 1e5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn m_two_uses_no_solves() {
        let (op, b) = example();
        let solver = direct(&op, 0.1);
        let s = symmetric_arnoldi(&op, &b, 1.0, 2, &solver, Orthogonalization::Full).unwrap();
        assert_eq!(s.solves, 0);
        assert_eq!(s.basis.len(), 1);
        let w = &s.basis[0];
        let rq = dot(w, &op.apply_a_sym(w).unwrap());
        assert!((s.projected[(0, 0)] - rq).abs() < 1e-15);
    }

    #[test]
    fn m_three_spans_b_sym_and_its_resolvent() {
        let (op, b) = example();
        let gamma = 0.7;
        let solver = direct(&op, gamma);
        let s = symmetric_arnoldi(&op, &b, 1.0, 3, &solver, Orthogonalization::Full).unwrap();
        assert_eq!(s.solves, 1);
        // Gram–Schmidt by hand.
        let b_sym = op.b_sym(&b).unwrap();
        let n0 = norm(&b_sym);
        let w1: Vec<f64> = b_sym.iter().map(|v| v / n0).collect();
        let mut z = solver.solve_interior(&w1).unwrap();
        let h = dot(&z, &w1);
        z.iter_mut().zip(&w1).for_each(|(zi, wi)| *zi -= h * wi);
        let nz = norm(&z);
        z.iter_mut().for_each(|v| *v /= nz);
        for (a, e) in s.basis[0].iter().zip(&w1) {
            assert!((a - e).abs() < 1e-14);
        }
        for (a, e) in s.basis[1].iter().zip(&z) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn example_reaches_steady_state_at_large_time() {
        let (op, b) = example();
        let t = 1e7;
        let gamma = choose_shift(3, t).unwrap();
        let solver = direct(&op, gamma);
        let approx = approximate_channel(&op, &b, t, 3, &solver).unwrap();
        // Steady state: -A_sym⁻¹ b_sym.
        let steady = DirectSolver::new(op.mask(), Spacing::UNIT, 0.0)
            .unwrap()
            .solve_interior(&op.b_sym(&b).unwrap())
            .unwrap();
        for (k, &i) in op.interior_pixels().iter().enumerate() {
            let v = approx.values[i];
            // The shifted space only contains the steady state up to O(γ̃).
            assert!(v > 0.0 && v <= 1.0 + 1e-6, "{v}");
            assert!((v - steady[k]).abs() < 1e-6);
        }
        assert_eq!(approx.values[2], 1.0);
        assert_eq!(approx.values[4], 1.0);
    }

    #[test]
    fn projection_is_negative_definite_within_spectrum() {
        let bits = (0..64).map(|i| (i * 5) % 7 == 0).collect();
        let mask = InpaintMask::from_bits(8, 8, bits).unwrap();
        let op = MaskedOperator::unshifted(mask);
        let b: Vec<f64> = (0..64)
            .map(|i| if op.mask().is_stored(i) { 10.0 + (i % 9) as f64 } else { 0.0 })
            .collect();
        let gamma = 0.4;
        let s = symmetric_arnoldi(&op, &b, 5.0, 6, &direct(&op, gamma), Orthogonalization::Full).unwrap();
        assert!(s.orthogonality_defect() < 1e-10);
        let n = op.interior_len();
        let dense = DMatrix::from_row_slice(n, n, &op.dense_a_sym().unwrap());
        let spec = dense.symmetric_eigen().eigenvalues;
        let (lo, hi) = (spec.min(), spec.max());
        assert!(hi < 0.0);
        for l in jacobi_eigen(&s.projected).values.iter() {
            assert!(*l < 0.0 && *l >= lo - 1e-10 && *l <= hi + 1e-10, "{l} not in [{lo}, {hi}]");
        }
    }

    #[test]
    fn assembly_agrees_with_augmented_exponential() {
        let bits = (0..48).map(|i| i % 5 == 1).collect();
        let mask = InpaintMask::from_bits(8, 6, bits).unwrap();
        let op = MaskedOperator::unshifted(mask);
        let b: Vec<f64> = (0..48)
            .map(|i| if op.mask().is_stored(i) { (i * 13 % 17) as f64 } else { 0.0 })
            .collect();
        let t = 3.0;
        let m = 5;
        let solver = direct(&op, choose_shift(m, t).unwrap());
        let s = symmetric_arnoldi(&op, &b, t, m, &solver, Orthogonalization::Full).unwrap();
        let f = assemble_approximation(&s, &op, &b).unwrap();
        let e = expm(&(s.extended_projection() * t));
        let mut g: Vec<f64> = b.iter().map(|v| v * e[(0, 0)]).collect();
        for (j, w) in s.basis.iter().enumerate() {
            let coef = s.b_norm * e[(j + 1, 0)];
            for (k, &i) in op.interior_pixels().iter().enumerate() {
                g[i] += coef * w[k];
            }
        }
        let scale = norm(&f);
        for (x, y) in f.iter().zip(&g) {
            assert!((x - y).abs() < 1e-11 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn two_term_recurrence_matches_full_reorthogonalisation() {
        let bits = (0..100).map(|i| i % 6 == 0 || i % 9 == 4).collect();
        let mask = InpaintMask::from_bits(10, 10, bits).unwrap();
        let op = MaskedOperator::unshifted(mask);
        let b: Vec<f64> = (0..100)
            .map(|i| if op.mask().is_stored(i) { 50.0 + (i % 11) as f64 } else { 0.0 })
            .collect();
        let t = 50.0;
        for m in [4, 6, 8] {
            let solver = direct(&op, choose_shift(m, t).unwrap());
            let full = symmetric_arnoldi(&op, &b, t, m, &solver, Orthogonalization::Full).unwrap();
            let short = symmetric_arnoldi(&op, &b, t, m, &solver, Orthogonalization::TwoTerm).unwrap();
            let f1 = assemble_approximation(&full, &op, &b).unwrap();
            let f2 = assemble_approximation(&short, &op, &b).unwrap();
            let diff: f64 = f1.iter().zip(&f2).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            assert!(diff <= 1e-8 * norm(&f1), "m={m}: {diff}");
        }
    }

    #[test]
    fn arnoldi_like_structure() {
        let (op, b) = example();
        let (v, s) = arnoldi_like(&op, &b, 3, 0.9).unwrap();
        assert_eq!(s[(0, 0)], 0.0);
        let ortho = v.transpose() * &v - DMatrix::identity(3, 3);
        assert!(ortho.amax() < 1e-13);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (op, b) = example();
        let solver = direct(&op, 0.1);
        assert!(symmetric_arnoldi(&op, &b, 1.0, 23, &solver, Orthogonalization::Full).is_err());
        assert!(symmetric_arnoldi(&op, &b, -1.0, 3, &solver, Orthogonalization::Full).is_err());
        let zero = vec![0.0; 6];
        assert!(matches!(
            symmetric_arnoldi(&op, &zero, 1.0, 3, &solver, Orthogonalization::Full),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn decode_all_stored_is_identity() {
        let f = PixelField::from_planes(3, 2, vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; 3]).unwrap();
        let (out, report) = decode(&f, &InpaintMask::full(3, 2), &DecodeParams::default()).unwrap();
        assert_eq!(out, f);
        assert_eq!(report.total_solves(), 0);
    }

    #[test]
    fn decode_counts_one_solve_per_channel_by_default() {
        let w = 20;
        let bits: Vec<bool> = (0..w * w).map(|i| i % 7 == 0).collect();
        let mask = InpaintMask::from_bits(w, w, bits).unwrap();
        let planes = (0..3)
            .map(|c| {
                (0..w * w)
                    .map(|i| if mask.is_stored(i) { ((i * (c + 3)) % 200) as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        let b = PixelField::from_planes(w, w, planes).unwrap();
        let (out, report) = decode(&b, &mask, &DecodeParams::default()).unwrap();
        assert_eq!(report.solves, vec![1, 1, 1]);
        assert!((report.gamma_scaled - 1.5e-7).abs() < 1e-20);
        for c in 0..3 {
            for i in mask.stored_indices() {
                assert_eq!(out.channel(c)[i].to_bits(), b.channel(c)[i].to_bits());
            }
        }
    }

    #[test]
    fn decode_rejects_empty_mask() {
        let b = PixelField::zeros(4, 4, 1).unwrap();
        assert!(matches!(
            decode(&b, &InpaintMask::empty(4, 4), &DecodeParams::default()),
            Err(Error::EmptyMask)
        ));
    }
}
