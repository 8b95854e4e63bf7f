//! Baseline integrators and exact solutions of `y' = Ay, y(0) = b`.
//!
//! Both time-stepping schemes reduce each step to one interior solve with
//! `γI − A_sym` via
//!
//! ```text
//! (γI − A)⁻¹ = (1/γ) I + (1/γ) Rᵀ (γI − A_sym)⁻¹ R A,
//! ```
//!
//! so their solve counts are directly comparable with the Krylov decoder's.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{InpaintMask, PixelField, Spacing};
use crate::gridcore::{norm, phi1, MaskedOperator, DENSE_CAP};
use crate::krylov::{approximate_channel, choose_shift, error_bound, ShiftedSolve};
use crate::multigrid::{Multigrid, MultigridConfig};

fn check_steps(t: f64, n: usize) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be > 0, got {t}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("step count must be >= 1".into()));
    }
    Ok(())
}

/// One step `y ← y + k·Rᵀ (γI − A_sym)⁻¹ R A y` per iteration.
fn rational_steps(op: &MaskedOperator, b: &[f64], n: usize, k: f64, solver: &dyn ShiftedSolve) -> Result<Vec<f64>> {
    let mut y = b.to_vec();
    for _ in 0..n {
        let rhs = op.restricted_a(&y)?;
        let s = solver.solve(&rhs)?;
        for (&i, v) in op.interior_pixels().iter().zip(s) {
            y[i] += k * v;
        }
    }
    Ok(y)
}

/// `(γ(γI − A)⁻¹)ⁿ b` with `γ = n/t`. `solver` must carry that shift.
pub fn implicit_euler_channel(
    op: &MaskedOperator,
    b: &[f64],
    t: f64,
    n: usize,
    solver: &dyn ShiftedSolve,
) -> Result<Vec<f64>> {
    check_steps(t, n)?;
    check_solver_shift(solver, n as f64 / t)?;
    rational_steps(op, b, n, 1.0, solver)
}

/// `((γI + A)(γI − A)⁻¹)ⁿ b` with `γ = 2n/t`. `solver` must carry that shift.
pub fn crank_nicolson_channel(
    op: &MaskedOperator,
    b: &[f64],
    t: f64,
    n: usize,
    solver: &dyn ShiftedSolve,
) -> Result<Vec<f64>> {
    check_steps(t, n)?;
    check_solver_shift(solver, 2.0 * n as f64 / t)?;
    rational_steps(op, b, n, 2.0, solver)
}

fn check_solver_shift(solver: &dyn ShiftedSolve, expected: f64) -> Result<()> {
    let s = solver.shift();
    if (s - expected).abs() > 1e-12 * expected {
        return Err(Error::InvalidParameter(format!(
            "solver shift {s} does not match the step shift {expected}"
        )));
    }
    Ok(())
}

fn per_channel(
    b: &PixelField,
    mask: &InpaintMask,
    shift: f64,
    config: &MultigridConfig,
    step: impl Fn(&MaskedOperator, &[f64], &Multigrid) -> Result<Vec<f64>>,
) -> Result<PixelField> {
    mask.check_shape(b.shape())?;
    let op = MaskedOperator::new(mask.clone(), b.spacing(), shift)?;
    if op.interior_len() == 0 {
        return Ok(b.clone());
    }
    let mg = Multigrid::new(mask, b.spacing(), shift, config)?;
    let planes = (0..b.channels())
        .map(|c| step(&op, b.channel(c), &mg))
        .collect::<Result<Vec<_>>>()?;
    Ok(PixelField::from_planes(b.width(), b.height(), planes)?.with_spacing(b.spacing()))
}

/// Implicit Euler with `n` multigrid-backed steps.
pub fn implicit_euler(b: &PixelField, mask: &InpaintMask, t: f64, n: usize, config: &MultigridConfig) -> Result<PixelField> {
    check_steps(t, n)?;
    per_channel(b, mask, n as f64 / t, config, |op, ch, mg| {
        implicit_euler_channel(op, ch, t, n, mg)
    })
}

/// Crank–Nicolson with `n` multigrid-backed steps.
pub fn crank_nicolson(b: &PixelField, mask: &InpaintMask, t: f64, n: usize, config: &MultigridConfig) -> Result<PixelField> {
    check_steps(t, n)?;
    per_channel(b, mask, 2.0 * n as f64 / t, config, |op, ch, mg| {
        crank_nicolson_channel(op, ch, t, n, mg)
    })
}

/// The `t → ∞` limit: harmonic interpolation of the stored pixels.
pub fn steady_state(b: &PixelField, mask: &InpaintMask, config: &MultigridConfig) -> Result<PixelField> {
    mask.check_shape(b.shape())?;
    if !mask.has_stored() {
        return Err(Error::EmptyMask);
    }
    if mask.interior_count() == 0 {
        return Ok(b.clone());
    }
    let mg = Multigrid::new(mask, b.spacing(), 0.0, config)?;
    let planes = (0..b.channels())
        .map(|c| {
            let rhs = b.masked(mask)?.channel(c).to_vec();
            Ok(mg.full_multigrid(&rhs)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PixelField::from_planes(b.width(), b.height(), planes)?.with_spacing(b.spacing()))
}

/// The all-white frame test case: value 255 on the one-pixel border, zero
/// inside, and the border as mask.
pub fn frame_problem(n: usize) -> Result<(PixelField, InpaintMask)> {
    if n < 3 {
        return Err(Error::EmptyInterior);
    }
    let on_frame = |i: usize| {
        let (x, y) = (i % n, i / n);
        x == 0 || y == 0 || x == n - 1 || y == n - 1
    };
    let mask = InpaintMask::from_bits(n, n, (0..n * n).map(on_frame).collect())?;
    let values = (0..n * n).map(|i| if on_frame(i) { 255.0 } else { 0.0 }).collect();
    Ok((PixelField::from_gray(n, n, values)?, mask))
}

#[derive(Debug, Clone)]
enum Spectrum {
    /// `A_sym = Q Λ Qᵀ`, coefficients `Qᵀ b_sym`.
    Dense {
        values: DVector<f64>,
        vectors: DMatrix<f64>,
        coeffs: DVector<f64>,
    },
    /// Frame interiors: `A_sym X = T X + X T` with `T = tridiag(1, −2, 1)`,
    /// diagonalised by the discrete sine basis `V`; coefficients `Vᵀ B V`.
    Separable {
        values: Vec<f64>,
        basis: DMatrix<f64>,
        coeffs: DMatrix<f64>,
    },
}

/// Exact `e^{tA} b = b + Rᵀ(tφ₁(tA_sym) b_sym)` via an eigendecomposition of `A_sym`.
#[derive(Debug, Clone)]
pub struct SpectralOracle {
    op: MaskedOperator,
    b: Vec<f64>,
    bsym_norm: f64,
    spectrum: Spectrum,
}

impl SpectralOracle {
    /// Dense symmetric eigendecomposition; at most `DENSE_CAP` interior unknowns.
    pub fn dense(b: &[f64], mask: &InpaintMask, spacing: Spacing) -> Result<Self> {
        let op = MaskedOperator::new(mask.clone(), spacing, 0.0)?;
        let n = op.interior_len();
        if n > DENSE_CAP {
            return Err(Error::SizeCapExceeded { size: n, cap: DENSE_CAP });
        }
        let mut dense = vec![0.0; n * n];
        // `dense_a_sym` caps the full grid; assemble directly for larger grids.
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let col = op.apply_a_sym(&e)?;
            for (j, v) in col.into_iter().enumerate() {
                dense[j * n + k] = v;
            }
        }
        let b_sym = op.b_sym(b)?;
        let eig = DMatrix::from_row_slice(n, n, &dense).symmetric_eigen();
        let coeffs = eig.eigenvectors.transpose() * DVector::from_column_slice(&b_sym);
        Ok(SpectralOracle {
            bsym_norm: norm(&b_sym),
            op,
            b: b.to_vec(),
            spectrum: Spectrum::Dense {
                values: eig.eigenvalues,
                vectors: eig.eigenvectors,
                coeffs,
            },
        })
    }

    /// Closed-form spectrum of the `n × n` frame problem.
    pub fn frame(n: usize) -> Result<Self> {
        let (b, mask) = frame_problem(n)?;
        let op = MaskedOperator::new(mask, Spacing::UNIT, 0.0)?;
        let k = n - 2;
        let h = std::f64::consts::PI / (k + 1) as f64;
        let values: Vec<f64> = (1..=k).map(|j| -4.0 * (0.5 * j as f64 * h).sin().powi(2)).collect();
        let scale = (2.0 / (k + 1) as f64).sqrt();
        let basis = DMatrix::from_fn(k, k, |i, j| scale * (((i + 1) * (j + 1)) as f64 * h).sin());
        let b_sym = op.b_sym(b.channel(0))?;
        let bmat = DMatrix::from_row_slice(k, k, &b_sym);
        let coeffs = basis.transpose() * bmat * &basis;
        Ok(SpectralOracle {
            bsym_norm: norm(&b_sym),
            op,
            b: b.into_planar(),
            spectrum: Spectrum::Separable { values, basis, coeffs },
        })
    }

    pub fn initial(&self) -> &[f64] {
        &self.b
    }

    pub fn mask(&self) -> &InpaintMask {
        self.op.mask()
    }

    pub fn bsym_norm(&self) -> f64 {
        self.bsym_norm
    }

    /// Smallest and largest eigenvalue of `A_sym`.
    pub fn spectral_range(&self) -> (f64, f64) {
        match &self.spectrum {
            Spectrum::Dense { values, .. } => (values.min(), values.max()),
            Spectrum::Separable { values, .. } => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (2.0 * lo, 2.0 * hi)
            }
        }
    }

    /// `b + Rᵀ g(A_sym) b_sym` for a scalar function `g`.
    fn apply(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let x: Vec<f64> = match &self.spectrum {
            Spectrum::Dense { values, vectors, coeffs } => {
                let scaled = DVector::from_iterator(values.len(), values.iter().zip(coeffs.iter()).map(|(&l, &c)| g(l) * c));
                (vectors * scaled).iter().copied().collect()
            }
            Spectrum::Separable { values, basis, coeffs } => {
                let k = values.len();
                let scaled = DMatrix::from_fn(k, k, |i, j| g(values[i] + values[j]) * coeffs[(i, j)]);
                let x = basis * scaled * basis.transpose();
                // Row-major interior ordering.
                let mut out = Vec::with_capacity(k * k);
                for r in 0..k {
                    for c in 0..k {
                        out.push(x[(r, c)]);
                    }
                }
                out
            }
        };
        let mut out = self.b.clone();
        self.op.embed_add(&mut out, &x).expect("interior length");
        out
    }

    pub fn expm_action(&self, t: f64) -> Vec<f64> {
        self.apply(|l| t * phi1(t * l))
    }

    /// `b − Rᵀ A_sym⁻¹ b_sym`.
    pub fn steady_state(&self) -> Vec<f64> {
        self.apply(|l| -1.0 / l)
    }
}

/// Exact `e^{tA} b` for a single-channel field by dense eigendecomposition.
pub fn dense_oracle_expm(b: &PixelField, mask: &InpaintMask, t: f64) -> Result<PixelField> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    mask.check_shape(b.shape())?;
    let planes = (0..b.channels())
        .map(|c| {
            if t == 0.0 {
                return Ok(b.channel(c).to_vec());
            }
            Ok(SpectralOracle::dense(b.channel(c), mask, b.spacing())?.expm_action(t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PixelField::from_planes(b.width(), b.height(), planes)?.with_spacing(b.spacing()))
}

/// Euclidean relative error `‖a − reference‖ / ‖reference‖`.
pub fn relative_error(a: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(reference);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// One benchmark sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub method: String,
    pub t: f64,
    pub n_solves: usize,
    pub rel_error: f64,
    pub wall_time: f64,
}

pub const BENCH_CSV_HEADER: &str = "method,t,n_solves,rel_error,wall_time_s";

pub fn bench_csv(rows: &[BenchResult]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{:e},{},{:e},{:.6}", r.method, r.t, r.n_solves, r.rel_error, r.wall_time);
    }
    out
}

/// Benchmark grid over the frame problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub size: usize,
    pub times: Vec<f64>,
    pub krylov_m: Vec<usize>,
    pub steps: Vec<usize>,
    pub multigrid: MultigridConfig,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan {
            size: 64,
            times: vec![10.0, 1e2, 1e3, 1e4],
            krylov_m: (3..=10).collect(),
            steps: vec![1, 2, 4, 8, 16, 32, 64, 128],
            multigrid: MultigridConfig::default(),
        }
    }
}

/// Krylov decoder, implicit Euler and Crank–Nicolson against the exact
/// solution of the frame problem.
pub fn run_frame_bench(plan: &BenchPlan) -> Result<Vec<BenchResult>> {
    let oracle = SpectralOracle::frame(plan.size)?;
    let b = oracle.initial().to_vec();
    let mask = oracle.mask().clone();
    let mut rows = Vec::new();
    for &t in &plan.times {
        let exact = oracle.expm_action(t);
        for &m in &plan.krylov_m {
            let start = Instant::now();
            let gamma = choose_shift(m, t)?;
            let op = MaskedOperator::new(mask.clone(), Spacing::UNIT, gamma)?;
            let mg = Multigrid::new(&mask, Spacing::UNIT, gamma, &plan.multigrid)?;
            let approx = approximate_channel(&op, &b, t, m, &mg)?;
            rows.push(BenchResult {
                method: "krylov".into(),
                t,
                n_solves: approx.solves,
                rel_error: relative_error(&approx.values, &exact),
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
        for &n in &plan.steps {
            for (name, shift) in [("implicit_euler", n as f64 / t), ("crank_nicolson", 2.0 * n as f64 / t)] {
                let start = Instant::now();
                let op = MaskedOperator::new(mask.clone(), Spacing::UNIT, shift)?;
                let mg = Multigrid::new(&mask, Spacing::UNIT, shift, &plan.multigrid)?;
                let y = if name == "implicit_euler" {
                    implicit_euler_channel(&op, &b, t, n, &mg)?
                } else {
                    crank_nicolson_channel(&op, &b, t, n, &mg)?
                };
                rows.push(BenchResult {
                    method: name.into(),
                    t,
                    n_solves: n,
                    rel_error: relative_error(&y, &exact),
                    wall_time: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(rows)
}

/// One row of the a-priori bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub m: usize,
    pub t: f64,
    pub error: f64,
    pub bound: f64,
}

impl BoundRow {
    pub fn holds(&self) -> bool {
        self.error <= self.bound
    }
}

pub const BOUND_CSV_HEADER: &str = "m,t,error,bound,holds";

pub fn bound_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from(BOUND_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{:e},{:e},{:e},{}", r.m, r.t, r.error, r.bound, r.holds());
    }
    out
}

/// Multigrid-backed Krylov error on the `size × size` frame problem against
/// the exact solution, next to `2tE_m‖b_sym‖`.
pub fn run_bound_check(size: usize, times: &[f64], ms: &[usize], config: &MultigridConfig) -> Result<Vec<BoundRow>> {
    let oracle = SpectralOracle::frame(size)?;
    let b = oracle.initial().to_vec();
    let mask = oracle.mask().clone();
    let mut rows = Vec::new();
    for &t in times {
        let exact = oracle.expm_action(t);
        for &m in ms {
            let gamma = choose_shift(m, t)?;
            let op = MaskedOperator::new(mask.clone(), Spacing::UNIT, gamma)?;
            let mg = Multigrid::new(&mask, Spacing::UNIT, gamma, config)?;
            let approx = approximate_channel(&op, &b, t, m, &mg)?;
            let error = approx.values.iter().zip(&exact).map(|(a, e)| (a - e).powi(2)).sum::<f64>().sqrt();
            rows.push(BoundRow {
                m,
                t,
                error,
                bound: error_bound(m, t, oracle.bsym_norm())?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multigrid::DirectSolver;

    #[test]
    fn frame_problem_shapes() {
        let (b, mask) = frame_problem(3).unwrap();
        assert_eq!(mask.interior_count(), 1);
        assert_eq!(b.channel(0)[4], 0.0);
        assert!(matches!(frame_problem(2), Err(Error::EmptyInterior)));
        let (_, m) = frame_problem(1024).unwrap();
        assert_eq!(m.interior_count(), 1022 * 1022);
    }

    #[test]
    fn three_pixel_row_interpolates_linearly() {
        let b = PixelField::from_gray(3, 1, vec![0.0, 0.0, 255.0]).unwrap();
        let mask = InpaintMask::from_rows(&[&[1, 0, 1]]).unwrap();
        let s = steady_state(&b, &mask, &MultigridConfig::default()).unwrap();
        assert!((s.channel(0)[1] - 127.5).abs() < 1e-9);
    }

    #[test]
    fn frame_of_three_has_steady_state_255() {
        let (b, mask) = frame_problem(3).unwrap();
        let s = steady_state(&b, &mask, &MultigridConfig::default()).unwrap();
        assert!((s.channel(0)[4] - 255.0).abs() < 1e-9);
        let o = SpectralOracle::frame(3).unwrap();
        assert!((o.steady_state()[4] - 255.0).abs() < 1e-12);
    }

    #[test]
    fn separable_and_dense_oracles_agree() {
        let n = 12;
        let frame = SpectralOracle::frame(n).unwrap();
        let dense = SpectralOracle::dense(frame.initial(), frame.mask(), Spacing::UNIT).unwrap();
        for t in [0.5, 10.0, 1e3] {
            let a = frame.expm_action(t);
            let d = dense.expm_action(t);
            assert!(relative_error(&a, &d) < 1e-12, "t={t}");
        }
        let (lo_f, hi_f) = frame.spectral_range();
        let (lo_d, hi_d) = dense.spectral_range();
        assert!((lo_f - lo_d).abs() < 1e-12 && (hi_f - hi_d).abs() < 1e-12);
    }

    #[test]
    fn dense_oracle_limits() {
        let bits = (0..30).map(|i| i % 4 == 0).collect();
        let mask = InpaintMask::from_bits(6, 5, bits).unwrap();
        let b = PixelField::from_gray(6, 5, (0..30).map(|i| if i % 4 == 0 { i as f64 } else { 0.0 }).collect()).unwrap();
        assert_eq!(dense_oracle_expm(&b, &mask, 0.0).unwrap(), b);
        let far = dense_oracle_expm(&b, &mask, 1e12).unwrap();
        let steady = steady_state(&b, &mask, &MultigridConfig::default()).unwrap();
        assert!(relative_error(far.channel(0), steady.channel(0)) < 1e-8);
    }

    #[test]
    fn oracle_commutes_with_reflection() {
        let (w, h) = (7, 5);
        let bits: Vec<bool> = (0..w * h).map(|i| (i * 3) % 8 == 1).collect();
        let vals: Vec<f64> = (0..w * h).map(|i| if bits[i] { (i * 11 % 23) as f64 } else { 0.0 }).collect();
        let mirror = |v: &[bool]| -> Vec<bool> { (0..w * h).map(|i| v[(i / w) * w + (w - 1 - i % w)]).collect() };
        let mirror_f = |v: &[f64]| -> Vec<f64> { (0..w * h).map(|i| v[(i / w) * w + (w - 1 - i % w)]).collect() };
        let mask = InpaintMask::from_bits(w, h, bits.clone()).unwrap();
        let mask_r = InpaintMask::from_bits(w, h, mirror(&bits)).unwrap();
        let a = SpectralOracle::dense(&vals, &mask, Spacing::UNIT).unwrap().expm_action(3.0);
        let b = SpectralOracle::dense(&mirror_f(&vals), &mask_r, Spacing::UNIT).unwrap().expm_action(3.0);
        assert!(relative_error(&mirror_f(&a), &b) < 1e-12);
    }

    #[test]
    fn all_stored_returns_input() {
        let b = PixelField::from_gray(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = InpaintMask::full(2, 2);
        let cfg = MultigridConfig::default();
        assert_eq!(implicit_euler(&b, &mask, 5.0, 3, &cfg).unwrap(), b);
        assert_eq!(crank_nicolson(&b, &mask, 5.0, 3, &cfg).unwrap(), b);
    }

    #[test]
    fn solver_shift_must_match_step() {
        let (b, mask) = frame_problem(5).unwrap();
        let op = MaskedOperator::unshifted(mask.clone());
        let wrong = DirectSolver::new(&mask, Spacing::UNIT, 1.0).unwrap();
        assert!(implicit_euler_channel(&op, b.channel(0), 1.0, 3, &wrong).is_err());
        assert!(implicit_euler_channel(&op, b.channel(0), 1.0, 0, &wrong).is_err());
    }

    fn stepper_error(n: usize, t: f64, crank: bool) -> f64 {
        let side = 32;
        let oracle = SpectralOracle::frame(side).unwrap();
        let exact = oracle.expm_action(t);
        let shift = if crank { 2.0 * n as f64 / t } else { n as f64 / t };
        let op = MaskedOperator::unshifted(oracle.mask().clone());
        let solver = DirectSolver::new(oracle.mask(), Spacing::UNIT, shift).unwrap();
        let y = if crank {
            crank_nicolson_channel(&op, oracle.initial(), t, n, &solver).unwrap()
        } else {
            implicit_euler_channel(&op, oracle.initial(), t, n, &solver).unwrap()
        };
        relative_error(&y, &exact)
    }

    #[test]
    fn implicit_euler_is_first_order() {
        let ratio = stepper_error(64, 100.0, false) / stepper_error(32, 100.0, false);
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn crank_nicolson_is_second_order() {
        let ratio = stepper_error(64, 10.0, true) / stepper_error(32, 10.0, true);
        assert!((0.2..=0.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn implicit_euler_error_decreases_with_steps() {
        let mut last = f64::INFINITY;
        for n in [1, 2, 4, 8, 16] {
            let e = stepper_error(n, 50.0, false);
            assert!(e <= last, "n={n}: {e} > {last}");
            last = e;
        }
    }

    #[test]
    fn bench_csv_format() {
        let rows = vec![BenchResult {
            method: "krylov".into(),
            t: 10.0,
            n_solves: 1,
            rel_error: 0.5,
            wall_time: 0.25,
        }];
        let csv = bench_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(BENCH_CSV_HEADER));
        assert_eq!(lines.next(), Some("krylov,1e1,1,5e-1,0.250000"));
    }
}
