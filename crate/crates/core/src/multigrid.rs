//! Mask-aware full multigrid for `(γI − A) u = rhs`.
//!
//! Levels are full-grid fields. At a stored pixel the equation row is the
//! identity (`u = rhs`), so the same solver covers two uses:
//!
//! * interior systems `B_sym x = r`: pass `Rᵀ r` (zeros at stored pixels);
//! * Dirichlet problems: stored pixels carry the boundary values in `rhs`.
//!
//! Coarse grids have `⌈N/2⌉` pixels per direction and spacings
//! `H = h·N^h/N^H`. Transfers are area-weighted averages; the coarse mask is
//! set wherever the restricted fine mask exceeds `eps_mask`. Coarse operators
//! are rediscretised with the standard stencil at spacing `H`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{InpaintMask, PixelField, Shape, Spacing};
use crate::linalg::BandedCholesky;

/// Grids with at least this many pixels relax with row-parallel half-sweeps.
const PARALLEL_MIN_PIXELS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct MultigridConfig {
    /// Cycle index: 1 is the V-cycle, 2 the W-cycle.
    pub mu: usize,
    /// μ-cycles per level during nested iteration.
    pub nu0: usize,
    /// Pre-relaxation sweeps.
    pub nu1: usize,
    /// Post-relaxation sweeps.
    pub nu2: usize,
    /// Requested hierarchy depth (including the finest grid).
    pub levels: usize,
    /// Coarse mask bit is set where the restricted mask exceeds this.
    pub eps_mask: f64,
    /// μ-cycles after nested iteration.
    pub cycles: usize,
    /// Unknown count above which the hierarchy keeps coarsening past `levels`.
    pub coarsest_max_pixels: usize,
    /// Relative residual at which cycling stops early.
    pub tolerance: f64,
    /// Relative residual above which running out of cycles is an error.
    pub budget_tolerance: f64,
}

impl Default for MultigridConfig {
    fn default() -> Self {
        MultigridConfig {
            mu: 2,
            nu0: 1,
            nu1: 4,
            nu2: 4,
            levels: 7,
            eps_mask: 1e-3,
            cycles: 10,
            coarsest_max_pixels: 4096,
            tolerance: 1e-9,
            budget_tolerance: 1e-6,
        }
    }
}

impl MultigridConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.mu < 1 {
            return bad("mu must be >= 1".into());
        }
        if self.levels < 1 {
            return bad("levels must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.eps_mask) {
            return bad(format!("eps_mask must lie in [0, 1), got {}", self.eps_mask));
        }
        if self.coarsest_max_pixels < 1 {
            return bad("coarsest_max_pixels must be >= 1".into());
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(self.budget_tolerance >= self.tolerance) {
            return bad(format!(
                "budget_tolerance {} must be >= tolerance {}",
                self.budget_tolerance, self.tolerance
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Transfer operators
// ---------------------------------------------------------------------------

/// One-dimensional overlap weights between `n` fine and `m = ⌈n/2⌉` coarse cells.
#[derive(Debug, Clone)]
struct Overlap1d {
    /// For each fine cell, up to two `(coarse index, restriction weight, prolongation weight)`.
    links: Vec<[(usize, f64, f64); 2]>,
    counts: Vec<u8>,
}

impl Overlap1d {
    fn new(n: usize, m: usize) -> Self {
        // Integer units: fine cell i = [i·m, (i+1)·m), coarse cell I = [I·n, (I+1)·n).
        let mut links = vec![[(0, 0.0, 0.0); 2]; n];
        let mut counts = vec![0u8; n];
        for i in 0..n {
            let (a0, a1) = (i * m, (i + 1) * m);
            let first = a0 / n;
            for c in first..m.min(a1.div_ceil(n)) {
                let (b0, b1) = (c * n, (c + 1) * n);
                let overlap = a1.min(b1).saturating_sub(a0.max(b0));
                if overlap == 0 {
                    continue;
                }
                let k = counts[i] as usize;
                links[i][k] = (c, overlap as f64 / n as f64, overlap as f64 / m as f64);
                counts[i] += 1;
            }
        }
        Overlap1d { links, counts }
    }

    fn iter(&self, i: usize) -> impl Iterator<Item = &(usize, f64, f64)> {
        self.links[i][..self.counts[i] as usize].iter()
    }
}

/// Area-weighted restriction `I_h^H` and prolongation `I_H^h` between two grids.
#[derive(Debug, Clone)]
pub struct Transfer {
    fine: Shape,
    coarse: Shape,
    x: Overlap1d,
    y: Overlap1d,
}

impl Transfer {
    pub fn new(fine: Shape) -> Self {
        let coarse = fine.coarsened();
        Transfer {
            fine,
            coarse,
            x: Overlap1d::new(fine.width, coarse.width),
            y: Overlap1d::new(fine.height, coarse.height),
        }
    }

    pub fn fine(&self) -> Shape {
        self.fine
    }

    pub fn coarse(&self) -> Shape {
        self.coarse
    }

    /// `α = N_x^H N_y^H / (N_x^h N_y^h)` in `I_h^H = α (I_H^h)ᵀ`.
    pub fn alpha(&self) -> f64 {
        self.coarse.len() as f64 / self.fine.len() as f64
    }

    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.coarse.len()];
        let (fw, cw) = (self.fine.width, self.coarse.width);
        for fy in 0..self.fine.height {
            for &(cy, ry, _) in self.y.iter(fy) {
                let frow = &fine[fy * fw..(fy + 1) * fw];
                let crow = &mut out[cy * cw..(cy + 1) * cw];
                for (fx, &v) in frow.iter().enumerate() {
                    for &(cx, rx, _) in self.x.iter(fx) {
                        crow[cx] += ry * rx * v;
                    }
                }
            }
        }
        out
    }

    pub fn prolong(&self, coarse: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.fine.len()];
        let (fw, cw) = (self.fine.width, self.coarse.width);
        for fy in 0..self.fine.height {
            let frow = &mut out[fy * fw..(fy + 1) * fw];
            for &(cy, _, py) in self.y.iter(fy) {
                let crow = &coarse[cy * cw..(cy + 1) * cw];
                for (fx, slot) in frow.iter_mut().enumerate() {
                    for &(cx, _, px) in self.x.iter(fx) {
                        *slot += py * px * crow[cx];
                    }
                }
            }
        }
        out
    }
}

fn check_coarse_shape(fine: Shape, coarse: Shape) -> Result<()> {
    if fine.coarsened() != coarse {
        return Err(Error::DimensionMismatch(format!(
            "coarse grid {}x{} does not follow the ceiling rule for {}x{}",
            coarse.width, coarse.height, fine.width, fine.height
        )));
    }
    Ok(())
}

fn single(field: &PixelField) -> Result<&[f64]> {
    if field.channels() != 1 {
        return Err(Error::InvalidParameter(format!(
            "expected a single channel, got {}",
            field.channels()
        )));
    }
    Ok(field.channel(0))
}

fn coarse_spacing(fine_spacing: Spacing, fine: Shape, coarse: Shape) -> Spacing {
    Spacing {
        hx: fine_spacing.hx * fine.width as f64 / coarse.width as f64,
        hy: fine_spacing.hy * fine.height as f64 / coarse.height as f64,
    }
}

/// Area-weighted average of a fine field onto the next coarser grid.
pub fn restrict_field(fine: &PixelField, coarse_shape: Shape) -> Result<PixelField> {
    check_coarse_shape(fine.shape(), coarse_shape)?;
    let t = Transfer::new(fine.shape());
    let out = t.restrict(single(fine)?);
    Ok(PixelField::from_gray(coarse_shape.width, coarse_shape.height, out)?
        .with_spacing(coarse_spacing(fine.spacing(), fine.shape(), coarse_shape)))
}

/// Piecewise-constant-by-area interpolation back to the fine grid.
pub fn prolong_field(coarse: &PixelField, fine_shape: Shape) -> Result<PixelField> {
    check_coarse_shape(fine_shape, coarse.shape())?;
    let t = Transfer::new(fine_shape);
    let out = t.prolong(single(coarse)?);
    let spacing = Spacing {
        hx: coarse.spacing().hx * coarse.width() as f64 / fine_shape.width as f64,
        hy: coarse.spacing().hy * coarse.height() as f64 / fine_shape.height as f64,
    };
    Ok(PixelField::from_gray(fine_shape.width, fine_shape.height, out)?.with_spacing(spacing))
}

fn coarsen_mask_with(t: &Transfer, fine_mask: &InpaintMask, eps: f64) -> InpaintMask {
    let c: Vec<f64> = fine_mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let bits = t.restrict(&c).into_iter().map(|v| v > eps).collect();
    InpaintMask::from_bits(t.coarse.width, t.coarse.height, bits).expect("transfer shape")
}

/// `c^H_ij = 1` iff `(I_h^H c^h)_ij > eps`.
pub fn coarsen_mask(fine_mask: &InpaintMask, eps: f64) -> InpaintMask {
    coarsen_mask_with(&Transfer::new(fine_mask.shape()), fine_mask, eps)
}

/// `r^H = (1 − c^H) ∘ (I_h^H r^h)`.
pub fn restrict_residual(fine_res: &PixelField, coarse_mask: &InpaintMask) -> Result<PixelField> {
    check_coarse_shape(fine_res.shape(), coarse_mask.shape())?;
    let t = Transfer::new(fine_res.shape());
    let mut out = t.restrict(single(fine_res)?);
    zero_stored(&mut out, coarse_mask);
    PixelField::from_gray(coarse_mask.width(), coarse_mask.height(), out)
}

fn restrict_rhs_with(t: &Transfer, rhs: &[f64], mask: &InpaintMask, eps: f64) -> Vec<f64> {
    let cb: Vec<f64> = rhs
        .iter()
        .zip(mask.bits())
        .map(|(&v, &s)| if s { v } else { 0.0 })
        .collect();
    let c: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let num = t.restrict(&cb);
    let den = t.restrict(&c);
    num.into_iter()
        .zip(den)
        .map(|(n, d)| if d > eps { n / d } else { 0.0 })
        .collect()
}

/// `b^H = (I_h^H (c^h ∘ b^h)) ⊘ (I_h^H c^h)`, where restricted mask values not
/// above `eps` count as zero and division by zero yields zero.
pub fn restrict_rhs(fine_rhs: &PixelField, fine_mask: &InpaintMask, eps: f64) -> Result<PixelField> {
    fine_mask.check_shape(fine_rhs.shape())?;
    let t = Transfer::new(fine_rhs.shape());
    let out = restrict_rhs_with(&t, single(fine_rhs)?, fine_mask, eps);
    PixelField::from_gray(t.coarse.width, t.coarse.height, out)
}

fn zero_stored(v: &mut [f64], mask: &InpaintMask) {
    for (x, &s) in v.iter_mut().zip(mask.bits()) {
        if s {
            *x = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// Levels and smoothing
// ---------------------------------------------------------------------------

/// One grid of the hierarchy.
#[derive(Debug, Clone)]
pub struct GridLevel {
    pub shape: Shape,
    pub spacing: Spacing,
    pub mask: InpaintMask,
    pub shift: f64,
}

impl GridLevel {
    pub fn new(mask: InpaintMask, spacing: Spacing, shift: f64) -> Self {
        GridLevel {
            shape: mask.shape(),
            spacing,
            mask,
            shift,
        }
    }

    /// `(L u)_i`: identity at stored pixels, `γu − Δ^h u` elsewhere.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        let Shape { width, height } = self.shape;
        let (wx, wy) = self.spacing.weights();
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if self.mask.is_stored(i) {
                    out[i] = u[i];
                    continue;
                }
                let (sum, diag) = neighbor_sum(u, x, y, width, height, wx, wy);
                out[i] = (self.shift + diag) * u[i] - sum;
            }
        }
        out
    }

    pub fn residual(&self, u: &[f64], rhs: &[f64]) -> Vec<f64> {
        let lu = self.apply(u);
        rhs.iter().zip(lu).map(|(b, l)| b - l).collect()
    }

    pub fn interior_count(&self) -> usize {
        self.mask.interior_count()
    }
}

#[inline]
fn neighbor_sum(
    u: &[f64],
    x: usize,
    y: usize,
    width: usize,
    height: usize,
    wx: f64,
    wy: f64,
) -> (f64, f64) {
    let i = y * width + x;
    let mut sum = 0.0;
    let mut diag = 0.0;
    if x > 0 {
        sum += wx * u[i - 1];
        diag += wx;
    }
    if x + 1 < width {
        sum += wx * u[i + 1];
        diag += wx;
    }
    if y > 0 {
        sum += wy * u[i - width];
        diag += wy;
    }
    if y + 1 < height {
        sum += wy * u[i + width];
        diag += wy;
    }
    (sum, diag)
}

#[inline]
fn relax_value(level: &GridLevel, u: &[f64], rhs: &[f64], x: usize, y: usize) -> f64 {
    let Shape { width, height } = level.shape;
    let i = y * width + x;
    if level.mask.is_stored(i) {
        return rhs[i];
    }
    let (wx, wy) = level.spacing.weights();
    let (sum, diag) = neighbor_sum(u, x, y, width, height, wx, wy);
    (rhs[i] + sum) / (level.shift + diag)
}

fn half_sweep(level: &GridLevel, u: &mut [f64], rhs: &[f64], color: usize) {
    let Shape { width, height } = level.shape;
    if u.len() >= PARALLEL_MIN_PIXELS {
        // A point only reads opposite-colour neighbours, which this half-sweep
        // never writes, so a snapshot gives the same result as in-place order.
        let prev = u.to_vec();
        u.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for x in ((color + y) % 2..width).step_by(2) {
                row[x] = relax_value(level, &prev, rhs, x, y);
            }
        });
    } else {
        for y in 0..height {
            for x in ((color + y) % 2..width).step_by(2) {
                u[y * width + x] = relax_value(level, u, rhs, x, y);
            }
        }
    }
}

/// Red-black Gauss–Seidel sweeps on `L u = rhs`.
pub fn relax(level: &GridLevel, u: &mut [f64], rhs: &[f64], sweeps: usize) {
    if sweeps == 0 {
        return;
    }
    for (i, v) in u.iter_mut().enumerate() {
        if level.mask.is_stored(i) {
            *v = rhs[i];
        }
    }
    for _ in 0..sweeps {
        half_sweep(level, u, rhs, 0);
        half_sweep(level, u, rhs, 1);
    }
}

// ---------------------------------------------------------------------------
// Coarsest-grid direct solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct CoarseSolver {
    level: GridLevel,
    /// Interior slot → pixel.
    pixels: Vec<usize>,
    chol: Option<BandedCholesky>,
}

impl CoarseSolver {
    fn new(level: &GridLevel) -> Result<Self> {
        let Shape { width, height } = level.shape;
        let (wx, wy) = level.spacing.weights();
        let pixels: Vec<usize> = (0..level.shape.len()).filter(|&i| !level.mask.is_stored(i)).collect();
        let mut slot = vec![usize::MAX; level.shape.len()];
        for (k, &i) in pixels.iter().enumerate() {
            slot[i] = k;
        }
        if pixels.is_empty() {
            return Ok(CoarseSolver {
                level: level.clone(),
                pixels,
                chol: None,
            });
        }
        let entry = |a: usize, b: usize| -> f64 {
            let (pa, pb) = (pixels[a], pixels[b]);
            let (x, y) = (pa % width, pa / width);
            if a == b {
                let mut diag = level.shift;
                if x > 0 {
                    diag += wx;
                }
                if x + 1 < width {
                    diag += wx;
                }
                if y > 0 {
                    diag += wy;
                }
                if y + 1 < height {
                    diag += wy;
                }
                diag
            } else if pa.abs_diff(pb) == 1 && pa / width == pb / width {
                -wx
            } else if pa.abs_diff(pb) == width {
                -wy
            } else {
                0.0
            }
        };
        let chol = BandedCholesky::factor(pixels.len(), width.min(pixels.len() - 1), entry)?;
        Ok(CoarseSolver {
            level: level.clone(),
            pixels,
            chol: Some(chol),
        })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut u: Vec<f64> = rhs.to_vec();
        let Some(chol) = &self.chol else {
            return u;
        };
        let level = &self.level;
        let Shape { width, height } = level.shape;
        let (wx, wy) = level.spacing.weights();
        // Stored neighbours move to the right-hand side.
        let mut x: Vec<f64> = self
            .pixels
            .iter()
            .map(|&i| {
                let (px, py) = (i % width, i / width);
                let mut b = rhs[i];
                let mut add = |j: usize, w: f64| {
                    if level.mask.is_stored(j) {
                        b += w * rhs[j];
                    }
                };
                if px > 0 {
                    add(i - 1, wx);
                }
                if px + 1 < width {
                    add(i + 1, wx);
                }
                if py > 0 {
                    add(i - width, wy);
                }
                if py + 1 < height {
                    add(i + width, wy);
                }
                b
            })
            .collect();
        chol.solve_in_place(&mut x);
        for (&i, v) in self.pixels.iter().zip(x) {
            u[i] = v;
        }
        u
    }
}

/// Direct solve of `L u = rhs` on a single level (dense banded factorisation).
pub fn coarsest_direct_solve(level: &GridLevel, rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(CoarseSolver::new(level)?.solve(rhs))
}

/// Exact solver for `(γI − A_sym) x = rhs` on interior vectors via a banded
/// Cholesky factorisation (bandwidth = image width).
#[derive(Debug, Clone)]
pub struct DirectSolver {
    inner: CoarseSolver,
}

impl DirectSolver {
    pub fn new(mask: &InpaintMask, spacing: Spacing, shift: f64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!("shift must be >= 0, got {shift}")));
        }
        if shift == 0.0 && !mask.has_stored() {
            return Err(Error::EmptyMask);
        }
        Ok(DirectSolver {
            inner: CoarseSolver::new(&GridLevel::new(mask.clone(), spacing, shift))?,
        })
    }

    pub fn shift(&self) -> f64 {
        self.inner.level.shift
    }

    pub fn solve_interior(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.inner.pixels.len() {
            return Err(Error::DimensionMismatch(format!(
                "interior rhs has {} entries, expected {}",
                rhs.len(),
                self.inner.pixels.len()
            )));
        }
        let mut full = vec![0.0; self.inner.level.shape.len()];
        for (&i, &v) in self.inner.pixels.iter().zip(rhs) {
            full[i] = v;
        }
        let u = self.inner.solve(&full);
        Ok(self.inner.pixels.iter().map(|&i| u[i]).collect())
    }

    /// Solves the full-field system (identity rows at stored pixels).
    pub fn solve_full(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.inner.level.shape.len() {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} entries, grid has {}",
                rhs.len(),
                self.inner.level.shape.len()
            )));
        }
        Ok(self.inner.solve(rhs))
    }
}

// ---------------------------------------------------------------------------
// Hierarchy and cycles
// ---------------------------------------------------------------------------

/// Per-solve diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    /// μ-cycles run after nested iteration.
    pub cycles: usize,
    /// Relative residuals: after nested iteration, then after every cycle.
    pub residuals: Vec<f64>,
}

impl SolveStats {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// A built grid ladder with its coarsest-grid factorisation.
#[derive(Debug, Clone)]
pub struct Multigrid {
    config: MultigridConfig,
    levels: Vec<GridLevel>,
    transfers: Vec<Transfer>,
    coarsest: CoarseSolver,
}

impl Multigrid {
    pub fn new(mask: &InpaintMask, spacing: Spacing, shift: f64, config: &MultigridConfig) -> Result<Self> {
        config.validate()?;
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!("shift must be >= 0, got {shift}")));
        }
        if shift == 0.0 && !mask.has_stored() {
            return Err(Error::EmptyMask);
        }
        let mut levels = vec![GridLevel::new(mask.clone(), spacing, shift)];
        let mut transfers = Vec::new();
        loop {
            let cur = levels.last().expect("non-empty");
            let want_more =
                levels.len() < config.levels || cur.interior_count() > config.coarsest_max_pixels;
            if !want_more || cur.shape.len() == 1 {
                break;
            }
            let t = Transfer::new(cur.shape);
            let cmask = coarsen_mask_with(&t, &cur.mask, config.eps_mask);
            // Keep every level well posed and stop once nothing is left to solve.
            if cur.mask.has_stored() && !cmask.has_stored() {
                break;
            }
            if cmask.interior_count() == 0 {
                break;
            }
            let cspacing = coarse_spacing(cur.spacing, cur.shape, t.coarse);
            levels.push(GridLevel::new(cmask, cspacing, shift));
            transfers.push(t);
        }
        let coarsest = CoarseSolver::new(levels.last().expect("non-empty"))?;
        Ok(Multigrid {
            config: config.clone(),
            levels,
            transfers,
            coarsest,
        })
    }

    pub fn config(&self) -> &MultigridConfig {
        &self.config
    }

    pub fn levels(&self) -> &[GridLevel] {
        &self.levels
    }

    pub fn finest(&self) -> &GridLevel {
        &self.levels[0]
    }

    pub fn shift(&self) -> f64 {
        self.levels[0].shift
    }

    fn is_coarsest(&self, l: usize) -> bool {
        l + 1 == self.levels.len()
    }

    /// One μ-cycle on level `l`, improving `u` in place.
    pub fn mu_cycle(&self, l: usize, u: &mut Vec<f64>, rhs: &[f64]) {
        if self.is_coarsest(l) {
            *u = self.coarsest.solve(rhs);
            return;
        }
        let level = &self.levels[l];
        let cfg = &self.config;
        relax(level, u, rhs, cfg.nu1);
        let r = level.residual(u, rhs);
        let t = &self.transfers[l];
        let coarse = &self.levels[l + 1];
        let mut r_coarse = t.restrict(&r);
        zero_stored(&mut r_coarse, &coarse.mask);
        let mut e = vec![0.0; coarse.shape.len()];
        for _ in 0..cfg.mu {
            self.mu_cycle(l + 1, &mut e, &r_coarse);
        }
        let correction = t.prolong(&e);
        for ((ui, ci), &s) in u.iter_mut().zip(correction).zip(level.mask.bits()) {
            if !s {
                *ui += ci;
            }
        }
        relax(level, u, rhs, cfg.nu2);
    }

    /// Nested iteration from the coarsest grid up to level `l`.
    pub fn nested_iteration(&self, l: usize, rhs: &[f64]) -> Vec<f64> {
        if self.is_coarsest(l) {
            return self.coarsest.solve(rhs);
        }
        let level = &self.levels[l];
        let coarse = &self.levels[l + 1];
        let t = &self.transfers[l];
        // Dirichlet values are reweighted, interior forcing is averaged.
        let stored_part = restrict_rhs_with(t, rhs, &level.mask, self.config.eps_mask);
        let mut interior_rhs = rhs.to_vec();
        zero_stored(&mut interior_rhs, &level.mask);
        let mut interior_part = t.restrict(&interior_rhs);
        zero_stored(&mut interior_part, &coarse.mask);
        let rhs_coarse: Vec<f64> = stored_part.iter().zip(&interior_part).map(|(a, b)| a + b).collect();

        let v_coarse = self.nested_iteration(l + 1, &rhs_coarse);
        let mut v = t.prolong(&v_coarse);
        for (i, vi) in v.iter_mut().enumerate() {
            if level.mask.is_stored(i) {
                *vi = rhs[i];
            }
        }
        for _ in 0..self.config.nu0 {
            self.mu_cycle(l, &mut v, rhs);
        }
        v
    }

    fn relative_residual(&self, u: &[f64], rhs: &[f64], rhs_norm: f64) -> f64 {
        let r = self.finest().residual(u, rhs);
        r.iter().map(|v| v * v).sum::<f64>().sqrt() / rhs_norm
    }

    /// Nested iteration followed by up to `cycles` μ-cycles, stopping early once
    /// the relative residual reaches `tolerance`. Fails if the budget runs out
    /// above `budget_tolerance`.
    pub fn full_multigrid(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let n = self.finest().shape.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} entries, finest grid has {n}",
                rhs.len()
            )));
        }
        let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut stats = SolveStats::default();
        if rhs_norm == 0.0 {
            stats.residuals.push(0.0);
            return Ok((vec![0.0; n], stats));
        }
        let mut u = self.nested_iteration(0, rhs);
        let mut res = self.relative_residual(&u, rhs, rhs_norm);
        stats.residuals.push(res);
        while res > self.config.tolerance && stats.cycles < self.config.cycles {
            self.mu_cycle(0, &mut u, rhs);
            stats.cycles += 1;
            res = self.relative_residual(&u, rhs, rhs_norm);
            stats.residuals.push(res);
        }
        if !(res <= self.config.budget_tolerance) {
            return Err(Error::IterationBudgetExceeded {
                cycles: stats.cycles,
                residual: res,
            });
        }
        Ok((u, stats))
    }

    /// Solves `(γI − A_sym) x = rhs` for an interior vector (row-major over
    /// non-stored pixels of the finest mask).
    pub fn solve_interior(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let mask = &self.finest().mask;
        if rhs.len() != mask.interior_count() {
            return Err(Error::DimensionMismatch(format!(
                "interior rhs has {} entries, expected {}",
                rhs.len(),
                mask.interior_count()
            )));
        }
        let mut full = vec![0.0; mask.len()];
        let mut it = rhs.iter();
        for (f, &s) in full.iter_mut().zip(mask.bits()) {
            if !s {
                *f = *it.next().expect("length checked");
            }
        }
        let (u, stats) = self.full_multigrid(&full)?;
        let x = u
            .into_iter()
            .zip(mask.bits())
            .filter_map(|(v, &s)| (!s).then_some(v))
            .collect();
        Ok((x, stats))
    }
}
