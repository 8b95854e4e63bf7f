//! Matrix-free masked heat operator.
//!
//! `A` is the five-point Laplacian applied at every non-stored pixel, with
//! zero rows at stored pixels. Homogeneous Neumann conditions at the image
//! border are realised by dropping the missing neighbour's coefficient, so
//! the centre coefficient is minus the sum of the neighbours that exist.
//!
//! `A_sym = R A Rᵀ` acts on interior vectors (one entry per non-stored pixel,
//! in row-major order). Stored pixels act as homogeneous Dirichlet values.

use crate::error::{Error, Result};
use crate::field::{InpaintMask, PixelField, Shape, Spacing};

/// Largest grid for which a dense matrix may be materialised.
pub const DENSE_CAP: usize = 4096;

const NOT_INTERIOR: usize = usize::MAX;

/// The masked diffusion operator together with its shift `γ`.
///
/// Encodes `B = γI − A` and `B_sym = γI − A_sym` without storing a matrix.
#[derive(Debug, Clone)]
pub struct MaskedOperator {
    mask: InpaintMask,
    spacing: Spacing,
    shift: f64,
    /// Interior slot → pixel index.
    interior: Vec<usize>,
    /// Pixel index → interior slot (or `NOT_INTERIOR`).
    slot: Vec<usize>,
}

impl MaskedOperator {
    pub fn new(mask: InpaintMask, spacing: Spacing, shift: f64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!("shift must be >= 0, got {shift}")));
        }
        let mut interior = Vec::with_capacity(mask.interior_count());
        let mut slot = vec![NOT_INTERIOR; mask.len()];
        for (i, &stored) in mask.bits().iter().enumerate() {
            if !stored {
                slot[i] = interior.len();
                interior.push(i);
            }
        }
        Ok(MaskedOperator {
            mask,
            spacing,
            shift,
            interior,
            slot,
        })
    }

    /// Unit spacing, zero shift.
    pub fn unshifted(mask: InpaintMask) -> Self {
        Self::new(mask, Spacing::UNIT, 0.0).expect("zero shift is valid")
    }

    pub fn with_shift(&self, shift: f64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!("shift must be >= 0, got {shift}")));
        }
        let mut op = self.clone();
        op.shift = shift;
        Ok(op)
    }

    pub fn mask(&self) -> &InpaintMask {
        &self.mask
    }

    pub fn shape(&self) -> Shape {
        self.mask.shape()
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Number of non-stored pixels, i.e. the size of `A_sym`.
    pub fn interior_len(&self) -> usize {
        self.interior.len()
    }

    pub fn interior_pixels(&self) -> &[usize] {
        &self.interior
    }

    fn check_full(&self, len: usize) -> Result<()> {
        if len != self.mask.len() {
            return Err(Error::DimensionMismatch(format!(
                "field has {len} pixels, operator grid has {}",
                self.mask.len()
            )));
        }
        Ok(())
    }

    fn check_interior(&self, len: usize) -> Result<()> {
        if len != self.interior.len() {
            return Err(Error::DimensionMismatch(format!(
                "interior vector has {len} entries, expected {}",
                self.interior.len()
            )));
        }
        Ok(())
    }

    /// Visits the in-domain neighbours of pixel `i` with their stencil weights.
    #[inline]
    fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        let Shape { width, height } = self.shape();
        let (wx, wy) = self.spacing.weights();
        let x = i % width;
        let y = i / width;
        if x > 0 {
            f(i - 1, wx);
        }
        if x + 1 < width {
            f(i + 1, wx);
        }
        if y > 0 {
            f(i - width, wy);
        }
        if y + 1 < height {
            f(i + width, wy);
        }
    }

    /// `(A u)` for a full single-channel field `u`.
    pub fn apply_a(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_full(u.len())?;
        let mut out = vec![0.0; u.len()];
        for &i in &self.interior {
            let ui = u[i];
            let mut acc = 0.0;
            self.for_each_neighbor(i, |j, w| acc += w * (u[j] - ui));
            out[i] = acc;
        }
        Ok(out)
    }

    /// `A_sym x` for an interior vector `x`.
    pub fn apply_a_sym(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_interior(x.len())?;
        let mut out = vec![0.0; x.len()];
        for (k, &i) in self.interior.iter().enumerate() {
            let mut acc = 0.0;
            let mut diag = 0.0;
            self.for_each_neighbor(i, |j, w| {
                diag += w;
                let s = self.slot[j];
                if s != NOT_INTERIOR {
                    acc += w * x[s];
                }
            });
            out[k] = acc - diag * x[k];
        }
        Ok(out)
    }

    /// `B_sym x = (γI − A_sym) x`.
    pub fn apply_b_sym(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.apply_a_sym(x)?;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.shift * xi - *o;
        }
        Ok(out)
    }

    /// `R u`: the non-stored entries of a full field, row-major.
    pub fn restrict(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_full(u.len())?;
        Ok(self.interior.iter().map(|&i| u[i]).collect())
    }

    /// `Rᵀ x`: places an interior vector on the grid with zeros at stored pixels.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_interior(x.len())?;
        let mut out = vec![0.0; self.mask.len()];
        for (&i, &v) in self.interior.iter().zip(x) {
            out[i] = v;
        }
        Ok(out)
    }

    /// Adds `Rᵀ x` to `u` in place.
    pub fn embed_add(&self, u: &mut [f64], x: &[f64]) -> Result<()> {
        self.check_full(u.len())?;
        self.check_interior(x.len())?;
        for (&i, &v) in self.interior.iter().zip(x) {
            u[i] += v;
        }
        Ok(())
    }

    /// `b_sym = R A b` for a compressed image `b` supported on stored pixels.
    ///
    /// This is the weighted sum of stored neighbours at every interior pixel.
    pub fn b_sym(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_full(b.len())?;
        Ok(self
            .interior
            .iter()
            .map(|&i| {
                let mut acc = 0.0;
                self.for_each_neighbor(i, |j, w| {
                    if self.slot[j] == NOT_INTERIOR {
                        acc += w * b[j];
                    }
                });
                acc
            })
            .collect())
    }

    /// `R A y` for an arbitrary full field `y`.
    pub fn restricted_a(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_full(y.len())?;
        Ok(self
            .interior
            .iter()
            .map(|&i| {
                let yi = y[i];
                let mut acc = 0.0;
                self.for_each_neighbor(i, |j, w| acc += w * (y[j] - yi));
                acc
            })
            .collect())
    }

    /// Dense row-major `A` (test oracle only).
    pub fn dense_a(&self) -> Result<Vec<f64>> {
        let n = self.mask.len();
        if n > DENSE_CAP {
            return Err(Error::SizeCapExceeded { size: n, cap: DENSE_CAP });
        }
        let mut a = vec![0.0; n * n];
        for &i in &self.interior {
            self.for_each_neighbor(i, |j, w| {
                a[i * n + j] += w;
                a[i * n + i] -= w;
            });
        }
        Ok(a)
    }

    /// Dense row-major `A_sym` (test oracle only).
    pub fn dense_a_sym(&self) -> Result<Vec<f64>> {
        let n = self.interior.len();
        if self.mask.len() > DENSE_CAP {
            return Err(Error::SizeCapExceeded {
                size: self.mask.len(),
                cap: DENSE_CAP,
            });
        }
        let mut a = vec![0.0; n * n];
        for (k, &i) in self.interior.iter().enumerate() {
            self.for_each_neighbor(i, |j, w| {
                a[k * n + k] -= w;
                let s = self.slot[j];
                if s != NOT_INTERIOR {
                    a[k * n + s] += w;
                }
            });
        }
        Ok(a)
    }
}

fn single_channel(field: &PixelField, mask: &InpaintMask) -> Result<()> {
    if field.channels() != 1 {
        return Err(Error::InvalidParameter(format!(
            "expected a single channel, got {}",
            field.channels()
        )));
    }
    mask.check_shape(field.shape())
}

/// `A y` on a single-channel field.
pub fn apply_a(field: &PixelField, mask: &InpaintMask) -> Result<PixelField> {
    single_channel(field, mask)?;
    let op = MaskedOperator::new(mask.clone(), field.spacing(), 0.0)?;
    let out = op.apply_a(field.channel(0))?;
    Ok(PixelField::from_gray(field.width(), field.height(), out)?.with_spacing(field.spacing()))
}

/// `A_sym x` on an interior vector at unit spacing.
pub fn apply_a_sym(interior: &[f64], mask: &InpaintMask) -> Result<Vec<f64>> {
    MaskedOperator::unshifted(mask.clone()).apply_a_sym(interior)
}

/// `R f`: selects non-stored pixels in row-major order.
pub fn restrict_r(field: &PixelField, mask: &InpaintMask) -> Result<Vec<f64>> {
    single_channel(field, mask)?;
    MaskedOperator::unshifted(mask.clone()).restrict(field.channel(0))
}

/// `Rᵀ x`: embeds an interior vector, writing zero at stored pixels.
pub fn embed_rt(interior: &[f64], mask: &InpaintMask) -> Result<PixelField> {
    let op = MaskedOperator::unshifted(mask.clone());
    let full = op.embed(interior)?;
    PixelField::from_gray(mask.width(), mask.height(), full)
}

/// `b_sym = R A b` for a compressed single-channel image.
pub fn compute_b_sym(compressed: &PixelField, mask: &InpaintMask) -> Result<Vec<f64>> {
    single_channel(compressed, mask)?;
    MaskedOperator::new(mask.clone(), compressed.spacing(), 0.0)?.b_sym(compressed.channel(0))
}

/// `φ₁(z) = (eᶻ − 1)/z` with the removable singularity at zero filled in.
pub fn phi1(z: f64) -> f64 {
    if z.abs() > 1e-5 {
        z.exp_m1() / z
    } else {
        1.0 + z * (1.0 / 2.0 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The 3×2 grid with pixels 3 and 5 (1-based) stored.
    fn example_mask() -> InpaintMask {
        InpaintMask::from_rows(&[&[0, 0, 1], &[0, 1, 0]]).unwrap()
    }

    fn example_b() -> PixelField {
        PixelField::from_gray(3, 2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn dense_a_matches_worked_example() {
        let op = MaskedOperator::unshifted(example_mask());
        #[rustfmt::skip]
        let expected = [
            -2.0,  1.0, 0.0,  1.0, 0.0,  0.0,
             1.0, -3.0, 1.0,  0.0, 1.0,  0.0,
             0.0,  0.0, 0.0,  0.0, 0.0,  0.0,
             1.0,  0.0, 0.0, -2.0, 1.0,  0.0,
             0.0,  0.0, 0.0,  0.0, 0.0,  0.0,
             0.0,  0.0, 1.0,  0.0, 1.0, -2.0,
        ];
        assert_eq!(op.dense_a().unwrap(), expected);
        #[rustfmt::skip]
        let expected_sym = [
            -2.0,  1.0,  1.0,  0.0,
             1.0, -3.0,  0.0,  0.0,
             1.0,  0.0, -2.0,  0.0,
             0.0,  0.0,  0.0, -2.0,
        ];
        assert_eq!(op.dense_a_sym().unwrap(), expected_sym);
    }

    #[test]
    fn constants_lie_in_kernel() {
        let ones = PixelField::filled(3, 2, 1, 1.0).unwrap();
        let out = apply_a(&ones, &example_mask()).unwrap();
        assert!(out.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_a_on_worked_b() {
        let out = apply_a(&example_b(), &example_mask()).unwrap();
        assert_eq!(out.channel(0), &[0.0, 2.0, 0.0, 1.0, 0.0, 2.0]);
    }

    #[test]
    fn apply_a_matches_dense_on_checkerboard() {
        let mask = InpaintMask::empty(4, 4);
        let op = MaskedOperator::unshifted(mask);
        let u: Vec<f64> = (0..16)
            .map(|i| if (i % 4 + i / 4) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let dense = op.dense_a().unwrap();
        let expected: Vec<f64> = (0..16).map(|r| dot(&dense[r * 16..(r + 1) * 16], &u)).collect();
        assert_eq!(op.apply_a(&u).unwrap(), expected);
    }

    #[test]
    fn a_sym_first_column() {
        let e1 = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(apply_a_sym(&e1, &example_mask()).unwrap(), vec![-2.0, 1.0, 1.0, 0.0]);
        assert_eq!(apply_a_sym(&[0.0; 4], &example_mask()).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn restriction_and_embedding() {
        let a = PixelField::from_gray(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mask = example_mask();
        assert_eq!(restrict_r(&a, &mask).unwrap(), vec![1.0, 2.0, 4.0, 6.0]);
        let back = embed_rt(&[9.0, 8.0, 7.0, 6.0], &mask).unwrap();
        assert_eq!(back.channel(0), &[9.0, 8.0, 0.0, 7.0, 0.0, 6.0]);
        assert_eq!(restrict_r(&back, &mask).unwrap(), vec![9.0, 8.0, 7.0, 6.0]);
        // P b = 0 for b supported on stored pixels.
        let pb = embed_rt(&restrict_r(&example_b(), &mask).unwrap(), &mask).unwrap();
        assert!(pb.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn b_sym_of_worked_example() {
        assert_eq!(
            compute_b_sym(&example_b(), &example_mask()).unwrap(),
            vec![0.0, 2.0, 1.0, 2.0]
        );
        let all = InpaintMask::full(3, 2);
        assert!(compute_b_sym(&example_b(), &all).unwrap().is_empty());
    }

    #[test]
    fn dimension_errors() {
        let op = MaskedOperator::unshifted(example_mask());
        assert!(matches!(op.apply_a(&[0.0; 5]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(op.apply_a_sym(&[0.0; 5]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(op.embed(&[0.0; 6]), Err(Error::DimensionMismatch(_))));
        let wrong = PixelField::zeros(2, 3, 1).unwrap();
        assert!(apply_a(&wrong, &example_mask()).is_err());
    }

    #[test]
    fn phi1_values() {
        assert_eq!(phi1(0.0), 1.0);
        let expected = 1.0 - (-1.0f64).exp();
        assert!((phi1(-1.0) - expected).abs() <= 2.0 * f64::EPSILON * expected);
        let big = phi1(-1e8);
        assert!((big - 1e-8).abs() <= 10.0 * f64::EPSILON * 1e-8);
        // Continuity across the Taylor switch.
        for z in [-1.1e-5f64, -1e-5, -0.9e-5, 0.9e-5, 1.1e-5] {
            let direct = z.exp_m1() / z;
            assert!((phi1(z) - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn nonunit_spacing_scales_weights() {
        let mask = InpaintMask::empty(3, 1);
        let op = MaskedOperator::new(mask, Spacing::new(2.0, 1.0).unwrap(), 0.0).unwrap();
        let out = op.apply_a(&[0.0, 4.0, 0.0]).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 1.0]);
    }
}
