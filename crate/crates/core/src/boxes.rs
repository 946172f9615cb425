//! Soft box embeddings.
//!
//! A box is stored as `(min, delta)` with `delta >= 0`, so the upper corner
//! `min + delta` can never fall below the lower one. Volumes use a per-dimension
//! softplus measure normalised by the global extent of the space:
//!
//! ```text
//! m(w_i)        = softplus(w_i) / softplus(G_max_i - G_min_i)
//! log P(a)      = sum_i log m(max_a_i - min_a_i)
//! log P(a ∩ b)  = sum_i log m(min(max_a_i, max_b_i) - max(min_a_i, min_b_i))
//! P(a | b)      = exp(log P(a ∩ b) - log P(b))
//! ```
//!
//! Everything is accumulated in log space; at `d = 50` a direct product of
//! per-dimension measures underflows long before the ratio does.
//!
//! Gradients treat the extrema as constants. At boundary ties the min/max
//! selectors give a subgradient that assigns the active branch to the left
//! operand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{d_ln_softplus, ln_softplus, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxEmbedding {
    pub min: Vec<f64>,
    pub delta: Vec<f64>,
}

impl BoxEmbedding {
    pub fn new(min: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let b = BoxEmbedding { min, delta };
        b.validate()?;
        Ok(b)
    }

    /// Build a box from explicit lower and upper corners.
    pub fn from_bounds(min: &[f64], max: &[f64]) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::domain(format!(
                "corner dimensions differ: {} vs {}",
                min.len(),
                max.len()
            )));
        }
        let delta = min.iter().zip(max).map(|(lo, hi)| hi - lo).collect();
        Self::new(min.to_vec(), delta)
    }

    pub fn zeros(dim: usize) -> Self {
        BoxEmbedding {
            min: vec![0.0; dim],
            delta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    #[inline]
    pub fn upper(&self, i: usize) -> f64 {
        self.min[i] + self.delta[i]
    }

    /// Side length along dimension `i`, computed from the corners so that
    /// `width == joint_width(self, self)` bit for bit.
    #[inline]
    pub fn width(&self, i: usize) -> f64 {
        self.upper(i) - self.min[i]
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.len() != self.delta.len() {
            return Err(Error::domain(format!(
                "min has {} coordinates but delta has {}",
                self.min.len(),
                self.delta.len()
            )));
        }
        for (i, (&m, &d)) in self.min.iter().zip(&self.delta).enumerate() {
            if !m.is_finite() || !d.is_finite() {
                return Err(Error::domain(format!("non-finite coordinate at dimension {i}")));
            }
            if d < 0.0 {
                return Err(Error::domain(format!("negative delta {d} at dimension {i}")));
            }
        }
        Ok(())
    }

    /// Clip negative deltas to zero.
    pub fn project_nonnegative(&mut self) {
        for d in &mut self.delta {
            if *d < 0.0 {
                *d = 0.0;
            }
        }
    }
}

/// Coordinate-wise extent of the knowledge space, used as the measure normaliser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalExtrema {
    pub gmin: Vec<f64>,
    pub gmax: Vec<f64>,
}

impl GlobalExtrema {
    pub fn new(gmin: Vec<f64>, gmax: Vec<f64>) -> Result<Self> {
        if gmin.len() != gmax.len() {
            return Err(Error::domain("extrema vectors differ in length"));
        }
        for (i, (&lo, &hi)) in gmin.iter().zip(&gmax).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::domain(format!("non-finite extremum at dimension {i}")));
            }
            if hi < lo {
                return Err(Error::domain(format!("gmax < gmin at dimension {i}")));
            }
        }
        Ok(GlobalExtrema { gmin, gmax })
    }

    pub fn dim(&self) -> usize {
        self.gmin.len()
    }

    #[inline]
    fn ln_norm(&self, i: usize) -> f64 {
        ln_softplus(self.gmax[i] - self.gmin[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSpaceConfig {
    pub dim: usize,
    pub prob_clamp_eps: f64,
}

impl Default for KnowledgeSpaceConfig {
    fn default() -> Self {
        KnowledgeSpaceConfig {
            dim: 50,
            prob_clamp_eps: 1e-6,
        }
    }
}

impl KnowledgeSpaceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("knowledge space dimension must be >= 1".into()));
        }
        if !(self.prob_clamp_eps > 0.0 && self.prob_clamp_eps < 0.5) {
            return Err(Error::Config(format!(
                "prob_clamp_eps must lie in (0, 0.5), got {}",
                self.prob_clamp_eps
            )));
        }
        Ok(())
    }
}

/// Gradient with respect to a box's `(min, delta)` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrad {
    pub min: Vec<f64>,
    pub delta: Vec<f64>,
}

impl BoxGrad {
    pub fn zeros(dim: usize) -> Self {
        BoxGrad {
            min: vec![0.0; dim],
            delta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn clear(&mut self) {
        self.min.iter_mut().for_each(|g| *g = 0.0);
        self.delta.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn add_scaled(&mut self, other: &BoxGrad, scale: f64) {
        for (g, o) in self.min.iter_mut().zip(&other.min) {
            *g += scale * o;
        }
        for (g, o) in self.delta.iter_mut().zip(&other.delta) {
            *g += scale * o;
        }
    }

    /// Derivative with respect to the lower corner when the upper corner is
    /// held fixed (`d/dmin - d/ddelta` in parameter space).
    pub fn lower_corner(&self, i: usize) -> f64 {
        self.min[i] - self.delta[i]
    }

    /// Derivative with respect to the upper corner (equal to `d/ddelta`).
    pub fn upper_corner(&self, i: usize) -> f64 {
        self.delta[i]
    }
}

fn check_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::domain(format!("{what}: dimension {a} vs {b}")));
    }
    Ok(())
}

#[inline]
fn joint_width(a: &BoxEmbedding, b: &BoxEmbedding, i: usize) -> f64 {
    a.upper(i).min(b.upper(i)) - a.min[i].max(b.min[i])
}

/// Per-dimension smoothed length `softplus(width) / softplus(norm_width)`.
pub fn soft_length(width: f64, norm_width: f64) -> Result<f64> {
    if !width.is_finite() || !norm_width.is_finite() {
        return Err(Error::domain("soft_length needs finite inputs"));
    }
    if norm_width < 0.0 {
        return Err(Error::domain(format!("negative normalising width {norm_width}")));
    }
    Ok(softplus(width) / softplus(norm_width))
}

/// `log P(box)` under the normalised softplus measure.
pub fn log_measure(b: &BoxEmbedding, extrema: &GlobalExtrema) -> Result<f64> {
    check_dim(b.dim(), extrema.dim(), "log_measure")?;
    Ok((0..b.dim()).map(|i| ln_softplus(b.width(i)) - extrema.ln_norm(i)).sum())
}

/// `log P(a ∩ b)`; symmetric in its arguments.
pub fn log_joint(a: &BoxEmbedding, b: &BoxEmbedding, extrema: &GlobalExtrema) -> Result<f64> {
    check_dim(a.dim(), b.dim(), "log_joint")?;
    check_dim(a.dim(), extrema.dim(), "log_joint")?;
    Ok((0..a.dim())
        .map(|i| ln_softplus(joint_width(a, b, i)) - extrema.ln_norm(i))
        .sum())
}

/// Unclamped `log P(a | b)`. The extrema cancel between numerator and
/// denominator, so the sum runs over `ln m(joint) - ln m(width_b)` directly.
/// Dimensions must already agree.
#[inline]
pub fn log_entailment_unchecked(a: &BoxEmbedding, b: &BoxEmbedding) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.dim() {
        acc += ln_softplus(joint_width(a, b, i)) - ln_softplus(b.width(i));
    }
    acc
}

/// Unclamped `log P(a | b)` with dimension checks.
pub fn log_entailment(a: &BoxEmbedding, b: &BoxEmbedding) -> Result<f64> {
    check_dim(a.dim(), b.dim(), "entailment")?;
    Ok(log_entailment_unchecked(a, b))
}

/// `P(a | b)` clamped to `[eps, 1 - eps]`.
pub fn entailment(a: &BoxEmbedding, b: &BoxEmbedding, extrema: &GlobalExtrema, eps: f64) -> Result<f64> {
    check_dim(a.dim(), b.dim(), "entailment")?;
    check_dim(a.dim(), extrema.dim(), "entailment")?;
    Ok(clamp_prob(log_entailment_unchecked(a, b).exp(), eps))
}

#[inline]
pub fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Gradient of [`log_measure`] with respect to the box parameters.
pub fn d_log_measure(b: &BoxEmbedding, extrema: &GlobalExtrema) -> Result<BoxGrad> {
    check_dim(b.dim(), extrema.dim(), "d_log_measure")?;
    let mut g = BoxGrad::zeros(b.dim());
    for i in 0..b.dim() {
        g.delta[i] = d_ln_softplus(b.width(i));
    }
    Ok(g)
}

/// Gradient of [`log_joint`] with respect to both boxes.
pub fn d_log_joint(a: &BoxEmbedding, b: &BoxEmbedding, extrema: &GlobalExtrema) -> Result<(BoxGrad, BoxGrad)> {
    check_dim(a.dim(), b.dim(), "d_log_joint")?;
    check_dim(a.dim(), extrema.dim(), "d_log_joint")?;
    let mut ga = BoxGrad::zeros(a.dim());
    let mut gb = BoxGrad::zeros(a.dim());
    add_log_joint_grad(a, b, 1.0, Some(&mut ga), Some(&mut gb));
    Ok((ga, gb))
}

/// Accumulate `scale * d log P(a ∩ b)` into the supplied buffers.
pub fn add_log_joint_grad(
    a: &BoxEmbedding,
    b: &BoxEmbedding,
    scale: f64,
    mut ga: Option<&mut BoxGrad>,
    mut gb: Option<&mut BoxGrad>,
) {
    for i in 0..a.dim() {
        let g = scale * d_ln_softplus(joint_width(a, b, i));
        // upper corner: min(max_a, max_b); ties go to `a`
        if a.upper(i) <= b.upper(i) {
            if let Some(ga) = ga.as_deref_mut() {
                ga.min[i] += g;
                ga.delta[i] += g;
            }
        } else if let Some(gb) = gb.as_deref_mut() {
            gb.min[i] += g;
            gb.delta[i] += g;
        }
        // lower corner: max(min_a, min_b); ties go to `a`
        if a.min[i] >= b.min[i] {
            if let Some(ga) = ga.as_deref_mut() {
                ga.min[i] -= g;
            }
        } else if let Some(gb) = gb.as_deref_mut() {
            gb.min[i] -= g;
        }
    }
}

/// Accumulate `scale * d log P(a | b)` into the supplied buffers.
pub fn add_log_entailment_grad(
    a: &BoxEmbedding,
    b: &BoxEmbedding,
    scale: f64,
    ga: Option<&mut BoxGrad>,
    mut gb: Option<&mut BoxGrad>,
) {
    add_log_joint_grad(a, b, scale, ga, gb.as_deref_mut());
    if let Some(gb) = gb {
        for i in 0..b.dim() {
            gb.delta[i] -= scale * d_ln_softplus(b.width(i));
        }
    }
}

/// Coordinate-wise extrema over a non-empty collection of boxes.
pub fn compute_extrema<'a, I>(boxes: I) -> Result<GlobalExtrema>
where
    I: IntoIterator<Item = &'a BoxEmbedding>,
{
    let mut iter = boxes.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::domain("compute_extrema on an empty collection"))?;
    let mut gmin = first.min.clone();
    let mut gmax: Vec<f64> = (0..first.dim()).map(|i| first.upper(i)).collect();
    for b in iter {
        check_dim(b.dim(), gmin.len(), "compute_extrema")?;
        for i in 0..b.dim() {
            gmin[i] = gmin[i].min(b.min[i]);
            gmax[i] = gmax[i].max(b.upper(i));
        }
    }
    GlobalExtrema::new(gmin, gmax)
}
