//! Emission-absorption quadrature along rays, mask rendering and the
//! projection loss with its analytic gradient.

use super::grid::{check_same_grid, DensityField, GridSpec, MaskField, Trilinear};
use crate::error::{Error, Result};
use crate::geometry::Ray;

/// Uniform samples along one ray with their rendering weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RaySamples {
    pub t_values: Vec<f64>,
    pub deltas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Entry/exit parameters of `ray` through the grid bounds, if it crosses them
/// over a non-zero length.
pub fn ray_interval(grid: &GridSpec, ray: &Ray) -> Option<(f64, f64)> {
    grid.bounds()
        .intersect(ray)
        .filter(|(t0, t1)| t1 > t0)
}

/// Midpoint quadrature with `n` uniform steps over `[t_near, t_far]`:
/// `w_i = T_i (1 - exp(-σ_i δ))`, `T_i = exp(-Σ_{j<i} σ_j δ)`.
///
/// A ray that misses the field bounds over the interval yields empty samples.
pub fn compute_ray_weights(
    field: &DensityField,
    ray: &Ray,
    t_near: f64,
    t_far: f64,
    n: usize,
) -> Result<RaySamples> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples per ray, got {n}")));
    }
    if !(t_near < t_far) || !t_near.is_finite() || !t_far.is_finite() {
        return Err(Error::invalid(format!(
            "sample interval [{t_near}, {t_far}] is empty or not finite"
        )));
    }
    let hits = ray_interval(field.grid(), ray).is_some_and(|(t0, t1)| t0 < t_far && t1 > t_near);
    if !hits {
        return Ok(RaySamples::default());
    }

    let delta = (t_far - t_near) / n as f64;
    let mut samples = RaySamples {
        t_values: Vec::with_capacity(n),
        deltas: vec![delta; n],
        weights: Vec::with_capacity(n),
    };
    let mut optical_depth = 0.0_f64;
    for i in 0..n {
        let t = t_near + (i as f64 + 0.5) * delta;
        let tau = field.sample(&ray.at(t)) * delta;
        let transmittance = (-optical_depth).exp();
        samples.t_values.push(t);
        samples.weights.push(transmittance * (1.0 - (-tau).exp()));
        optical_depth += tau;
    }
    Ok(samples)
}

/// Samples of `ray` with non-zero weight paired with their grid stencils.
#[derive(Debug, Clone, Default)]
pub(crate) struct Footprint {
    pub taps: Vec<(Trilinear, f64)>,
}

impl Footprint {
    pub fn new(grid: &GridSpec, ray: &Ray, samples: &RaySamples) -> Self {
        let taps = samples
            .t_values
            .iter()
            .zip(&samples.weights)
            .filter(|(_, &w)| w != 0.0)
            .filter_map(|(&t, &w)| grid.trilinear(&ray.at(t)).map(|tri| (tri, w)))
            .collect();
        Self { taps }
    }

    /// Quadrature over the full box crossing of `ray`, empty on a miss.
    pub fn through_field(field: &DensityField, ray: &Ray, n: usize) -> Result<Self> {
        match ray_interval(field.grid(), ray) {
            Some((t0, t1)) => {
                let samples = compute_ray_weights(field, ray, t0, t1, n)?;
                Ok(Self::new(field.grid(), ray, &samples))
            }
            None => Ok(Self::default()),
        }
    }

    pub fn render(&self, mask: &MaskField) -> Vec<f64> {
        mask.scores()
            .iter()
            .map(|s| self.taps.iter().map(|(tri, w)| w * tri.sample(s)).sum())
            .collect()
    }
}

/// `M_i(r) = Σ_k w_k · V_i(r(t_k))`, one value per object.
pub fn render_mask(mask: &MaskField, ray: &Ray, samples: &RaySamples) -> Result<Vec<f64>> {
    if mask.n_objects() == 0 {
        return Err(Error::invalid("render_mask: no objects"));
    }
    if samples.weights.len() != samples.t_values.len() {
        return Err(Error::ShapeMismatch("ray samples have ragged lists".into()));
    }
    Ok(Footprint::new(mask.grid(), ray, samples).render(mask))
}

/// Derivative of the projection loss with respect to `M_i(r)`.
#[inline]
pub(crate) fn loss_slope(m_ext: f64, lambda: f64) -> f64 {
    -m_ext + lambda * (1.0 - m_ext)
}

/// `L = -Σ_i Σ_r m_ext·M + λ Σ_i Σ_r (1 - m_ext)·M`.
///
/// Both arguments are indexed `[object][ray]`.
pub fn projection_loss(m_ext: &[Vec<f64>], m_render: &[Vec<f64>], lambda: f64) -> Result<f64> {
    if m_ext.len() != m_render.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} supplied masks vs {} rendered objects",
            m_ext.len(),
            m_render.len()
        )));
    }
    let mut loss = 0.0;
    for (obj, (ext, rendered)) in m_ext.iter().zip(m_render).enumerate() {
        if ext.len() != rendered.len() {
            return Err(Error::ShapeMismatch(format!(
                "object {obj}: {} mask rays vs {} rendered rays",
                ext.len(),
                rendered.len()
            )));
        }
        loss += ext
            .iter()
            .zip(rendered)
            .map(|(&m, &r)| loss_slope(m, lambda) * r)
            .sum::<f64>();
    }
    Ok(loss)
}

/// Analytic `∂L/∂V` for the rays in `rays`/`samples`, one grid per object.
pub fn projection_loss_gradient(
    mask: &MaskField,
    rays: &[Ray],
    samples: &[RaySamples],
    m_ext: &[Vec<f64>],
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    if rays.len() != samples.len() {
        return Err(Error::ShapeMismatch("one sample set per ray required".into()));
    }
    if m_ext.len() != mask.n_objects() || m_ext.iter().any(|m| m.len() != rays.len()) {
        return Err(Error::ShapeMismatch("m_ext must be [object][ray]".into()));
    }
    let mut grad = vec![vec![0.0; mask.grid().len()]; mask.n_objects()];
    for (r, (ray, s)) in rays.iter().zip(samples).enumerate() {
        let fp = Footprint::new(mask.grid(), ray, s);
        for (obj, g) in grad.iter_mut().enumerate() {
            let slope = loss_slope(m_ext[obj][r], lambda);
            for (tri, w) in &fp.taps {
                for &(idx, c) in &tri.corners {
                    g[idx] += slope * w * c;
                }
            }
        }
    }
    Ok(grad)
}

/// Renders every ray of `rays` against `mask`, `[object][ray]`.
pub fn render_rays(
    field: &DensityField,
    mask: &MaskField,
    rays: &[Ray],
    samples_per_ray: usize,
) -> Result<Vec<Vec<f64>>> {
    check_same_grid(field.grid(), mask.grid())?;
    let mut out = vec![Vec::with_capacity(rays.len()); mask.n_objects()];
    for ray in rays {
        let m = Footprint::through_field(field, ray, samples_per_ray)?.render(mask);
        for (o, v) in out.iter_mut().zip(m) {
            o.push(v);
        }
    }
    Ok(out)
}
