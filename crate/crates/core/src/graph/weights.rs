//! Sampling weights for nodes, laser positions, and laser powers, and the
//! cumulative-weight sampler that draws from them.

use rand::Rng;

use crate::boundary::BoundaryField;
use crate::error::Result;
use crate::metrics::{point_cost, residuals};
use crate::model::{TissueParams, TissueSurface};

/// Node weights `(max(C*) − C*_i)^a + ε_n`, favouring low-cost nodes.
pub fn node_weights(costs: &[f64], a: f64, eps_n: f64) -> Vec<f64> {
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    costs
        .iter()
        .map(|&c| node_weight(max, c, a, eps_n))
        .collect()
}

#[inline]
pub(crate) fn node_weight(max_cost: f64, cost: f64, a: f64, eps_n: f64) -> f64 {
    (max_cost - cost).powf(a) + eps_n
}

/// Per-point weight `cost(p_i) + ε_L`, where `cost` is the point's term of the
/// modified cost.
pub fn position_weights(
    surface: &TissueSurface,
    objective: &BoundaryField,
    lambda: f64,
    eps_l: f64,
) -> Result<Vec<f64>> {
    Ok(residuals(surface, objective)?
        .into_iter()
        .map(|dz| point_cost(dz, lambda) + eps_l)
        .collect())
}

/// Power that cuts the gap `gap` in one shot on the beam axis.
#[inline]
pub fn power_for_gap(params: &TissueParams, gap: f64) -> f64 {
    (params.beta * gap.abs() + params.phi) / params.dt
}

/// Power needed to bring the surface at `lateral` down to the objective in a
/// single cut centred there.
pub fn predicted_power(
    surface: &TissueSurface,
    objective: &BoundaryField,
    lateral: [f64; 2],
    params: &TissueParams,
) -> Result<f64> {
    let gap = objective.interpolate(lateral)? - surface.height_at(lateral)?;
    Ok(power_for_gap(params, gap))
}

/// Power weights `exp(b (max(E_I) − |E_i − E_p|))`.
///
/// Values overflow to infinity for large `b · max(E_I)`; samplers should use
/// [`power_sampler`], which draws from the same distribution in shifted form.
pub fn power_weights(power_set: &[f64], e_p: f64, b: f64) -> Vec<f64> {
    let max = power_set.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    power_set
        .iter()
        .map(|&e| (b * (max - (e - e_p).abs())).exp())
        .collect()
}

/// Sampler proportional to [`power_weights`], with the common factor divided
/// out so the largest weight is exactly 1.
pub fn power_sampler(power_set: &[f64], e_p: f64, b: f64) -> CumulativeSampler {
    let nearest = power_set
        .iter()
        .map(|&e| (e - e_p).abs())
        .fold(f64::INFINITY, f64::min);
    CumulativeSampler::from_weights(
        power_set
            .iter()
            .map(|&e| (b * (nearest - (e - e_p).abs())).exp()),
    )
}

/// Inverse-CDF sampling over a running sum of exact weights.
#[derive(Clone, Debug, Default)]
pub struct CumulativeSampler {
    cumulative: Vec<f64>,
}

impl CumulativeSampler {
    pub fn from_weights(weights: impl IntoIterator<Item = f64>) -> Self {
        let mut s = Self::default();
        for w in weights {
            s.push(w);
        }
        s
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            cumulative: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, weight: f64) {
        debug_assert!(weight >= 0.0 && weight.is_finite(), "bad weight {weight}");
        let total = self.total();
        self.cumulative.push(total + weight);
    }

    pub fn clear(&mut self) {
        self.cumulative.clear();
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Weight of entry `i`.
    pub fn weight(&self, i: usize) -> f64 {
        self.cumulative[i] - if i == 0 { 0.0 } else { self.cumulative[i - 1] }
    }

    /// Draws index `i` with probability `w_i / Σw`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        assert!(
            !self.cumulative.is_empty(),
            "sampling from an empty distribution"
        );
        let u = rng.gen::<f64>() * self.total();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    #[test]
    fn node_weight_cases() {
        assert_eq!(node_weights(&[2.0, 2.0, 2.0], 2.0, 1e-3), vec![1e-3; 3]);
        let w = node_weights(&[0.0, 1.0, 3.0], 1.0, 0.01);
        for (a, b) in w.iter().zip([3.01, 2.01, 0.01]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(node_weights(&[0.0, 1.0, 3.0], 0.0, 0.01), vec![1.01; 3]);
    }

    #[test]
    fn predicted_power_cases() {
        let s = TissueSurface::flat_line(&[0.0, 1.0], 0.0).unwrap();
        let p = TissueParams::new(2.0, 0.5, 1.0, 1.0).unwrap();
        let obj = |z: f64| BoundaryField::line(vec![0.0, 1.0], vec![z, z]).unwrap();
        assert_abs_diff_eq!(
            predicted_power(&s, &obj(-1.0), [0.5, 0.0], &p).unwrap(),
            2.5
        );
        assert_abs_diff_eq!(predicted_power(&s, &obj(0.0), [0.5, 0.0], &p).unwrap(), 0.5);
        let p = TissueParams::new(1.0, 0.0, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(
            predicted_power(&s, &obj(-3.0), [0.0, 0.0], &p).unwrap(),
            1.5
        );
        assert!(predicted_power(&s, &obj(-3.0), [2.0, 0.0], &p).is_err());
    }

    #[test]
    fn power_weight_cases() {
        assert_eq!(power_weights(&[1.0, 2.0, 3.0], 2.0, 0.0), vec![1.0; 3]);
        let w = power_weights(&[1.0, 2.0, 3.0], 2.0, 1.0);
        for (a, b) in w.iter().zip([E * E, E * E * E, E * E]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let s = power_sampler(&[1.0, 2.0, 3.0], 2.0, 1.0);
        assert_abs_diff_eq!(s.weight(0) / s.weight(1), 1.0 / E, epsilon = 1e-15);
    }

    #[test]
    fn sampler_respects_zero_weights() {
        let s = CumulativeSampler::from_weights([0.0, 1.0, 0.0, 2.0]);
        let mut rng = seeded(1);
        for _ in 0..1000 {
            let i = s.sample(&mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
