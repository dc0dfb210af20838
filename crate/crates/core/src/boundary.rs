//! Height fields for objective and constraint boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear (1D knots) or bilinear (rectangular grid) height field.
///
/// Grid heights are row-major: `heights[iy * xs.len() + ix]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryField {
    xs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ys: Option<Vec<f64>>,
    heights: Vec<f64>,
}

fn check_knots(knots: &[f64], axis: &str) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::Invalid(format!(
            "{axis} knots need at least two entries"
        )));
    }
    if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(format!(
            "{axis} knots must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Index `k` of the knot interval `[knots[k], knots[k+1]]` holding `q`, and the
/// fractional position within it.
fn locate(knots: &[f64], q: f64) -> Option<(usize, f64)> {
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    if !(q >= lo && q <= hi) {
        return None;
    }
    let k = knots
        .partition_point(|&k| k <= q)
        .saturating_sub(1)
        .min(knots.len() - 2);
    let t = (q - knots[k]) / (knots[k + 1] - knots[k]);
    Some((k, t))
}

impl BoundaryField {
    pub fn line(xs: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        check_knots(&xs, "x")?;
        if heights.len() != xs.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                actual: heights.len(),
            });
        }
        let field = Self {
            xs,
            ys: None,
            heights,
        };
        field.check_heights()?;
        Ok(field)
    }

    pub fn grid(xs: Vec<f64>, ys: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        check_knots(&xs, "x")?;
        check_knots(&ys, "y")?;
        if heights.len() != xs.len() * ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len() * ys.len(),
                actual: heights.len(),
            });
        }
        let field = Self {
            xs,
            ys: Some(ys),
            heights,
        };
        field.check_heights()?;
        Ok(field)
    }

    /// Samples `f(x, y)` at every knot of the given axes (`ys = None` for 1D).
    pub fn from_fn(
        xs: Vec<f64>,
        ys: Option<Vec<f64>>,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        match ys {
            None => {
                let h = xs.iter().map(|&x| f(x, 0.0)).collect();
                Self::line(xs, h)
            }
            Some(ys) => {
                let h = ys
                    .iter()
                    .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
                    .map(|(x, y)| f(x, y))
                    .collect();
                Self::grid(xs, ys, h)
            }
        }
    }

    /// Same knots, heights replaced by `f(knot_height, x, y)`.
    pub fn map(&self, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let heights = self
            .knots()
            .zip(&self.heights)
            .map(|((x, y), &h)| f(h, x, y))
            .collect();
        let field = Self {
            xs: self.xs.clone(),
            ys: self.ys.clone(),
            heights,
        };
        field.check_heights()?;
        Ok(field)
    }

    fn check_heights(&self) -> Result<()> {
        if self.heights.iter().all(|h| h.is_finite()) {
            Ok(())
        } else {
            Err(Error::Invalid("boundary heights must be finite".into()))
        }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> Option<&[f64]> {
        self.ys.as_deref()
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn dimension(&self) -> usize {
        if self.ys.is_some() {
            3
        } else {
            2
        }
    }

    /// Lateral coordinates of every knot, in height order.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let ys: &[f64] = self.ys.as_deref().unwrap_or(&[0.0]);
        ys.iter()
            .flat_map(move |&y| self.xs.iter().map(move |&x| (x, y)))
    }

    pub fn contains(&self, lateral: [f64; 2]) -> bool {
        let in_x = lateral[0] >= self.xs[0] && lateral[0] <= self.xs[self.xs.len() - 1];
        match &self.ys {
            None => in_x,
            Some(ys) => in_x && lateral[1] >= ys[0] && lateral[1] <= ys[ys.len() - 1],
        }
    }

    /// Height at `lateral`; exact at knots. 1D fields ignore `lateral[1]`.
    pub fn interpolate(&self, lateral: [f64; 2]) -> Result<f64> {
        let [x, y] = lateral;
        let out = || Error::OutOfDomain { x, y };
        let (i, tx) = locate(&self.xs, x).ok_or_else(out)?;
        match &self.ys {
            None => {
                let (h0, h1) = (self.heights[i], self.heights[i + 1]);
                Ok(if tx == 0.0 { h0 } else { h0 + (h1 - h0) * tx })
            }
            Some(ys) => {
                let (j, ty) = locate(ys, y).ok_or_else(out)?;
                let nx = self.xs.len();
                let h = |ix: usize, iy: usize| self.heights[iy * nx + ix];
                if tx == 0.0 && ty == 0.0 {
                    return Ok(h(i, j));
                }
                let bottom = h(i, j) + (h(i + 1, j) - h(i, j)) * tx;
                let top = h(i, j + 1) + (h(i + 1, j + 1) - h(i, j + 1)) * tx;
                Ok(bottom + (top - bottom) * ty)
            }
        }
    }

    /// Knot indices where `self` lies strictly above `other` (same knots).
    pub fn knots_above(&self, other: &BoundaryField) -> Result<Vec<usize>> {
        if self.xs != other.xs || self.ys != other.ys {
            return Err(Error::Invalid("boundary fields do not share knots".into()));
        }
        Ok(self
            .heights
            .iter()
            .zip(&other.heights)
            .enumerate()
            .filter(|(_, (a, b))| a > b)
            .map(|(k, _)| k)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn line_interpolation() {
        let f = BoundaryField::line(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, -1.0]).unwrap();
        assert_eq!(f.interpolate([1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(f.interpolate([3.0, 0.0]).unwrap(), -1.0);
        assert_abs_diff_eq!(f.interpolate([0.5, 0.0]).unwrap(), 0.5);
        assert_abs_diff_eq!(f.interpolate([2.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            f.interpolate([3.1, 0.0]),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(f.interpolate([-1e-9, 0.0]).is_err());
    }

    #[test]
    fn grid_interpolation() {
        let f =
            BoundaryField::grid(vec![0.0, 1.0], vec![0.0, 2.0], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.interpolate([1.0, 2.0]).unwrap(), 3.0);
        assert_abs_diff_eq!(f.interpolate([0.5, 1.0]).unwrap(), 1.5);
        assert!(f.interpolate([0.5, 2.5]).is_err());
        // bilinear reproduces an affine function exactly
        let g = BoundaryField::from_fn(vec![-1.0, 0.0, 1.0], Some(vec![-1.0, 0.5, 1.0]), |x, y| {
            2.0 * x - y + 0.3
        })
        .unwrap();
        assert_abs_diff_eq!(
            g.interpolate([0.3, -0.2]).unwrap(),
            0.6 + 0.2 + 0.3,
            epsilon = 1e-14
        );
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(BoundaryField::line(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(BoundaryField::line(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(BoundaryField::line(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn knots_above_lists_crossings() {
        let a = BoundaryField::line(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        let b = BoundaryField::line(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 0.5]).unwrap();
        assert_eq!(a.knots_above(&b).unwrap(), vec![1]);
    }
}
