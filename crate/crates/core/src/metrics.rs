//! Costs, errors, constraint violations, and volume integrals of a surface
//! measured against boundary fields.
//!
//! Residuals are `Δz = z_objective − z_surface`: negative where tissue is
//! still above the objective (undercut), positive where the surface has been
//! cut past it (overcut). Overcut terms carry the extra weight `λ`.

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryField;
use crate::error::{Error, Result};
use crate::model::{Layout, TissueSurface};

pub const DEFAULT_LAMBDA: f64 = 4.0;
pub const DEFAULT_VIOLATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub modified_cost: f64,
    pub undercut_sq: f64,
    pub overcut_sq: f64,
    pub lambda: f64,
}

/// One point's contribution to the modified cost.
#[inline]
pub fn point_cost(dz: f64, lambda: f64) -> f64 {
    if dz > 0.0 {
        lambda * dz * dz
    } else {
        dz * dz
    }
}

/// `z_objective(x_i) − z_i` for every point.
pub fn residuals(surface: &TissueSurface, objective: &BoundaryField) -> Result<Vec<f64>> {
    surface
        .points()
        .iter()
        .map(|p| Ok(objective.interpolate([p[0], p[1]])? - p[2]))
        .collect()
}

pub fn modified_cost(
    surface: &TissueSurface,
    objective: &BoundaryField,
    lambda: f64,
) -> Result<CostBreakdown> {
    if !(lambda >= 1.0) {
        return Err(Error::Invalid(format!(
            "overcut weight must be >= 1, got {lambda}"
        )));
    }
    Ok(CostBreakdown::from_residuals(
        &residuals(surface, objective)?,
        lambda,
    ))
}

impl CostBreakdown {
    pub fn from_residuals(residuals: &[f64], lambda: f64) -> Self {
        let (mut under, mut over) = (0.0, 0.0);
        for &dz in residuals {
            if dz > 0.0 {
                over += dz * dz;
            } else {
                under += dz * dz;
            }
        }
        Self {
            modified_cost: under + lambda * over,
            undercut_sq: under,
            overcut_sq: over,
            lambda,
        }
    }
}

/// Mean squared vertical error against the objective.
pub fn mse(surface: &TissueSurface, objective: &BoundaryField) -> Result<f64> {
    let r = residuals(surface, objective)?;
    Ok(r.iter().map(|d| d * d).sum::<f64>() / r.len() as f64)
}

/// Indices of points strictly below `constraint − tolerance`.
pub fn violating_points(
    surface: &TissueSurface,
    constraint: &BoundaryField,
    tolerance: f64,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, p) in surface.points().iter().enumerate() {
        if p[2] < constraint.interpolate([p[0], p[1]])? - tolerance {
            out.push(i);
        }
    }
    Ok(out)
}

/// Violating point count and fraction of all points.
pub fn violation(
    surface: &TissueSurface,
    constraint: &BoundaryField,
    tolerance: f64,
) -> Result<(usize, f64)> {
    let count = violating_points(surface, constraint, tolerance)?.len();
    Ok((count, count as f64 / surface.len() as f64))
}

/// Error and volume summary of a final surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub violation_count: usize,
    pub violation_fraction: f64,
    pub removed_healthy_volume: f64,
    pub remaining_tumor_volume: f64,
    pub original_tumor_volume: f64,
}

impl MetricsReport {
    pub fn compute(
        initial: &TissueSurface,
        fin: &TissueSurface,
        objective: &BoundaryField,
        constraint: &BoundaryField,
        tolerance: f64,
    ) -> Result<Self> {
        let volumes = volume_metrics(initial, fin, objective)?;
        let (violation_count, violation_fraction) = violation(fin, constraint, tolerance)?;
        Ok(Self {
            mse: mse(fin, objective)?,
            violation_count,
            violation_fraction,
            ..volumes
        })
    }

    /// Tumor removed as a fraction of the original tumor volume.
    pub fn removed_tumor_fraction(&self) -> f64 {
        if self.original_tumor_volume == 0.0 {
            1.0
        } else {
            1.0 - self.remaining_tumor_volume / self.original_tumor_volume
        }
    }
}

/// Trapezoid-rule cell widths of sorted 1D coordinates.
fn cell_widths(coords: &[f64]) -> Vec<f64> {
    let n = coords.len();
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| {
            let left = if i == 0 {
                coords[0]
            } else {
                0.5 * (coords[i - 1] + coords[i])
            };
            let right = if i == n - 1 {
                coords[n - 1]
            } else {
                0.5 * (coords[i] + coords[i + 1])
            };
            right - left
        })
        .collect()
}

/// Lateral area (length, for planar surfaces) attributed to each point of a
/// grid-initialised surface.
pub fn cell_areas(surface: &TissueSurface) -> Vec<f64> {
    let pts = surface.points();
    match surface.layout() {
        Layout::Line => cell_widths(&pts.iter().map(|p| p[0]).collect::<Vec<_>>()),
        Layout::Grid { nx, ny } => {
            let xs: Vec<f64> = (0..nx).map(|i| pts[i][0]).collect();
            let ys: Vec<f64> = (0..ny).map(|j| pts[j * nx][1]).collect();
            let (wx, wy) = (cell_widths(&xs), cell_widths(&ys));
            wy.iter()
                .flat_map(|&b| wx.iter().map(move |&a| a * b))
                .collect()
        }
    }
}

/// Prismatic integration of height differences over the cells of `initial`.
///
/// Each final point is compared with the objective at its own lateral
/// position and weighted by the cell area of its initial position.
///
/// Only the volume fields of the returned report are filled.
pub fn volume_metrics(
    initial: &TissueSurface,
    fin: &TissueSurface,
    objective: &BoundaryField,
) -> Result<MetricsReport> {
    if initial.len() != fin.len() {
        return Err(Error::DimensionMismatch {
            expected: initial.len(),
            actual: fin.len(),
        });
    }
    let areas = cell_areas(initial);
    let (mut healthy, mut remaining, mut original) = (0.0, 0.0, 0.0);
    for ((p0, p1), area) in initial.points().iter().zip(fin.points()).zip(areas) {
        let zd0 = objective.interpolate([p0[0], p0[1]])?;
        // a point moved sideways by a tilted cut is scored where it now lies
        let zd1 = objective.interpolate([p1[0], p1[1]])?;
        healthy += area * (zd1 - p1[2]).max(0.0);
        if p0[2] > zd0 {
            remaining += area * (p1[2] - zd1).max(0.0);
            original += area * (p0[2] - zd0);
        }
    }
    Ok(MetricsReport {
        mse: 0.0,
        violation_count: 0,
        violation_fraction: 0.0,
        removed_healthy_volume: healthy,
        remaining_tumor_volume: remaining,
        original_tumor_volume: original,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn flat_objective(xs: &[f64], z: f64) -> BoundaryField {
        BoundaryField::line(xs.to_vec(), vec![z; xs.len()]).unwrap()
    }

    fn surface_with(xs: &[f64], zs: &[f64]) -> TissueSurface {
        TissueSurface::new(
            Layout::Line,
            xs.iter().zip(zs).map(|(&x, &z)| [x, 0.0, z]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn cost_cases() {
        let xs = grid(10);
        let obj = flat_objective(&xs, -1.0);
        let exact = TissueSurface::flat_line(&xs, -1.0).unwrap();
        assert_eq!(modified_cost(&exact, &obj, 4.0).unwrap().modified_cost, 0.0);

        let mut zs = vec![-1.0; 10];
        zs[3] = 0.0;
        let under = surface_with(&xs, &zs);
        for lambda in [1.0, 2.0, 7.5] {
            assert_abs_diff_eq!(
                modified_cost(&under, &obj, lambda).unwrap().modified_cost,
                1.0
            );
        }

        zs[3] = -1.5;
        let over = modified_cost(&surface_with(&xs, &zs), &obj, 2.0).unwrap();
        assert_abs_diff_eq!(over.modified_cost, 0.5);
        assert_abs_diff_eq!(over.overcut_sq, 0.25);
        assert_eq!(over.undercut_sq, 0.0);
        assert!(modified_cost(&exact, &obj, 0.5).is_err());
    }

    #[test]
    fn mse_cases() {
        let xs = grid(7);
        let obj = flat_objective(&xs, -0.3);
        assert_eq!(
            mse(&TissueSurface::flat_line(&xs, -0.3).unwrap(), &obj).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            mse(&TissueSurface::flat_line(&xs, -0.2).unwrap(), &obj).unwrap(),
            0.01,
            epsilon = 1e-15
        );
    }

    #[test]
    fn violation_cases() {
        let xs = grid(100);
        let c = flat_objective(&xs, -1.0);
        let above = TissueSurface::flat_line(&xs, 0.0).unwrap();
        assert_eq!(violation(&above, &c, 1e-9).unwrap(), (0, 0.0));
        let mut zs = vec![0.0; 100];
        zs[42] = -1.01;
        assert_eq!(
            violation(&surface_with(&xs, &zs), &c, 1e-9).unwrap(),
            (1, 0.01)
        );
        zs[42] = -1.0;
        assert_eq!(
            violation(&surface_with(&xs, &zs), &c, 1e-9).unwrap(),
            (0, 0.0)
        );
    }

    #[test]
    fn out_of_domain_points_are_an_error() {
        let c = flat_objective(&[0.0, 1.0], -1.0);
        let s = TissueSurface::flat_line(&[0.0, 1.2], 0.0).unwrap();
        assert!(violation(&s, &c, 0.0).is_err());
    }

    #[test]
    fn volume_prisms() {
        let xs = grid(21);
        let obj = flat_objective(&xs, -0.5);
        let initial = TissueSurface::flat_line(&xs, 0.0).unwrap();
        let at_obj = TissueSurface::flat_line(&xs, -0.5).unwrap();
        let v = volume_metrics(&initial, &at_obj, &obj).unwrap();
        assert_eq!(v.removed_healthy_volume, 0.0);
        assert_eq!(v.remaining_tumor_volume, 0.0);
        assert_abs_diff_eq!(v.original_tumor_volume, 1.0, epsilon = 1e-12);

        // uniformly 1 below the objective over lateral length 2
        let deep = TissueSurface::flat_line(&xs, -1.5).unwrap();
        let v = volume_metrics(&initial, &deep, &obj).unwrap();
        assert_abs_diff_eq!(v.removed_healthy_volume, 2.0, epsilon = 1e-12);

        let short = TissueSurface::flat_line(&xs, 0.0).unwrap();
        assert!(volume_metrics(
            &initial,
            &TissueSurface::flat_line(&xs[..5], 0.0).unwrap(),
            &obj
        )
        .is_err());
        let v = volume_metrics(&initial, &short, &obj).unwrap();
        assert_abs_diff_eq!(v.remaining_tumor_volume, v.original_tumor_volume);
    }

    #[test]
    fn grid_cell_areas_tile_the_domain() {
        let xs = grid(5);
        let ys = [0.0, 0.5, 2.0];
        let s = TissueSurface::flat_grid(&xs, &ys, 0.0).unwrap();
        let total: f64 = cell_areas(&s).iter().sum();
        assert_abs_diff_eq!(total, 2.0 * 2.0, epsilon = 1e-12);
    }
}
