//! Delay scheduling: delays can only be prolonged, so the search runs over
//! the quadrant `τ' ≥ τ` of the precomputed rasters and picks the stable cell
//! with the fastest dominant root, keeping a safety margin from every curve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctcr_map::{Classification, StabilityMap};
use crate::qpr_roots::DominantSurface;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("no stabilizing prolongation within horizon")]
    NoStabilizingProlongation,
    #[error("stability map and dominant surface rasters differ ({map} vs {surface} cells, steps {map_h} vs {surface_h})")]
    RasterMismatch { map: usize, surface: usize, map_h: f64, surface_h: f64 },
    #[error("margin {margin} exceeds the boundary-distance cap {cap}")]
    Margin { margin: f64, cap: f64 },
    #[error("current delays ({0}, {1}) are negative or not finite")]
    Current(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rationale {
    RecoverStability,
    SpeedUp,
    AlreadyOptimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRecommendation {
    pub current: (f64, f64),
    pub recommended: (f64, f64),
    /// `Re s_dom` of the raster cell holding each point.
    pub current_re: Option<f64>,
    pub recommended_re: f64,
    pub current_class: Option<Classification>,
    pub margin_min: f64,
    pub rationale: Rationale,
}

impl ScheduleRecommendation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Default margin: three grid steps.
pub fn default_margin(map: &StabilityMap) -> f64 {
    3.0 * map.h
}

/// Fastest stable cell with `τ' ≥ current` and boundary distance at least
/// `margin_min`. Ties go to the least added delay `‖τ' - τ‖₁`, then to the
/// smaller `τ1'`, then `τ2'`.
pub fn recommend_delays(
    map: &StabilityMap,
    surface: &DominantSurface,
    current: (f64, f64),
    margin_min: f64,
) -> Result<ScheduleRecommendation, ScheduleError> {
    if map.cells != surface.cells || (map.h - surface.h).abs() > 1e-12 {
        return Err(ScheduleError::RasterMismatch {
            map: map.cells,
            surface: surface.cells,
            map_h: map.h,
            surface_h: surface.h,
        });
    }
    if margin_min > map.distance_cap {
        return Err(ScheduleError::Margin { margin: margin_min, cap: map.distance_cap });
    }
    let (t1, t2) = current;
    if !(t1 >= 0.0 && t2 >= 0.0 && t1.is_finite() && t2.is_finite()) {
        return Err(ScheduleError::Current(t1, t2));
    }

    let mut best: Option<((f64, f64), f64)> = None;
    let key = |p: (f64, f64), re: f64| (re, (p.0 - t1) + (p.1 - t2), p.0, p.1);
    for j in 0..map.cells {
        for i in 0..map.cells {
            let (x, y) = map.center(i, j);
            if x < t1 || y < t2 {
                continue;
            }
            let k = map.index(i, j);
            if map.class[k] != Classification::Stable || map.boundary_distance[k] < margin_min {
                continue;
            }
            let Some(re) = surface.re(i, j) else { continue };
            if re >= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((p, r)) => key((x, y), re).partial_cmp(&key(p, r)) == Some(std::cmp::Ordering::Less),
            };
            if better {
                best = Some(((x, y), re));
            }
        }
    }
    let (point, re) = best.ok_or(ScheduleError::NoStabilizingProlongation)?;

    let current_class = map.class_at(t1, t2);
    let current_re = map.cell_of(t1, t2).and_then(|(i, j)| surface.re(i, j));
    let within_cell = (point.0 - t1).abs() <= map.h && (point.1 - t2).abs() <= map.h;
    let (recommended, recommended_re, rationale) = if current_class == Some(Classification::Stable) && within_cell {
        (current, current_re.unwrap_or(re), Rationale::AlreadyOptimal)
    } else if current_class == Some(Classification::Stable) {
        (point, re, Rationale::SpeedUp)
    } else {
        (point, re, Rationale::RecoverStability)
    };
    Ok(ScheduleRecommendation { current, recommended, current_re, recommended_re, current_class, margin_min, rationale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qpr_roots::DominantRoot;
    use num_complex::Complex64;

    /// 4×4 rasters at h = 1 with a hand-made surface.
    fn rasters(re: [f64; 16], class: [Classification; 16]) -> (StabilityMap, DominantSurface) {
        let map = StabilityMap {
            tau_max: 4.0,
            h: 1.0,
            cells: 4,
            factor_nu: Vec::new(),
            nu_total: class.iter().map(|c| u32::from(*c == Classification::Unstable) * 2).collect(),
            class: class.to_vec(),
            boundary_distance: vec![5.0; 16],
            distance_cap: 5.0,
            consensus_possible: true,
        };
        let surface = DominantSurface {
            tau_max: 4.0,
            h: 1.0,
            cells: 4,
            roots: re.iter().map(|r| Some(DominantRoot { s: Complex64::new(*r, 1.0), factor: 0, residual: 0.0 })).collect(),
        };
        (map, surface)
    }

    use Classification::{Stable as S, Unstable as U};

    #[test]
    fn picks_fastest_cell_in_the_quadrant() {
        let re = [-0.1, -0.9, -0.2, -0.2, 0.1, 0.2, -0.3, -0.2, -0.2, -0.5, -0.4, -0.2, -0.1, -0.1, -0.1, -0.1];
        let class = [S, S, S, S, U, U, S, S, S, S, S, S, S, S, S, S];
        let (map, surface) = rasters(re, class);
        // from (0.5, 1.5) the -0.9 cell at (1.5, 0.5) is out of reach
        let r = recommend_delays(&map, &surface, (0.5, 1.5), 3.0).unwrap();
        assert_eq!(r.recommended, (1.5, 2.5));
        assert_eq!(r.rationale, Rationale::RecoverStability);
        assert!(r.recommended.0 >= r.current.0 && r.recommended.1 >= r.current.1);
    }

    #[test]
    fn optimum_at_current_cell_is_kept() {
        let re = [-0.1, -0.9, -0.2, -0.2, -0.1, -0.2, -0.3, -0.2, -0.2, -0.5, -0.4, -0.2, -0.1, -0.1, -0.1, -0.1];
        let (map, surface) = rasters(re, [S; 16]);
        let r = recommend_delays(&map, &surface, (1.4, 0.3), 3.0).unwrap();
        assert_eq!(r.rationale, Rationale::AlreadyOptimal);
        assert_eq!(r.recommended, (1.4, 0.3));
    }

    #[test]
    fn ties_prefer_least_added_delay() {
        let mut class = [S; 16];
        class[9] = U;
        let (map, surface) = rasters([-0.3; 16], class);
        // (1.5, 3.5) adds 1.6 s in total, (2.5, 2.5) adds 2.6 s
        let r = recommend_delays(&map, &surface, (1.2, 2.2), 3.0).unwrap();
        assert_eq!(r.recommended, (1.5, 3.5));
    }

    #[test]
    fn empty_quadrant_is_an_error() {
        let (map, surface) = rasters([-0.3; 16], [U; 16]);
        let e = recommend_delays(&map, &surface, (0.0, 0.0), 3.0).unwrap_err();
        assert_eq!(e.to_string(), "no stabilizing prolongation within horizon");
    }

    #[test]
    fn margin_excludes_cells_near_curves() {
        let (mut map, surface) = rasters([-0.3; 16], [S; 16]);
        map.boundary_distance = vec![1.0; 16];
        assert!(matches!(
            recommend_delays(&map, &surface, (0.0, 0.0), 3.0),
            Err(ScheduleError::NoStabilizingProlongation)
        ));
    }
}
