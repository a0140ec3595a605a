//! Page-anchored polygons reported by the layout provider.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("page_number must be >= 1")]
    ZeroPage,
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {index} is not finite and non-negative: ({x}, {y})")]
    BadVertex { index: usize, x: f64, y: f64 },
}

/// A polygon on one page, in page units (points).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingRegion {
    #[serde(alias = "pageNumber")]
    pub page_number: u32,
    pub polygon: Vec<[f64; 2]>,
}

impl BoundingRegion {
    pub fn new(page_number: u32, polygon: Vec<[f64; 2]>) -> Result<Self, RegionError> {
        let region = Self {
            page_number,
            polygon,
        };
        region.validate()?;
        Ok(region)
    }

    /// Axis-aligned rectangle as a four-vertex polygon.
    pub fn rect(page_number: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, RegionError> {
        Self::new(page_number, vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn validate(&self) -> Result<(), RegionError> {
        if self.page_number == 0 {
            return Err(RegionError::ZeroPage);
        }
        if self.polygon.len() < 3 {
            return Err(RegionError::TooFewVertices(self.polygon.len()));
        }
        for (index, &[x, y]) in self.polygon.iter().enumerate() {
            let ok = |v: f64| v.is_finite() && v >= 0.0;
            if !ok(x) || !ok(y) {
                return Err(RegionError::BadVertex { index, x, y });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_regions() {
        assert_eq!(
            BoundingRegion::new(0, vec![[0.0, 0.0]; 3]),
            Err(RegionError::ZeroPage)
        );
        assert_eq!(
            BoundingRegion::new(1, vec![[0.0, 0.0], [1.0, 1.0]]),
            Err(RegionError::TooFewVertices(2))
        );
        assert!(matches!(
            BoundingRegion::new(1, vec![[0.0, 0.0], [1.0, f64::NAN], [2.0, 2.0]]),
            Err(RegionError::BadVertex { index: 1, .. })
        ));
        assert!(matches!(
            BoundingRegion::new(1, vec![[0.0, 0.0], [-1.0, 0.0], [2.0, 2.0]]),
            Err(RegionError::BadVertex { index: 1, .. })
        ));
        assert!(BoundingRegion::rect(2, 10.0, 10.0, 50.0, 40.0).is_ok());
    }

    #[test]
    fn polygon_serializes_as_pairs() {
        let r = BoundingRegion::rect(1, 0.0, 0.0, 1.0, 2.0).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(
            text,
            r#"{"page_number":1,"polygon":[[0.0,0.0],[1.0,0.0],[1.0,2.0],[0.0,2.0]]}"#
        );
    }
}
