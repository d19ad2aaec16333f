//! Common evaluation interface for analytic and learned spatially varying BRDFs.

use crate::angles::LocalFrame;
use crate::error::Result;
use crate::math::{Rgb, Vec3};
use crate::parametric::Material;

/// A point on the surface with its shading frame and positional encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub frame: LocalFrame,
    pub encoding: Vec<f64>,
}

impl SurfacePoint {
    pub fn new(position: Vec3, normal: Vec3, encoding: Vec<f64>) -> Self {
        SurfacePoint {
            position,
            frame: LocalFrame::from_normal(normal),
            encoding,
        }
    }
}

/// One `(x, v, l)` evaluation request.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub point: &'a SurfacePoint,
    pub v: Vec3,
    pub l: Vec3,
}

pub trait SpatialBrdf: Sync {
    /// `f(x, l, v)` for every query; fails on lower-hemisphere directions.
    fn eval_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Rgb>>;

    fn eval(&self, point: &SurfacePoint, v: Vec3, l: Vec3) -> Result<Rgb> {
        Ok(self.eval_batch(&[Query { point, v, l }])?[0])
    }
}

impl SpatialBrdf for Material {
    fn eval_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Rgb>> {
        queries.iter().map(|q| Material::eval(self, &q.point.frame, q.v, q.l)).collect()
    }
}

/// Spatially constant BRDF `c` (for integrator checks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantBrdf(pub Rgb);

impl SpatialBrdf for ConstantBrdf {
    fn eval_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Rgb>> {
        queries
            .iter()
            .map(|q| {
                crate::parametric::ShadingGeometry::new(&q.point.frame, q.v, q.l)?;
                Ok(self.0)
            })
            .collect()
    }
}
