//! Boxes `Π_j [−L_j, L_j]` sampled at spacing `h_j = 2L_j/P_j`, complex fields
//! on their nodes, and the discrete operators acting on those fields.
//!
//! Dirichlet boxes carry the `P_j − 1` interior nodes `−L_j + i h_j`,
//! `i = 1..P_j−1` (values on the boundary are implicitly zero, and the origin
//! is a node whenever `P_j` is even). Periodic boxes carry `P_j` nodes
//! `−L_j + i h_j`, `i = 0..P_j−1`, with wraparound neighbors.

mod operator;
mod spectral;

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::vector::{self, C64};

pub use operator::{DiscreteOperator, EigenBasis, EigenOp, FirstOrderOp, PolynomialOp, StencilOp, TensorOp};
pub use spectral::{LaplacianSymbol, SpectralBasis, SpectralOp};

/// Default cap on the node count of a grid (16 bytes per node per field).
pub const DEFAULT_MAX_NODES: usize = 1 << 24;

const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

/// Description of a box grid. Scalars in `extent`/`points` are broadcast to
/// every axis when deserialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub extent: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub points: Vec<usize>,
    pub boundary: Boundary,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_max_nodes() -> usize {
    DEFAULT_MAX_NODES
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl GridSpec {
    /// Same extent and point count on every axis.
    pub fn cube(dim: usize, extent: f64, points: usize, boundary: Boundary) -> Self {
        Self { dim, extent: vec![extent; dim], points: vec![points; dim], boundary, max_nodes: DEFAULT_MAX_NODES }
    }

    fn normalized(&self) -> Result<GridSpec> {
        let mut spec = self.clone();
        if spec.dim < 3 {
            return Err(Error::Grid(format!("dimension must be at least 3, got {}", spec.dim)));
        }
        for (name, len) in [("extent", spec.extent.len()), ("points", spec.points.len())] {
            if len != 1 && len != spec.dim {
                return Err(Error::Grid(format!("{name} needs 1 or {} entries, got {len}", spec.dim)));
            }
        }
        if spec.extent.len() == 1 {
            spec.extent = vec![spec.extent[0]; spec.dim];
        }
        if spec.points.len() == 1 {
            spec.points = vec![spec.points[0]; spec.dim];
        }
        if spec.extent.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Grid("extents must be positive".into()));
        }
        if spec.points.iter().any(|&p| p < 2) {
            return Err(Error::Grid("at least 2 points per axis are required".into()));
        }
        Ok(spec)
    }

    pub fn spacing(&self) -> Vec<f64> {
        let e = |j: usize| self.extent[j.min(self.extent.len() - 1)];
        let p = |j: usize| self.points[j.min(self.points.len() - 1)];
        (0..self.dim).map(|j| 2.0 * e(j) / p(j) as f64).collect()
    }

    pub fn build(&self) -> Result<Arc<Grid>> {
        Grid::new(self).map(Arc::new)
    }
}

/// A validated grid with its node layout and neighbor table.
#[derive(Debug)]
pub struct Grid {
    spec: GridSpec,
    shape: Vec<usize>,
    strides: Vec<usize>,
    h: Vec<f64>,
    axis_coords: Vec<Vec<f64>>,
    len: usize,
    neighbors: Vec<u32>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec.dim == other.spec.dim
            && self.spec.extent == other.spec.extent
            && self.spec.points == other.spec.points
            && self.spec.boundary == other.spec.boundary
    }
}

impl Grid {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        let spec = spec.normalized()?;
        let n = spec.dim;
        let h = spec.spacing();
        let (shape, offset): (Vec<usize>, usize) = match spec.boundary {
            Boundary::Dirichlet => (spec.points.iter().map(|p| p - 1).collect(), 1),
            Boundary::Periodic => (spec.points.clone(), 0),
        };
        let len = shape.iter().try_fold(1usize, |acc, &m| acc.checked_mul(m));
        let len = match len {
            Some(l) if l <= spec.max_nodes && l < NO_NEIGHBOR as usize => l,
            _ => return Err(Error::Grid(format!("node count {:?} exceeds the budget of {} nodes", shape, spec.max_nodes))),
        };
        let mut strides = vec![1usize; n];
        for j in (0..n - 1).rev() {
            strides[j] = strides[j + 1] * shape[j + 1];
        }
        let axis_coords = (0..n).map(|j| (0..shape[j]).map(|i| -spec.extent[j] + (i + offset) as f64 * h[j]).collect()).collect();
        let periodic = spec.boundary == Boundary::Periodic;
        let mut neighbors = vec![NO_NEIGHBOR; len * 2 * n];
        for idx in 0..len {
            let mut rem = idx;
            for j in 0..n {
                let i = rem / strides[j];
                rem %= strides[j];
                let m = shape[j];
                let base = idx * 2 * n + 2 * j;
                if i > 0 {
                    neighbors[base] = (idx - strides[j]) as u32;
                } else if periodic {
                    neighbors[base] = (idx + (m - 1) * strides[j]) as u32;
                }
                if i + 1 < m {
                    neighbors[base + 1] = (idx + strides[j]) as u32;
                } else if periodic {
                    neighbors[base + 1] = (idx - (m - 1) * strides[j]) as u32;
                }
            }
        }
        Ok(Self { spec, shape, strides, h, axis_coords, len, neighbors })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn dim(&self) -> usize {
        self.spec.dim
    }
    pub fn boundary(&self) -> Boundary {
        self.spec.boundary
    }
    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    /// Unknowns per axis.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn spacing(&self) -> &[f64] {
        &self.h
    }
    /// Largest spacing over the axes.
    pub fn max_spacing(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }
    pub fn axis_coords(&self, axis: usize) -> &[f64] {
        &self.axis_coords[axis]
    }
    /// Volume element `Π_j h_j`.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Multi-index of a node.
    pub fn multi_index(&self, idx: usize, out: &mut [usize]) {
        let mut rem = idx;
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = rem / s;
            rem %= s;
        }
    }

    /// Coordinates of a node.
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let mut rem = idx;
        for ((o, stride), coords) in out.iter_mut().zip(&self.strides).zip(&self.axis_coords) {
            let i = rem / stride;
            rem %= stride;
            *o = coords[i];
        }
    }

    pub fn point_vec(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.spec.dim];
        self.point(idx, &mut p);
        p
    }

    /// Neighbor of `idx` one step along `axis` in direction `dir` (±1).
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> Option<usize> {
        let v = self.neighbors[idx * 2 * self.spec.dim + 2 * axis + forward as usize];
        (v != NO_NEIGHBOR).then_some(v as usize)
    }

    /// Evaluates a real function at every node.
    pub fn sample<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        use rayon::prelude::*;
        (0..self.len)
            .into_par_iter()
            .map_init(
                || vec![0.0; self.spec.dim],
                |p, idx| {
                    self.point(idx, p);
                    f(p)
                },
            )
            .collect()
    }

    /// Index of the node at the given coordinates, if there is one.
    pub fn node_at(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for (j, c) in self.axis_coords.iter().enumerate() {
            let t = (x[j] - c[0]) / self.h[j];
            let i = t.round();
            if (t - i).abs() > 1e-9 || i < 0.0 || i as usize >= c.len() {
                return None;
            }
            idx += i as usize * self.strides[j];
        }
        Some(idx)
    }
}

/// A complex value per node of a grid.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    data: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), data: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_vec(grid: &Arc<Grid>, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: grid.clone(), data })
    }

    pub fn from_fn<F: Fn(&[f64]) -> C64>(grid: &Arc<Grid>, f: F) -> Self {
        let mut p = vec![0.0; grid.dim()];
        let data = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut p);
                f(&p)
            })
            .collect();
        Self { grid: grid.clone(), data }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    fn check(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `⟨self, other⟩ = Σ conj(self)·other·hⁿ`.
    pub fn inner(&self, other: &Field) -> Result<C64> {
        self.check(other)?;
        Ok(vector::dot(&self.data, &other.data) * self.grid.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        (vector::norm_sq(&self.data) * self.grid.cell_volume()).sqrt()
    }

    /// `self + alpha·other`.
    pub fn add_scaled(&self, alpha: C64, other: &Field) -> Result<Field> {
        self.check(other)?;
        let mut out = self.clone();
        vector::axpy(alpha, &other.data, &mut out.data);
        Ok(out)
    }

    pub fn scaled(&self, alpha: C64) -> Field {
        let mut out = self.clone();
        vector::scale(alpha, &mut out.data);
        out
    }

    /// Multiplies pointwise by a real weight sampled at the nodes.
    pub fn weighted(&self, weight: &[f64]) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().zip(weight).for_each(|(v, w)| *v *= w);
        out
    }

    /// Writes the one-line JSON header followed by little-endian `(re, im)`
    /// pairs in row-major order.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = self.grid.spec();
        let header = serde_json::json!({
            "dim": spec.dim,
            "points": spec.points,
            "extent": spec.extent,
            "boundary": spec.boundary,
        });
        writeln!(w, "{header}")?;
        let mut buf = Vec::with_capacity(self.data.len() * 16);
        for v in &self.data {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a dump written by [`Field::write_dump`].
    pub fn read_dump<R: Read>(mut r: R) -> Result<Field> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Invalid("field dump lacks a header line".into()))?;
        #[derive(Deserialize)]
        struct Header {
            dim: usize,
            points: Vec<usize>,
            extent: Vec<f64>,
            boundary: Boundary,
        }
        let h: Header = serde_json::from_slice(&bytes[..nl])?;
        let grid =
            GridSpec { dim: h.dim, extent: h.extent, points: h.points, boundary: h.boundary, max_nodes: DEFAULT_MAX_NODES }.build()?;
        let payload = &bytes[nl + 1..];
        if payload.len() != grid.len() * 16 {
            return Err(Error::Invalid(format!("field dump payload has {} bytes, expected {}", payload.len(), grid.len() * 16)));
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        let data = payload.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect();
        Ok(Field { grid, data })
    }
}

/// Both sides of the discrete Hardy inequality:
/// `(⟨ψ, −Δ_h ψ⟩, ((n−2)²/4)·⟨ψ, |x|⁻² ψ⟩)`.
pub fn hardy_check(field: &Field) -> Result<(f64, f64)> {
    let grid = field.grid();
    if grid.boundary() != Boundary::Dirichlet {
        return Err(Error::Grid("the Hardy check needs a Dirichlet grid".into()));
    }
    let n = grid.dim() as f64;
    let guard = 2.0 * grid.max_spacing() * (1.0 - 1e-12);
    let mut p = vec![0.0; grid.dim()];
    let mut rhs = 0.0;
    for (idx, v) in field.data().iter().enumerate() {
        grid.point(idx, &mut p);
        let r2: f64 = p.iter().map(|x| x * x).sum();
        if v.norm_sqr() == 0.0 {
            continue;
        }
        if r2.sqrt() < guard {
            return Err(Error::Invalid("field must vanish within 2h of the origin".into()));
        }
        rhs += v.norm_sqr() / r2;
    }
    let lap = DiscreteOperator::laplacian(grid);
    let lhs = field.inner(&lap.apply_field(field)?)?.re;
    Ok((lhs, (n - 2.0).powi(2) / 4.0 * rhs * grid.cell_volume()))
}
