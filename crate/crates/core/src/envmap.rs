//! Voxel occupancy grid and Euclidean signed distance field.
//!
//! Distances are exact (per-axis lower-envelope transform, not a chamfer
//! approximation). Sign convention: positive in free space, negative inside
//! obstacles, zero on the boundary up to one voxel. A grid with no occupied
//! voxels reports [`ESDF_SENTINEL`] everywhere.

use crate::{Error, Mode, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Distance reported in free voxels when the grid contains no obstacles
/// (and, negated, in occupied voxels when there is no free space).
pub const ESDF_SENTINEL: f64 = 1.0e9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Box3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// Obstacle primitives standing in for a fused point-cloud map.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ObstacleSet {
    #[serde(default)]
    pub boxes: Vec<Box3>,
    #[serde(default)]
    pub cylinders: Vec<Cylinder>,
}

impl ObstacleSet {
    pub fn validate(&self) -> Result<()> {
        for b in &self.boxes {
            for k in 0..3 {
                if !(b.min[k] < b.max[k]) {
                    return Err(Error::InvalidInput(format!(
                        "box min must be < max per axis, got {:?}..{:?}",
                        b.min, b.max
                    )));
                }
            }
        }
        for c in &self.cylinders {
            if !(c.radius > 0.0) {
                return Err(Error::InvalidInput("cylinder radius must be > 0".into()));
            }
            if !(c.z_min < c.z_max) {
                return Err(Error::InvalidInput("cylinder z_min must be < z_max".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        for b in &self.boxes {
            if (0..3).all(|k| p[k] >= b.min[k] && p[k] <= b.max[k]) {
                return true;
            }
        }
        for c in &self.cylinders {
            if p.z >= c.z_min && p.z <= c.z_max {
                let dx = p.x - c.center[0];
                let dy = p.y - c.center[1];
                if dx * dx + dy * dy <= c.radius * c.radius {
                    return true;
                }
            }
        }
        false
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty() && self.cylinders.is_empty()
    }
}

/// Shared geometry of the occupancy grid and the ESDF. Voxel (0,0,0) covers
/// the cube [origin, origin + resolution)^3; values live at voxel centers.
/// Linear indexing is x-fastest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridGeom {
    pub origin: [f64; 3],
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl GridGeom {
    pub fn new(origin: [f64; 3], dims: [usize; 3], resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidInput("resolution must be > 0".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput("grid dims must be positive".into()));
        }
        Ok(Self { origin, resolution, dims })
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + (ix as f64 + 0.5) * self.resolution,
            self.origin[1] + (iy as f64 + 0.5) * self.resolution,
            self.origin[2] + (iz as f64 + 0.5) * self.resolution,
        )
    }

    /// Voxel containing a world point, or None when outside the grid.
    pub fn world_to_voxel(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for k in 0..3 {
            let u = (p[k] - self.origin[k]) / self.resolution;
            if u < 0.0 {
                return None;
            }
            let i = u.floor() as usize;
            if i >= self.dims[k] {
                // Points exactly on the max face belong to the last voxel.
                if u <= self.dims[k] as f64 {
                    out[k] = self.dims[k] - 1;
                    continue;
                }
                return None;
            }
            out[k] = i;
        }
        Some(out)
    }

    pub fn contains_point(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| {
            p[k] >= self.origin[k] && p[k] <= self.origin[k] + self.dims[k] as f64 * self.resolution
        })
    }
}

#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub geom: GridGeom,
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    #[inline]
    pub fn is_occupied(&self, ix: usize, iy: usize, iz: usize) -> bool {
        self.occupied[self.geom.index(ix, iy, iz)]
    }

    /// Occupancy at a world point; out-of-bounds counts as occupied so the
    /// planner never leaves the map.
    pub fn is_occupied_at(&self, p: &Vector3<f64>) -> bool {
        match self.geom.world_to_voxel(p) {
            Some([ix, iy, iz]) => self.is_occupied(ix, iy, iz),
            None => true,
        }
    }
}

/// Rasterize obstacle primitives: a voxel is occupied iff its center lies
/// inside any primitive.
pub fn grid_from_obstacles(
    obstacles: &ObstacleSet,
    origin: [f64; 3],
    dims: [usize; 3],
    resolution: f64,
) -> Result<OccupancyGrid> {
    obstacles.validate()?;
    let geom = GridGeom::new(origin, dims, resolution)?;
    let mut occupied = vec![false; geom.voxel_count()];
    if !obstacles.is_empty() {
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let c = geom.voxel_center(ix, iy, iz);
                    if obstacles.contains(&c) {
                        occupied[geom.index(ix, iy, iz)] = true;
                    }
                }
            }
        }
    }
    Ok(OccupancyGrid { geom, occupied })
}

#[derive(Debug, Clone)]
pub struct Esdf {
    pub geom: GridGeom,
    /// Signed distance (m) per voxel, x-fastest.
    pub dist: Vec<f64>,
}

/// Result of an interpolated ESDF query.
#[derive(Debug, Clone, Copy)]
pub struct EsdfQuery {
    pub distance: f64,
    pub gradient: Vector3<f64>,
    /// True when the query point was clamped into the grid bounds.
    pub clamped: bool,
}

/// 1D squared-distance transform (lower envelope of parabolas). `f` holds
/// squared distances in voxel units; output overwrites `d`.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Exact 3D squared EDT of the indicator `seed[i] == true` (distance to the
/// nearest seed voxel, in voxel units).
fn edt_3d(geom: &GridGeom, seed: impl Fn(usize) -> bool) -> Vec<f64> {
    let [nx, ny, nz] = geom.dims;
    // Large finite stand-in for +inf: the parabola intersection arithmetic
    // must stay NaN-free (inf - inf). Dims are bounded well below 1e6, so
    // 1e12 dominates any reachable squared distance.
    let mut sq = vec![1.0e12; geom.voxel_count()];
    for (i, s) in sq.iter_mut().enumerate() {
        if seed(i) {
            *s = 0.0;
        }
    }
    let nmax = nx.max(ny).max(nz);
    let mut f = vec![0.0; nmax];
    let mut d = vec![0.0; nmax];
    let mut v = vec![0usize; nmax];
    let mut z = vec![0.0; nmax + 1];

    // x pass
    for iz in 0..nz {
        for iy in 0..ny {
            let base = geom.index(0, iy, iz);
            f[..nx].copy_from_slice(&sq[base..base + nx]);
            edt_1d(&f[..nx], &mut d[..nx], &mut v, &mut z);
            sq[base..base + nx].copy_from_slice(&d[..nx]);
        }
    }
    // y pass
    for iz in 0..nz {
        for ix in 0..nx {
            for iy in 0..ny {
                f[iy] = sq[geom.index(ix, iy, iz)];
            }
            edt_1d(&f[..ny], &mut d[..ny], &mut v, &mut z);
            for iy in 0..ny {
                sq[geom.index(ix, iy, iz)] = d[iy];
            }
        }
    }
    // z pass
    for iy in 0..ny {
        for ix in 0..nx {
            for iz in 0..nz {
                f[iz] = sq[geom.index(ix, iy, iz)];
            }
            edt_1d(&f[..nz], &mut d[..nz], &mut v, &mut z);
            for iz in 0..nz {
                sq[geom.index(ix, iy, iz)] = d[iz];
            }
        }
    }
    sq
}

/// Exact Euclidean signed distance field. Free voxels carry the distance to
/// the nearest occupied voxel center; occupied voxels carry the negated
/// distance to the nearest free voxel center.
pub fn compute_esdf(grid: &OccupancyGrid) -> Esdf {
    let geom = grid.geom.clone();
    let n = geom.voxel_count();
    let any_occ = grid.occupied.iter().any(|&o| o);
    let any_free = grid.occupied.iter().any(|&o| !o);
    let res = geom.resolution;

    let mut dist = vec![ESDF_SENTINEL; n];
    if any_occ {
        let sq_occ = edt_3d(&geom, |i| grid.occupied[i]);
        for i in 0..n {
            if !grid.occupied[i] {
                dist[i] = res * sq_occ[i].sqrt();
            }
        }
    }
    if any_free {
        let sq_free = edt_3d(&geom, |i| !grid.occupied[i]);
        for i in 0..n {
            if grid.occupied[i] {
                dist[i] = if any_free { -(res * sq_free[i].sqrt()) } else { -ESDF_SENTINEL };
            }
        }
    } else {
        for (i, d) in dist.iter_mut().enumerate() {
            if grid.occupied[i] {
                *d = -ESDF_SENTINEL;
            }
        }
    }
    Esdf { geom, dist }
}

impl Esdf {
    #[inline]
    fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.dist[self.geom.index(ix, iy, iz)]
    }

    /// Trilinearly interpolated distance and its analytic spatial gradient.
    /// Out-of-bounds points are clamped to the interpolation domain and
    /// flagged; NaN input is an error.
    pub fn query(&self, p: &Vector3<f64>) -> Result<EsdfQuery> {
        if p.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("NaN in ESDF query point".into()));
        }
        let res = self.geom.resolution;
        let mut i0 = [0usize; 3];
        let mut frac = [0.0f64; 3];
        let mut clamped = false;
        for k in 0..3 {
            // Continuous coordinate in voxel-center units.
            let mut u = (p[k] - self.geom.origin[k]) / res - 0.5;
            let umax = (self.geom.dims[k] - 1) as f64;
            if u < 0.0 {
                u = 0.0;
                clamped = true;
            } else if u > umax {
                u = umax;
                clamped = true;
            }
            let mut i = u.floor() as usize;
            if i >= self.geom.dims[k] - 1 {
                i = self.geom.dims[k].saturating_sub(2);
            }
            if self.geom.dims[k] == 1 {
                i0[k] = 0;
                frac[k] = 0.0;
            } else {
                i0[k] = i;
                frac[k] = u - i as f64;
            }
        }
        let (fx, fy, fz) = (frac[0], frac[1], frac[2]);
        let get = |dx: usize, dy: usize, dz: usize| -> f64 {
            let ix = (i0[0] + dx).min(self.geom.dims[0] - 1);
            let iy = (i0[1] + dy).min(self.geom.dims[1] - 1);
            let iz = (i0[2] + dz).min(self.geom.dims[2] - 1);
            self.value(ix, iy, iz)
        };
        let c000 = get(0, 0, 0);
        let c100 = get(1, 0, 0);
        let c010 = get(0, 1, 0);
        let c110 = get(1, 1, 0);
        let c001 = get(0, 0, 1);
        let c101 = get(1, 0, 1);
        let c011 = get(0, 1, 1);
        let c111 = get(1, 1, 1);

        let c00 = c000 * (1.0 - fx) + c100 * fx;
        let c10 = c010 * (1.0 - fx) + c110 * fx;
        let c01 = c001 * (1.0 - fx) + c101 * fx;
        let c11 = c011 * (1.0 - fx) + c111 * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        let distance = c0 * (1.0 - fz) + c1 * fz;

        // Analytic derivatives of the trilinear interpolant, per meter.
        let ddx = ((c100 - c000) * (1.0 - fy) + (c110 - c010) * fy) * (1.0 - fz)
            + ((c101 - c001) * (1.0 - fy) + (c111 - c011) * fy) * fz;
        let ddy = (c10 - c00) * (1.0 - fz) + (c11 - c01) * fz;
        let ddz = c1 - c0;
        let gradient = Vector3::new(ddx, ddy, ddz) / res;
        Ok(EsdfQuery { distance, gradient, clamped })
    }

    /// Dump the field as little-endian f32, x-fastest, with a JSON sidecar
    /// describing geometry, ordering, and sign convention.
    pub fn write_binary(&self, bin_path: &Path, header_path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.dist.len() * 4);
        for &d in &self.dist {
            buf.extend_from_slice(&(d as f32).to_le_bytes());
        }
        std::fs::File::create(bin_path)?.write_all(&buf)?;
        let header = serde_json::json!({
            "origin": self.geom.origin,
            "dims": self.geom.dims,
            "resolution": self.geom.resolution,
            "dtype": "f32le",
            "order": "x-fastest",
            "sign_convention": "positive in free space, negative inside obstacles",
            "sentinel": ESDF_SENTINEL,
        });
        std::fs::write(header_path, serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }
}

/// On-disk map description: obstacle primitives plus grid geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapFile {
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    pub resolution: f64,
    #[serde(default)]
    pub ground_height: f64,
    pub obstacles: ObstacleSet,
}

impl MapFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn to_grid(&self) -> Result<OccupancyGrid> {
        grid_from_obstacles(&self.obstacles, self.origin, self.dims, self.resolution)
    }
}

/// Used by trajectory labeling and the mission sampler: a point is
/// terrestrial iff z <= ground_height + z_tol (inclusive).
pub fn mode_for_height(z: f64, ground_height: f64, z_tol: f64) -> Mode {
    if z <= ground_height + z_tol {
        Mode::Terrestrial
    } else {
        Mode::Aerial
    }
}
