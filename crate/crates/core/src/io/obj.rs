//! Watertight ASCII OBJ export of surfaces parameterized over the grid.
//!
//! The mesh lattice is corner-based (n+1 points per edge per face) so
//! that seam vertices coincide exactly across neighboring faces; they
//! are welded by quantized position before the faces are emitted, which
//! leaves every edge shared by exactly two triangles.

use crate::error::Result;
use crate::geom::{Direction3, Vec3};
use crate::grid::{Chart, SphericalGrid};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

const WELD_QUANTUM: f64 = 1e-9;

/// A triangle mesh with welded vertices.
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    /// Build from a position map evaluated on the corner lattice of every
    /// cube face.
    pub fn from_positions(
        grid: &Arc<SphericalGrid>,
        position: impl Fn(Direction3) -> Vec3,
    ) -> Mesh {
        let n = grid.n();
        let h = grid.spacing();
        let mut vertices: Vec<Vec3> = Vec::new();
        let mut index: HashMap<(i64, i64, i64), u32> = HashMap::new();
        let mut triangles = Vec::new();

        let mut vertex_id = |p: Vec3, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (
                (p.x / WELD_QUANTUM).round() as i64,
                (p.y / WELD_QUANTUM).round() as i64,
                (p.z / WELD_QUANTUM).round() as i64,
            );
            *index.entry(key).or_insert_with(|| {
                vertices.push(p);
                (vertices.len() - 1) as u32
            })
        };

        for face in 0..6 {
            let chart: &Chart = &grid.charts()[face];
            // Corner lattice ids for this face.
            let mut ids = vec![0u32; (n + 1) * (n + 1)];
            for j in 0..=n {
                for i in 0..=n {
                    let y = [-1.0 + i as f64 * h, -1.0 + j as f64 * h];
                    let dir = chart.unproject(y);
                    let p = position(dir);
                    ids[j * (n + 1) + i] = vertex_id(p, &mut vertices);
                }
            }
            for j in 0..n {
                for i in 0..n {
                    let a = ids[j * (n + 1) + i];
                    let b = ids[j * (n + 1) + i + 1];
                    let c = ids[(j + 1) * (n + 1) + i + 1];
                    let d = ids[(j + 1) * (n + 1) + i];
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
            }
        }
        Mesh { vertices, triangles }
    }

    /// Every edge must be shared by exactly two triangles on a closed
    /// surface.
    pub fn is_watertight(&self) -> bool {
        let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        edge_count.values().all(|&c| c == 2)
    }

    pub fn to_obj_string(&self, object_name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "o {object_name}");
        for v in &self.vertices {
            let _ = writeln!(out, "v {:.15e} {:.15e} {:.15e}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    pub fn write_obj(&self, path: &Path, object_name: &str) -> Result<()> {
        std::fs::write(path, self.to_obj_string(object_name))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn sphere_mesh_is_watertight_and_welded() {
        let grid = build_grid(8).unwrap();
        let mesh = Mesh::from_positions(&grid, |d| d.as_vec());
        assert!(mesh.is_watertight());
        // Euler characteristic of a sphere: V - E + F = 2.
        let f = mesh.triangles.len() as i64;
        let e = (3 * mesh.triangles.len() / 2) as i64;
        let v = mesh.vertices.len() as i64;
        assert_eq!(v - e + f, 2);
        for p in &mesh.vertices {
            assert!((p.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn obj_output_is_deterministic() {
        let grid = build_grid(8).unwrap();
        let mesh1 = Mesh::from_positions(&grid, |d| d.as_vec() * 1.5);
        let mesh2 = Mesh::from_positions(&grid, |d| d.as_vec() * 1.5);
        assert_eq!(mesh1.to_obj_string("s"), mesh2.to_obj_string("s"));
    }
}
