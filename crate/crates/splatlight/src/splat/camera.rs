//! Pinhole camera: intrinsics, world-to-camera pose, projection and rays.
//!
//! Camera space looks along +z with +x right and +y down (image rows).
//! Pixel (i, j) covers the unit square with center (i + 0.5, j + 0.5).

use nalgebra::{Isometry3, Matrix2x3, Matrix3, Point3, Rotation3, Translation3, Vector3};

use crate::error::{Error, Result};

/// Points closer than this (camera-space z) are treated as behind the camera.
pub const ZNEAR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_cam: Isometry3<f64>,
}

impl Camera {
    /// Camera at `eye` looking at `target`, with `up` fixing the roll and
    /// `fov_y` (radians) the full vertical field of view.
    pub fn look_at(
        width: usize,
        height: usize,
        fov_y: f64,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::malformed("camera needs nonzero dimensions"));
        }
        if !(fov_y > 0.0 && fov_y < std::f64::consts::PI) {
            return Err(Error::malformed(format!("vertical fov {fov_y} outside (0, pi)")));
        }
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::malformed("camera eye and target coincide"));
        }
        let z_c = forward.normalize();
        let x_raw = z_c.cross(&up.normalize());
        if x_raw.norm() < 1e-9 {
            return Err(Error::malformed("camera up is parallel to the view direction"));
        }
        let x_c = x_raw.normalize();
        let y_c = z_c.cross(&x_c);
        // Rows of the world-to-camera rotation are the camera axes.
        let rot = Rotation3::from_matrix_unchecked(
            Matrix3::from_rows(&[x_c.transpose(), y_c.transpose(), z_c.transpose()]),
        );
        let t = -(rot * eye);
        let world_to_cam = Isometry3::from_parts(Translation3::from(t), rot.into());

        let fy = 0.5 * height as f64 / (0.5 * fov_y).tan();
        Ok(Camera {
            width,
            height,
            fx: fy,
            fy,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            world_to_cam,
        })
    }

    /// Camera position in world space.
    pub fn center(&self) -> Vector3<f64> {
        self.world_to_cam
            .inverse_transform_point(&Point3::origin())
            .coords
    }

    /// Projects a world point to (pixel u, pixel v, camera depth z); `None`
    /// behind the camera.
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let t = self.world_to_cam.transform_point(&Point3::from(*p)).coords;
        if t.z <= ZNEAR {
            return None;
        }
        let inv_z = 1.0 / t.z;
        Some((
            self.fx * t.x * inv_z + self.cx,
            self.fy * t.y * inv_z + self.cy,
            t.z,
        ))
    }

    /// World ray through pixel coordinates (u, v); unit direction.
    pub fn pixel_ray(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>) {
        let d_cam = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let d_world = self.world_to_cam.inverse().rotation * d_cam.normalize();
        (self.center(), d_world)
    }

    /// World point on the pixel's viewing ray at camera-space depth z.
    pub fn point_at_depth(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        let p_cam = Point3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z);
        self.world_to_cam.inverse_transform_point(&p_cam).coords
    }

    /// Jacobian of the world-to-pixel projection at `p` (2x3, d(u,v)/d(world)).
    pub fn projection_jacobian(&self, p: &Vector3<f64>) -> Option<Matrix2x3<f64>> {
        let t = self.world_to_cam.transform_point(&Point3::from(*p)).coords;
        if t.z <= ZNEAR {
            return None;
        }
        let inv_z = 1.0 / t.z;
        let j_cam = Matrix2x3::new(
            self.fx * inv_z,
            0.0,
            -self.fx * t.x * inv_z * inv_z,
            0.0,
            self.fy * inv_z,
            -self.fy * t.y * inv_z * inv_z,
        );
        let w = self.world_to_cam.rotation.to_rotation_matrix();
        Some(j_cam * w.matrix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_cam() -> Camera {
        Camera::look_at(
            128,
            96,
            60f64.to_radians(),
            Vector3::new(0.6, -0.9, 0.5),
            Vector3::new(0.0, 0.0, 0.1),
            Vector3::z(),
        )
        .unwrap()
    }

    #[test]
    fn target_projects_to_image_center() {
        let cam = test_cam();
        let (u, v, z) = cam.project_point(&Vector3::new(0.0, 0.0, 0.1)).unwrap();
        assert!((u - cam.cx).abs() < 1e-9, "u = {u}");
        assert!((v - cam.cy).abs() < 1e-9, "v = {v}");
        assert!(z > 0.0);
    }

    #[test]
    fn points_behind_are_rejected() {
        let cam = test_cam();
        let behind = cam.center() + (cam.center() - Vector3::new(0.0, 0.0, 0.1));
        assert!(cam.project_point(&behind).is_none());
    }

    #[test]
    fn projection_and_ray_are_consistent() {
        let cam = test_cam();
        for p in [
            Vector3::new(0.05, 0.1, 0.0),
            Vector3::new(-0.2, 0.05, 0.3),
            Vector3::new(0.1, -0.15, -0.1),
        ] {
            let (u, v, z) = cam.project_point(&p).unwrap();
            let (o, d) = cam.pixel_ray(u, v);
            // p must lie on the ray.
            let along = (p - o).dot(&d);
            let off = (p - o) - along * d;
            assert!(off.norm() < 1e-9, "ray misses by {}", off.norm());
            assert!(along > 0.0);
            let back = cam.point_at_depth(u, v, z);
            assert!((back - p).norm() < 1e-9);
        }
    }

    #[test]
    fn up_is_up_in_the_image() {
        let cam = test_cam();
        // A point displaced along +z (world up) must move up the image
        // (smaller v).
        let p = Vector3::new(0.0, 0.0, 0.1);
        let (_, v0, _) = cam.project_point(&p).unwrap();
        let (_, v1, _) = cam.project_point(&(p + Vector3::new(0.0, 0.0, 0.05))).unwrap();
        assert!(v1 < v0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let cam = test_cam();
        let p = Vector3::new(0.07, -0.12, 0.23);
        let j = cam.projection_jacobian(&p).unwrap();
        let h = 1e-6;
        for axis in 0..3 {
            let mut dp = Vector3::zeros();
            dp[axis] = h;
            let (u1, v1, _) = cam.project_point(&(p + dp)).unwrap();
            let (u0, v0, _) = cam.project_point(&(p - dp)).unwrap();
            let du = (u1 - u0) / (2.0 * h);
            let dv = (v1 - v0) / (2.0 * h);
            assert!((j[(0, axis)] - du).abs() < 1e-4 * du.abs().max(1.0), "axis {axis}");
            assert!((j[(1, axis)] - dv).abs() < 1e-4 * dv.abs().max(1.0), "axis {axis}");
        }
    }
}
