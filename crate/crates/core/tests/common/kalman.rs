//! Kalman filter for the constant-velocity model, used as an oracle.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

pub fn transition(ts: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, ts, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, ts, //
        0.0, 0.0, 0.0, 1.0,
    )
}

pub fn noise(sigma_u: f64, sigma_v: f64) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(
        sigma_u * sigma_u,
        sigma_v * sigma_v,
        sigma_u * sigma_u,
        sigma_v * sigma_v,
    ))
}

/// Direct observation of the planar position.
pub fn position_observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

pub struct Kalman {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl Kalman {
    pub fn predict(&mut self, f: &Matrix4<f64>, q: &Matrix4<f64>) {
        self.mean = f * self.mean;
        self.cov = f * self.cov * f.transpose() + q;
    }

    pub fn update(&mut self, h: &Matrix2x4<f64>, r: &Matrix2<f64>, z: &Vector2<f64>) {
        let s = h * self.cov * h.transpose() + r;
        let k = self.cov * h.transpose() * s.try_inverse().unwrap();
        self.mean += k * (z - h * self.mean);
        // Joseph form keeps the covariance symmetric.
        let a = Matrix4::identity() - k * h;
        self.cov = a * self.cov * a.transpose() + k * r * k.transpose();
    }
}
