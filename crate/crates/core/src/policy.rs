//! Discrete movement primitives for the four control coordinates
//! `(u1x, u1y, u2x, u2y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanics::ControlPair;

/// Number of controlled coordinates.
pub const DOFS: usize = 4;

/// Dense `rows × cols` matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ParamMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                expected: format!("{} values for {rows}x{cols}", rows * cols),
                actual: data.len().to_string(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, other: &ParamMatrix, s: f64) -> ParamMatrix {
        assert_eq!(self.shape(), other.shape(), "parameter shapes differ");
        ParamMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> ParamMatrix {
        ParamMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpParams {
    /// Forcing weights, one row per coordinate.
    pub theta: ParamMatrix,
    /// Start controls [m].
    pub u0: [f64; DOFS],
    /// Goal controls [m].
    pub u_t: [f64; DOFS],
    /// Duration `T` [s].
    pub duration: f64,
    pub alpha_u: f64,
    pub beta_u: f64,
    pub alpha_x: f64,
    /// Length per unit forcing weight [m].
    pub forcing_scale: f64,
}

/// Gains and sizes shared by every policy of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmpSettings {
    /// Basis functions per coordinate.
    pub basis_count: usize,
    /// Duration [s].
    pub duration: f64,
    /// Integration steps.
    pub steps: usize,
    pub alpha_u: f64,
    pub alpha_x: f64,
    /// [m]
    pub forcing_scale: f64,
}

impl Default for DmpSettings {
    fn default() -> Self {
        Self {
            basis_count: 10,
            duration: 5.0,
            steps: 200,
            alpha_u: 25.0,
            alpha_x: 4.0,
            forcing_scale: 0.01,
        }
    }
}

impl DmpSettings {
    pub fn validate(&self) -> Result<()> {
        if self.basis_count < 2 {
            return Err(Error::config("dmp.basis_count", "must be >= 2"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config("dmp.duration", "must be > 0"));
        }
        if self.steps == 0 {
            return Err(Error::config("dmp.steps", "must be >= 1"));
        }
        for (key, v) in [
            ("dmp.alpha_u", self.alpha_u),
            ("dmp.alpha_x", self.alpha_x),
            ("dmp.forcing_scale", self.forcing_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn params(&self, theta: ParamMatrix, u0: [f64; DOFS], u_t: [f64; DOFS]) -> DmpParams {
        DmpParams {
            theta,
            u0,
            u_t,
            duration: self.duration,
            alpha_u: self.alpha_u,
            beta_u: self.alpha_u / 4.0,
            alpha_x: self.alpha_x,
            forcing_scale: self.forcing_scale,
        }
    }

    pub fn zero_theta(&self) -> ParamMatrix {
        ParamMatrix::zeros(DOFS, self.basis_count)
    }
}

impl DmpParams {
    pub fn basis_count(&self) -> usize {
        self.theta.cols()
    }

    /// Basis centers in phase, from 1 down to `exp(-alpha_x)`.
    pub fn centers(&self) -> Vec<f64> {
        let p = self.basis_count();
        (0..p)
            .map(|i| (-self.alpha_x * i as f64 / (p - 1) as f64).exp())
            .collect()
    }

    /// Gaussian precisions chosen so neighbours cross at half height.
    pub fn widths(&self) -> Vec<f64> {
        let c = self.centers();
        let p = c.len();
        let mut h: Vec<f64> = (0..p - 1)
            .map(|i| 4.0 * std::f64::consts::LN_2 / (c[i] - c[i + 1]).powi(2))
            .collect();
        h.push(h[p - 2]);
        h
    }

    pub fn validate(&self) -> Result<()> {
        if self.basis_count() < 2 || self.theta.rows() != DOFS {
            return Err(Error::Shape {
                expected: format!("{DOFS}xP with P >= 2"),
                actual: format!("{}x{}", self.theta.rows(), self.theta.cols()),
            });
        }
        if !(self.duration > 0.0) {
            return Err(Error::config("dmp.duration", "must be > 0"));
        }
        Ok(())
    }

    /// Forcing value `s·(Σψθ/Σψ)·x` of each coordinate at phase `x`.
    pub fn forcing(&self, x: f64) -> [f64; DOFS] {
        let act = basis_activations(x, self);
        let mut f = [0.0; DOFS];
        for (k, fk) in f.iter_mut().enumerate() {
            let w: f64 = self.theta.row(k).iter().zip(&act).map(|(t, a)| t * a).sum();
            *fk = self.forcing_scale * w * x;
        }
        f
    }
}

/// Normalized activations of all bases at phase `x`.
pub fn basis_activations(x: f64, params: &DmpParams) -> Vec<f64> {
    let c = params.centers();
    let h = params.widths();
    let raw: Vec<f64> = c
        .iter()
        .zip(&h)
        .map(|(ci, hi)| (-hi * (x - ci).powi(2)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 {
        raw.iter().map(|r| r / sum).collect()
    } else {
        // Far outside every basis: fall back to the nearest center.
        let mut out = vec![0.0; raw.len()];
        let nearest = c
            .iter()
            .enumerate()
            .min_by(|a, b| (x - a.1).abs().total_cmp(&(x - b.1).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        out[nearest] = 1.0;
        out
    }
}

/// Euler integration of `T²ü = α_u(β_u(g − u) − T u̇) + f(x)` with
/// `x = exp(−α_x t/T)`, returning `steps + 1` control pairs.
pub fn generate(params: &DmpParams, steps: usize) -> Vec<ControlPair> {
    let steps = steps.max(1);
    let t_total = params.duration;
    let dt = t_total / steps as f64;
    let mut u = params.u0;
    let mut v = [0.0; DOFS];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(ControlPair::from_array(u));
    for i in 0..steps {
        let x = (-params.alpha_x * (i as f64 * dt) / t_total).exp();
        let f = params.forcing(x);
        for k in 0..DOFS {
            let acc = (params.alpha_u * (params.beta_u * (params.u_t[k] - u[k]) - t_total * v[k])
                + f[k])
                / (t_total * t_total);
            u[k] += dt * v[k];
            v[k] += dt * acc;
        }
        out.push(ControlPair::from_array(u));
    }
    out
}
