use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// `s_t = D s_xx + k s² + u(x)` on `[0, 1] × [0, T]` with zero initial and
/// boundary values. Grid sizes count the boundary points and `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeConfig {
    pub diffusion: f64,
    pub reaction: f64,
    pub nx: usize,
    pub nt: usize,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            diffusion: 0.01,
            reaction: 0.5,
            nx: 100,
            nt: 100,
            t_final: 1.0,
            newton_tol: 1e-10,
            newton_max_iters: 50,
        }
    }
}

impl PdeConfig {
    pub fn dx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / (self.nt - 1) as f64
    }

    pub fn x_grid(&self) -> Array1<f64> {
        Array1::linspace(0.0, 1.0, self.nx)
    }

    pub fn t_grid(&self) -> Array1<f64> {
        Array1::linspace(0.0, self.t_final, self.nt)
    }
}

/// Solves a tridiagonal system; `sub[0]` and `sup[n-1]` are ignored.
pub(crate) fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::Factorization(
            "zero pivot in tridiagonal solve".into(),
        ));
    }
    c[0] = sup[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::Factorization(
                "zero pivot in tridiagonal solve".into(),
            ));
        }
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Crank–Nicolson in time, central differences in space, Newton iteration
/// on the quadratic reaction term. Returns `s[i, j] = s(x_i, t_j)`.
pub fn solve_diffusion_reaction(u: &[f64], cfg: &PdeConfig) -> Result<Array2<f64>> {
    if cfg.nx < 3 || cfg.nt < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid {}x{} too small",
            cfg.nx, cfg.nt
        )));
    }
    if u.len() != cfg.nx {
        return Err(Error::shape(format!("{} source values", cfg.nx), u.len()));
    }
    let n = cfg.nx - 2;
    let dt = cfg.dt();
    let r = cfg.diffusion * dt / (2.0 * cfg.dx().powi(2));
    let half_k = 0.5 * cfg.reaction * dt;
    let mut field = Array2::zeros((cfg.nx, cfg.nt));
    // interior unknowns; boundary values stay zero
    let mut prev = vec![0.0; n];
    let at = |s: &[f64], i: isize| {
        if i < 0 || i as usize >= s.len() {
            0.0
        } else {
            s[i as usize]
        }
    };
    let lap = |s: &[f64], i: usize| at(s, i as isize - 1) - 2.0 * s[i] + at(s, i as isize + 1);
    let sub = vec![-r; n];
    let sup = vec![-r; n];
    for step in 1..cfg.nt {
        let b: Vec<f64> = (0..n)
            .map(|i| prev[i] + r * lap(&prev, i) + half_k * prev[i] * prev[i] + dt * u[i + 1])
            .collect();
        let residual = |s: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| s[i] - r * lap(s, i) - half_k * s[i] * s[i] - b[i])
                .collect()
        };
        let mut s = prev.clone();
        let mut f = residual(&s);
        let mut converged = false;
        for _ in 0..cfg.newton_max_iters {
            let diag: Vec<f64> = s
                .iter()
                .map(|&v| 1.0 + 2.0 * r - 2.0 * half_k * v)
                .collect();
            let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
            let delta = thomas(&sub, &diag, &sup, &neg_f)?;
            s.iter_mut().zip(&delta).for_each(|(v, d)| *v += d);
            f = residual(&s);
            let fmax = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let dmax = delta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if !fmax.is_finite() {
                return Err(Error::NewtonDivergence {
                    step,
                    residual: fmax,
                });
            }
            if fmax < cfg.newton_tol || dmax < cfg.newton_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            let fmax = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            return Err(Error::NewtonDivergence {
                step,
                residual: fmax,
            });
        }
        for (i, v) in s.iter().enumerate() {
            field[[i + 1, step]] = *v;
        }
        prev = s;
    }
    Ok(field)
}

/// One Crank–Nicolson step of `s_t = D s_xx` with periodic boundaries,
/// `r = D dt / (2 dx²)`. The cyclic system is reduced to two tridiagonal
/// solves (Sherman–Morrison).
pub fn periodic_heat_step(s: &[f64], r: f64) -> Result<Vec<f64>> {
    let n = s.len();
    if n < 3 {
        return Err(Error::InvalidParameter(
            "periodic grid needs at least 3 points".into(),
        ));
    }
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let l = s[(i + n - 1) % n];
            let rr = s[(i + 1) % n];
            s[i] + r * (l - 2.0 * s[i] + rr)
        })
        .collect();
    // corner entries a = c = −r enter through a rank-one correction
    let (a, c) = (-r, -r);
    let b0 = 1.0 + 2.0 * r;
    let gamma = -b0;
    let mut diag = vec![b0; n];
    diag[0] = b0 - gamma;
    diag[n - 1] = b0 - c * a / gamma;
    let sub = vec![-r; n];
    let sup = vec![-r; n];
    let y = thomas(&sub, &diag, &sup, &rhs)?;
    let mut w = vec![0.0; n];
    w[0] = gamma;
    w[n - 1] = c;
    let q = thomas(&sub, &diag, &sup, &w)?;
    let factor = (y[0] + a * y[n - 1] / gamma) / (1.0 + q[0] + a * q[n - 1] / gamma);
    Ok(y.iter().zip(&q).map(|(yi, qi)| yi - factor * qi).collect())
}
