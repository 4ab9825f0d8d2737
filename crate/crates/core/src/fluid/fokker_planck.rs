//! Explicit finite-volume solver for the 1-D Fokker–Planck equation
//!
//! ```text
//! ∂ρ/∂t = −∂/∂x [A(x) ρ] + ½ ∂²/∂x² [D(x) ρ]
//! ```
//!
//! with zero-flux (reflecting) walls at both grid ends. The update is written
//! in flux form, so probability mass is conserved up to rounding.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub dx: f64,
    /// Probability density at each cell centre; mass is `Σ density·dx`.
    pub density: Vec<f64>,
}

impl Grid1D {
    /// Zero density on `n` cells covering `[lo, hi]`.
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::DegenerateGrid(format!("bounds [{lo}, {hi}]")));
        }
        if n < 3 {
            return Err(Error::DegenerateGrid(format!(
                "need at least 3 cells, got {n}"
            )));
        }
        Ok(Self {
            lo,
            hi,
            n,
            dx: (hi - lo) / n as f64,
            density: vec![0.0; n],
        })
    }

    /// Grid initialised from an unnormalised profile sampled at cell centres
    /// and scaled to unit mass.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut g = Self::new(lo, hi, n)?;
        for i in 0..n {
            g.density[i] = f(g.center(i)).max(0.0);
        }
        let mass = g.mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::DegenerateGrid("initial profile has no mass".into()));
        }
        for d in &mut g.density {
            *d /= mass;
        }
        Ok(g)
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.center(i))
    }

    /// Cell holding `x`, if it lies inside the grid.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.lo || x > self.hi {
            return None;
        }
        Some((((x - self.lo) / self.dx) as usize).min(self.n - 1))
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.dx
    }

    pub fn mean(&self) -> f64 {
        self.centers()
            .zip(&self.density)
            .map(|(x, d)| x * d)
            .sum::<f64>()
            * self.dx
            / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.centers()
            .zip(&self.density)
            .map(|(x, d)| (x - m).powi(2) * d)
            .sum::<f64>()
            * self.dx
            / self.mass()
    }

    /// `Σ |ρ₁ − ρ₂|·dx` against a grid of identical shape.
    pub fn l1_distance(&self, other: &Grid1D) -> Result<f64> {
        if self.n != other.n || self.lo != other.lo || self.hi != other.hi {
            return Err(Error::DegenerateGrid("grids differ in shape".into()));
        }
        Ok(self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.dx)
    }

    /// Normalised histogram of `samples` on this grid's cells. Samples outside
    /// `[lo, hi]` are counted in the mass denominator but not binned.
    pub fn histogram(&self, samples: &[f64]) -> Grid1D {
        let mut g = Grid1D {
            density: vec![0.0; self.n],
            ..self.clone()
        };
        for &x in samples {
            if let Some(i) = g.cell_of(x) {
                g.density[i] += 1.0;
            }
        }
        let norm = samples.len() as f64 * g.dx;
        for d in &mut g.density {
            *d /= norm;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSolution {
    pub grid: Grid1D,
    pub steps: usize,
    /// Effective step actually used (`t_end / steps`).
    pub dt: f64,
    /// Number of cell updates that went negative and were clipped.
    pub clip_events: usize,
    /// Largest `|mass − 1|` observed after any step.
    pub max_mass_error: f64,
}

/// Evolves `grid` to `t_end` under drift `A(x)` and squared diffusion
/// `D(x)`.
///
/// Requires `dt ≤ dx²/max D` and `dt·max|A| ≤ dx`. The step is shrunk so
/// that an integer number of steps lands exactly on `t_end`.
pub fn solve_fokker_planck_1d(
    grid: Grid1D,
    drift: impl Fn(f64) -> f64,
    diffusion_sq: impl Fn(f64) -> f64,
    dt: f64,
    t_end: f64,
) -> Result<FpSolution> {
    let n = grid.n;
    if n < 3 || !(grid.dx > 0.0) || grid.density.len() != n {
        return Err(Error::DegenerateGrid("malformed grid".into()));
    }
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::Stability(format!("dt = {dt}, t_end = {t_end}")));
    }
    let dx = grid.dx;

    // D at cell centres, A at interior interfaces i+1/2 (i = 0..n-2).
    let d: Vec<f64> = grid.centers().map(&diffusion_sq).collect();
    let a: Vec<f64> = (0..n - 1)
        .map(|i| drift(grid.lo + (i + 1) as f64 * dx))
        .collect();
    if d.iter().chain(&a).any(|v| !v.is_finite()) {
        return Err(Error::Stability(
            "non-finite coefficient on the grid".into(),
        ));
    }
    if d.iter().any(|&v| v < 0.0) {
        return Err(Error::Stability("negative diffusion coefficient".into()));
    }
    let d_max = d.iter().cloned().fold(0.0, f64::max);
    let a_max = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if d_max > 0.0 && dt > dx * dx / d_max {
        return Err(Error::Stability(format!(
            "dt = {dt} exceeds dx²/max D = {}",
            dx * dx / d_max
        )));
    }
    if a_max > 0.0 && dt * a_max > dx {
        return Err(Error::Stability(format!(
            "dt = {dt} exceeds dx/max|A| = {}",
            dx / a_max
        )));
    }

    let steps = if t_end == 0.0 {
        0
    } else {
        (t_end / dt).ceil() as usize
    };
    let h = if steps == 0 {
        0.0
    } else {
        t_end / steps as f64
    };
    let ratio = h / dx;

    let mut rho = grid.density.clone();
    let initial_mass: f64 = rho.iter().sum::<f64>() * dx;
    let mut flux = vec![0.0; n - 1];
    let mut clip_events = 0;
    let mut max_mass_error: f64 = 0.0;

    for _ in 0..steps {
        for i in 0..n - 1 {
            let adv = a[i] * 0.5 * (rho[i] + rho[i + 1]);
            let dif = 0.5 * (d[i + 1] * rho[i + 1] - d[i] * rho[i]) / dx;
            flux[i] = adv - dif;
        }
        let mut clipped = false;
        for i in 0..n {
            let left = if i == 0 { 0.0 } else { flux[i - 1] };
            let right = if i == n - 1 { 0.0 } else { flux[i] };
            rho[i] -= ratio * (right - left);
            if rho[i] < 0.0 {
                rho[i] = 0.0;
                clip_events += 1;
                clipped = true;
            }
        }
        if clipped {
            let m: f64 = rho.iter().sum::<f64>() * dx;
            if m > 0.0 {
                let scale = initial_mass / m;
                for r in &mut rho {
                    *r *= scale;
                }
            }
        }
        let m: f64 = rho.iter().sum::<f64>() * dx;
        max_mass_error = max_mass_error.max((m - initial_mass).abs());
    }

    Ok(FpSolution {
        grid: Grid1D {
            density: rho,
            ..grid
        },
        steps,
        dt: h,
        clip_events,
        max_mass_error,
    })
}

/// Which window equation's coefficients to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowCoefficients {
    /// Growth `1/T` as in the final coupled system.
    FinalSystem,
    /// Growth `1/W` as in the per-ACK derivation.
    PerAck,
}

/// Drift and squared diffusion of the window equation for a frozen marking
/// intensity `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEquation {
    pub coefficients: WindowCoefficients,
    pub rtt: f64,
    pub lambda: f64,
}

impl WindowEquation {
    fn growth(&self, w: f64) -> f64 {
        match self.coefficients {
            WindowCoefficients::FinalSystem => 1.0 / self.rtt,
            WindowCoefficients::PerAck => 1.0 / w,
        }
    }

    pub fn drift(&self, w: f64) -> f64 {
        self.growth(w) - 0.5 * w * self.lambda
    }

    pub fn diffusion_sq(&self, w: f64) -> f64 {
        self.growth(w) + 0.5 * w * self.lambda
    }
}

/// Drift and squared diffusion of the instantaneous-queue equation for a
/// frozen window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueEquation {
    pub window: f64,
    pub rtt: f64,
    pub capacity: f64,
}

impl QueueEquation {
    pub fn drift(&self, _q: f64) -> f64 {
        self.window / self.rtt - self.capacity
    }

    pub fn diffusion_sq(&self, _q: f64) -> f64 {
        (self.window / self.rtt - self.capacity).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(mean: f64, sd: f64) -> impl Fn(f64) -> f64 {
        move |x| (-(x - mean).powi(2) / (2.0 * sd * sd)).exp()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 1.0, 10).is_err());
        assert!(Grid1D::new(0.0, f64::INFINITY, 10).is_err());
        assert!(Grid1D::from_fn(0.0, 1.0, 10, |_| 0.0).is_err());
    }

    #[test]
    fn null_generator_leaves_density_unchanged() {
        let g = Grid1D::from_fn(-5.0, 5.0, 100, gaussian(0.3, 1.0)).unwrap();
        let sol = solve_fokker_planck_1d(g.clone(), |_| 0.0, |_| 0.0, 0.01, 1.0).unwrap();
        assert_eq!(sol.grid.density, g.density);
        assert_eq!(sol.clip_events, 0);
    }

    #[test]
    fn heat_kernel_variance_grows_as_two_t() {
        // A = 0, D = 2 gives ∂ρ/∂t = ∂²ρ/∂x², so Var(t) = Var(0) + 2t.
        let g = Grid1D::from_fn(-20.0, 20.0, 800, gaussian(0.0, 0.2)).unwrap();
        let v0 = g.variance();
        let t = 2.0;
        let dt = 0.9 * g.dx * g.dx / 2.0;
        let sol = solve_fokker_planck_1d(g, |_| 0.0, |_| 2.0, dt, t).unwrap();
        let grown = sol.grid.variance() - v0;
        assert!((grown - 2.0 * t).abs() / (2.0 * t) < 0.02, "grew {grown}");
        assert!((sol.grid.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mass_is_conserved_with_drift_and_walls() {
        let eq = WindowEquation {
            coefficients: WindowCoefficients::FinalSystem,
            rtt: 0.1,
            lambda: 2.0,
        };
        let g = Grid1D::from_fn(1.0, 31.0, 150, gaussian(4.0, 1.0)).unwrap();
        let sol =
            solve_fokker_planck_1d(g, |w| eq.drift(w), |w| eq.diffusion_sq(w), 5e-4, 3.0).unwrap();
        assert!(sol.max_mass_error < 1e-8);
        assert!((sol.grid.mass() - 1.0).abs() < 1e-10);
        assert!(sol.grid.density.iter().all(|&d| d >= 0.0));
        // Relaxes towards the W = 10 balance point.
        assert!((sol.grid.mean() - 10.0).abs() < 1.0, "{}", sol.grid.mean());
    }

    #[test]
    fn stability_guard() {
        let g = Grid1D::from_fn(0.0, 1.0, 100, |_| 1.0).unwrap();
        let err = solve_fokker_planck_1d(g.clone(), |_| 0.0, |_| 1.0, 1e-3, 1.0);
        assert!(matches!(err, Err(Error::Stability(_))));
        let err = solve_fokker_planck_1d(g, |_| 100.0, |_| 0.0, 1e-3, 1.0);
        assert!(matches!(err, Err(Error::Stability(_))));
    }

    #[test]
    fn histogram_is_normalised() {
        let g = Grid1D::new(0.0, 1.0, 4).unwrap();
        let h = g.histogram(&[0.1, 0.1, 0.6, 0.9]);
        assert!((h.mass() - 1.0).abs() < 1e-12);
        assert_eq!(h.density, vec![2.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn queue_equation_coefficients() {
        let eq = QueueEquation {
            window: 5.0,
            rtt: 0.1,
            capacity: 100.0,
        };
        assert_eq!(eq.drift(3.0), -50.0);
        assert_eq!(eq.diffusion_sq(3.0), 50.0);
    }

    #[test]
    fn window_coefficient_sets_differ_only_in_growth() {
        let f = WindowEquation {
            coefficients: WindowCoefficients::FinalSystem,
            rtt: 0.1,
            lambda: 1.0,
        };
        let a = WindowEquation {
            coefficients: WindowCoefficients::PerAck,
            ..f
        };
        assert!((f.drift(4.0) - (10.0 - 2.0)).abs() < 1e-12);
        assert!((a.drift(4.0) - (0.25 - 2.0)).abs() < 1e-12);
        assert!((a.diffusion_sq(4.0) - 2.25).abs() < 1e-12);
    }
}
