//! Periodic, collision-free primary trajectories `q_i(t)` and their derived
//! geometric constants.
//!
//! Every ephemeris is stored as a truncated Fourier series per body, which
//! gives spectral accuracy for smooth periodic orbits and makes the blow-up
//! rescaling, time shift and time reflection exact operations on the
//! coefficients.

use num_complex::Complex64;
use rustfft::{num_complex::Complex as FftComplex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default absolute tolerance on the Newton residual of an ephemeris.
pub const NEWTON_RESIDUAL_TOL: f64 = 1e-8;
/// Relative tolerance of the periodicity self-check.
pub const PERIODICITY_TOL: f64 = 1e-10;
/// Safety margin applied to the sampled far-field suprema.
pub const FAR_FIELD_MARGIN: f64 = 1.1;
/// Grid used for validation checks (residual, periodicity).
const VALIDATION_GRID: usize = 256;
/// Grid used to locate the minimum pairwise separation.
const SEPARATION_GRID: usize = 2048;

/// One planar orbit as a truncated Fourier series
/// `q(t) = sum_k c_k exp(i 2 pi k t / period)`.
#[derive(Debug, Clone)]
pub struct FourierOrbit {
    period: f64,
    /// Coefficient for harmonic `k_min + j` at index `j`.
    coeffs: Vec<Complex64>,
    k_min: i32,
}

impl FourierOrbit {
    pub fn new(period: f64, k_min: i32, coeffs: Vec<Complex64>) -> Self {
        assert!(period > 0.0 && !coeffs.is_empty());
        FourierOrbit {
            period,
            coeffs,
            k_min,
        }
    }

    pub fn constant(period: f64, value: Complex64) -> Self {
        FourierOrbit::new(period, 0, vec![value])
    }

    fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    /// Position, velocity and acceleration at time `t`.
    pub fn eval2(&self, t: f64) -> (Complex64, Complex64, Complex64) {
        let w = self.omega();
        let rot = Complex64::from_polar(1.0, w * t);
        let mut phase = Complex64::from_polar(1.0, w * self.k_min as f64 * t);
        let mut q = Complex64::new(0.0, 0.0);
        let mut v = Complex64::new(0.0, 0.0);
        let mut a = Complex64::new(0.0, 0.0);
        for (j, &c) in self.coeffs.iter().enumerate() {
            let k = (self.k_min + j as i32) as f64;
            let iwk = Complex64::new(0.0, w * k);
            let term = c * phase;
            q += term;
            v += iwk * term;
            a += iwk * iwk * term;
            phase *= rot;
        }
        (q, v, a)
    }

    pub fn position(&self, t: f64) -> Complex64 {
        let w = self.omega();
        let rot = Complex64::from_polar(1.0, w * t);
        let mut phase = Complex64::from_polar(1.0, w * self.k_min as f64 * t);
        let mut q = Complex64::new(0.0, 0.0);
        for &c in &self.coeffs {
            q += c * phase;
            phase *= rot;
        }
        q
    }

    fn map_coeffs(&self, f: impl Fn(i32, Complex64) -> Complex64) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| f(self.k_min + j as i32, c))
            .collect()
    }
}

/// Far-field record: beyond radius `r1` the non-Kepler remainder `W` of the
/// potential satisfies `|W| <= alpha1/|z|^2 <= m/|z|` and
/// `|grad W| <= alpha2/|z|^3 <= m/|z|^2`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FarField {
    pub r1: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Masses and T-periodic collision-free trajectories of the primaries,
/// with the derived constants used by the escape estimates.
///
/// Immutable after construction; evaluators are pure functions of `t`.
#[derive(Debug, Clone)]
pub struct PrimarySystem {
    masses: Vec<f64>,
    period: f64,
    orbits: Vec<FourierOrbit>,
    total_mass: f64,
    rho0: f64,
    r0: f64,
    far: FarField,
}

impl PrimarySystem {
    /// Two bodies on circular orbits about their barycenter.
    ///
    /// Angular speed follows from `omega^2 = (m1 + m2) / d^3`; the period is
    /// `2 pi / omega`.
    pub fn circular_binary(m1: f64, m2: f64, d: f64, phase: f64) -> Result<Self> {
        if !(m1 > 0.0) || !(m2 > 0.0) || !(d > 0.0) {
            return Err(Error::invalid(
                "circular binary requires positive masses and separation",
            ));
        }
        let m = m1 + m2;
        let omega = (m / d.powi(3)).sqrt();
        let period = 2.0 * std::f64::consts::PI / omega;
        let r1 = m2 / m * d;
        let r2 = m1 / m * d;
        let c1 = Complex64::from_polar(r1, phase);
        let c2 = Complex64::from_polar(r2, phase + std::f64::consts::PI);
        let orbits = vec![
            FourierOrbit::new(period, 1, vec![c1]),
            FourierOrbit::new(period, 1, vec![c2]),
        ];
        Self::assemble(vec![m1, m2], period, orbits)
    }

    /// A single mass fixed at the origin (the field reduces to the Kepler
    /// problem). The declared period is arbitrary.
    pub fn static_center(m: f64) -> Result<Self> {
        Self::static_center_with_period(m, 1.0)
    }

    pub fn static_center_with_period(m: f64, period: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::invalid("static center requires a positive mass"));
        }
        if !(period > 0.0) {
            return Err(Error::invalid("period must be positive"));
        }
        let orbits = vec![FourierOrbit::constant(period, Complex64::new(0.0, 0.0))];
        Self::assemble(vec![m], period, orbits)
    }

    /// Build a system from uniform time samples of each body over one period.
    ///
    /// The samples are trigonometric-interpolated; the resulting ephemeris is
    /// validated (periodic by construction, collision-free, Newton residual
    /// below [`NEWTON_RESIDUAL_TOL`]).
    pub fn from_samples(masses: &[f64], period: f64, samples: &[SampleRow]) -> Result<Self> {
        if masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::invalid("all masses must be positive"));
        }
        if !(period > 0.0) {
            return Err(Error::invalid("period must be positive"));
        }
        let n = samples.len();
        if n < 16 {
            return Err(Error::invalid(format!(
                "need at least 16 samples per body, got {n}"
            )));
        }
        let n_bodies = masses.len();
        for row in samples {
            if row.bodies.len() != n_bodies {
                return Err(Error::Format(format!(
                    "sample at t = {} has {} bodies, expected {}",
                    row.t,
                    row.bodies.len(),
                    n_bodies
                )));
            }
        }
        // Uniform grid over [0, period), first sample at t = 0.
        let dt = period / n as f64;
        for (k, row) in samples.iter().enumerate() {
            let expect = k as f64 * dt;
            if (row.t - expect).abs() > 1e-9 * period {
                return Err(Error::Format(format!(
                    "samples must be uniform over one period starting at t = 0; \
                     sample {k} has t = {} but expected {expect}",
                    row.t
                )));
            }
        }

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut orbits = Vec::with_capacity(n_bodies);
        for b in 0..n_bodies {
            let mut buf: Vec<FftComplex<f64>> = samples
                .iter()
                .map(|row| FftComplex::new(row.bodies[b].0, row.bodies[b].1))
                .collect();
            fft.process(&mut buf);
            // Map FFT bins to signed harmonics; split the Nyquist bin evenly.
            let half = n / 2;
            let k_min = -(half as i32);
            let mut coeffs = vec![Complex64::new(0.0, 0.0); half + 1 + half];
            for (bin, &v) in buf.iter().enumerate() {
                let c = Complex64::new(v.re, v.im) / n as f64;
                let k = if bin <= half { bin as i32 } else { bin as i32 - n as i32 };
                if n % 2 == 0 && bin == half {
                    coeffs[(k - k_min) as usize] += c * 0.5;
                    coeffs[(-k - k_min) as usize] += c * 0.5;
                } else {
                    coeffs[(k - k_min) as usize] += c;
                }
            }
            orbits.push(FourierOrbit::new(period, k_min, coeffs));
        }
        Self::assemble(masses.to_vec(), period, orbits)
    }

    fn assemble(masses: Vec<f64>, period: f64, orbits: Vec<FourierOrbit>) -> Result<Self> {
        let total_mass = masses.iter().sum();
        let mut sys = PrimarySystem {
            masses,
            period,
            orbits,
            total_mass,
            rho0: f64::INFINITY,
            r0: 0.0,
            far: FarField {
                r1: 0.0,
                alpha1: 0.0,
                alpha2: 0.0,
            },
        };
        sys.rho0 = sys.sampled_min_separation();
        if !(sys.rho0 > 0.0) {
            return Err(Error::Validation(
                "primaries collide: minimum pairwise separation is zero".into(),
            ));
        }
        sys.r0 = sys.sampled_sup_radius() + 1.0;
        let residual = sys.newton_residual_max(VALIDATION_GRID);
        if residual > NEWTON_RESIDUAL_TOL {
            return Err(Error::Validation(format!(
                "Newton residual {residual:.3e} exceeds tolerance {NEWTON_RESIDUAL_TOL:.1e}"
            )));
        }
        sys.far = sys.sample_far_field(FAR_FIELD_MARGIN);
        Ok(sys)
    }

    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Minimum pairwise separation of the primaries (infinite for N = 1).
    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    /// Envelope radius: `sup |q_i(t)| = r0 - 1`.
    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn far_field(&self) -> FarField {
        self.far
    }

    /// Length scale used for collision guards and quadrature escalation.
    /// Equals `rho0` when finite, else the envelope radius.
    pub fn collision_scale(&self) -> f64 {
        self.rho0.min(self.r0)
    }

    pub fn position(&self, i: usize, t: f64) -> Complex64 {
        self.orbits[i].position(t)
    }

    pub fn velocity(&self, i: usize, t: f64) -> Complex64 {
        self.orbits[i].eval2(t).1
    }

    pub fn acceleration(&self, i: usize, t: f64) -> Complex64 {
        self.orbits[i].eval2(t).2
    }

    pub fn positions_into(&self, t: f64, out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(self.orbits.iter().map(|o| o.position(t)));
    }

    /// Gravitational potential `U(z, t)`; infinite on a primary.
    pub fn potential(&self, z: Complex64, t: f64) -> f64 {
        let mut u = 0.0;
        for (i, orbit) in self.orbits.iter().enumerate() {
            let d = (z - orbit.position(t)).norm();
            u += self.masses[i] / d;
        }
        u
    }

    /// Gradient of `U` with respect to `z` (the force on the massless body).
    pub fn grad_potential(&self, z: Complex64, t: f64) -> Complex64 {
        let mut g = Complex64::new(0.0, 0.0);
        for (i, orbit) in self.orbits.iter().enumerate() {
            let rel = z - orbit.position(t);
            let d = rel.norm();
            g -= self.masses[i] * rel / (d * d * d);
        }
        g
    }

    /// Time derivative of `U(z, t)` at fixed `z` (work rate of the moving
    /// primaries).
    pub fn potential_time_derivative(&self, z: Complex64, t: f64) -> f64 {
        let mut s = 0.0;
        for (i, orbit) in self.orbits.iter().enumerate() {
            let (q, v, _) = orbit.eval2(t);
            let rel = z - q;
            let d = rel.norm();
            s += self.masses[i] * crate::dot(rel, v) / (d * d * d);
        }
        s
    }

    /// Distance to the closest primary and its index.
    pub fn min_distance(&self, z: Complex64, t: f64) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, orbit) in self.orbits.iter().enumerate() {
            let d = (z - orbit.position(t)).norm();
            if d < best.0 {
                best = (d, i);
            }
        }
        best
    }

    /// Max over a uniform grid of the Newton residual
    /// `|qdd_i + sum_{j != i} m_j (q_i - q_j)/|q_i - q_j|^3|`.
    pub fn newton_residual_max(&self, grid: usize) -> f64 {
        let n = self.n_bodies();
        let mut worst: f64 = 0.0;
        for k in 0..grid {
            let t = self.period * k as f64 / grid as f64;
            let states: Vec<_> = self.orbits.iter().map(|o| o.eval2(t)).collect();
            for i in 0..n {
                let mut res = states[i].2;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let rel = states[i].0 - states[j].0;
                    let d = rel.norm();
                    res += self.masses[j] * rel / (d * d * d);
                }
                worst = worst.max(res.norm());
            }
        }
        worst
    }

    /// Max relative periodicity defect `|q(t + T) - q(t)|` over a grid.
    pub fn periodicity_defect(&self, grid: usize) -> f64 {
        let scale = self.r0.max(1.0);
        let mut worst: f64 = 0.0;
        for k in 0..grid {
            let t = self.period * (k as f64 / grid as f64 - 0.37);
            for orbit in &self.orbits {
                let d = (orbit.position(t + self.period) - orbit.position(t)).norm();
                worst = worst.max(d / scale);
            }
        }
        worst
    }

    fn sampled_min_separation(&self) -> f64 {
        let n = self.n_bodies();
        if n < 2 {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        for k in 0..SEPARATION_GRID {
            let t = self.period * k as f64 / SEPARATION_GRID as f64;
            let pos: Vec<_> = self.orbits.iter().map(|o| o.position(t)).collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    best = best.min((pos[i] - pos[j]).norm());
                }
            }
        }
        best
    }

    fn sampled_sup_radius(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for k in 0..SEPARATION_GRID {
            let t = self.period * k as f64 / SEPARATION_GRID as f64;
            for orbit in &self.orbits {
                sup = sup.max(orbit.position(t).norm());
            }
        }
        sup
    }

    /// Non-Kepler remainder `W(z, t) = U(z, t) - m/|z|`.
    pub fn w_remainder(&self, z: Complex64, t: f64) -> f64 {
        self.potential(z, t) - self.total_mass / z.norm()
    }

    /// Gradient of the remainder, `grad W = grad U + m z / |z|^3`.
    pub fn grad_w(&self, z: Complex64, t: f64) -> Complex64 {
        let r = z.norm();
        self.grad_potential(z, t) + self.total_mass * z / (r * r * r)
    }

    /// Sample far-field constants `(r1, alpha1, alpha2)` satisfying the
    /// chained bounds `|W| <= alpha1/r^2 <= m/r` and
    /// `|grad W| <= alpha2/r^3 <= m/r^2` for `r >= r1`.
    ///
    /// `margin` inflates the sampled suprema (e.g. 1.1 for 10% headroom).
    /// `r1` is forced up to `sqrt(2) * r0` so downstream radius checks can
    /// assume `sqrt(2) r1 <= |x|` implies clearance of the envelope.
    pub fn sample_far_field(&self, margin: f64) -> FarField {
        let mut r1 = std::f64::consts::SQRT_2 * self.r0;
        loop {
            let (s1, s2) = self.far_field_suprema(r1);
            let alpha1 = margin * s1;
            let alpha2 = margin * s2;
            let chain = self.total_mass * r1;
            if alpha1 <= chain && alpha2 <= chain {
                return FarField { r1, alpha1, alpha2 };
            }
            r1 *= 2.0;
        }
    }

    /// Sampled suprema of `|W| r^2` and `|grad W| r^3` over `r >= r_lo`,
    /// on a doubling radial grid up to `50 r0` past `r_lo`.
    fn far_field_suprema(&self, r_lo: f64) -> (f64, f64) {
        const ANGLES: usize = 256;
        const TIMES: usize = 64;
        let mut s1: f64 = 0.0;
        let mut s2: f64 = 0.0;
        let r_hi = (50.0 * self.r0).max(2.0 * r_lo);
        let mut r = r_lo;
        while r <= r_hi {
            for a in 0..ANGLES {
                let theta = 2.0 * std::f64::consts::PI * a as f64 / ANGLES as f64;
                let z = Complex64::from_polar(r, theta);
                for k in 0..TIMES {
                    let t = self.period * k as f64 / TIMES as f64;
                    s1 = s1.max(self.w_remainder(z, t).abs() * r * r);
                    s2 = s2.max(self.grad_w(z, t).norm() * r * r * r);
                }
            }
            // Dense at the inner edge where the suprema live, sparse beyond.
            r *= if r < 2.0 * r_lo { 1.25 } else { 2.0 };
        }
        (s1, s2)
    }

    /// Space-time rescaling `q^lam(s) = lam^(2/3) q(s/lam)`, a solution of the
    /// same N-body problem with period `lam T`.
    pub fn blow_up(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("blow-up scale must be positive"));
        }
        let scale = lambda.powf(2.0 / 3.0);
        let period = lambda * self.period;
        let orbits = self
            .orbits
            .iter()
            .map(|o| FourierOrbit::new(period, o.k_min, o.map_coeffs(|_, c| scale * c)))
            .collect();
        let r0 = scale * (self.r0 - 1.0) + 1.0;
        let r1 = (scale * self.far.r1).max(std::f64::consts::SQRT_2 * r0);
        Ok(PrimarySystem {
            masses: self.masses.clone(),
            period,
            orbits,
            total_mass: self.total_mass,
            rho0: scale * self.rho0,
            r0,
            far: FarField {
                r1,
                alpha1: scale * self.far.alpha1,
                alpha2: scale * self.far.alpha2,
            },
        })
    }

    /// Ephemeris shifted in time: `q~(t) = q(t + t0)`. Exact on coefficients.
    pub fn time_shifted(&self, t0: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI / self.period;
        let orbits = self
            .orbits
            .iter()
            .map(|o| {
                FourierOrbit::new(
                    self.period,
                    o.k_min,
                    o.map_coeffs(|k, c| c * Complex64::from_polar(1.0, w * k as f64 * t0)),
                )
            })
            .collect();
        PrimarySystem {
            orbits,
            ..self.clone()
        }
    }

    /// Time-reflected ephemeris `q~(t) = q(2 a - t)`, also a periodic
    /// solution of the N-body equations.
    pub fn time_reflected_about(&self, a: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI / self.period;
        let orbits = self
            .orbits
            .iter()
            .map(|o| {
                let k_max = o.k_min + o.coeffs.len() as i32 - 1;
                let new_k_min = -k_max;
                let coeffs: Vec<Complex64> = (0..o.coeffs.len())
                    .map(|j| {
                        let k = new_k_min + j as i32;
                        let src = o.coeffs[(-k - o.k_min) as usize];
                        src * Complex64::from_polar(1.0, -2.0 * w * k as f64 * a)
                    })
                    .collect();
                FourierOrbit::new(self.period, new_k_min, coeffs)
            })
            .collect();
        PrimarySystem {
            orbits,
            ..self.clone()
        }
    }

    /// Report when the found far-field radius is extreme for the orbit family.
    pub fn far_field_warning(&self) -> Option<String> {
        if self.far.r1 > 1e3 * self.r0 {
            Some(format!(
                "far-field radius r1 = {:.3e} exceeds 1000 * r0 = {:.3e}",
                self.far.r1,
                1e3 * self.r0
            ))
        } else {
            None
        }
    }
}

/// Recompute far-field constants with a custom safety margin.
pub fn far_field_constants(sys: &PrimarySystem, margin: f64) -> FarField {
    sys.sample_far_field(margin)
}

/// One row of a sampled-orbit file: a time and the planar position of every
/// body at that time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRow {
    pub t: f64,
    pub bodies: Vec<(f64, f64)>,
}

/// On-disk sampled-orbit format:
/// `{"T": .., "masses": [..], "samples": [{"t": .., "bodies": [[x,y],..]},..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitFile {
    #[serde(rename = "T")]
    pub period: f64,
    pub masses: Vec<f64>,
    pub samples: Vec<SampleRow>,
}

impl OrbitFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: OrbitFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("orbit file: {e}")))?;
        if file.samples.is_empty() {
            return Err(Error::Format("orbit file has no samples".into()));
        }
        let t_last = file.samples.last().unwrap().t;
        if file.samples[0].t != 0.0 || t_last >= file.period {
            return Err(Error::Format(
                "samples must start at t = 0 and end strictly before T".into(),
            ));
        }
        Ok(file)
    }

    pub fn build(&self) -> Result<PrimarySystem> {
        PrimarySystem::from_samples(&self.masses, self.period, &self.samples)
    }
}
