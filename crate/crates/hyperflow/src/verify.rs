//! Independent oracles: adaptive ODE integration of the equations of motion,
//! Euler-Lagrange residuals of discrete paths, analytic Kepler conics, and
//! radial-action quadrature.
//!
//! Everything here is deliberately independent of the action/minimize code
//! paths so it can serve as ground truth in tests.

use num_complex::Complex64;

use crate::action::Path;
use crate::ephemeris::PrimarySystem;
use crate::quadrature::adaptive_simpson;
use crate::{Error, Result};

/// Options of the embedded Runge-Kutta integrator.
#[derive(Debug, Clone)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Record dense output at every accepted step (otherwise only the ends).
    pub dense_output: bool,
    /// Terminate with a collision-approach event when the distance to a
    /// primary falls below this floor.
    pub collision_floor: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            dense_output: true,
            collision_floor: 1e-9,
        }
    }
}

/// Result of an integration: the sampled path and the node velocities.
#[derive(Debug, Clone)]
pub struct IntegratedOrbit {
    pub path: Path,
    pub velocities: Vec<Complex64>,
}

impl IntegratedOrbit {
    pub fn final_state(&self) -> (f64, Complex64, Complex64) {
        (
            self.path.end_time(),
            self.path.end(),
            *self.velocities.last().unwrap(),
        )
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Clone, Copy)]
struct State {
    z: Complex64,
    v: Complex64,
}

impl State {
    fn axpy(self, h: f64, coeffs: &[f64], k: &[Deriv]) -> State {
        let mut z = self.z;
        let mut v = self.v;
        for (c, d) in coeffs.iter().zip(k) {
            if *c != 0.0 {
                z += h * c * d.dz;
                v += h * c * d.dv;
            }
        }
        State { z, v }
    }
}

#[derive(Clone, Copy, Default)]
struct Deriv {
    dz: Complex64,
    dv: Complex64,
}

fn deriv(sys: &PrimarySystem, t: f64, s: State) -> Deriv {
    Deriv {
        dz: s.v,
        dv: sys.grad_potential(s.z, t),
    }
}

/// Integrate the equations of motion from `(z0, v0)` over `t_span` with an
/// adaptive embedded 5(4) pair. Output nodes are the accepted steps.
pub fn integrate_ode(
    sys: &PrimarySystem,
    z0: Complex64,
    v0: Complex64,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<IntegratedOrbit> {
    integrate_impl(sys, z0, v0, t_span, opts, None)
}

/// Integrate and sample exactly at the given strictly increasing times
/// (`times[0]` must equal the start of the span).
pub fn integrate_to_grid(
    sys: &PrimarySystem,
    z0: Complex64,
    v0: Complex64,
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<IntegratedOrbit> {
    if times.len() < 2 {
        return Err(Error::invalid("need at least two output times"));
    }
    let span = (times[0], *times.last().unwrap());
    integrate_impl(sys, z0, v0, span, opts, Some(times))
}

fn integrate_impl(
    sys: &PrimarySystem,
    z0: Complex64,
    v0: Complex64,
    (t0, t1): (f64, f64),
    opts: &IntegratorOptions,
    grid: Option<&[f64]>,
) -> Result<IntegratedOrbit> {
    if !(t1 > t0) {
        return Err(Error::invalid("integration span must be forward in time"));
    }
    let floor = opts.collision_floor.max(1e-14 * sys.collision_scale());
    let check_collision = |t: f64, z: Complex64, v: Complex64| -> Result<()> {
        let (d, i) = sys.min_distance(z, t);
        if d < floor {
            return Err(Error::CollisionApproach {
                body: i,
                time: t,
                position: z,
                velocity: v,
                distance: d,
            });
        }
        Ok(())
    };
    check_collision(t0, z0, v0)?;

    let mut t = t0;
    let mut s = State { z: z0, v: v0 };
    let mut k = [Deriv::default(); 7];
    k[0] = deriv(sys, t, s);

    let mut times = vec![t0];
    let mut positions = vec![z0];
    let mut velocities = vec![v0];
    let mut grid_next = 1usize;

    // Initial step heuristic.
    let scale = s.z.norm().max(1.0);
    let mut h = ((opts.rtol.powf(0.2)) * scale / s.v.norm().max(1e-3))
        .min(opts.max_step)
        .min((t1 - t0) / 10.0)
        .max(1e-12);

    let record =
        |times: &mut Vec<f64>, pos: &mut Vec<Complex64>, vel: &mut Vec<Complex64>, t, s: State| {
            times.push(t);
            pos.push(s.z);
            vel.push(s.v);
        };

    while t < t1 - 1e-14 * (t1 - t0) {
        let target = match grid {
            Some(g) => g[grid_next],
            None => t1,
        };
        let mut step = h.min(target - t);
        if step <= 0.0 {
            return Err(Error::NumericalFailure("step underflow".into()));
        }
        // One attempted step with error control.
        loop {
            for stage in 1..7 {
                let sc = s.axpy(step, &A[stage][..stage.min(6)], &k[..stage.min(6)]);
                k[stage] = deriv(sys, t + C[stage] * step, sc);
            }
            let s5 = s.axpy(step, &A[6], &k[..6]);
            let mut ez = Complex64::new(0.0, 0.0);
            let mut ev = Complex64::new(0.0, 0.0);
            for i in 0..7 {
                let w = (if i < 6 { A[6][i] } else { 0.0 }) - B4[i];
                ez += step * w * k[i].dz;
                ev += step * w * k[i].dv;
            }
            let tol_z = opts.atol + opts.rtol * s.z.norm().max(s5.z.norm());
            let tol_v = opts.atol + opts.rtol * s.v.norm().max(s5.v.norm());
            let err = ((ez.norm_sqr() / (tol_z * tol_z) + ev.norm_sqr() / (tol_v * tol_v)) / 2.0)
                .sqrt();
            if err <= 1.0 {
                t += step;
                s = s5;
                k[0] = k[6]; // first-same-as-last
                check_collision(t, s.z, s.v)?;
                match grid {
                    None => {
                        if opts.dense_output || t >= t1 - 1e-14 * (t1 - t0) {
                            record(&mut times, &mut positions, &mut velocities, t, s);
                        }
                    }
                    Some(g) => {
                        if t >= g[grid_next] - 1e-12 * (1.0 + g[grid_next].abs()) {
                            record(&mut times, &mut positions, &mut velocities, g[grid_next], s);
                            grid_next += 1;
                            if grid_next >= g.len() {
                                return Ok(IntegratedOrbit {
                                    path: Path::new(times, positions)?,
                                    velocities,
                                });
                            }
                        }
                    }
                }
                let grow = if err > 1e-12 {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                h = (step * grow).min(opts.max_step);
                break;
            }
            step *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if step < 1e-14 * (t1 - t0) {
                return Err(Error::NumericalFailure(format!("step underflow at t = {t}")));
            }
        }
    }
    if times.len() < 2 {
        record(&mut times, &mut positions, &mut velocities, t, s);
    }
    Ok(IntegratedOrbit {
        path: Path::new(times, positions)?,
        velocities,
    })
}

/// Max over interior nodes of the normalized defect between the
/// second-difference acceleration of the path and the gravitational force.
pub fn el_residual(sys: &PrimarySystem, path: &Path) -> Result<f64> {
    let n = path.n_nodes();
    if n < 5 {
        return Err(Error::invalid(
            "Euler-Lagrange residual needs at least 3 interior nodes",
        ));
    }
    let t = path.times();
    let z = path.positions();
    let mut worst: f64 = 0.0;
    for kk in 1..n - 1 {
        let dt0 = t[kk] - t[kk - 1];
        let dt1 = t[kk + 1] - t[kk];
        let acc = 2.0 * ((z[kk + 1] - z[kk]) / dt1 - (z[kk] - z[kk - 1]) / dt0) / (dt0 + dt1);
        let force = sys.grad_potential(z[kk], t[kk]);
        let denom = force.norm().max(1e-12);
        worst = worst.max((acc - force).norm() / denom);
    }
    Ok(worst)
}

/// Analytic hyperbolic Kepler orbit with energy `h > 0`, angular momentum
/// `ell`, and apse line rotated by `orientation`. Periapsis passage at t = 0.
#[derive(Debug, Clone, Copy)]
pub struct KeplerConic {
    pub m: f64,
    pub h: f64,
    pub ell: f64,
    pub orientation: f64,
    a: f64,
    e: f64,
    n: f64,
}

impl KeplerConic {
    pub fn new(m: f64, h: f64, ell: f64, orientation: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::invalid("conic oracle supports only h > 0"));
        }
        if !(m > 0.0) {
            return Err(Error::invalid("mass must be positive"));
        }
        let a = m / (2.0 * h);
        let e = (1.0 + 2.0 * h * ell * ell / (m * m)).sqrt();
        let n = (m / a.powi(3)).sqrt();
        Ok(KeplerConic {
            m,
            h,
            ell,
            orientation,
            a,
            e,
            n,
        })
    }

    pub fn eccentricity(&self) -> f64 {
        self.e
    }

    /// Asymptotic speed `sqrt(2h)`.
    pub fn v_inf(&self) -> f64 {
        (2.0 * self.h).sqrt()
    }

    /// Solve `e sinh H - H = M` by safeguarded Newton iteration.
    fn anomaly(&self, mean: f64) -> f64 {
        let e = self.e;
        let mut x = if mean.abs() > 3.0 * e {
            (2.0 * mean.abs() / e).max(1.0).ln().copysign(mean)
        } else {
            (mean / e).asinh()
        };
        let (mut lo, mut hi) = (-1e3_f64, 1e3_f64);
        let g = |hh: f64| e * hh.sinh() - hh - mean;
        for _ in 0..200 {
            let gx = g(x);
            if gx.abs() < 1e-13 * (1.0 + mean.abs()) {
                return x;
            }
            if gx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let dg = e * x.cosh() - 1.0;
            let mut next = if dg > 0.0 { x - gx / dg } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            x = next;
        }
        x
    }

    /// Position and velocity at time `t`.
    pub fn state(&self, t: f64) -> (Complex64, Complex64) {
        let rot = Complex64::from_polar(1.0, self.orientation);
        if self.ell == 0.0 {
            // Rectilinear ejection along the apse ray: r = a (cosh H - 1).
            let mean = self.n * t;
            let hh = self.rectilinear_anomaly(mean.abs());
            let r = self.a * (hh.cosh() - 1.0);
            let rdot = if r > 0.0 {
                (2.0 * self.h + 2.0 * self.m / r).sqrt() * mean.signum()
            } else {
                0.0
            };
            return (rot * r, rot * rdot);
        }
        let hh = self.anomaly(self.n * t);
        let b = self.a * (self.e * self.e - 1.0).sqrt();
        let x = self.a * (self.e - hh.cosh());
        let y = b * hh.sinh();
        let r = self.a * (self.e * hh.cosh() - 1.0);
        let hdot = self.n * self.a / r;
        let vx = -self.a * hh.sinh() * hdot;
        let vy = b * hh.cosh() * hdot;
        let (mut z, mut v) = (Complex64::new(x, y), Complex64::new(vx, vy));
        if self.ell < 0.0 {
            z = z.conj();
            v = v.conj();
        }
        (rot * z, rot * v)
    }

    /// Solve `sinh H - H = M` (rectilinear case, M >= 0).
    fn rectilinear_anomaly(&self, mean: f64) -> f64 {
        let mut x = if mean > 3.0 {
            (2.0 * mean).ln().max(1.0)
        } else {
            (6.0 * mean).cbrt()
        };
        let (mut lo, mut hi) = (0.0_f64, 1e3_f64);
        for _ in 0..200 {
            let g = x.sinh() - x - mean;
            if g.abs() < 1e-13 * (1.0 + mean) {
                return x;
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let dg = x.cosh() - 1.0;
            let mut next = if dg > 0.0 { x - g / dg } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            x = next;
        }
        x
    }
}

/// Duration and action `A_h` of the zero-angular-momentum escape
/// `rdot = sqrt(2h + 2m/r)` from `r0` to `r1`, by adaptive quadrature.
pub fn kepler_oracle_radial_action(m: f64, h: f64, r0: f64, r1: f64) -> Result<(f64, f64)> {
    if !(0.0 < r0 && r0 < r1) {
        return Err(Error::invalid("need 0 < r0 < r1"));
    }
    if !(h > 0.0) || m < 0.0 {
        return Err(Error::invalid("need h > 0 and m >= 0"));
    }
    let mut fd = |r: f64| 1.0 / (2.0 * h + 2.0 * m / r).sqrt();
    let duration = adaptive_simpson(&mut fd, r0, r1, 1e-12);
    let mut fa = |r: f64| (2.0 * h + 2.0 * m / r).sqrt();
    let action = adaptive_simpson(&mut fa, r0, r1, 1e-12);
    Ok((action, duration))
}

/// Monotone radial arc of prescribed duration: solves for the arc energy `E`
/// with `rdot = sqrt(2E + 2m/r) > 0` on `[r0, r1]` whose flight time matches
/// `duration`, and returns its action `A_h`. `None` when no monotone arc has
/// that duration (the turning-point regime).
pub fn radial_arc_action_for_duration(
    m: f64,
    h: f64,
    r0: f64,
    r1: f64,
    duration: f64,
) -> Option<f64> {
    let e_floor = -m / r1;
    let flight = |e: f64| -> f64 {
        let mut f = |r: f64| 1.0 / (2.0 * e + 2.0 * m / r).sqrt();
        adaptive_simpson(&mut f, r0, r1, 1e-12)
    };
    let mut lo = e_floor + 1e-12 * (1.0 + m / r1);
    if flight(lo) < duration {
        return None;
    }
    let mut hi = h.max(1.0);
    while flight(hi) > duration {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if flight(mid) > duration {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    let e = 0.5 * (lo + hi);
    let mut fa = |r: f64| (e + 2.0 * m / r + h) / (2.0 * e + 2.0 * m / r).sqrt();
    Some(adaptive_simpson(&mut fa, r0, r1, 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ephemeris::PrimarySystem;
    use approx::assert_relative_eq;

    fn static1() -> PrimarySystem {
        PrimarySystem::static_center(1.0).unwrap()
    }

    #[test]
    fn circular_orbit_closes() {
        let sys = static1();
        let orbit = integrate_ode(
            &sys,
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            (0.0, 2.0 * std::f64::consts::PI),
            &IntegratorOptions::default(),
        )
        .unwrap();
        let (_, z, v) = orbit.final_state();
        assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-8);
        assert!((v - Complex64::new(0.0, 1.0)).norm() < 1e-8);
    }

    #[test]
    fn kepler_energy_conserved_long_range() {
        let sys = static1();
        let h = 0.5;
        let r0 = 2.0_f64;
        let v0 = (2.0 * h + 2.0 / r0).sqrt();
        let orbit = integrate_ode(
            &sys,
            Complex64::new(r0, 0.0),
            Complex64::new(v0, 0.0),
            (0.0, 1000.0),
            &IntegratorOptions::default(),
        )
        .unwrap();
        for (z, v) in orbit.path.positions().iter().zip(&orbit.velocities) {
            let e = 0.5 * v.norm_sqr() - 1.0 / z.norm();
            assert!((e - h).abs() < 1e-9, "energy drift {:.2e}", (e - h).abs());
        }
    }

    #[test]
    fn moving_primary_work_identity() {
        // d/dt (|v|^2/2 - U(z,t)) = -dU/dt pointwise; integrate both sides.
        let sys = PrimarySystem::circular_binary(0.5, 0.5, 1.0, 0.0).unwrap();
        let orbit = integrate_ode(
            &sys,
            Complex64::new(2.5, 0.3),
            Complex64::new(0.1, 0.9),
            (0.0, 5.0),
            &IntegratorOptions::default(),
        )
        .unwrap();
        let energy = |k: usize| {
            let z = orbit.path.positions()[k];
            let t = orbit.path.times()[k];
            0.5 * orbit.velocities[k].norm_sqr() - sys.potential(z, t)
        };
        let de = energy(orbit.path.n_nodes() - 1) - energy(0);
        let mut work = 0.0;
        for k in 0..orbit.path.n_nodes() - 1 {
            let t0 = orbit.path.times()[k];
            let t1 = orbit.path.times()[k + 1];
            let f0 = -sys.potential_time_derivative(orbit.path.positions()[k], t0);
            let f1 = -sys.potential_time_derivative(orbit.path.positions()[k + 1], t1);
            work += 0.5 * (f0 + f1) * (t1 - t0);
        }
        assert!(
            (de - work).abs() < 1e-4 * de.abs().max(1.0),
            "de {de} vs work {work}"
        );
    }

    #[test]
    fn collision_approach_detected() {
        let sys = static1();
        let res = integrate_ode(
            &sys,
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            (0.0, 5.0),
            &IntegratorOptions {
                collision_floor: 1e-3,
                ..Default::default()
            },
        );
        match res {
            Err(Error::CollisionApproach {
                body: 0, distance, ..
            }) => {
                assert!(distance < 1.1e-3);
            }
            other => panic!("expected collision approach, got {other:?}"),
        }
    }

    #[test]
    fn el_residual_second_order_on_integrated_orbit() {
        let sys = static1();
        let t_end = 3.0;
        let mut prev = f64::INFINITY;
        let mut residuals = Vec::new();
        for n in [64, 128, 256] {
            let grid: Vec<f64> = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
            let orbit = integrate_to_grid(
                &sys,
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.1),
                &grid,
                &IntegratorOptions::default(),
            )
            .unwrap();
            let r = el_residual(&sys, &orbit.path).unwrap();
            assert!(r < prev);
            residuals.push(r);
            prev = r;
        }
        let ratio = residuals[0] / residuals[1];
        assert!(
            ratio > 3.0 && ratio < 5.0,
            "expected second-order shrink, got ratio {ratio}"
        );
    }

    #[test]
    fn el_residual_edge_cases() {
        let sys = static1();
        let two = Path::chord(
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            0.0,
            1.0,
            2,
        )
        .unwrap();
        assert!(el_residual(&sys, &two).is_err());

        // constant-velocity straight path near the primary: residual ~ 1
        let line = Path::chord(
            Complex64::new(-1.0, 0.3),
            Complex64::new(1.0, 0.3),
            0.0,
            1.0,
            33,
        )
        .unwrap();
        let r = el_residual(&sys, &line).unwrap();
        assert!(r > 0.5, "free motion near a primary must show force defect");
    }

    #[test]
    fn conic_matches_integration() {
        let conic = KeplerConic::new(1.0, 0.5, 1.3, 0.4).unwrap();
        let (z0, v0) = conic.state(-30.0);
        let sys = static1();
        let grid: Vec<f64> = (0..=400)
            .map(|k| -30.0 + 130.0 * k as f64 / 400.0)
            .collect();
        let shifted: Vec<f64> = grid.iter().map(|&t| t + 30.0).collect();
        // integrate in a shifted clock (the static field is autonomous)
        let orbit = integrate_to_grid(&sys, z0, v0, &shifted, &IntegratorOptions::default())
            .unwrap();
        for (kk, &t) in grid.iter().enumerate() {
            let (z, _) = conic.state(t);
            let d = (z - orbit.path.positions()[kk]).norm();
            assert!(d < 1e-8, "deviation {d:.2e} at t = {t}");
        }
    }

    #[test]
    fn conic_asymptotic_speed_and_momentum() {
        for (h, ell) in [(0.5, 1.0), (1.0, -2.0), (2.0, 0.7)] {
            let conic = KeplerConic::new(1.0, h, ell, 1.1).unwrap();
            assert_relative_eq!(conic.v_inf(), (2.0 * h).sqrt(), max_relative = 1e-15);
            let (z, v) = conic.state(17.0);
            assert_relative_eq!(0.5 * v.norm_sqr() - 1.0 / z.norm(), h, epsilon = 1e-10);
            assert_relative_eq!(crate::wedge(z, v), ell, epsilon = 1e-9);
            let (_, v_far) = conic.state(1e6);
            assert_relative_eq!(v_far.norm(), (2.0 * h).sqrt(), max_relative = 1e-6);
        }
    }

    #[test]
    fn rectilinear_conic_matches_radial_quadrature() {
        let m = 1.0;
        let h = 0.5;
        let conic = KeplerConic::new(m, h, 0.0, 0.0).unwrap();
        let (za, va) = conic.state(2.0);
        let (zb, _) = conic.state(9.0);
        assert!(va.im.abs() < 1e-14 && za.im.abs() < 1e-14);
        let mut f = |r: f64| 1.0 / (2.0 * h + 2.0 * m / r).sqrt();
        let dt = adaptive_simpson(&mut f, za.re, zb.re, 1e-12);
        assert_relative_eq!(dt, 7.0, max_relative = 1e-9);
        assert_relative_eq!(
            va.re,
            (2.0 * h + 2.0 * m / za.re).sqrt(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn radial_action_frozen_values() {
        let (action, duration) = kepler_oracle_radial_action(1.0, 0.5, 2.0, 20.0).unwrap();
        // golden values from 30-digit quadrature
        assert_relative_eq!(duration, 16.173394770497003, max_relative = 1e-10);
        assert_relative_eq!(action, 20.122104906816679, max_relative = 1e-10);
    }

    #[test]
    fn radial_action_limits_and_monotonicity() {
        // m = 0: straight-line formulas
        let h = 0.8;
        let (action, duration) = kepler_oracle_radial_action(0.0, h, 2.0, 12.0).unwrap();
        assert_relative_eq!(duration, 10.0 / (2.0 * h).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(action, 10.0 * (2.0 * h).sqrt(), max_relative = 1e-12);

        let (a1, _) = kepler_oracle_radial_action(1.0, 0.5, 2.0, 20.0).unwrap();
        let (a2, _) = kepler_oracle_radial_action(1.0, 0.5, 3.0, 20.0).unwrap();
        assert!(a2 < a1);

        assert!(kepler_oracle_radial_action(1.0, 0.5, 5.0, 2.0).is_err());
        assert!(KeplerConic::new(1.0, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn fixed_duration_radial_arc_brackets_natural_one() {
        let m = 1.0;
        let h = 0.5;
        let (a_nat, d_nat) = kepler_oracle_radial_action(m, h, 2.0, 20.0).unwrap();
        let a_same = radial_arc_action_for_duration(m, h, 2.0, 20.0, d_nat).unwrap();
        assert_relative_eq!(a_same, a_nat, max_relative = 1e-9);
        for d in [d_nat * 0.8, d_nat * 1.2] {
            let a = radial_arc_action_for_duration(m, h, 2.0, 20.0, d).unwrap();
            assert!(a > a_nat);
        }
    }
}
