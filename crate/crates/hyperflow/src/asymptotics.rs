//! Escape monitors and limit extraction.
//!
//! These are the computable counterparts of the perturbed-Kepler estimates:
//! a radial-velocity threshold that certifies permanent escape, a bound on
//! the angular momentum along the escape, and a tail bound on the residual
//! change of the polar angle, which doubles as the error bar of the
//! limiting-direction estimate. The force remainder beyond the far-field
//! radius obeys `|F| <= C / r^3` with `C = alpha2` from the ephemeris.

use num_complex::Complex64;
use serde::Serialize;

use crate::action::Path;
use crate::ephemeris::PrimarySystem;
use crate::{angle_step, dot, wedge, Error, Result};

/// Radial-velocity threshold certifying escape in the restricted problem:
/// `sqrt(6 m / r)` (the general-perturbation threshold with `C = m`).
pub fn escape_threshold(m: f64, r: f64) -> f64 {
    escape_threshold_general(m, m, r)
}

/// Threshold `sqrt(3 (m + c) / r)` for a force remainder bounded by
/// `c / r^2`.
pub fn escape_threshold_general(m: f64, c: f64, r: f64) -> f64 {
    (3.0 * (m + c) / r).sqrt()
}

/// Polar decomposition of a path with finite-difference velocities:
/// radius, unwrapped angle, radial velocity, angular momentum, speed.
#[derive(Debug, Clone)]
pub struct PolarSeries {
    times: Vec<f64>,
    r: Vec<f64>,
    theta: Vec<f64>,
    rdot: Vec<f64>,
    omega: Vec<f64>,
    speed: Vec<f64>,
}

impl PolarSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn rdot(&self) -> &[f64] {
        &self.rdot
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    /// Index of the node at time `t` (within rounding slack).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&x| (x - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .ok_or_else(|| Error::invalid(format!("t = {t} is not a node time")))
    }

    /// CSV dump `t,r,theta,rdot,omega,speed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r,theta,rdot,omega,speed\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.times[k], self.r[k], self.theta[k], self.rdot[k], self.omega[k],
                self.speed[k]
            ));
        }
        out
    }
}

/// Fornberg finite-difference weights for the first derivative at `xbar`
/// over the stencil `xs`.
fn fd_weights_first(xs: &[f64], xbar: f64) -> Vec<f64> {
    let n = xs.len();
    let m = 1usize;
    let mut c = vec![[0.0_f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - xbar;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - xbar;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[1]).collect()
}

/// Node velocities by 5-point finite differences (4th order on uniform
/// grids, one-sided at the ends).
pub fn fd_velocities(path: &Path) -> Vec<Complex64> {
    let n = path.n_nodes();
    let t = path.times();
    let z = path.positions();
    let stencil = 5.min(n);
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(2).min(n - stencil);
            let xs = &t[lo..lo + stencil];
            let ws = fd_weights_first(xs, t[k]);
            ws.iter()
                .zip(&z[lo..lo + stencil])
                .map(|(&w, &p)| w * p)
                .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v)
        })
        .collect()
}

/// Build the polar series of a path. Errors if a node sits at the origin or
/// if consecutive nodes subtend an angle of `pi` or more (unresolvable
/// unwrap).
pub fn polar_series(path: &Path) -> Result<PolarSeries> {
    let n = path.n_nodes();
    let z = path.positions();
    let velocities = fd_velocities(path);
    let mut r = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut rdot = Vec::with_capacity(n);
    let mut omega = Vec::with_capacity(n);
    let mut speed = Vec::with_capacity(n);
    for k in 0..n {
        let radius = z[k].norm();
        if radius == 0.0 {
            return Err(Error::Singularity {
                body: usize::MAX,
                time: path.times()[k],
            });
        }
        r.push(radius);
        if k == 0 {
            theta.push(z[0].arg());
        } else {
            let step = angle_step(z[k - 1], z[k]).expect("nonzero radii");
            if step.abs() >= std::f64::consts::PI - 1e-9 {
                return Err(Error::RefinementNeeded(format!(
                    "angle jump {step:.3} rad between nodes {} and {}",
                    k - 1,
                    k
                )));
            }
            theta.push(theta[k - 1] + step);
        }
        rdot.push(dot(z[k], velocities[k]) / radius);
        omega.push(wedge(z[k], velocities[k]));
        speed.push(velocities[k].norm());
    }
    Ok(PolarSeries {
        times: path.times().to_vec(),
        r,
        theta,
        rdot,
        omega,
        speed,
    })
}

/// Verified escape hypothesis: from `t1` on, the radial velocity can never
/// drop to half its initial value.
#[derive(Debug, Clone, Serialize)]
pub struct EscapeCertificate {
    pub t1: f64,
    pub r1: f64,
    pub rdot1: f64,
    /// `sqrt(6 m / r(t1))`.
    pub threshold: f64,
    /// Certified floor `rdot(t1) / 2` for all later times.
    pub v_floor: f64,
    pub valid: bool,
    /// Node times after `t1` where the floor was violated (grid or constant
    /// errors if nonempty on a certified escape).
    pub violations: Vec<f64>,
}

/// Check the escape hypothesis at node time `t1` and audit the floor on all
/// later nodes. An invalid certificate is a value, not an error.
pub fn check_escape(series: &PolarSeries, sys: &PrimarySystem, t1: f64) -> Result<EscapeCertificate> {
    let k1 = series.index_of(t1)?;
    let r1 = series.r[k1];
    let rdot1 = series.rdot[k1];
    let threshold = escape_threshold(sys.total_mass(), r1);
    let valid = r1 >= sys.far_field().r1 && rdot1 >= threshold;
    let v_floor = 0.5 * rdot1;
    let mut violations = Vec::new();
    if valid {
        for k in k1 + 1..series.len() {
            if series.rdot[k] <= v_floor {
                violations.push(series.times[k]);
            }
        }
    }
    Ok(EscapeCertificate {
        t1,
        r1,
        rdot1,
        threshold,
        v_floor,
        valid,
        violations,
    })
}

/// Angular-momentum bound along a certified escape.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OmegaBound {
    /// `|omega(t1)| + alpha2 / (v0 r(t1))`.
    pub bound: f64,
    pub measured_sup: f64,
    pub within: bool,
}

pub fn angular_momentum_bound(
    series: &PolarSeries,
    t1: f64,
    v0: f64,
    alpha2: f64,
) -> Result<OmegaBound> {
    if !(v0 > 0.0) {
        return Err(Error::invalid("radial floor v0 must be positive"));
    }
    let k1 = series.index_of(t1)?;
    let bound = series.omega[k1].abs() + alpha2 / (v0 * series.r[k1]);
    let measured_sup = series.omega[k1..]
        .iter()
        .fold(0.0_f64, |acc, &w| acc.max(w.abs()));
    Ok(OmegaBound {
        bound,
        measured_sup,
        within: measured_sup <= bound + 1e-6,
    })
}

/// Limiting polar angle with a certified error bar.
///
/// The estimate is the unwrapped angle at the last node; the bar is the
/// angle tail bound evaluated there, `omega/(v0 r) + c/(v0 r)^2 * v0^0`...
/// precisely `min(omega_bound, |omega(end)|)/(v0 r_end) + c/(v0^2 r_end^2)`,
/// valid under the escape certificate covering `[t1, end]`.
pub fn limit_angle(
    series: &PolarSeries,
    t1: f64,
    v0: f64,
    omega_bound: f64,
    c: f64,
) -> Result<(f64, f64)> {
    if !(v0 > 0.0) {
        return Err(Error::invalid("radial floor v0 must be positive"));
    }
    series.index_of(t1)?;
    let end = series.len() - 1;
    let r_end = series.r[end];
    let omega_end = series.omega[end].abs().min(omega_bound);
    let bound = omega_end / (v0 * r_end) + c / (v0 * v0 * r_end * r_end);
    Ok((series.theta[end], bound))
}

/// Worst violation margin of the pointwise angle tail bound: for every
/// checkpoint `t >= t1`, the remaining variation `sup_{s>=t} |theta(s) -
/// theta(t)|` must stay within `min(omega_bound, |omega(t)|)/(v0 r(t)) +
/// c/(v0 r(t))^2`-style tail bound. Returns the max of (variation - bound)
/// over checkpoints; nonpositive means the bound held everywhere.
pub fn theta_tail_margin(
    series: &PolarSeries,
    t1: f64,
    v0: f64,
    omega_bound: f64,
    c: f64,
) -> Result<f64> {
    let k1 = series.index_of(t1)?;
    let n = series.len();
    // suffix extrema of theta
    let mut suffix_max = vec![f64::NEG_INFINITY; n];
    let mut suffix_min = vec![f64::INFINITY; n];
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for k in (0..n).rev() {
        hi = hi.max(series.theta[k]);
        lo = lo.min(series.theta[k]);
        suffix_max[k] = hi;
        suffix_min[k] = lo;
    }
    let mut worst = f64::NEG_INFINITY;
    for k in k1..n {
        let variation =
            (suffix_max[k] - series.theta[k]).max(series.theta[k] - suffix_min[k]);
        let om = series.omega[k].abs().min(omega_bound);
        let bound = om / (v0 * series.r[k]) + c / (v0 * v0 * series.r[k] * series.r[k]);
        worst = worst.max(variation - bound);
    }
    Ok(worst)
}

/// Limiting speed by a least-squares fit of `|zdot|` against `1/r` over the
/// tail (the leading far-field correction is Coulombic, so speed is affine
/// in `1/r`). Error estimate: fit residual plus the transverse part
/// `sup|omega|/r_end`.
pub fn limit_speed(series: &PolarSeries, tail_fraction: f64) -> Result<(f64, f64)> {
    if !(0.0 < tail_fraction && tail_fraction <= 1.0) {
        return Err(Error::invalid("tail fraction must be in (0, 1]"));
    }
    let n = series.len();
    let t_end = series.times[n - 1];
    let t_start = series.times[0];
    let cut = t_end - tail_fraction * (t_end - t_start);
    let tail: Vec<usize> = (0..n).filter(|&k| series.times[k] >= cut).collect();
    if tail.len() < 10 {
        return Err(Error::invalid(format!(
            "tail too short: {} nodes, need 10",
            tail.len()
        )));
    }
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .map(|&k| (1.0 / series.r[k], series.speed[k]))
        .collect();
    let nn = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = nn * sxx - sx * sx;
    let (slope, intercept) = if denom.abs() < 1e-300 {
        (0.0, sy / nn)
    } else {
        let b = (nn * sxy - sx * sy) / denom;
        ((nn * sxy - sx * sy) / denom, (sy - b * sx) / nn)
    };
    let residual = (pts
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / nn)
        .sqrt();
    let omega_sup = tail
        .iter()
        .map(|&k| series.omega[k].abs())
        .fold(0.0_f64, f64::max);
    let r_end = series.r[n - 1];
    Ok((intercept, residual + omega_sup / r_end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Path;
    use crate::ephemeris::PrimarySystem;
    use crate::verify::{integrate_ode, IntegratorOptions, KeplerConic};
    use approx::assert_relative_eq;

    #[test]
    fn thresholds_agree_when_c_equals_m() {
        for (m, r) in [(1.0, 6.0), (2.5, 11.0), (0.3, 100.0)] {
            assert_relative_eq!(
                escape_threshold(m, r),
                escape_threshold_general(m, m, r),
                max_relative = 1e-15
            );
        }
        // worked value: m = 1, r = 6 gives exactly 1
        assert_relative_eq!(escape_threshold(1.0, 6.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn polar_series_basics() {
        // straight radial path: constant angle, zero angular momentum
        let p = Path::chord(
            Complex64::new(1.0, 1.0),
            Complex64::new(5.0, 5.0),
            0.0,
            1.0,
            21,
        )
        .unwrap();
        let s = polar_series(&p).unwrap();
        for k in 0..s.len() {
            assert_relative_eq!(s.theta()[k], std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
            assert!(s.omega()[k].abs() < 1e-10);
        }

        // circle radius 2 at unit angular speed: omega = 4, one CCW loop
        let n = 257;
        let times: Vec<f64> = (0..n)
            .map(|k| std::f64::consts::TAU * k as f64 / (n - 1) as f64)
            .collect();
        let pos: Vec<Complex64> = times.iter().map(|&t| Complex64::from_polar(2.0, t)).collect();
        let p = Path::new(times, pos).unwrap();
        let s = polar_series(&p).unwrap();
        for k in 2..s.len() - 2 {
            assert_relative_eq!(s.omega()[k], 4.0, max_relative = 1e-6);
            assert!(s.rdot()[k].abs() < 1e-6);
        }
        assert_relative_eq!(
            s.theta()[s.len() - 1] - s.theta()[0],
            std::f64::consts::TAU,
            max_relative = 1e-12
        );

        // reconstruction r e^{i theta} reproduces the nodes
        for k in 0..s.len() {
            let z = Complex64::from_polar(s.r()[k], s.theta()[k]);
            assert!((z - p.positions()[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn escape_certificate_values() {
        // synthetic series with r(t1) = 6, rdot = 1, m = 1: boundary-valid
        let sys = PrimarySystem::static_center(1.0).unwrap();
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 0.5).collect();
        let pos: Vec<Complex64> = times
            .iter()
            .map(|&t| Complex64::new(6.0 + t, 0.0))
            .collect();
        let p = Path::new(times, pos).unwrap();
        let s = polar_series(&p).unwrap();
        let cert = check_escape(&s, &sys, 0.0).unwrap();
        assert_relative_eq!(cert.threshold, 1.0, max_relative = 1e-12);
        assert!(cert.valid);
        assert!(cert.violations.is_empty());

        // zero radial velocity is invalid
        let pos: Vec<Complex64> = s
            .times()
            .iter()
            .map(|&t| Complex64::from_polar(6.0, 0.01 * t))
            .collect();
        let p = Path::new(s.times().to_vec(), pos).unwrap();
        let s2 = polar_series(&p).unwrap();
        let cert = check_escape(&s2, &sys, 0.0).unwrap();
        assert!(!cert.valid);
    }

    #[test]
    fn omega_bound_arithmetic_and_kepler_conservation() {
        // |omega(t1)| = 0.1, alpha2 = 1, v0 = 1, r(t1) = 10 -> bound 0.2
        // build a synthetic series implementing those start values
        let times: Vec<f64> = (0..60).map(|k| k as f64 * 0.25).collect();
        let pos: Vec<Complex64> = times
            .iter()
            .map(|&t| {
                let r = 10.0 + t;
                let th = 0.1 / 10.0 * t / (1.0 + t / 10.0); // omega ~ 0.1 at start
                Complex64::from_polar(r, th * 0.1)
            })
            .collect();
        let p = Path::new(times, pos).unwrap();
        let s = polar_series(&p).unwrap();
        let om1 = s.omega()[0].abs();
        let b = angular_momentum_bound(&s, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(b.bound, om1 + 1.0 / 10.0, max_relative = 1e-12);

        // static center: alpha2 = 0 and omega is conserved, saturating it
        let conic = KeplerConic::new(1.0, 0.5, 0.8, 0.0).unwrap();
        let (z0, v0) = conic.state(1.0);
        let sys = PrimarySystem::static_center(1.0).unwrap();
        let grid: Vec<f64> = (0..=400).map(|k| 1.0 + k as f64 * 0.25).collect();
        let orbit = integrate_to_grid_helper(&sys, z0, v0, &grid);
        let s = polar_series(&orbit).unwrap();
        // start the audit a few nodes in, where the centered stencil applies
        let t1 = s.times()[4];
        let b = angular_momentum_bound(&s, t1, s.rdot()[4] * 0.5, 0.0).unwrap();
        assert!(b.within);
        assert_relative_eq!(b.measured_sup, 0.8, max_relative = 1e-4);
        assert_relative_eq!(b.bound, b.measured_sup, max_relative = 1e-4);
    }

    fn integrate_to_grid_helper(
        sys: &PrimarySystem,
        z0: Complex64,
        v0: Complex64,
        grid: &[f64],
    ) -> Path {
        crate::verify::integrate_to_grid(sys, z0, v0, grid, &IntegratorOptions::default())
            .unwrap()
            .path
    }

    #[test]
    fn limit_angle_bound_arithmetic_and_radial_case() {
        // omega = 0, c = 1, v0 = 1, r_end = 10 -> bound 0.01
        let times: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let pos: Vec<Complex64> = times
            .iter()
            .map(|&t| Complex64::new(4.0 + 6.0 * t / 29.0, 0.0))
            .collect();
        let p = Path::new(times, pos).unwrap();
        let s = polar_series(&p).unwrap();
        let (theta_inf, bound) = limit_angle(&s, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(theta_inf, 0.0, epsilon = 1e-12);
        assert_relative_eq!(bound, 0.01, max_relative = 1e-9);
        assert!(bound >= 0.0);
    }

    #[test]
    fn limit_angle_self_consistency_on_binary_escape() {
        // estimates at r ~ 1e3 and r ~ 1e4 differ by less than the bound
        let sys = PrimarySystem::circular_binary(0.5, 0.5, 1.0, 0.0).unwrap();
        let far = sys.far_field();
        let r0 = far.r1 + 1.0;
        let v0 = escape_threshold(sys.total_mass(), r0) * 1.05;
        let dir = Complex64::from_polar(1.0, 0.7);
        let orbit = integrate_ode(
            &sys,
            r0 * dir,
            v0 * dir * 1.02 + Complex64::new(0.0, 0.05),
            (0.0, 9000.0),
            &IntegratorOptions {
                rtol: 1e-9,
                ..Default::default()
            },
        )
        .unwrap();
        let s = polar_series(&orbit.path).unwrap();
        let cert = check_escape(&s, &sys, 0.0).unwrap();
        assert!(cert.valid, "rdot {} vs threshold {}", cert.rdot1, cert.threshold);
        assert!(cert.violations.is_empty());

        // cut the series where r crosses 1e3
        let k_cut = s.r().iter().position(|&r| r > 1.0e3).expect("escapes past 1e3");
        let sub = orbit.path.subpath(s.times()[0], s.times()[k_cut]).unwrap();
        let s_short = polar_series(&sub).unwrap();
        let (th_short, bound_short) =
            limit_angle(&s_short, 0.0, cert.v_floor, 10.0, far.alpha2).unwrap();
        let (th_long, _) = limit_angle(&s, 0.0, cert.v_floor, 10.0, far.alpha2).unwrap();
        assert!(
            (th_long - th_short).abs() <= bound_short,
            "angle drift {:.3e} exceeds bound {:.3e}",
            (th_long - th_short).abs(),
            bound_short
        );

        // Cauchy property: the bound shrinks monotonically along the orbit
        let (_, bound_long) = limit_angle(&s, 0.0, cert.v_floor, 10.0, far.alpha2).unwrap();
        assert!(bound_long < bound_short);

        // pointwise tail-bound audit
        let b = angular_momentum_bound(&s, 0.0, cert.v_floor, far.alpha2).unwrap();
        assert!(b.within);
        let margin = theta_tail_margin(&s, 0.0, cert.v_floor, b.bound, far.alpha2).unwrap();
        assert!(margin <= 0.0, "tail bound violated by {margin:.3e}");
    }

    #[test]
    fn limit_speed_recovers_sqrt_2h() {
        let h = 0.5;
        let conic = KeplerConic::new(1.0, h, 1.2, 0.3).unwrap();
        let sys = PrimarySystem::static_center(1.0).unwrap();
        let (z0, v0) = conic.state(2.0);
        // integrate out to r ~ 1e3
        let grid: Vec<f64> = (0..=600).map(|k| 2.0 + k as f64 * 1.8).collect();
        let path = integrate_to_grid_helper(&sys, z0, v0, &grid);
        let s = polar_series(&path).unwrap();
        assert!(s.r()[s.len() - 1] > 1.0e3);
        let (v_inf, err) = limit_speed(&s, 0.5).unwrap();
        assert!(
            (v_inf - (2.0 * h).sqrt()).abs() < 1e-4,
            "v_inf {v_inf} err {err}"
        );

        // too-short tails are rejected
        assert!(limit_speed(&s, 0.001).is_err());
    }

    #[test]
    fn kepler_invariants_under_integration() {
        // on the static center both omega and the energy are conserved
        let sys = PrimarySystem::static_center(1.0).unwrap();
        let orbit = integrate_ode(
            &sys,
            Complex64::new(3.0, 0.5),
            Complex64::new(0.2, 0.9),
            (0.0, 50.0),
            &IntegratorOptions::default(),
        )
        .unwrap();
        let e0 = 0.5 * orbit.velocities[0].norm_sqr() - 1.0 / orbit.path.positions()[0].norm();
        let om0 = wedge(orbit.path.positions()[0], orbit.velocities[0]);
        for k in 0..orbit.path.n_nodes() {
            let e = 0.5 * orbit.velocities[k].norm_sqr()
                - 1.0 / orbit.path.positions()[k].norm();
            let om = wedge(orbit.path.positions()[k], orbit.velocities[k]);
            assert!((e - e0).abs() < 1e-9);
            assert!((om - om0).abs() < 1e-9);
        }
    }
}
