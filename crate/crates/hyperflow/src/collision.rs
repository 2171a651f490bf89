//! Binary-collision diagnostics and action-lowering local deformations.
//!
//! Near an isolated collision with primary `i0` the relative position
//! `zeta = gamma - q_{i0}` follows the universal two-thirds law
//! `zeta ~ (9 m_{i0} / 2)^(1/3) |t - t0|^(2/3) sigma` with unit one-sided
//! directions `sigma_-`, `sigma_+`. This module fits that law, transports
//! windows through the `lambda`-blow-up under which the Kepler collision
//! structure is scale invariant (action scales by `lambda^(1/3)`), and
//! builds the two collision-free local deformations that lower the action
//! whenever `sigma_- != sigma_+`, one winding each way around the primary.

use num_complex::Complex64;
use serde::Serialize;

use crate::action::{self, Path};
use crate::ephemeris::PrimarySystem;
use crate::lbfgs::{self, LbfgsOptions};
use crate::{angle_step, wedge, Error, Result};

/// Closest-approach distances below `COLLISION_GUARD_FACTOR * collision
/// scale` are treated as collisions (quadrature error dominates below it).
pub const COLLISION_GUARD_FACTOR: f64 = 1e-3;
/// Collar width of the deformation splice, as a fraction of the inner
/// blow-up window; halved when the proximity bound fails.
const COLLAR_FRACTION: f64 = 0.05;

/// Two-thirds-law coefficient `(9 m / 2)^(1/3)`.
pub fn homothetic_coefficient(m: f64) -> f64 {
    (4.5 * m).cbrt()
}

/// Action of the parabolic homothetic collision-ejection path on
/// `[-t_half, t_half]` (closed form `8/3 c^2 t_half^(1/3)`).
pub fn homothetic_action(m: f64, t_half: f64) -> f64 {
    let c = homothetic_coefficient(m);
    8.0 / 3.0 * c * c * t_half.powf(1.0 / 3.0)
}

/// Fitted description of an isolated near-collision.
#[derive(Debug, Clone, Serialize)]
pub struct CollisionEvent {
    pub t0: f64,
    #[serde(rename = "i0")]
    pub body: usize,
    pub sigma_minus: (f64, f64),
    pub sigma_plus: (f64, f64),
    #[serde(rename = "E0")]
    pub binary_energy: f64,
    /// Fitted power-law exponent per side (minus, plus); 2/3 for genuine
    /// collision solutions.
    pub exponent: (f64, f64),
    /// Fitted coefficient per side; `(9 m_{i0}/2)^(1/3)` for genuine ones.
    pub coefficient: (f64, f64),
    /// RMS residual of the log-log fit per side.
    pub residuals: (f64, f64),
}

impl CollisionEvent {
    pub fn sigma_minus_c(&self) -> Complex64 {
        Complex64::new(self.sigma_minus.0, self.sigma_minus.1)
    }

    pub fn sigma_plus_c(&self) -> Complex64 {
        Complex64::new(self.sigma_plus.0, self.sigma_plus.1)
    }
}

/// Node-wise relative path `zeta(t) = gamma(t) - q_{i0}(t)`.
pub fn relative_path(path: &Path, sys: &PrimarySystem, i0: usize) -> Path {
    let positions = path
        .times()
        .iter()
        .zip(path.positions())
        .map(|(&t, &z)| z - sys.position(i0, t))
        .collect();
    Path::new(path.times().to_vec(), positions).expect("times preserved")
}

/// Inverse of [`relative_path`].
pub fn absolute_path(rel: &Path, sys: &PrimarySystem, i0: usize) -> Path {
    let positions = rel
        .times()
        .iter()
        .zip(rel.positions())
        .map(|(&t, &z)| z + sys.position(i0, t))
        .collect();
    Path::new(rel.times().to_vec(), positions).expect("times preserved")
}

/// Two-body energy `E_{i0}(t) = |gammadot - qdot_{i0}|^2/2 - m_{i0}/|zeta|`
/// with the velocity taken from centered differences on the node grid.
pub fn binary_energy(path: &Path, sys: &PrimarySystem, i0: usize, t: f64) -> Result<f64> {
    let n = path.n_nodes();
    if n < 3 {
        return Err(Error::invalid("binary energy needs at least 3 nodes"));
    }
    let times = path.times();
    let k = times
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - t)
                .abs()
                .partial_cmp(&(b.1 - t).abs())
                .expect("finite times")
        })
        .map(|(i, _)| i)
        .unwrap()
        .clamp(1, n - 2);
    let z = path.positions();
    let vel = (z[k + 1] - z[k - 1]) / (times[k + 1] - times[k - 1]);
    let rel = z[k] - sys.position(i0, times[k]);
    if rel.norm() == 0.0 {
        return Err(Error::Singularity {
            body: i0,
            time: times[k],
        });
    }
    let vrel = vel - sys.velocity(i0, times[k]);
    Ok(0.5 * vrel.norm_sqr() - sys.mass(i0) / rel.norm())
}

/// The parabolic homothetic collision-ejection path
/// `zeta(s) = (9m/2)^(1/3) |s|^(2/3) sigma(s)` on `[-t_half, t_half]`,
/// approaching along `sigma_minus` and leaving along `sigma_plus`, with node
/// times clustered at the collision.
pub fn parabolic_homothetic(
    m: f64,
    sigma_minus: Complex64,
    sigma_plus: Complex64,
    t_half: f64,
    nodes_per_side: usize,
) -> Result<Path> {
    if (sigma_minus.norm() - 1.0).abs() > 1e-9 || (sigma_plus.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("ejection directions must be unit vectors"));
    }
    if !(t_half > 0.0) || nodes_per_side < 4 {
        return Err(Error::invalid("need t_half > 0 and at least 4 nodes per side"));
    }
    let c = homothetic_coefficient(m);
    let n = nodes_per_side;
    let mut times = Vec::with_capacity(2 * n + 1);
    let mut positions = Vec::with_capacity(2 * n + 1);
    // clustering exponent 1.5 resolves the 2/3 cusp
    for j in (1..=n).rev() {
        let s = -t_half * (j as f64 / n as f64).powf(1.5);
        times.push(s);
        positions.push(c * (-s).powf(2.0 / 3.0) * sigma_minus);
    }
    times.push(0.0);
    positions.push(Complex64::new(0.0, 0.0));
    for j in 1..=n {
        let s = t_half * (j as f64 / n as f64).powf(1.5);
        times.push(s);
        positions.push(c * s.powf(2.0 / 3.0) * sigma_plus);
    }
    Path::new(times, positions)
}

/// Least-squares fit of the two-thirds law around `t0` on `|t - t0| <=
/// window`, one fit per side. The relative-distance minimum inside the
/// window must lie below the collision guard.
pub fn fit_asymptotics(
    path: &Path,
    sys: &PrimarySystem,
    i0: usize,
    t0: f64,
    window: f64,
) -> Result<CollisionEvent> {
    let rel = relative_path(path, sys, i0);
    let guard = COLLISION_GUARD_FACTOR * sys.collision_scale();
    let in_window: Vec<usize> = (0..rel.n_nodes())
        .filter(|&k| (rel.times()[k] - t0).abs() <= window)
        .collect();
    if in_window.is_empty() {
        return Err(Error::invalid("window contains no nodes"));
    }
    let d_min = in_window
        .iter()
        .map(|&k| rel.positions()[k].norm())
        .fold(f64::INFINITY, f64::min);
    if d_min > guard {
        return Err(Error::invalid(format!(
            "no near-collision in window: min |zeta| = {d_min:.3e} > guard {guard:.3e}"
        )));
    }

    // The innermost nodes are dominated by the remainder terms (and, for
    // integrated data, by the finite start radius); fit outside 2% of the
    // window only.
    let inner_cut = window / 50.0;
    let side = |sign: f64| -> Result<(f64, f64, f64)> {
        let pts: Vec<(f64, f64)> = in_window
            .iter()
            .filter_map(|&k| {
                let dt = sign * (rel.times()[k] - t0);
                let r = rel.positions()[k].norm();
                (dt > inner_cut && r > 1e-13).then(|| (dt.ln(), r.ln()))
            })
            .collect();
        if pts.len() < 6 {
            return Err(Error::invalid(format!(
                "window too small: {} usable nodes on one side, need 6",
                pts.len()
            )));
        }
        // least squares y = p x + b
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let p = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let b = (sy - p * sx) / n;
        let rms = (pts
            .iter()
            .map(|&(x, y)| (y - p * x - b).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        // When the exponent sits at the two-thirds law, estimate its
        // coefficient by extrapolating r / dt^(2/3) linearly in dt^(2/3)
        // down to the collision; this cancels the leading remainder, which
        // the raw log-log intercept (an extrapolation to dt = 1) amplifies.
        let coefficient = if (p - 2.0 / 3.0).abs() < 0.05 {
            let cs: Vec<(f64, f64)> = pts
                .iter()
                .map(|&(x, y)| {
                    let u = (2.0 / 3.0 * x).exp(); // dt^(2/3)
                    (u, y.exp() / u)
                })
                .collect();
            let su: f64 = cs.iter().map(|c| c.0).sum();
            let sc: f64 = cs.iter().map(|c| c.1).sum();
            let suu: f64 = cs.iter().map(|c| c.0 * c.0).sum();
            let suc: f64 = cs.iter().map(|c| c.0 * c.1).sum();
            let slope = (n * suc - su * sc) / (n * suu - su * su);
            (sc - slope * su) / n
        } else {
            b.exp()
        };
        Ok((p, coefficient, rms))
    };
    let minus = side(-1.0)?;
    let plus = side(1.0)?;

    // Direction estimate: normalized relative position at the first node at
    // least 3 grid steps out, Richardson-extrapolated one level (6 steps).
    let k0 = (0..rel.n_nodes())
        .min_by(|&a, &b| {
            (rel.times()[a] - t0)
                .abs()
                .partial_cmp(&(rel.times()[b] - t0).abs())
                .expect("finite")
        })
        .unwrap();
    let dir = |offset: i64| -> Option<Complex64> {
        let k = k0 as i64 + offset;
        if k < 0 || k as usize >= rel.n_nodes() {
            return None;
        }
        let z = rel.positions()[k as usize];
        (z.norm() > 1e-13).then(|| z / z.norm())
    };
    let extrapolate = |near: Option<Complex64>, far: Option<Complex64>| -> Complex64 {
        match (near, far) {
            (Some(a), Some(b)) => {
                let v = 2.0 * a - b;
                if v.norm() > 1e-9 {
                    v / v.norm()
                } else {
                    a
                }
            }
            (Some(a), None) => a,
            _ => Complex64::new(f64::NAN, f64::NAN),
        }
    };
    let sigma_minus = extrapolate(dir(-3), dir(-6));
    let sigma_plus = extrapolate(dir(3), dir(6));

    // Two-body energy extrapolated to t0: average over the window edges.
    let e_minus = binary_energy(path, sys, i0, t0 - window)?;
    let e_plus = binary_energy(path, sys, i0, t0 + window)?;

    Ok(CollisionEvent {
        t0,
        body: i0,
        sigma_minus: (sigma_minus.re, sigma_minus.im),
        sigma_plus: (sigma_plus.re, sigma_plus.im),
        binary_energy: 0.5 * (e_minus + e_plus),
        exponent: (minus.0, plus.0),
        coefficient: (minus.1, plus.1),
        residuals: (minus.2, plus.2),
    })
}

/// A path transported to blow-up coordinates
/// `zeta^lam(s) = lam^(2/3) zeta(t0 + s/lam)`.
#[derive(Debug, Clone)]
pub struct BlowUpFrame {
    pub lambda: f64,
    pub t0: f64,
    pub path: Path,
}

/// Blow up a (relative) path about `t0` by `lambda`.
pub fn blow_up_path(rel: &Path, t0: f64, lambda: f64) -> Result<BlowUpFrame> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("blow-up scale must be positive"));
    }
    let scale = lambda.powf(2.0 / 3.0);
    let times = rel.times().iter().map(|&t| lambda * (t - t0)).collect();
    let positions = rel.positions().iter().map(|&z| scale * z).collect();
    Ok(BlowUpFrame {
        lambda,
        t0,
        path: Path::new(times, positions)?,
    })
}

/// Invert [`blow_up_path`].
pub fn blow_down_path(frame: &BlowUpFrame) -> Path {
    let scale = frame.lambda.powf(-2.0 / 3.0);
    let times = frame
        .path
        .times()
        .iter()
        .map(|&s| frame.t0 + s / frame.lambda)
        .collect();
    let positions = frame.path.positions().iter().map(|&z| scale * z).collect();
    Path::new(times, positions).expect("times preserved")
}

/// Continuous argument increment of a path around the origin, by sampling
/// each segment finely enough that every angular step stays below pi/2.
pub fn argument_increment(path: &Path) -> Result<f64> {
    let mut total = 0.0;
    let mut prev = path.positions()[0];
    if prev.norm() == 0.0 {
        return Err(Error::invalid("argument undefined at the origin"));
    }
    for seg in 0..path.n_nodes() - 1 {
        let mut parts = 1usize;
        'refine: loop {
            let mut acc = 0.0;
            let mut last = prev;
            for j in 1..=parts {
                let t = path.times()[seg]
                    + (path.times()[seg + 1] - path.times()[seg]) * j as f64 / parts as f64;
                let z = path.position_at(t);
                match angle_step(last, z) {
                    Some(step) if step.abs() < std::f64::consts::FRAC_PI_2 => {
                        acc += step;
                        last = z;
                    }
                    _ => {
                        parts *= 2;
                        if parts > 1 << 16 {
                            return Err(Error::RefinementNeeded(
                                "segment passes too close to the origin".into(),
                            ));
                        }
                        continue 'refine;
                    }
                }
            }
            total += acc;
            prev = last;
            break;
        }
    }
    Ok(total)
}

/// Minimize the Kepler action over collision-free arcs joining the ends of
/// the homothetic path on `[-t_half, t_half]`, constrained to total argument
/// increment in `(0, 2 pi)` for `winding_sign = +1` and `(-2 pi, 0)` for
/// `-1`. The result has action strictly below the homothetic value.
pub fn kepler_deform_arcs(
    m: f64,
    boundary: (Complex64, Complex64),
    t_half: f64,
    winding_sign: i8,
) -> Result<Path> {
    if winding_sign == 0 {
        return Err(Error::invalid("winding sign must be +1 or -1"));
    }
    if !(t_half > 0.0) {
        return Err(Error::invalid("t_half must be positive"));
    }
    let (b_minus, b_plus) = boundary;
    let (rm, rp) = (b_minus.norm(), b_plus.norm());
    if rm == 0.0 || rp == 0.0 {
        return Err(Error::invalid("boundary points must be away from the origin"));
    }
    let sm = b_minus / rm;
    let sp = b_plus / rp;
    if (sm - sp).norm() < 1e-8 {
        return Err(Error::invalid(
            "equal ejection directions are not supported (no winding class separates them)",
        ));
    }
    let base = wedge(sm, sp).atan2(crate::dot(sm, sp)); // in (-pi, pi]
    let target = if winding_sign > 0 {
        if base > 0.0 {
            base
        } else {
            base + std::f64::consts::TAU
        }
    } else if base < 0.0 {
        base
    } else {
        base - std::f64::consts::TAU
    };

    // Kepler field as a degenerate one-body system; h = 0.
    let sys = PrimarySystem::static_center(m)?;

    // Initial guess in the right class: two-thirds radial profile with a
    // floor, sweeping the target angle at uniform rate.
    let n_side = 48usize;
    let c = homothetic_coefficient(m);
    let floor = 0.15 * t_half;
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let theta_m = b_minus.arg();
    for j in 0..=(2 * n_side) {
        let u = j as f64 / n_side as f64 - 1.0; // in [-1, 1]
        let s = t_half * u.signum() * u.abs().powf(1.5);
        let r_profile = c * s.abs().max(floor).powf(2.0 / 3.0);
        // interpolate endpoint radii so the ends match exactly
        let w = (s + t_half) / (2.0 * t_half);
        let r_ends = rm * (1.0 - w) + rp * w;
        let r = if s.abs() >= t_half {
            r_ends
        } else {
            r_profile * (r_ends / (c * t_half.powf(2.0 / 3.0))).max(0.5)
        };
        let theta = theta_m + target * w;
        times.push(s);
        positions.push(Complex64::from_polar(r, theta));
    }
    *positions.first_mut().unwrap() = b_minus;
    *positions.last_mut().unwrap() = b_plus;
    let guess = Path::new(times, positions)?;
    let measured = argument_increment(&guess)?;
    if (measured - target).abs() > 1.0 {
        return Err(Error::InitializationFailure(format!(
            "guess winding {measured:.3} is off target {target:.3}"
        )));
    }

    let arc = minimize_kepler_in_class(&sys, &guess, target)?;
    let a_arc = action::action(&sys, &arc, 0.0)?.total;
    let a_hom = homothetic_action(m, t_half);
    if a_arc >= a_hom {
        return Err(Error::NumericalFailure(format!(
            "deformation arc action {a_arc:.6} did not drop below homothetic {a_hom:.6}"
        )));
    }
    Ok(arc)
}

/// Class-constrained descent of the Kepler action: early iterations add a
/// quadratic pull of the winding toward `target`, later ones are pure
/// action descent; every accepted step must keep the rounded winding and
/// stay off the origin.
fn minimize_kepler_in_class(sys: &PrimarySystem, guess: &Path, target: f64) -> Result<Path> {
    let times = guess.times().to_vec();
    let ends = (guess.start(), guess.end());
    let n = guess.n_nodes();
    let to_vars = |p: &Path| -> Vec<f64> {
        p.positions()[1..n - 1]
            .iter()
            .flat_map(|z| [z.re, z.im])
            .collect()
    };
    let to_path = |vars: &[f64]| -> Path {
        let mut positions = Vec::with_capacity(n);
        positions.push(ends.0);
        for pair in vars.chunks_exact(2) {
            positions.push(Complex64::new(pair[0], pair[1]));
        }
        positions.push(ends.1);
        Path::new(times.clone(), positions).expect("fixed valid times")
    };
    let class_ok = |vars: &[f64]| -> bool {
        let p = to_path(vars);
        // cheap origin clearance check at nodes first
        if p.positions().iter().any(|z| z.norm() < 1e-9) {
            return false;
        }
        match argument_increment(&p) {
            Ok(w) => (w - target).abs() < std::f64::consts::PI,
            Err(_) => false,
        }
    };

    let mut current = to_vars(guess);
    // Phase 1: soft pull toward the target winding, decaying weight.
    for (stage, weight) in [(0, 2.0), (1, 0.5)] {
        let objective = |vars: &[f64]| -> Result<(f64, Vec<f64>)> {
            let p = to_path(vars);
            let a = action::action(sys, &p, 0.0)?;
            let g = action::action_gradient(sys, &p, 0.0)?;
            let mut grad: Vec<f64> = g.interior.iter().flat_map(|z| [z.re, z.im]).collect();
            let mut value = a.total;
            if weight > 0.0 {
                let w = argument_increment(&p)?;
                value += weight * (w - target).powi(2);
                // finite-difference the winding penalty gradient coarsely:
                // the penalty only steers, exactness is not needed
                let eps = 1e-6;
                for i in 0..vars.len() {
                    let mut v2 = vars.to_vec();
                    v2[i] += eps;
                    let w2 = argument_increment(&to_path(&v2)).unwrap_or(w);
                    grad[i] += weight * 2.0 * (w - target) * (w2 - w) / eps;
                }
            }
            Ok((value, grad))
        };
        let opts = LbfgsOptions {
            grad_tol: if stage == 0 { 1e-4 } else { 1e-6 },
            max_iter: if stage == 0 { 60 } else { 120 },
            ..Default::default()
        };
        let out = lbfgs::minimize(objective, current, &opts, |v| class_ok(v), |_, _, _, _| {})?;
        current = out.x;
    }
    // Phase 2: penalty-free descent inside the class.
    let objective = |vars: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = to_path(vars);
        let a = action::action(sys, &p, 0.0)?;
        let g = action::action_gradient(sys, &p, 0.0)?;
        Ok((
            a.total,
            g.interior.iter().flat_map(|z| [z.re, z.im]).collect(),
        ))
    };
    let out = lbfgs::minimize(
        objective,
        current,
        &LbfgsOptions {
            grad_tol: 1e-8,
            max_iter: 2_000,
            ..Default::default()
        },
        |v| class_ok(v),
        |_, _, _, _| {},
    )?;
    Ok(to_path(&out.x))
}

/// The two local deformations of a near-collision window: splice a winding
/// Kepler arc into the blow-up frame, blend back to the original path over
/// short collars, and undo the blow-up. Outside the spliced window the
/// outputs coincide with the input path node for node.
///
/// Returns `(eta_plus, eta_minus)` whose argument increments around
/// `q_{i0}` over `[t0 - delta, t0 + delta]` lie in `(0, 2 pi)` and
/// `(-2 pi, 0)` respectively, both within `epsilon` of the input path.
pub fn local_deform(
    path: &Path,
    sys: &PrimarySystem,
    event: &CollisionEvent,
    delta: f64,
    epsilon: f64,
) -> Result<(Path, Path)> {
    let t0 = event.t0;
    let i0 = event.body;
    if t0 - delta <= path.start_time() || t0 + delta >= path.end_time() {
        return Err(Error::invalid(
            "deformation window must be interior to the path",
        ));
    }
    // Other primaries must stay clear of the window.
    if sys.n_bodies() > 1 {
        let clearance = 0.5 * sys.rho0();
        for k in 0..=32 {
            let t = t0 - delta + 2.0 * delta * k as f64 / 32.0;
            let z = path.position_at(t);
            for j in 0..sys.n_bodies() {
                if j != i0 && (z - sys.position(j, t)).norm() < clearance {
                    return Err(Error::invalid(
                        "another primary intrudes into the deformation window",
                    ));
                }
            }
        }
    }

    let m = sys.mass(i0);
    let c = homothetic_coefficient(m);
    let t_inner: f64 = 1.0; // inner Kepler half-window in blow-up units
    let sm = event.sigma_minus_c();
    let sp = event.sigma_plus_c();
    let boundary = (
        c * t_inner.powf(2.0 / 3.0) * sm,
        c * t_inner.powf(2.0 / 3.0) * sp,
    );
    let arc_plus = kepler_deform_arcs(m, boundary, t_inner, 1)?;
    let arc_minus = kepler_deform_arcs(m, boundary, t_inner, -1)?;

    let rel = relative_path(path, sys, i0);
    // lambda large enough that the splice sits deep inside the window and
    // the mapped-back amplitude respects the proximity cap.
    let amplitude = 3.0 * c * (2.0 * t_inner).powf(2.0 / 3.0);
    let mut lambda = (4.0 * t_inner / delta).max((amplitude / epsilon).powf(1.5));
    let mut collar = COLLAR_FRACTION * 2.0 * t_inner;

    for _attempt in 0..14 {
        let built_plus = splice_once(&rel, sys, i0, t0, lambda, collar, t_inner, &arc_plus, path);
        let built_minus =
            splice_once(&rel, sys, i0, t0, lambda, collar, t_inner, &arc_minus, path);
        if let (Ok(eta_a), Ok(eta_b)) = (built_plus, built_minus) {
            let ok = |eta: &Path| -> Result<(f64, bool)> {
                // proximity over the window
                let mut sup: f64 = 0.0;
                for k in 0..eta.n_nodes() {
                    let t = eta.times()[k];
                    if (t - t0).abs() <= delta {
                        sup = sup.max((eta.positions()[k] - path.position_at(t)).norm());
                    }
                }
                let wind = argument_increment(
                    &relative_path(&eta.subpath(t0 - delta, t0 + delta)?, sys, i0),
                )?;
                Ok((wind, sup <= epsilon))
            };
            if let (Ok((wa, prox_a)), Ok((wb, prox_b))) = (ok(&eta_a), ok(&eta_b)) {
                if prox_a && prox_b {
                    let plus_range = |w: f64| w > 0.0 && w < std::f64::consts::TAU;
                    let minus_range = |w: f64| w < 0.0 && w > -std::f64::consts::TAU;
                    if plus_range(wa) && minus_range(wb) {
                        return Ok((eta_a, eta_b));
                    }
                    if plus_range(wb) && minus_range(wa) {
                        return Ok((eta_b, eta_a));
                    }
                }
            }
        }
        lambda *= 2.0;
        collar *= 0.5;
    }
    Err(Error::RetryWithSmallerWindow(format!(
        "could not satisfy proximity {epsilon:.2e} and winding ranges for window {delta:.2e}"
    )))
}

/// One splice assembly at fixed `lambda`: blow up, swap the middle for the
/// arc with linear blending collars, blow down, restore the primary motion
/// and the untouched outer nodes.
#[allow(clippy::too_many_arguments)]
fn splice_once(
    rel: &Path,
    sys: &PrimarySystem,
    i0: usize,
    t0: f64,
    lambda: f64,
    collar: f64,
    t_inner: f64,
    arc: &Path,
    original: &Path,
) -> Result<Path> {
    let frame = blow_up_path(rel, t0, lambda)?;
    let zspan = 2.0 * t_inner;
    let zeta_lam = &frame.path;
    if zeta_lam.start_time() > -zspan || zeta_lam.end_time() < zspan {
        return Err(Error::invalid("blow-up window too small for the splice"));
    }

    let mut times: Vec<f64> = Vec::new();
    let mut positions: Vec<Complex64> = Vec::new();

    // sampled homothetic reference from the arc boundary directions
    let sm = arc.start() / arc.start().norm();
    let sp = arc.end() / arc.end().norm();
    let c = homothetic_coefficient(sys.mass(i0));
    let homothetic = |s: f64| -> Complex64 {
        if s <= 0.0 {
            c * (-s).powf(2.0 / 3.0) * sm
        } else {
            c * s.powf(2.0 / 3.0) * sp
        }
    };

    // negative collar [-2T, -2T + collar]
    let samples = 12;
    for j in 0..=samples {
        let s = -zspan + collar * j as f64 / samples as f64;
        let w = (s + zspan - collar) / collar; // -1 at s = -2T, 0 at inner edge
        let z = w * (homothetic(s) - zeta_lam.position_at(s)) + homothetic(s);
        times.push(s);
        positions.push(z);
    }
    // homothetic stretch [-2T + collar, -T]
    for j in 1..=samples {
        let s = -zspan + collar + (zspan - collar - t_inner) * j as f64 / samples as f64;
        times.push(s);
        positions.push(homothetic(s));
    }
    // the arc itself on [-T, T]
    for (k, &s) in arc.times().iter().enumerate() {
        if k == 0 {
            continue;
        }
        times.push(s);
        positions.push(arc.positions()[k]);
    }
    // homothetic stretch [T, 2T - collar]
    for j in 1..=samples {
        let s = t_inner + (zspan - collar - t_inner) * j as f64 / samples as f64;
        times.push(s);
        positions.push(homothetic(s));
    }
    // positive collar [2T - collar, 2T]
    for j in 1..=samples {
        let s = zspan - collar + collar * j as f64 / samples as f64;
        let w = (zspan - s) / collar; // 1 at inner edge, 0 at s = 2T
        let z = w * (homothetic(s) - zeta_lam.position_at(s)) + zeta_lam.position_at(s);
        times.push(s);
        positions.push(z);
    }

    // map the splice back to physical coordinates
    let scale = lambda.powf(-2.0 / 3.0);
    let inner_times: Vec<f64> = times.iter().map(|&s| t0 + s / lambda).collect();
    let inner_positions: Vec<Complex64> = times
        .iter()
        .zip(&positions)
        .map(|(&s, &z)| scale * z + sys.position(i0, t0 + s / lambda))
        .collect();

    // splice into the original path, keeping outer nodes bit-for-bit
    let lo = t0 - zspan / lambda;
    let hi = t0 + zspan / lambda;
    let mut full_times = Vec::new();
    let mut full_positions = Vec::new();
    for (k, &t) in original.times().iter().enumerate() {
        if t < lo {
            full_times.push(t);
            full_positions.push(original.positions()[k]);
        }
    }
    for (k, &t) in inner_times.iter().enumerate() {
        if full_times.last().map(|&p| t > p + 1e-15).unwrap_or(true) {
            full_times.push(t);
            full_positions.push(inner_positions[k]);
        }
    }
    for (k, &t) in original.times().iter().enumerate() {
        if t > hi && t > *full_times.last().unwrap() + 1e-15 {
            full_times.push(t);
            full_positions.push(original.positions()[k]);
        }
    }
    Path::new(full_times, full_positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action;
    use crate::ephemeris::PrimarySystem;
    use crate::verify::{integrate_ode, IntegratorOptions};
    use approx::assert_relative_eq;

    fn static1() -> PrimarySystem {
        PrimarySystem::static_center(1.0).unwrap()
    }

    #[test]
    fn relative_path_round_trip() {
        let sys = PrimarySystem::circular_binary(0.5, 0.5, 1.0, 0.0).unwrap();
        let path = Path::chord(
            Complex64::new(3.0, 1.0),
            Complex64::new(-2.0, 2.0),
            0.0,
            2.0,
            17,
        )
        .unwrap();
        let rel = relative_path(&path, &sys, 1);
        let back = absolute_path(&rel, &sys, 1);
        for k in 0..path.n_nodes() {
            assert!((back.positions()[k] - path.positions()[k]).norm() < 1e-14);
        }
        // gamma = q_{i0} maps to the zero path
        let on_body: Vec<Complex64> = path
            .times()
            .iter()
            .map(|&t| sys.position(0, t))
            .collect();
        let p = path.with_positions(on_body).unwrap();
        let rel = relative_path(&p, &sys, 0);
        assert!(rel.positions().iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn homothetic_values_and_kepler_residual() {
        // m = 2, s = 1: |zeta| = 9^(1/3)
        let p = parabolic_homothetic(
            2.0,
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            1.0,
            32,
        )
        .unwrap();
        let last = p.end();
        assert_relative_eq!(last.norm(), 9.0_f64.cbrt(), max_relative = 1e-12);
        // m = 2/9 has unit coefficient
        assert_relative_eq!(homothetic_coefficient(2.0 / 9.0), 1.0, max_relative = 1e-14);

        // Kepler residual away from the collision: sample the analytic form
        let m = 1.3;
        let c = homothetic_coefficient(m);
        for s in [0.3_f64, 0.7, 1.5] {
            // zetadd = -(2/9) c s^(-4/3) sigma and  -m zeta/|zeta|^3
            let acc = -(2.0 / 9.0) * c * s.powf(-4.0 / 3.0);
            let force = -m / (c * c * s.powf(4.0 / 3.0));
            assert_relative_eq!(acc, force, max_relative = 1e-12);
        }
    }

    #[test]
    fn binary_energy_examples() {
        let sys = static1();
        // circular orbit radius 2: E = -m/(2 r)
        let n = 257;
        let times: Vec<f64> = (0..n).map(|k| 20.0 * k as f64 / (n - 1) as f64).collect();
        let omega = (1.0 / 8.0_f64).sqrt(); // v^2/r = m/r^2
        let positions: Vec<Complex64> = times
            .iter()
            .map(|&t| Complex64::from_polar(2.0, omega * t))
            .collect();
        let path = Path::new(times, positions).unwrap();
        let e = binary_energy(&path, &sys, 0, 10.0).unwrap();
        assert_relative_eq!(e, -0.25, max_relative = 1e-3);

        // parabolic homothetic path has zero binary energy at interior nodes
        let hom = parabolic_homothetic(
            1.0,
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            1.0,
            64,
        )
        .unwrap();
        for frac in [0.35, 0.6, 0.9] {
            let e = binary_energy(&hom, &sys, 0, frac).unwrap();
            assert!(e.abs() < 0.05, "binary energy {e:.3} at s = {frac}");
        }
    }

    #[test]
    fn fit_recovers_synthetic_power_laws() {
        let sys = static1();
        // exponent 2/3 with exact coefficient
        let hom = parabolic_homothetic(
            1.0,
            Complex64::new(-1.0, 0.0),
            Complex64::new(1.0, 0.0),
            1.0,
            128,
        )
        .unwrap();
        let ev = fit_asymptotics(&hom, &sys, 0, 0.0, 0.8).unwrap();
        assert!((ev.exponent.0 - 2.0 / 3.0).abs() < 1e-6);
        assert!((ev.exponent.1 - 2.0 / 3.0).abs() < 1e-6);
        let c = homothetic_coefficient(1.0);
        assert!((ev.coefficient.0 - c).abs() / c < 1e-6);
        assert!((ev.coefficient.1 - c).abs() / c < 1e-6);
        assert!((ev.sigma_plus_c() - Complex64::new(1.0, 0.0)).norm() < 1e-9);

        // synthetic exponent 1 is recovered too (validates the fitter)
        let times: Vec<f64> = (0..257).map(|k| -1.0 + 2.0 * k as f64 / 256.0).collect();
        let positions: Vec<Complex64> = times
            .iter()
            .map(|&t| Complex64::new(0.7 * t.abs(), 0.0) * t.signum())
            .collect();
        let lin = Path::new(times, positions).unwrap();
        let ev = fit_asymptotics(&lin, &sys, 0, 0.0, 0.8).unwrap();
        assert!((ev.exponent.0 - 1.0).abs() < 1e-3);
        assert!((ev.exponent.1 - 1.0).abs() < 1e-3);

        // far-from-collision path is rejected
        let far = Path::chord(
            Complex64::new(5.0, 5.0),
            Complex64::new(6.0, 5.0),
            -1.0,
            1.0,
            33,
        )
        .unwrap();
        assert!(fit_asymptotics(&far, &sys, 0, 0.0, 0.8).is_err());
    }

    #[test]
    fn ejection_orbit_exponent_and_energy_continuity() {
        // Integrated zero-angular-momentum ejection, mirrored through t0 = 0.
        let sys = static1();
        let e0 = 0.25; // arc energy, any sign works
        let r_start: f64 = 1e-5;
        let v_start = (2.0 * e0 + 2.0 / r_start).sqrt();
        let orbit = integrate_ode(
            &sys,
            Complex64::new(r_start, 0.0),
            Complex64::new(v_start, 0.0),
            (1e-9, 1.5),
            &IntegratorOptions {
                collision_floor: 1e-7,
                max_step: 4e-4,
                ..Default::default()
            },
        )
        .unwrap();
        // mirror to build the approach side: z(-t) = z(t)
        let fwd = orbit.path;
        let mut times: Vec<f64> = fwd.times().iter().rev().map(|&t| -t).collect();
        let mut positions: Vec<Complex64> = fwd.positions().iter().rev().copied().collect();
        times.pop();
        positions.pop();
        times.push(0.0);
        positions.push(Complex64::new(0.0, 0.0));
        times.extend_from_slice(fwd.times());
        positions.extend_from_slice(fwd.positions());
        let path = Path::new(times, positions).unwrap();

        let ev = fit_asymptotics(&path, &sys, 0, 0.0, 0.12).unwrap();
        assert!(
            (ev.exponent.1 - 2.0 / 3.0).abs() < 0.01,
            "exponent {}",
            ev.exponent.1
        );
        let c = homothetic_coefficient(1.0);
        assert!(
            (ev.coefficient.1 - c).abs() / c < 0.01,
            "coefficient {} vs {c}",
            ev.coefficient.1
        );
        // two-sided energies agree across t0 for a sweep of epsilon
        for eps in [0.2, 0.4, 0.8] {
            let em = binary_energy(&path, &sys, 0, -eps).unwrap();
            let ep = binary_energy(&path, &sys, 0, eps).unwrap();
            assert!(
                (em - ep).abs() < 1e-3,
                "energy jump {:.2e} at eps {eps}",
                (em - ep).abs()
            );
        }
    }

    #[test]
    fn blow_up_identity_and_fixed_point() {
        let sys = static1();
        // lambda = 1 is a pure time shift
        let p = parabolic_homothetic(
            1.0,
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
            1.0,
            32,
        )
        .unwrap();
        let f = blow_up_path(&p, 0.0, 1.0).unwrap();
        for k in 0..p.n_nodes() {
            assert!((f.path.positions()[k] - p.positions()[k]).norm() < 1e-15);
        }
        // action scales by lambda^(1/3): A(zeta^lam) = lam^(1/3) A(zeta)
        // on the pure Kepler field (h = 0); lambda = 8 doubles the action.
        let lambda = 8.0;
        let up = blow_up_path(&p, 0.0, lambda).unwrap();
        let a0 = action::action(&sys, &p, 0.0).unwrap().total;
        let a1 = action::action(&sys, &up.path, 0.0).unwrap().total;
        assert_relative_eq!(a1 / a0, 2.0, max_relative = 1e-9);

        // the homothetic path is a fixed point of the rescaling
        let up_path = up.path.clone();
        for k in 0..up_path.n_nodes() {
            let s = up_path.times()[k];
            let expect = homothetic_coefficient(1.0)
                * s.abs().powf(2.0 / 3.0)
                * if s <= 0.0 {
                    Complex64::new(0.0, 1.0)
                } else {
                    Complex64::new(1.0, 0.0)
                };
            assert!((up_path.positions()[k] - expect).norm() < 1e-12);
        }
        // round trip
        let down = blow_down_path(&up);
        for k in 0..p.n_nodes() {
            assert!((down.positions()[k] - p.positions()[k]).norm() < 1e-13);
            assert!((down.times()[k] - p.times()[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn deformation_arcs_beat_the_homothetic_action() {
        let m = 1.0;
        let c = homothetic_coefficient(m);
        let t_half = 1.0;
        let b = (
            Complex64::new(-c, 0.0), // sigma_- = -e_x
            Complex64::new(c, 0.0),  // sigma_+ = +e_x (antipodal ejection)
        );
        let a_hom = homothetic_action(m, t_half);
        for sign in [1i8, -1] {
            let arc = kepler_deform_arcs(m, b, t_half, sign).unwrap();
            let sys = static1();
            let a = action::action(&sys, &arc, 0.0).unwrap().total;
            assert!(a < a_hom, "arc action {a:.5} vs homothetic {a_hom:.5}");
            // endpoints pinned
            assert!((arc.start() - b.0).norm() < 1e-12);
            assert!((arc.end() - b.1).norm() < 1e-12);
            // winding in the advertised open range
            let w = argument_increment(&arc).unwrap();
            if sign > 0 {
                assert!(w > 0.0 && w < std::f64::consts::TAU, "w = {w}");
            } else {
                assert!(w < 0.0 && w > -std::f64::consts::TAU, "w = {w}");
            }
            // angular momentum stays one-signed and away from zero
            let mut min_abs: f64 = f64::INFINITY;
            let mut signs = Vec::new();
            for k in 0..arc.n_nodes() - 1 {
                let dt = arc.times()[k + 1] - arc.times()[k];
                let v = (arc.positions()[k + 1] - arc.positions()[k]) / dt;
                let om = wedge(arc.positions()[k], v);
                min_abs = min_abs.min(om.abs());
                signs.push(om.signum());
            }
            assert!(min_abs > 1e-3, "angular momentum dips to {min_abs:.2e}");
            assert!(signs.windows(2).all(|w| w[0] == w[1]));
        }
        // equal directions are rejected
        assert!(kepler_deform_arcs(m, (b.1, b.1), t_half, 1).is_err());
    }

    #[test]
    fn local_deformation_lowers_action_and_splits_windings() {
        // synthetic collision path through the static center: antipodal
        // homothetic collision-ejection, extended by straight tails
        let sys = static1();
        let sm = Complex64::new(-1.0, 0.0);
        let sp = Complex64::new(1.0, 0.0);
        let core = parabolic_homothetic(1.0, sm, sp, 1.0, 96).unwrap();
        let path = core;

        let ev = fit_asymptotics(&path, &sys, 0, 0.0, 0.7).unwrap();
        assert!((ev.sigma_minus_c() - sm).norm() < 1e-6);
        assert!((ev.sigma_plus_c() - sp).norm() < 1e-6);

        let delta = 0.6;
        let epsilon = 0.35;
        let (eta_p, eta_m) = local_deform(&path, &sys, &ev, delta, epsilon).unwrap();

        for (label, eta, lo, hi) in [
            ("plus", &eta_p, 0.0, std::f64::consts::TAU),
            ("minus", &eta_m, -std::f64::consts::TAU, 0.0),
        ] {
            // collision-free
            let rec = action::min_primary_distance(&sys, eta);
            assert!(rec.distance > 1e-6, "{label}: d_min {:.2e}", rec.distance);
            // proximity
            for k in 0..eta.n_nodes() {
                let t = eta.times()[k];
                let d = (eta.positions()[k] - path.position_at(t)).norm();
                assert!(d <= epsilon + 1e-12, "{label}: proximity {d:.3}");
            }
            // winding dichotomy over the window
            let w = argument_increment(
                &relative_path(&eta.subpath(-delta, delta).unwrap(), &sys, 0),
            )
            .unwrap();
            assert!(w > lo && w < hi, "{label}: winding {w}");
            // identical outside the splice: endpoints match the original
            assert!((eta.start() - path.start()).norm() < 1e-14);
            assert!((eta.end() - path.end()).norm() < 1e-14);
        }

        // at least one deformation lowers the action measurably
        let a0 = action::action(&sys, &path, 0.0).unwrap().total;
        let ap = action::action(&sys, &eta_p, 0.0).unwrap().total;
        let am = action::action(&sys, &eta_m, 0.0).unwrap().total;
        assert!(
            ap.min(am) < a0 - 1e-4,
            "no action drop: original {a0:.6}, plus {ap:.6}, minus {am:.6}"
        );

        // the two windings differ by one full turn each way
        let wp = argument_increment(&relative_path(&eta_p.subpath(-delta, delta).unwrap(), &sys, 0))
            .unwrap();
        let wm = argument_increment(&relative_path(&eta_m.subpath(-delta, delta).unwrap(), &sys, 0))
            .unwrap();
        assert_relative_eq!(wp - wm, std::f64::consts::TAU, max_relative = 1e-6);
    }
}
