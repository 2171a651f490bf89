//! Discretized paths of the massless body and the Lagrangian action
//! `A_h = integral of |zdot|^2/2 + U(z, t) + h`.
//!
//! Paths are piecewise linear in position between nodes. The kinetic term of
//! the action is then exact, `sum |dz_k|^2 / (2 dt_k)`, and the potential
//! term is evaluated by per-segment Gauss-Legendre quadrature, escalating to
//! adaptive bisection near the primaries. Summation order is fixed left to
//! right so results are reproducible.

use num_complex::Complex64;

use crate::ephemeris::PrimarySystem;
use crate::quadrature::{adaptive_gl4, gl4, GL4_W, GL4_X};
use crate::{Error, Result};

/// Segments whose closest primary approach is below this fraction of the
/// collision scale get adaptive quadrature instead of a single rule.
pub const QUAD_ESCALATE_FRACTION: f64 = 0.05;
/// Relative tolerance of the adaptive potential quadrature.
pub const QUAD_REL_TOL: f64 = 1e-11;
const QUAD_MAX_DEPTH: u32 = 16;

/// Discretized trajectory: strictly increasing node times and planar node
/// positions, interpreted as piecewise linear in between. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    times: Vec<f64>,
    positions: Vec<Complex64>,
}

impl Path {
    pub fn new(times: Vec<f64>, positions: Vec<Complex64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("a path needs at least 2 nodes"));
        }
        if times.len() != positions.len() {
            return Err(Error::invalid("times and positions must have equal length"));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("node times must be strictly increasing"));
        }
        if times.iter().any(|t| !t.is_finite())
            || positions.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::invalid("path coordinates must be finite"));
        }
        Ok(Path { times, positions })
    }

    /// Straight chord from `a` to `b` on `[t1, t2]` with `n` nodes.
    pub fn chord(a: Complex64, b: Complex64, t1: f64, t2: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("chord needs at least 2 nodes"));
        }
        let times: Vec<f64> = (0..n)
            .map(|k| t1 + (t2 - t1) * k as f64 / (n - 1) as f64)
            .collect();
        let positions = times
            .iter()
            .map(|&t| {
                let s = (t - t1) / (t2 - t1);
                a + (b - a) * s
            })
            .collect();
        Path::new(times, positions)
    }

    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[Complex64] {
        &self.positions
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn start(&self) -> Complex64 {
        self.positions[0]
    }

    pub fn end(&self) -> Complex64 {
        *self.positions.last().unwrap()
    }

    /// Index of the segment containing `t` (clamped at the ends).
    fn segment_of(&self, t: f64) -> usize {
        match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            k if k >= self.times.len() => self.times.len() - 2,
            k => k - 1,
        }
    }

    /// Piecewise-linear position at `t` (clamped to the domain).
    pub fn position_at(&self, t: f64) -> Complex64 {
        let k = self.segment_of(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        self.positions[k] + (self.positions[k + 1] - self.positions[k]) * s
    }

    /// Segment slope at `t` (the piecewise-constant velocity).
    pub fn velocity_at(&self, t: f64) -> Complex64 {
        let k = self.segment_of(t);
        (self.positions[k + 1] - self.positions[k]) / (self.times[k + 1] - self.times[k])
    }

    /// Replace node positions, keeping times.
    pub fn with_positions(&self, positions: Vec<Complex64>) -> Result<Self> {
        Path::new(self.times.clone(), positions)
    }

    /// Restriction to `[t1, t2]`, interpolating the cut endpoints.
    pub fn subpath(&self, t1: f64, t2: f64) -> Result<Self> {
        if !(t1 < t2) || t1 < self.start_time() - 1e-12 || t2 > self.end_time() + 1e-12 {
            return Err(Error::invalid("subpath interval must lie inside the path"));
        }
        let mut times = vec![t1];
        let mut positions = vec![self.position_at(t1)];
        for (&t, &z) in self.times.iter().zip(&self.positions) {
            if t > t1 + 1e-13 && t < t2 - 1e-13 {
                times.push(t);
                positions.push(z);
            }
        }
        times.push(t2);
        positions.push(self.position_at(t2));
        Path::new(times, positions)
    }

    /// Uniform time dilation about the start: `t -> t0 + s (t - t0)`.
    pub fn time_dilated(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::invalid("dilation factor must be positive"));
        }
        let t0 = self.start_time();
        let times = self.times.iter().map(|&t| t0 + s * (t - t0)).collect();
        Path::new(times, self.positions.clone())
    }

    pub fn time_shifted(&self, dt: f64) -> Self {
        Path {
            times: self.times.iter().map(|&t| t + dt).collect(),
            positions: self.positions.clone(),
        }
    }

    /// Time reversal about an axis time: `(t, z) -> (2a - t, z)`.
    pub fn time_reflected_about(&self, a: f64) -> Self {
        let mut times: Vec<f64> = self.times.iter().map(|&t| 2.0 * a - t).collect();
        let mut positions = self.positions.clone();
        times.reverse();
        positions.reverse();
        Path { times, positions }
    }

    /// Resample onto the given strictly increasing times by linear
    /// interpolation.
    pub fn resampled(&self, times: &[f64]) -> Result<Self> {
        let positions = times.iter().map(|&t| self.position_at(t)).collect();
        Path::new(times.to_vec(), positions)
    }

    /// Serialize as CSV with header `t,x,y`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y\n");
        for (t, z) in self.times.iter().zip(&self.positions) {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", t, z.re, z.im));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "t,x,y" => {}
            _ => return Err(Error::Format("path CSV must start with header t,x,y".into())),
        }
        let mut times = Vec::new();
        let mut positions = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!("line {}: expected 3 fields", ln + 2)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", ln + 2)))
            };
            times.push(parse(fields[0])?);
            positions.push(Complex64::new(parse(fields[1])?, parse(fields[2])?));
        }
        Path::new(times, positions)
    }
}

/// Additive decomposition of the action value.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ActionBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub h_term: f64,
    pub total: f64,
}

/// Potential `U(z, t)`; errors when `z` coincides with a primary.
pub fn potential_u(sys: &PrimarySystem, z: Complex64, t: f64) -> Result<f64> {
    let (d, i) = sys.min_distance(z, t);
    if d == 0.0 {
        return Err(Error::Singularity { body: i, time: t });
    }
    Ok(sys.potential(z, t))
}

/// Non-Kepler remainder `W(z, t) = U(z, t) - m/|z|`.
pub fn split_w(sys: &PrimarySystem, z: Complex64, t: f64) -> Result<f64> {
    if z.norm() == 0.0 {
        return Err(Error::invalid("W is only defined away from the origin"));
    }
    Ok(potential_u(sys, z, t)? - sys.total_mass() / z.norm())
}

/// Kinetic part of the discretized action (exact for piecewise-linear paths).
fn kinetic_sum(path: &Path) -> f64 {
    let mut k = 0.0;
    for seg in 0..path.n_nodes() - 1 {
        let dz = path.positions[seg + 1] - path.positions[seg];
        let dt = path.times[seg + 1] - path.times[seg];
        k += dz.norm_sqr() / (2.0 * dt);
    }
    k
}

/// Potential integral over one linear segment.
fn segment_potential(
    sys: &PrimarySystem,
    za: Complex64,
    zb: Complex64,
    ta: f64,
    tb: f64,
) -> Result<f64> {
    let mut singular: Option<(usize, f64)> = None;
    let mut f = |t: f64| {
        let s = (t - ta) / (tb - ta);
        let z = za + (zb - za) * s;
        let (d, i) = sys.min_distance(z, t);
        if d == 0.0 {
            singular = Some((i, t));
            return 0.0;
        }
        sys.potential(z, t)
    };
    let value = if segment_needs_escalation(sys, za, zb, ta, tb) {
        adaptive_gl4(&mut f, ta, tb, QUAD_REL_TOL, QUAD_MAX_DEPTH)
    } else {
        gl4(&mut f, ta, tb)
    };
    if let Some((body, time)) = singular {
        return Err(Error::Singularity { body, time });
    }
    Ok(value)
}

fn segment_needs_escalation(
    sys: &PrimarySystem,
    za: Complex64,
    zb: Complex64,
    ta: f64,
    tb: f64,
) -> bool {
    let threshold = QUAD_ESCALATE_FRACTION * sys.collision_scale();
    // Probe endpoints and the quadrature abscissae.
    let probe = |t: f64| {
        let s = (t - ta) / (tb - ta);
        let z = za + (zb - za) * s;
        sys.min_distance(z, t).0
    };
    if probe(ta) < threshold || probe(tb) < threshold {
        return true;
    }
    let mid = 0.5 * (ta + tb);
    let half = 0.5 * (tb - ta);
    GL4_X.iter().any(|&x| probe(mid + half * x) < threshold)
}

/// Full action `A_h` of a path, split into kinetic, potential and `h` terms.
pub fn action(sys: &PrimarySystem, path: &Path, h: f64) -> Result<ActionBreakdown> {
    let kinetic = kinetic_sum(path);
    let mut potential = 0.0;
    for seg in 0..path.n_nodes() - 1 {
        potential += segment_potential(
            sys,
            path.positions[seg],
            path.positions[seg + 1],
            path.times[seg],
            path.times[seg + 1],
        )?;
    }
    let h_term = h * path.duration();
    let total = kinetic + potential + h_term;
    if !total.is_finite() {
        return Err(Error::NumericalFailure("non-finite action value".into()));
    }
    Ok(ActionBreakdown {
        kinetic,
        potential,
        h_term,
        total,
    })
}

/// Gradient of the discretized action with respect to the interior node
/// positions, plus the derivative with respect to a uniform dilation of the
/// node times about the start (used by free-time searches).
#[derive(Debug, Clone)]
pub struct ActionGradient {
    /// One planar gradient per interior node (indices `1..n-1`).
    pub interior: Vec<Complex64>,
    /// d/ds of `A_h` under `t_k -> t_0 + s (t_k - t_0)` at `s = 1`.
    pub dilation: f64,
}

impl ActionGradient {
    pub fn norm(&self) -> f64 {
        self.interior.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt()
    }
}

pub fn action_gradient(sys: &PrimarySystem, path: &Path, h: f64) -> Result<ActionGradient> {
    let n = path.n_nodes();
    let mut interior = vec![Complex64::new(0.0, 0.0); n.saturating_sub(2)];
    let mut dilation = h * path.duration();
    let t0 = path.start_time();

    for seg in 0..n - 1 {
        let (ta, tb) = (path.times[seg], path.times[seg + 1]);
        let (za, zb) = (path.positions[seg], path.positions[seg + 1]);
        let dt = tb - ta;
        let dz = zb - za;

        // Kinetic term: d/dz_a = -dz/dt, d/dz_b = +dz/dt;
        // dilation scales kinetic by 1/s.
        let slope = dz / dt;
        if seg >= 1 {
            interior[seg - 1] -= slope;
        }
        if seg + 1 <= n - 2 {
            interior[seg] += slope;
        }
        dilation -= dz.norm_sqr() / (2.0 * dt);

        // Potential term: grad wrt endpoints weighs grad U by the linear
        // shape functions; dilation adds U + (t - t0) dU/dt along the segment.
        let mut singular: Option<(usize, f64)> = None;
        let mut worst = f64::INFINITY;
        let escalate = segment_needs_escalation(sys, za, zb, ta, tb);
        let mut ga = Complex64::new(0.0, 0.0);
        let mut gb = Complex64::new(0.0, 0.0);
        let mut dil = 0.0;
        {
            let mut accumulate = |a: f64, b: f64| {
                let mid = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                for i in 0..4 {
                    let t = mid + half * GL4_X[i];
                    let w = half * GL4_W[i];
                    let s = (t - ta) / dt;
                    let z = za + dz * s;
                    let (d, body) = sys.min_distance(z, t);
                    if d == 0.0 {
                        singular = Some((body, t));
                        return;
                    }
                    worst = worst.min(d);
                    let g = sys.grad_potential(z, t);
                    ga += w * (1.0 - s) * g;
                    gb += w * s * g;
                    dil += w * (sys.potential(z, t)
                        + (t - t0) * sys.potential_time_derivative(z, t));
                }
            };
            if escalate {
                // Mirror the adaptive pattern with a fixed dyadic refinement
                // driven by the value quadrature.
                refine_segment(sys, za, zb, ta, tb, QUAD_MAX_DEPTH, &mut accumulate);
            } else {
                accumulate(ta, tb);
            }
        }
        if let Some((body, time)) = singular {
            return Err(Error::Singularity { body, time });
        }
        if seg >= 1 {
            interior[seg - 1] += ga;
        }
        if seg + 1 <= n - 2 {
            interior[seg] += gb;
        }
        dilation += dil;
    }
    Ok(ActionGradient { interior, dilation })
}

/// Recursively split `[a, b]` following the same error indicator as the
/// adaptive value quadrature, invoking `emit` on the leaf intervals.
fn refine_segment(
    sys: &PrimarySystem,
    za: Complex64,
    zb: Complex64,
    ta: f64,
    tb: f64,
    depth: u32,
    emit: &mut impl FnMut(f64, f64),
) {
    fn value(sys: &PrimarySystem, za: Complex64, zb: Complex64, ta: f64, tb: f64, a: f64, b: f64) -> f64 {
        let mut f = |t: f64| {
            let s = (t - ta) / (tb - ta);
            let z = za + (zb - za) * s;
            sys.potential(z, t)
        };
        gl4(&mut f, a, b)
    }
    fn go(
        sys: &PrimarySystem,
        za: Complex64,
        zb: Complex64,
        ta: f64,
        tb: f64,
        a: f64,
        b: f64,
        whole: f64,
        depth: u32,
        emit: &mut impl FnMut(f64, f64),
    ) {
        let mid = 0.5 * (a + b);
        let left = value(sys, za, zb, ta, tb, a, mid);
        let right = value(sys, za, zb, ta, tb, mid, b);
        let refined = left + right;
        if depth == 0 || (refined - whole).abs() <= QUAD_REL_TOL * refined.abs().max(1e-300) {
            emit(a, mid);
            emit(mid, b);
            return;
        }
        go(sys, za, zb, ta, tb, a, mid, left, depth - 1, emit);
        go(sys, za, zb, ta, tb, mid, b, right, depth - 1, emit);
    }
    let whole = value(sys, za, zb, ta, tb, ta, tb);
    go(sys, za, zb, ta, tb, ta, tb, whole, depth, emit);
}

/// Record of the closest approach of a path to the primaries.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DistanceRecord {
    pub distance: f64,
    pub time: f64,
    pub body: usize,
}

/// Minimum over the path of the distance to any primary, located by refined
/// sampling plus local golden-section polish.
pub fn min_primary_distance(sys: &PrimarySystem, path: &Path) -> DistanceRecord {
    let sample_dt = sys.period() / 256.0;
    let mut best = DistanceRecord {
        distance: f64::INFINITY,
        time: path.start_time(),
        body: 0,
    };
    for seg in 0..path.n_nodes() - 1 {
        let (ta, tb) = (path.times[seg], path.times[seg + 1]);
        let m = ((tb - ta) / sample_dt).ceil().max(4.0) as usize;
        for j in 0..=m {
            let t = ta + (tb - ta) * j as f64 / m as f64;
            let z = path.position_at(t);
            let (d, i) = sys.min_distance(z, t);
            if d < best.distance {
                best = DistanceRecord {
                    distance: d,
                    time: t,
                    body: i,
                };
            }
        }
    }
    // Golden-section polish around the best sample.
    let span = sample_dt.min(path.duration() / 4.0);
    let mut a = (best.time - span).max(path.start_time());
    let mut b = (best.time + span).min(path.end_time());
    let dist = |t: f64| sys.min_distance(path.position_at(t), t).0;
    let phi = 0.618_033_988_749_894_9;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = dist(x1);
    let mut f2 = dist(x2);
    for _ in 0..60 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = dist(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = dist(x2);
        }
    }
    let t = 0.5 * (a + b);
    let (d, i) = sys.min_distance(path.position_at(t), t);
    if d < best.distance {
        best = DistanceRecord {
            distance: d,
            time: t,
            body: i,
        };
    }
    best
}

/// Concatenate `a` with `b`, shifting `b` by an integer number of periods so
/// it abuts `a`. Requires matching junction positions and equal fractional
/// parts of the junction times modulo `period`.
pub fn concatenate(a: &Path, b: &Path, period: f64) -> Result<Path> {
    let ja = a.end();
    let jb = b.start();
    if (ja - jb).norm() > 1e-9 * (1.0 + ja.norm().max(jb.norm())) {
        return Err(Error::invalid(format!(
            "concatenation endpoints differ: |{ja} - {jb}| = {:.3e}",
            (ja - jb).norm()
        )));
    }
    let shift = a.end_time() - b.start_time();
    let periods = shift / period;
    if (periods - periods.round()).abs() > 1e-9 {
        return Err(Error::invalid(
            "junction times must agree modulo the period".to_string(),
        ));
    }
    let shift = periods.round() * period;
    let mut times = a.times.clone();
    let mut positions = a.positions.clone();
    for (k, (&t, &z)) in b.times.iter().zip(&b.positions).enumerate() {
        if k == 0 {
            continue;
        }
        times.push(t + shift);
        positions.push(z);
    }
    Path::new(times, positions)
}
