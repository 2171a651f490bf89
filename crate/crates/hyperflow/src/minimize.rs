//! Fixed-end and free-time action minimization.
//!
//! Fixed-end solves descend the discretized action over the interior node
//! positions. Free-time solves enumerate admissible durations (the gap
//! between the boundary phases plus whole periods), warm-starting each
//! fixed-end solve from its neighbor; the enumeration is pruned by the
//! kinetic-plus-h lower bound `|y - x|^2 / (2D) + h D <= A`, which also
//! proves termination for `h > 0`. Arrival-phase optimization wraps the
//! free-time solve in a coarse phase grid plus golden-section refinement.

use num_complex::Complex64;
use serde::Serialize;

use crate::action::{self, ActionBreakdown, DistanceRecord, Path};
use crate::collision::{self, COLLISION_GUARD_FACTOR};
use crate::ephemeris::PrimarySystem;
use crate::lbfgs::{self, LbfgsOptions};
use crate::verify;
use crate::{frac_mod, Error, Result};

/// Fixed-endpoint problem: minimize `A_h` over paths from `(x, t1)` to
/// `(y, t2)`.
#[derive(Debug, Clone, Copy)]
pub struct FixedEndProblem {
    pub x: Complex64,
    pub y: Complex64,
    pub t1: f64,
    pub t2: f64,
    pub h: f64,
}

impl FixedEndProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.t2 > self.t1) {
            return Err(Error::invalid("need t2 > t1"));
        }
        if !(self.x.re.is_finite() && self.x.im.is_finite() && self.y.re.is_finite()
            && self.y.im.is_finite())
        {
            return Err(Error::invalid("endpoints must be finite"));
        }
        if self.h < 0.0 {
            return Err(Error::invalid("h must be nonnegative"));
        }
        Ok(())
    }
}

/// Arrival phase of a free-time problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalPhase {
    Fixed(f64),
    Free,
}

/// Free-time problem: endpoints fixed, boundary phases fixed, duration free
/// over whole-period shifts. Terminates only for `h > 0`.
#[derive(Debug, Clone, Copy)]
pub struct FreeTimeProblem {
    pub x: Complex64,
    pub y: Complex64,
    /// Departure phase in `[0, T)`.
    pub s1: f64,
    pub s2: ArrivalPhase,
    pub h: f64,
    /// Cap on the enumerated duration (defense in depth; the `h`-pruning is
    /// the real terminator).
    pub duration_cap: f64,
}

/// Options shared by the solvers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Gradient tolerance, scaled by `1 + ||positions||`.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// Nodes per ephemeris period of the discretization.
    pub nodes_per_period: usize,
    /// Refine the grid x2 until the action changes by less than this
    /// relative amount.
    pub refine_rel_tol: f64,
    pub max_refinements: usize,
    /// `d_min` below `collision_guard_factor * collision_scale` flags the
    /// result as collision-suspected.
    pub collision_guard_factor: f64,
    /// Coarse arrival-phase grid size.
    pub phase_grid: usize,
    /// Golden-section refinement iterations over the arrival phase.
    pub phase_refine_iters: usize,
    /// Keep per-iteration log records.
    pub keep_log: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grad_tol: 1e-8,
            max_iter: 10_000,
            memory: 10,
            nodes_per_period: 64,
            refine_rel_tol: 1e-6,
            max_refinements: 3,
            collision_guard_factor: COLLISION_GUARD_FACTOR,
            phase_grid: 8,
            phase_refine_iters: 10,
            keep_log: true,
        }
    }
}

impl SolveOptions {
    /// Node count for a span of the given duration.
    pub fn nodes_for(&self, sys: &PrimarySystem, duration: f64) -> usize {
        let per = self.nodes_per_period.max(4) as f64;
        ((duration / sys.period() * per).ceil() as usize).clamp(16, 400_000)
    }

    fn lbfgs(&self, scale: f64) -> LbfgsOptions {
        LbfgsOptions {
            memory: self.memory,
            grad_tol: self.grad_tol * (1.0 + scale),
            max_iter: self.max_iter,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    CollisionSuspected,
}

/// One accepted-iterate record of a solve log.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub action: f64,
    pub grad_norm: f64,
    /// Distance of the closest node to a primary (cheap per-iterate proxy).
    pub d_min: f64,
}

/// Converged (or flagged) minimization result.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub path: Path,
    pub breakdown: ActionBreakdown,
    pub grad_norm: f64,
    pub el_residual: f64,
    pub min_distance: DistanceRecord,
    pub iterations: usize,
    pub status: SolveStatus,
    pub log: Vec<IterRecord>,
}

impl MinimizeResult {
    pub fn action(&self) -> f64 {
        self.breakdown.total
    }
}

/// The two-leg outward-and-back test path: straight segments from `x` to a
/// waypoint `z` on the bisecting ray at radius `max(|x|, |y|)` and on to
/// `y`, each traversed with the two-thirds power time profile. Its `h = 0`
/// action obeys the a-priori bound `16 R^2/(t2-t1) + 12 m (t2-t1)/R` when
/// `sqrt(2) r1 <= |x|, |y| <= R`.
pub fn initial_guess_via_arc(
    _sys: &PrimarySystem,
    x: Complex64,
    y: Complex64,
    t1: f64,
    t2: f64,
    n_nodes: usize,
) -> Result<Path> {
    if x.norm() == 0.0 && y.norm() == 0.0 {
        return Err(Error::invalid("both endpoints at the origin"));
    }
    if !(t2 > t1) {
        return Err(Error::invalid("need t2 > t1"));
    }
    let ux = if x.norm() > 0.0 { x / x.norm() } else { y / y.norm() };
    let uy = if y.norm() > 0.0 { y / y.norm() } else { ux };
    let mut bis = ux + uy;
    if bis.norm() < 1e-12 {
        bis = ux * Complex64::new(0.0, 1.0); // antipodal endpoints: either normal works
    }
    let radius = x.norm().max(y.norm());
    let z = bis / bis.norm() * radius;
    let tm = 0.5 * (t1 + t2);
    let m = (n_nodes / 2).max(8);
    let mut times = Vec::with_capacity(2 * m + 1);
    let mut positions = Vec::with_capacity(2 * m + 1);
    // outward leg x -> z on [t1, tm]
    for k in 0..=m {
        let t = t1 + (tm - t1) * k as f64 / m as f64;
        times.push(t);
        positions.push(two_thirds_leg(x, z, t1, tm, t));
    }
    // return leg z -> y on [tm, t2]: time-mirror of y -> z
    for k in 1..=m {
        let t = tm + (t2 - tm) * k as f64 / m as f64;
        times.push(t);
        positions.push(two_thirds_leg(y, z, t2, tm, t));
    }
    Path::new(times, positions)
}

/// Point of the straight segment from `a` (at `ta`) to `b` (at `tb`) under
/// the two-thirds reparametrization with the interior switch.
fn two_thirds_leg(a: Complex64, b: Complex64, ta: f64, tb: f64, t: f64) -> Complex64 {
    let mu = a.norm() / (a.norm() + b.norm());
    let span = tb - ta;
    let mu32 = mu.powf(1.5);
    let tau = ta + span * mu32 / (mu32 + (1.0 - mu).powf(1.5));
    let u = (t - ta) / span;
    let u_tau = (tau - ta) / span;
    let lambda = if (t - tau) * span.signum() <= 0.0 {
        // between a and the switch
        let frac = ((u_tau - u) / u_tau).max(0.0);
        mu * (1.0 - frac.powf(2.0 / 3.0))
    } else {
        let frac = ((u - u_tau) / (1.0 - u_tau)).max(0.0);
        mu + (1.0 - mu) * frac.powf(2.0 / 3.0)
    };
    a + (b - a) * lambda
}

/// Closest node-to-primary distance (cheap log proxy).
fn node_min_distance(sys: &PrimarySystem, path: &Path) -> f64 {
    path.times()
        .iter()
        .zip(path.positions())
        .map(|(&t, &z)| sys.min_distance(z, t).0)
        .fold(f64::INFINITY, f64::min)
}

/// Minimize the action between fixed endpoints starting from `guess`,
/// moving interior nodes only, with grid refinement until the action is
/// stable. The action decreases monotonically from the guess.
pub fn minimize_fixed_end(
    sys: &PrimarySystem,
    prob: &FixedEndProblem,
    guess: &Path,
    opts: &SolveOptions,
) -> Result<MinimizeResult> {
    prob.validate()?;
    let tol = 1e-7;
    if (guess.start() - prob.x).norm() > tol * (1.0 + prob.x.norm())
        || (guess.end() - prob.y).norm() > tol * (1.0 + prob.y.norm())
        || (guess.start_time() - prob.t1).abs() > tol * (1.0 + prob.t1.abs())
        || (guess.end_time() - prob.t2).abs() > tol * (1.0 + prob.t2.abs())
    {
        return Err(Error::invalid(
            "guess endpoints/times do not match the problem",
        ));
    }

    let mut current = guess.clone();
    let mut result = descend(sys, &current, prob.h, opts, &|_| true)?;
    for _ in 0..opts.max_refinements {
        let n2 = (current.n_nodes() - 1) * 2 + 1;
        let times: Vec<f64> = (0..n2)
            .map(|k| prob.t1 + (prob.t2 - prob.t1) * k as f64 / (n2 - 1) as f64)
            .collect();
        current = result.path.resampled(&times)?;
        let refined = descend(sys, &current, prob.h, opts, &|_| true)?;
        let change = (refined.action() - result.action()).abs()
            / result.action().abs().max(1e-12);
        let done = change < opts.refine_rel_tol;
        result = refined;
        if done {
            break;
        }
    }
    Ok(result)
}

/// One L-BFGS descent over interior nodes at fixed grid. `accept` can veto
/// candidate paths (class constraints, collision floors).
fn descend(
    sys: &PrimarySystem,
    guess: &Path,
    h: f64,
    opts: &SolveOptions,
    accept: &dyn Fn(&Path) -> bool,
) -> Result<MinimizeResult> {
    let times = guess.times().to_vec();
    let n = guess.n_nodes();
    let ends = (guess.start(), guess.end());
    let to_path = |vars: &[f64]| -> Path {
        let mut positions = Vec::with_capacity(n);
        positions.push(ends.0);
        for pair in vars.chunks_exact(2) {
            positions.push(Complex64::new(pair[0], pair[1]));
        }
        positions.push(ends.1);
        Path::new(times.clone(), positions).expect("times fixed and valid")
    };
    let vars0: Vec<f64> = guess.positions()[1..n - 1]
        .iter()
        .flat_map(|z| [z.re, z.im])
        .collect();
    let scale = guess
        .positions()
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt();

    let objective = |vars: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = to_path(vars);
        let a = action::action(sys, &p, h)?;
        let g = action::action_gradient(sys, &p, h)?;
        Ok((
            a.total,
            g.interior.iter().flat_map(|z| [z.re, z.im]).collect(),
        ))
    };

    let mut log: Vec<IterRecord> = Vec::new();
    let keep_log = opts.keep_log;
    let out = lbfgs::minimize(
        objective,
        vars0,
        &opts.lbfgs(scale),
        |vars| accept(&to_path(vars)),
        |iter, value, grad_norm, vars| {
            if keep_log {
                let p = to_path(vars);
                log.push(IterRecord {
                    iter,
                    action: value,
                    grad_norm,
                    d_min: node_min_distance(sys, &p),
                });
            }
        },
    )?;

    let path = to_path(&out.x);
    let breakdown = action::action(sys, &path, h)?;
    let min_distance = action::min_primary_distance(sys, &path);
    let guard = opts.collision_guard_factor * sys.collision_scale();
    let status = if min_distance.distance <= guard {
        SolveStatus::CollisionSuspected
    } else if out.converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    let el_residual = verify::el_residual(sys, &path).unwrap_or(f64::NAN);
    Ok(MinimizeResult {
        path,
        breakdown,
        grad_norm: out.grad_norm,
        el_residual,
        min_distance,
        iterations: out.iterations,
        status,
        log,
    })
}

/// One enumerated duration of a free-time solve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnumeratedDuration {
    pub periods: u32,
    pub duration: f64,
    pub action: f64,
}

/// Outcome of a free-time solve: the winner plus the enumeration record.
#[derive(Debug, Clone)]
pub struct FreeTimeSolve {
    pub result: MinimizeResult,
    pub periods: u32,
    pub enumerated: Vec<EnumeratedDuration>,
}

/// Minimize over paths whose duration is the boundary-phase gap plus any
/// whole number of periods. Requires `h > 0`: the `h`-term makes long
/// durations pay `h D`, so only finitely many can beat the incumbent.
pub fn minimize_free_time(
    sys: &PrimarySystem,
    prob: &FreeTimeProblem,
    warm: Option<&Path>,
    opts: &SolveOptions,
) -> Result<FreeTimeSolve> {
    if !(prob.h > 0.0) {
        return Err(Error::invalid(
            "free-time enumeration terminates only for h > 0",
        ));
    }
    let s2 = match prob.s2 {
        ArrivalPhase::Fixed(s) => s,
        ArrivalPhase::Free => {
            return Err(Error::invalid(
                "arrival phase is free; use optimize_arrival_phase",
            ))
        }
    };
    let period = sys.period();
    let gap = frac_mod(s2 - prob.s1, period);
    let n_min: u32 = if gap > 1e-12 * period { 0 } else { 1 };
    let duration = |n: u32| gap + n as f64 * period;
    let sep = (prob.y - prob.x).norm();
    let lower_bound = |n: u32| -> f64 {
        let d = duration(n);
        sep * sep / (2.0 * d) + prob.h * d
    };
    // start near the minimizer of the lower bound
    let d_star = if prob.h > 0.0 { sep / (2.0 * prob.h).sqrt() } else { gap };
    let n_star = (((d_star - gap) / period).round().max(0.0) as u32).max(n_min);

    let mut enumerated: Vec<EnumeratedDuration> = Vec::new();
    let mut solved: Vec<(u32, MinimizeResult)> = Vec::new();
    let mut incumbent = f64::INFINITY;

    let solve_one = |n: u32,
                     warm_path: Option<&Path>,
                     incumbent: f64,
                     opts: &SolveOptions|
     -> Result<MinimizeResult> {
        let d = duration(n);
        let t1 = prob.s1;
        let t2 = t1 + d;
        let fixed = FixedEndProblem {
            x: prob.x,
            y: prob.y,
            t1,
            t2,
            h: prob.h,
        };
        let n_nodes = opts.nodes_for(sys, d);
        let inner = SolveOptions {
            max_refinements: 0,
            keep_log: false,
            ..opts.clone()
        };
        let mut best: Option<MinimizeResult> = None;
        let mut try_guess = |guess: Path| -> Result<()> {
            let r = minimize_fixed_end(sys, &fixed, &guess, &inner)?;
            if best.as_ref().map(|b| r.action() < b.action()).unwrap_or(true) {
                best = Some(r);
            }
            Ok(())
        };
        if let Some(w) = warm_path {
            let dilated = w.time_dilated(d / w.duration())?;
            let resampled = uniform_resample(&dilated, n_nodes)?;
            try_guess(resampled)?;
        } else {
            // multi-start: the two-leg arc when applicable, plus the chord
            let r1 = sys.far_field().r1;
            if prob.x.norm() >= std::f64::consts::SQRT_2 * r1
                && prob.y.norm() >= std::f64::consts::SQRT_2 * r1
            {
                if let Ok(arc) = initial_guess_via_arc(sys, prob.x, prob.y, t1, t2, n_nodes) {
                    try_guess(arc)?;
                }
            }
            let chord = Path::chord(prob.x, prob.y, t1, t2, n_nodes)?;
            // nudge the chord if it passes through the envelope
            let chord = if node_min_distance(sys, &chord) < 1e-6 {
                let mid = Complex64::new(0.0, sys.r0());
                bent_chord(prob.x, prob.y, mid, t1, t2, n_nodes)?
            } else {
                chord
            };
            try_guess(chord)?;
            if best.as_ref().map(|b| b.action() > incumbent).unwrap_or(false) {
                // already beaten; skip extra starts
            }
        }
        Ok(best.expect("at least one guess attempted"))
    };

    // expand outward from n_star while the lower bound can still win
    let mut candidates: Vec<u32> = Vec::new();
    {
        let mut lo = n_star;
        let mut hi = n_star;
        candidates.push(n_star);
        loop {
            let mut extended = false;
            if hi - n_star < 4096 {
                let next = hi + 1;
                if duration(next) <= prob.duration_cap
                    && (solved.is_empty() || lower_bound(next) < incumbent)
                {
                    // placeholder; the real pruning happens below
                }
                hi = next;
                candidates.push(next);
                extended = true;
            }
            if lo > n_min {
                lo -= 1;
                candidates.push(lo);
                extended = true;
            }
            if !extended || candidates.len() > 8192 {
                break;
            }
            // enough candidates queued; pruning below decides how many run
            if candidates.len() >= 64 {
                break;
            }
        }
    }

    // Solve in expansion order with live pruning; warm starts flow from the
    // nearest solved duration.
    for &n in &candidates {
        let d = duration(n);
        if d > prob.duration_cap {
            continue;
        }
        if !solved.is_empty() && lower_bound(n) >= incumbent {
            continue;
        }
        let warm_path: Option<Path> = match warm {
            Some(w) if solved.is_empty() => Some(w.clone()),
            _ => solved
                .iter()
                .min_by_key(|(m, _)| (*m as i64 - n as i64).unsigned_abs())
                .map(|(_, r)| r.path.clone()),
        };
        let r = solve_one(n, warm_path.as_ref(), incumbent, opts)?;
        incumbent = incumbent.min(r.action());
        enumerated.push(EnumeratedDuration {
            periods: n,
            duration: d,
            action: r.action(),
        });
        solved.push((n, r));
    }

    // ties break toward the smaller period count
    solved.sort_by_key(|(n, _)| *n);
    let best_action = solved
        .iter()
        .map(|(_, r)| r.action())
        .fold(f64::INFINITY, f64::min);
    let (n_best, _) = solved
        .iter()
        .find(|(_, r)| r.action() <= best_action * (1.0 + 1e-9) + 1e-12)
        .expect("at least one duration solved");
    let n_best = *n_best;
    let mut winner = solved
        .into_iter()
        .find(|(n, _)| *n == n_best)
        .map(|(_, r)| r)
        .unwrap();

    // final polish with grid refinement enabled
    if opts.max_refinements > 0 {
        let fixed = FixedEndProblem {
            x: prob.x,
            y: prob.y,
            t1: winner.path.start_time(),
            t2: winner.path.end_time(),
            h: prob.h,
        };
        winner = minimize_fixed_end(sys, &fixed, &winner.path, opts)?;
    }
    Ok(FreeTimeSolve {
        result: winner,
        periods: n_best,
        enumerated,
    })
}

fn uniform_resample(path: &Path, n_nodes: usize) -> Result<Path> {
    let n = n_nodes.max(2);
    let (t1, t2) = (path.start_time(), path.end_time());
    let times: Vec<f64> = (0..n)
        .map(|k| t1 + (t2 - t1) * k as f64 / (n - 1) as f64)
        .collect();
    path.resampled(&times)
}

fn bent_chord(
    a: Complex64,
    b: Complex64,
    via: Complex64,
    t1: f64,
    t2: f64,
    n: usize,
) -> Result<Path> {
    let tm = 0.5 * (t1 + t2);
    let first = Path::chord(a, via, t1, tm, n / 2 + 1)?;
    let second = Path::chord(via, b, tm, t2, n / 2 + 1)?;
    action::concatenate(&first, &second, f64::INFINITY)
}

/// Arrival-phase optimization: a coarse grid of fixed arrival phases, each
/// solved free-time, then golden-section refinement around the best cell.
pub fn optimize_arrival_phase(
    sys: &PrimarySystem,
    x: Complex64,
    y: Complex64,
    s1: f64,
    h: f64,
    warm: Option<&Path>,
    opts: &SolveOptions,
) -> Result<(f64, FreeTimeSolve)> {
    if !(h > 0.0) {
        return Err(Error::invalid("phase optimization requires h > 0"));
    }
    let period = sys.period();
    let grid = opts.phase_grid.max(1);
    let prob_at = |s2: f64| FreeTimeProblem {
        x,
        y,
        s1,
        s2: ArrivalPhase::Fixed(frac_mod(s2, period)),
        h,
        duration_cap: f64::INFINITY,
    };

    // coarse grid (parallel, deterministic order)
    use rayon::prelude::*;
    let cells: Vec<f64> = (0..grid).map(|k| period * k as f64 / grid as f64).collect();
    let solves: Vec<Result<FreeTimeSolve>> = cells
        .par_iter()
        .map(|&s2| minimize_free_time(sys, &prob_at(s2), warm, opts))
        .collect();
    let mut best_idx = usize::MAX;
    let mut best: Option<FreeTimeSolve> = None;
    for (k, s) in solves.into_iter().enumerate() {
        let s = s?;
        if best
            .as_ref()
            .map(|b| s.result.action() < b.result.action())
            .unwrap_or(true)
        {
            best = Some(s);
            best_idx = k;
        }
    }
    let mut best = best.expect("grid is nonempty");
    let mut best_s2 = cells[best_idx];
    if grid == 1 {
        return Ok((best_s2, best));
    }

    // golden-section refinement on the bracket around the best cell
    let phi = 0.618_033_988_749_894_9;
    let width = period / grid as f64;
    let mut a = best_s2 - width;
    let mut b = best_s2 + width;
    let evaluate = |s2: f64, warm_path: &Path| -> Result<(f64, FreeTimeSolve)> {
        let s = minimize_free_time(sys, &prob_at(s2), Some(warm_path), opts)?;
        Ok((s.result.action(), s))
    };
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, s1v) = evaluate(x1, &best.result.path)?;
    if f1 < best.result.action() {
        best = s1v;
        best_s2 = frac_mod(x1, period);
    }
    let (mut f2, s2v) = evaluate(x2, &best.result.path)?;
    if f2 < best.result.action() {
        best = s2v;
        best_s2 = frac_mod(x2, period);
    }
    for _ in 0..opts.phase_refine_iters {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            let (f, s) = evaluate(x1, &best.result.path)?;
            f1 = f;
            if f < best.result.action() {
                best = s;
                best_s2 = frac_mod(x1, period);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            let (f, s) = evaluate(x2, &best.result.path)?;
            f2 = f;
            if f < best.result.action() {
                best = s;
                best_s2 = frac_mod(x2, period);
            }
        }
    }
    Ok((best_s2, best))
}

/// Re-minimize random sub-intervals of a converged result and report the
/// worst relative action excess of the original sub-path (restrictions of
/// minimizers are minimizers, so the excess should sit at grid tolerance).
#[derive(Debug, Clone, Serialize)]
pub struct MinimalityReport {
    pub max_excess: f64,
    pub samples: Vec<(f64, f64, f64)>,
}

pub fn check_subpath_minimality(
    sys: &PrimarySystem,
    result: &MinimizeResult,
    h: f64,
    n_samples: usize,
) -> Result<MinimalityReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_0000 + n_samples as u64);
    let path = &result.path;
    let (t1, t2) = (path.start_time(), path.end_time());
    let span = t2 - t1;
    let mut samples = Vec::with_capacity(n_samples);
    let mut max_excess: f64 = 0.0;
    let opts = SolveOptions {
        max_refinements: 0,
        keep_log: false,
        ..Default::default()
    };
    for _ in 0..n_samples {
        let a = t1 + rng.gen::<f64>() * span * 0.9;
        let len = span * (0.05 + 0.55 * rng.gen::<f64>());
        let b = (a + len).min(t2);
        if b - a < 0.02 * span {
            continue;
        }
        let sub = path.subpath(a, b)?;
        let a_sub = action::action(sys, &sub, h)?.total;
        let fixed = FixedEndProblem {
            x: sub.start(),
            y: sub.end(),
            t1: a,
            t2: b,
            h,
        };
        let re = minimize_fixed_end(sys, &fixed, &sub, &opts)?;
        let excess = (a_sub - re.action()) / re.action().abs().max(1e-12);
        max_excess = max_excess.max(excess);
        samples.push((a, b, excess));
    }
    Ok(MinimalityReport {
        max_excess,
        samples,
    })
}

/// Restart a collision-suspected result through the local deformations: fit
/// the near-collision, build both winding deformations, re-descend from
/// each, and return the lower-action collision-free outcome. Collision-free
/// inputs are returned unchanged.
pub fn collision_escape(
    sys: &PrimarySystem,
    result: &MinimizeResult,
    h: f64,
    opts: &SolveOptions,
) -> Result<MinimizeResult> {
    let guard = opts.collision_guard_factor * sys.collision_scale();
    if result.min_distance.distance > guard {
        return Ok(result.clone());
    }
    let t0 = result.min_distance.time;
    let i0 = result.min_distance.body;
    let path = &result.path;
    // window: as wide as possible while staying interior and clear of the
    // other primaries
    let mut delta = 0.25 * (t0 - path.start_time()).min(path.end_time() - t0);
    let event = loop {
        match collision::fit_asymptotics(path, sys, i0, t0, delta) {
            Ok(ev) => break ev,
            Err(_) if delta < 1e4 * f64::EPSILON => {
                return Err(Error::invalid(
                    "collision too close to a path endpoint to deform",
                ))
            }
            Err(_) => delta *= 1.5,
        }
        if delta > 0.45 * (t0 - path.start_time()).min(path.end_time() - t0) {
            return Err(Error::invalid(
                "collision window could not be fit near the path boundary",
            ));
        }
    };
    let epsilon = (0.1 * sys.collision_scale()).min(0.5);
    let (eta_p, eta_m) = collision::local_deform(path, sys, &event, delta, epsilon)?;

    let inner = SolveOptions {
        max_refinements: 0,
        ..opts.clone()
    };
    // descend on the deformed paths' own grids (they are clustered around
    // the former collision), vetoing steps that dip back under the guard
    let floor = 0.9 * guard;
    let keep_clear = move |p: &Path| node_min_distance(sys, p) > floor;
    let mut best: Option<MinimizeResult> = None;
    for eta in [eta_p, eta_m] {
        if let Ok(r) = descend(sys, &eta, h, &inner, &keep_clear) {
            let keep = match &best {
                Some(b) => {
                    (r.status != SolveStatus::CollisionSuspected
                        && b.status == SolveStatus::CollisionSuspected)
                        || (r.action() < b.action()
                            && (r.status != SolveStatus::CollisionSuspected)
                                == (b.status != SolveStatus::CollisionSuspected))
                }
                None => true,
            };
            if keep {
                best = Some(r);
            }
        }
    }
    best.ok_or_else(|| Error::NumericalFailure("both deformation restarts failed".into()))
}
