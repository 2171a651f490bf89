//! Limited-memory quasi-Newton descent with backtracking line search.
//!
//! The solver is deliberately small: two-loop recursion for the search
//! direction, Armijo backtracking, and a step-acceptance hook that lets
//! callers reject steps (used for homotopy-class constraints). The action is
//! smooth away from the primaries, so this converges superlinearly near
//! nondegenerate minimizers while the hook keeps iterates feasible.

use std::collections::VecDeque;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Absolute tolerance on the Euclidean gradient norm.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub step_shrink: f64,
    pub max_backtracks: u32,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            grad_tol: 1e-8,
            max_iter: 10_000,
            armijo_c1: 1e-4,
            step_shrink: 0.5,
            max_backtracks: 48,
        }
    }
}

#[derive(Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimize `f` starting from `x0`.
///
/// `f` returns the value and gradient; an `Err` from `f` during the line
/// search is treated as an infeasible candidate (the step shrinks), while an
/// `Err` at the current iterate aborts. `accept` can veto candidate iterates;
/// vetoed steps shrink as well, so the accepted sequence stays feasible and
/// the objective decreases monotonically. `on_iter` observes accepted
/// iterates.
pub fn minimize<F, A, O>(
    mut f: F,
    x0: Vec<f64>,
    opts: &LbfgsOptions,
    mut accept: A,
    mut on_iter: O,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    A: FnMut(&[f64]) -> bool,
    O: FnMut(usize, f64, f64, &[f64]),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut gx) = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::NumericalFailure(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut converged = norm(&gx) <= opts.grad_tol;
    on_iter(0, fx, norm(&gx), &x);

    while !converged && iterations < opts.max_iter && n > 0 {
        iterations += 1;

        // Two-loop recursion for d = -H g.
        let mut q = gx.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for p in pairs.iter().rev() {
            let a = p.rho * dot(&p.s, &q);
            for (qi, yi) in q.iter_mut().zip(&p.y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = pairs
            .back()
            .map(|p| dot(&p.s, &p.y) / dot(&p.y, &p.y))
            .unwrap_or(1.0)
            .max(1e-12);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for (p, &a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = p.rho * dot(&p.y, &q);
            for (qi, si) in q.iter_mut().zip(&p.s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|&v| -v).collect();
        let mut slope = dot(&dir, &gx);
        if !(slope < 0.0) {
            // Fall back to steepest descent if curvature info is unusable.
            dir = gx.iter().map(|&v| -v).collect();
            slope = -dot(&gx, &gx);
            pairs.clear();
        }

        // Backtracking Armijo search with feasibility/acceptance rejection.
        let mut step = 1.0;
        let mut moved = false;
        let mut xc = vec![0.0; n];
        for _ in 0..opts.max_backtracks {
            for i in 0..n {
                xc[i] = x[i] + step * dir[i];
            }
            if accept(&xc) {
                if let Ok((fc, gc)) = f(&xc) {
                    if fc.is_finite() && fc <= fx + opts.armijo_c1 * step * slope {
                        let s: Vec<f64> = xc.iter().zip(&x).map(|(a, b)| a - b).collect();
                        let y: Vec<f64> = gc.iter().zip(&gx).map(|(a, b)| a - b).collect();
                        let sy = dot(&s, &y);
                        if sy > 1e-12 * norm(&s) * norm(&y) {
                            if pairs.len() == opts.memory {
                                pairs.pop_front();
                            }
                            let rho = 1.0 / sy;
                            pairs.push_back(Pair { s, y, rho });
                        }
                        x.copy_from_slice(&xc);
                        fx = fc;
                        gx = gc;
                        moved = true;
                        break;
                    }
                }
            }
            step *= opts.step_shrink;
        }
        if !moved {
            break;
        }
        let gn = norm(&gx);
        on_iter(iterations, fx, gn, &x);
        converged = gn <= opts.grad_tol;
    }

    Ok(LbfgsOutcome {
        value: fx,
        grad_norm: norm(&gx),
        x,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| {
            let v = 3.0 * (x[0] - 1.0).powi(2) + 0.5 * (x[1] + 2.0).powi(2);
            Ok((v, vec![6.0 * (x[0] - 1.0), x[1] + 2.0]))
        };
        let out = minimize(
            f,
            vec![10.0, 10.0],
            &LbfgsOptions::default(),
            |_| true,
            |_, _, _, _| {},
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-7);
        assert!((out.x[1] + 2.0).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Ok((v, g))
        };
        let out = minimize(
            f,
            vec![-1.2, 1.0],
            &LbfgsOptions {
                grad_tol: 1e-10,
                ..Default::default()
            },
            |_| true,
            |_, _, _, _| {},
        )
        .unwrap();
        assert!(out.converged, "grad norm {}", out.grad_norm);
        assert!((out.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn monotone_decrease_with_rejection_hook() {
        // Constrain to the half-plane x0 >= 0.5 by step rejection.
        let f = |x: &[f64]| Ok((x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]]));
        let mut values = Vec::new();
        let out = minimize(
            f,
            vec![4.0, 3.0],
            &LbfgsOptions::default(),
            |x| x[0] >= 0.5,
            |_, v, _, _| values.push(v),
        )
        .unwrap();
        assert!(out.x[0] >= 0.5 - 1e-12);
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(out.value < 1.0, "should descend well below the start value");
    }
}
