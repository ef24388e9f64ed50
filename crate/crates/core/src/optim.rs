//! Bound-constrained quasi-Newton minimization.
//!
//! A projected limited-memory BFGS: the search direction comes from the
//! two-loop recursion restricted to variables that are not pinned at a bound,
//! and each step is projected back onto the box before an Armijo test along
//! the projected path. Falls back to projected steepest descent whenever the
//! quasi-Newton direction fails.

use std::collections::VecDeque;

/// Objective returning value and gradient.
pub trait Objective {
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>);
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self(x)
    }
}

#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    /// First coordinate free, the rest nonnegative.
    pub fn free_intercept(n: usize) -> Self {
        let mut b = Bounds::unbounded(n);
        b.lower[1..].iter_mut().for_each(|l| *l = 0.0);
        b
    }

    pub fn project(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Infinity norm of `x - P(x - g)`.
    pub fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&xi, &gi))| (xi - (xi - gi).clamp(self.lower[i], self.upper[i])).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient infinity norm or the relative
    /// decrease of the objective falls below this.
    pub tol: f64,
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iter: 500,
            tol: 1e-9,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective value after each accepted step, starting at the projected start.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn minimize<O: Objective + ?Sized>(
    f: &O,
    x0: &[f64],
    bounds: &Bounds,
    opts: &MinimizeOptions,
) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut fx, mut g) = f.evaluate(&x);
    let mut evaluations = 1;
    let mut trace = vec![fx];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if bounds.projected_gradient_norm(&x, &g) < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        // variables held at a bound by the gradient are excluded from the step
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let at_lower = x[i] <= bounds.lower[i] && g[i] > 0.0;
                let at_upper = x[i] >= bounds.upper[i] && g[i] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();
        let masked: Vec<f64> = g
            .iter()
            .zip(&free)
            .map(|(&gi, &fr)| if fr { gi } else { 0.0 })
            .collect();

        let mut accepted = None;
        for use_memory in [true, false] {
            let dir = if use_memory && !memory.is_empty() {
                two_loop(&masked, &memory, &free)
            } else {
                masked.iter().map(|v| -v).collect()
            };
            let slope = dot(&dir, &g);
            if !(slope < 0.0) {
                continue;
            }
            let mut step = if use_memory && !memory.is_empty() {
                1.0
            } else {
                let scale = masked.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (1.0 / scale.max(1e-12)).min(1.0)
            };
            for _ in 0..60 {
                let mut trial: Vec<f64> =
                    x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
                bounds.project(&mut trial);
                let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &moved);
                if moved.iter().all(|m| *m == 0.0) {
                    break;
                }
                let (ft, gt) = f.evaluate(&trial);
                evaluations += 1;
                if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged && bounds.projected_gradient_norm(&x, &g) < opts.tol {
        converged = true;
    }
    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
        converged,
        trace,
    }
}

fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(free)
            .map(|(&a, &f)| if f { a } else { 0.0 })
            .collect()
    };
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let s = mask(s);
        let a = rho * dot(&s, &q);
        let y = mask(y);
        q.iter_mut().zip(&y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let (s, y, _) = memory.back().expect("non-empty memory");
    let (s, y) = (mask(s), mask(y));
    let yy = dot(&y, &y);
    let gamma = if yy > 0.0 { dot(&s, &y) / yy } else { 1.0 };
    let gamma = if gamma > 0.0 && gamma.is_finite() {
        gamma
    } else {
        1.0
    };
    let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let (s, y) = (mask(s), mask(y));
        let b = rho * dot(&y, &r);
        r.iter_mut()
            .zip(&s)
            .for_each(|(ri, si)| *ri += (a - b) * si);
    }
    r.iter()
        .zip(free)
        .map(|(&v, &f)| if f { -v } else { 0.0 })
        .collect()
}
