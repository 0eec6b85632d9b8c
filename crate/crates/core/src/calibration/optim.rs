//! Derivative-free minimization and damped least squares on unconstrained
//! coordinates. Both count objective evaluations and never accept a worse point.

use nalgebra::{DMatrix, DVector};

/// Outcome of a local search.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub n_evals: usize,
    pub converged: bool,
}

/// Stopping rule shared by both searches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Termination {
    /// Stop once the relative objective change falls below this.
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for Termination {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_evals: 10_000,
        }
    }
}

fn rel_change(old: f64, new: f64) -> f64 {
    (old - new).abs() / old.abs().max(new.abs()).max(f64::MIN_POSITIVE)
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: Fn(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Nelder-Mead with restarts. A run ends when the spread of the simplex
/// values is below `rel_tol` relative to the best value; the simplex is then
/// rebuilt around the best vertex, and the search stops once a restart no
/// longer improves the best value by more than `rel_tol`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, term: Termination) -> Minimum {
    let n = x0.len();
    let mut obj = Counted { f, evals: 0 };
    let mut best_x = x0.to_vec();
    let mut best = obj.call(x0);
    let mut converged = false;
    while obj.evals < term.max_evals {
        let start_value = best;
        let mut simplex = vec![best_x.clone()];
        let mut values = vec![best];
        for i in 0..n {
            let mut v = best_x.clone();
            v[i] += step;
            values.push(obj.call(&v));
            simplex.push(v);
        }
        let mut run_converged = false;
        while obj.evals < term.max_evals {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();
            let (lo, hi) = (values[0], values[n]);
            if hi.is_finite() && rel_change(hi, lo) < term.rel_tol {
                run_converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(1.0);
            let fr = obj.call(&xr);
            if fr < values[0] {
                let xe = along(2.0);
                let fe = obj.call(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
            } else {
                let (xc, fc) = if fr < values[n] {
                    let x = along(0.5);
                    let v = obj.call(&x);
                    (x, v)
                } else {
                    let x = along(-0.5);
                    let v = obj.call(&x);
                    (x, v)
                };
                if fc < values[n].min(fr) {
                    simplex[n] = xc;
                    values[n] = fc;
                } else {
                    for i in 1..=n {
                        let shrunk: Vec<f64> = simplex[0]
                            .iter()
                            .zip(&simplex[i])
                            .map(|(b, v)| b + 0.5 * (v - b))
                            .collect();
                        values[i] = obj.call(&shrunk);
                        simplex[i] = shrunk;
                    }
                }
            }
        }
        let i = (0..=n).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
        if values[i] < best {
            best = values[i];
            best_x = simplex[i].clone();
        }
        if run_converged && (!best.is_finite() || rel_change(start_value, best) < term.rel_tol || best == 0.0) {
            converged = best.is_finite();
            break;
        }
    }
    Minimum {
        x: best_x,
        value: best,
        n_evals: obj.evals,
        converged,
    }
}

/// Levenberg-Marquardt on `sum r_i(x)^2` with a central-difference Jacobian.
/// `residuals` returns `None` where the model cannot be evaluated; such
/// points count as rejected steps.
pub fn levenberg_marquardt(
    residuals: impl Fn(&[f64]) -> Option<Vec<f64>>,
    x0: &[f64],
    term: Termination,
) -> Minimum {
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        residuals(x).filter(|r| r.iter().all(|v| v.is_finite()))
    };
    let sse = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let Some(mut r) = eval(x0) else {
        return Minimum {
            x: x0.to_vec(),
            value: f64::INFINITY,
            n_evals: evals.get(),
            converged: false,
        };
    };
    let mut x = x0.to_vec();
    let mut value = sse(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    'outer: while evals.get() < term.max_evals {
        if value == 0.0 {
            converged = true;
            break;
        }
        let m = r.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for k in 0..n {
            let h = 1e-6 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (Some(rp), Some(rm)) = (eval(&xp), eval(&xm)) else {
                break 'outer;
            };
            for i in 0..m {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * rv;
        loop {
            if evals.get() >= term.max_evals {
                break 'outer;
            }
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some(rc) = eval(&cand) {
                let vc = sse(&rc);
                if vc < value {
                    let change = rel_change(value, vc);
                    x = cand;
                    r = rc;
                    value = vc;
                    lambda = (lambda / 3.0).max(1e-12);
                    if change < term.rel_tol {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > 1e12 {
                // No descent direction left at working precision.
                converged = true;
                break 'outer;
            }
        }
    }
    Minimum {
        x,
        value,
        n_evals: evals.get(),
        converged,
    }
}
