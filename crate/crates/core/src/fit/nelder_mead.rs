//! Derivative-free simplex minimizer with the standard reflection,
//! expansion, contraction and shrink moves.

/// Options for one simplex run.
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    /// Relative spread of objective values at which the simplex is
    /// considered converged.
    pub tolerance: f64,
    pub max_iterations: u64,
    /// Edge length of the initial simplex along each coordinate.
    pub initial_step: f64,
    /// After convergence the simplex is rebuilt around the incumbent with a
    /// tenth of the step and polished again, this many times.
    pub restarts: u32,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 20_000,
            initial_step: 0.5,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: u64,
    pub converged: bool,
}

struct Vertex {
    x: Vec<f64>,
    fx: f64,
}

/// Minimizes `f` starting from `x0`. `f` must return a finite value or
/// `f64::INFINITY` for points it cannot evaluate.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NmOptions) -> NmResult {
    let mut best_x = x0.to_vec();
    let mut best_fx = f(x0);
    let mut iterations = 0;
    let mut converged = false;
    let mut step = opts.initial_step;

    for _ in 0..=opts.restarts {
        let run = simplex_run(&mut f, &best_x, best_fx, step, opts, &mut iterations);
        if run.fx < best_fx || (run.fx == best_fx && run.converged) {
            best_x = run.x;
            best_fx = run.fx;
        }
        converged = run.converged;
        if iterations >= opts.max_iterations {
            break;
        }
        step *= 0.1;
    }
    NmResult {
        x: best_x,
        fx: best_fx,
        iterations,
        converged,
    }
}

fn simplex_run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    fx0: f64,
    step: f64,
    opts: &NmOptions,
    iterations: &mut u64,
) -> NmResult {
    let dim = x0.len();
    let mut simplex: Vec<Vertex> = Vec::with_capacity(dim + 1);
    simplex.push(Vertex {
        x: x0.to_vec(),
        fx: fx0,
    });
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push(Vertex { x, fx });
    }
    simplex.sort_by(|a, b| a.fx.total_cmp(&b.fx));

    let mut converged = false;
    while *iterations < opts.max_iterations {
        *iterations += 1;
        let best = simplex[0].fx;
        let worst = simplex[dim].fx;
        if worst.is_finite()
            && (worst - best).abs() <= opts.tolerance * (best.abs() + opts.tolerance)
        {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, xi) in centroid.iter_mut().zip(&v.x) {
                *c += xi / dim as f64;
            }
        }
        let affine = |a: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].x)
                .map(|(c, w)| c + a * (c - w))
                .collect()
        };

        let xr = affine(1.0);
        let fr = f(&xr);
        if fr < simplex[0].fx {
            let xe = affine(2.0);
            let fe = f(&xe);
            let v = if fe < fr {
                Vertex { x: xe, fx: fe }
            } else {
                Vertex { x: xr, fx: fr }
            };
            insert(&mut simplex, v);
        } else if fr < simplex[dim - 1].fx {
            insert(&mut simplex, Vertex { x: xr, fx: fr });
        } else {
            let (xc, fc) = if fr < simplex[dim].fx {
                let xc = affine(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[dim].x)
                    .map(|(c, w)| c - 0.5 * (c - w))
                    .collect();
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < simplex[dim].fx.min(fr) {
                insert(&mut simplex, Vertex { x: xc, fx: fc });
            } else {
                // Shrink toward the best vertex.
                let best_x = simplex[0].x.clone();
                for v in simplex.iter_mut().skip(1) {
                    for (xi, bi) in v.x.iter_mut().zip(&best_x) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    v.fx = f(&v.x);
                }
                simplex.sort_by(|a, b| a.fx.total_cmp(&b.fx));
            }
        }
    }

    NmResult {
        x: simplex[0].x.clone(),
        fx: simplex[0].fx,
        iterations: *iterations,
        converged,
    }
}

fn insert(simplex: &mut Vec<Vertex>, v: Vertex) {
    simplex.pop();
    let pos = simplex.partition_point(|s| s.fx <= v.fx);
    simplex.insert(pos, v);
}
