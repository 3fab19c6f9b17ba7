//! Nelder–Mead simplex minimization with dimension-adaptive coefficients.

use nalgebra::SVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop once the spread of simplex values is at most this...
    pub f_tol: f64,
    /// ...and the simplex fits in a box of this half-width around the best
    /// vertex.
    pub x_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct Minimum<const D: usize> {
    pub x: SVector<f64, D>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Minimize `f` starting from the simplex `{x0} ∪ {x0 + e_i}`. After every
/// iteration `on_iter(iteration, best_x, best_f)` is called; the reported
/// best value never increases.
pub fn minimize<const D: usize>(
    mut f: impl FnMut(&SVector<f64, D>) -> f64,
    x0: SVector<f64, D>,
    edges: &[SVector<f64, D>; D],
    opts: &NelderMeadOptions,
    mut on_iter: impl FnMut(usize, &SVector<f64, D>, f64),
) -> Minimum<D> {
    let n = D as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / n, 0.75 - 0.5 / n, 1.0 - 1.0 / n);

    let mut evaluations = 0;
    let mut eval = |x: &SVector<f64, D>, count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(SVector<f64, D>, f64)> = Vec::with_capacity(D + 1);
    let f0 = eval(&x0, &mut evaluations);
    simplex.push((x0, f0));
    for e in edges {
        let x = x0 + e;
        let fx = eval(&x, &mut evaluations);
        simplex.push((x, fx));
    }
    // Stable sort keeps earlier vertices first on ties, so x0 stays best
    // unless something is strictly better.
    let order = |s: &mut Vec<(SVector<f64, D>, f64)>| {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
    };
    order(&mut simplex);

    let mut termination = Termination::IterationLimit;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let best = simplex[0].1;
        let worst = simplex[D].1;
        let spread = (worst - best).abs();
        let size = simplex[1..].iter().map(|(x, _)| (x - simplex[0].0).amax()).fold(0.0, f64::max);
        if (spread <= opts.f_tol && size <= opts.x_tol) || size <= opts.x_tol * 1e-4 {
            termination = Termination::Converged;
            break;
        }
        iterations += 1;

        let centroid = simplex[..D].iter().map(|(x, _)| x).sum::<SVector<f64, D>>() / n;
        let worst_x = simplex[D].0;
        let second = simplex[D - 1].1;

        let xr = centroid + (centroid - worst_x) * alpha;
        let fr = eval(&xr, &mut evaluations);
        if fr < best {
            let xe = centroid + (xr - centroid) * beta;
            let fe = eval(&xe, &mut evaluations);
            simplex[D] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < second {
            simplex[D] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = centroid + (xr - centroid) * gamma;
                (xc, eval(&xc, &mut evaluations))
            } else {
                let xc = centroid + (worst_x - centroid) * gamma;
                (xc, eval(&xc, &mut evaluations))
            };
            if fc < fr.min(worst) {
                simplex[D] = (xc, fc);
            } else {
                let xb = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let x = xb + (v.0 - xb) * delta;
                    *v = (x, eval(&x, &mut evaluations));
                }
            }
        }
        order(&mut simplex);
        on_iter(iterations, &simplex[0].0, simplex[0].1);
    }

    Minimum { x: simplex[0].0, f: simplex[0].1, iterations, evaluations, termination }
}
