//! Derivative-free Nelder-Mead simplex minimizer for the likelihood fits.

/// Outcome of a simplex minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ALPHA: f64 = 1.0; // reflection
const GAMMA: f64 = 2.0; // expansion
const RHO: f64 = 0.5; // contraction
const SIGMA: f64 = 0.5; // shrink

/// Minimize `f` starting from `x0`, with per-coordinate initial steps.
/// Stops when the relative objective spread and the simplex diameter both
/// drop below `tol`, or after `max_iter` iterations.
pub fn nelder_mead<F>(f: F, x0: &[f64], steps: &[f64], tol: f64, max_iter: usize) -> MinimizeResult
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;

        // Order best..worst.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let reordered: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let revalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = reordered;
        values = revalues;

        let best = values[0];
        let worst = values[dim];
        let spread = (worst - best).abs();
        let scale = best.abs().max(1.0);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        let xscale = simplex[0]
            .iter()
            .map(|v| v.abs())
            .fold(1.0f64, f64::max);
        if spread <= tol * scale && diameter <= tol.sqrt() * xscale {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[dim])
            .map(|(c, w)| c + ALPHA * (c - w))
            .collect();
        let fr = f(&reflect);

        if fr < values[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + GAMMA * (c - w))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[dim] = expand;
                values[dim] = fe;
            } else {
                simplex[dim] = reflect;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflect;
            values[dim] = fr;
        } else {
            let contract: Vec<f64> = if fr < values[dim] {
                centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + RHO * (r - c))
                    .collect()
            } else {
                centroid
                    .iter()
                    .zip(&simplex[dim])
                    .map(|(c, w)| c + RHO * (w - c))
                    .collect()
            };
            let fc = f(&contract);
            if fc < values[dim].min(fr) {
                simplex[dim] = contract;
                values[dim] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=dim {
                    let shrunk: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, v)| b + SIGMA * (v - b))
                        .collect();
                    values[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }

    let (best_idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    MinimizeResult {
        x: simplex[best_idx].clone(),
        fx: values[best_idx],
        iterations,
        converged: converged && values[best_idx].is_finite(),
    }
}
