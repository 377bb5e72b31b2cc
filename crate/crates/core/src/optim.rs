//! Derivative-free minimization (Nelder-Mead with restarts).
//!
//! Uses the dimension-adaptive coefficients of Gao and Han, which behave
//! better than the textbook (1, 2, 0.5, 0.5) set beyond a handful of
//! dimensions. After the simplex collapses, the search is restarted from the
//! best vertex with a fresh simplex until a restart stops improving.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Simplex extent (max-norm) below which the search may stop.
    pub xtol: f64,
    /// Spread of objective values below which the search may stop.
    pub ftol: f64,
    /// Maximum number of restarts after the first convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            xtol: 1e-8,
            ftol: 1e-10,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Initial simplex edge for a coordinate.
pub fn default_step(x: f64) -> f64 {
    (0.1 * x.abs()).max(1e-3)
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as
/// `+inf`, so a penalty or barrier can be expressed by returning infinity.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return NelderMeadResult {
            x: Vec::new(),
            f: v,
            evals,
            converged: true,
        };
    }

    let nf = n as f64;
    let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
    let rho = 0.75 - 1.0 / (2.0 * nf);
    let sigma = 1.0 - 1.0 / nf;

    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    let mut converged = false;

    for round in 0..=opts.restarts {
        let scale = if round == 0 { 1.0 } else { 0.1 };
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut fv: Vec<f64> = Vec::with_capacity(n + 1);
        simplex.push(best_x.clone());
        fv.push(best_f);
        for i in 0..n {
            let mut v = best_x.clone();
            v[i] += scale * default_step(best_x[i]);
            fv.push(eval(&v, &mut evals));
            simplex.push(v);
        }

        let round_start = best_f;
        let mut round_converged = false;
        let mut order: Vec<usize> = (0..=n).collect();
        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial2 = vec![0.0; n];

        while evals < opts.max_evals {
            order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]).then(a.cmp(&b)));
            let (ib, iw, isw) = (order[0], order[n], order[n - 1]);

            let fspread = fv.iter().map(|v| (v - fv[ib]).abs()).fold(0.0, f64::max);
            let xspread = simplex
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[ib]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (fspread <= opts.ftol || !fv[ib].is_finite()) && xspread <= opts.xtol {
                round_converged = fv[ib].is_finite();
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for &i in &order[..n] {
                for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= nf);

            let worst = simplex[iw].clone();
            for k in 0..n {
                trial[k] = centroid[k] + alpha * (centroid[k] - worst[k]);
            }
            let fr = eval(&trial, &mut evals);

            if fr < fv[ib] {
                for k in 0..n {
                    trial2[k] = centroid[k] + gamma * (trial[k] - centroid[k]);
                }
                let fe = eval(&trial2, &mut evals);
                if fe < fr {
                    simplex[iw].copy_from_slice(&trial2);
                    fv[iw] = fe;
                } else {
                    simplex[iw].copy_from_slice(&trial);
                    fv[iw] = fr;
                }
                continue;
            }
            if fr < fv[isw] {
                simplex[iw].copy_from_slice(&trial);
                fv[iw] = fr;
                continue;
            }
            // Contraction: outside if the reflection beat the worst point.
            let outside = fr < fv[iw];
            for k in 0..n {
                trial2[k] = if outside {
                    centroid[k] + rho * (trial[k] - centroid[k])
                } else {
                    centroid[k] + rho * (worst[k] - centroid[k])
                };
            }
            let fc = eval(&trial2, &mut evals);
            if (outside && fc <= fr) || (!outside && fc < fv[iw]) {
                simplex[iw].copy_from_slice(&trial2);
                fv[iw] = fc;
                continue;
            }
            let bx = simplex[ib].clone();
            for &i in &order[1..] {
                for k in 0..n {
                    simplex[i][k] = bx[k] + sigma * (simplex[i][k] - bx[k]);
                }
                fv[i] = eval(&simplex[i], &mut evals);
            }
        }

        let ib = (0..=n)
            .min_by(|&a, &b| fv[a].total_cmp(&fv[b]).then(a.cmp(&b)))
            .unwrap();
        if fv[ib] < best_f {
            best_f = fv[ib];
            best_x = simplex[ib].clone();
        }
        converged = round_converged;
        let improved = round_start - best_f;
        if !round_converged || evals >= opts.max_evals || (round > 0 && improved <= opts.ftol.max(1e-12 * best_f.abs())) {
            break;
        }
    }

    NelderMeadResult {
        x: best_x,
        f: best_f,
        evals,
        converged,
    }
}
