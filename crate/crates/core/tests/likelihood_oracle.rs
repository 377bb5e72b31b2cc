//! Log-likelihoods against per-point densities from statrs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, Exp, LogNormal};
use tacarr::likelihood::{loglik_exponential, loglik_lognormal};
use tacarr::LambdaPath;

fn draw(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, LambdaPath, Vec<f64>) {
    let start = rng.random_range(0..3);
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
    let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..4.0)).collect();
    let branch: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let theta2 = vec![rng.random_range(0.01..1.5), rng.random_range(0.01..1.5)];
    (
        values,
        LambdaPath {
            start,
            values: lambda,
            branch,
        },
        theta2,
    )
}

#[test]
fn exponential_matches_density_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (r, path, _) = draw(&mut rng, 30);
        let oracle: f64 = (path.start..r.len())
            .map(|t| Exp::new(1.0 / path.values[t]).unwrap().ln_pdf(r[t]))
            .sum();
        let got = loglik_exponential(&r, &path).unwrap();
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }
}

#[test]
fn lognormal_matches_density_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (r, path, theta2) = draw(&mut rng, 30);
        let oracle: f64 = (path.start..r.len())
            .map(|t| {
                let t2 = theta2[path.branch[t]];
                LogNormal::new(path.values[t].ln() - 0.5 * t2, t2.sqrt())
                    .unwrap()
                    .ln_pdf(r[t])
            })
            .sum();
        let got = loglik_lognormal(&r, &path, &theta2).unwrap();
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }
}
