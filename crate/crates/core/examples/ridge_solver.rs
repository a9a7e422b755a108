//! The sparse generalized ridge solver on a hand-built design: coefficients
//! shrink toward their centers as the penalty grows, and grid search picks a
//! penalty on held-out rows.
//!
//!     cargo run --release --example ridge_solver

use lrapm::solver::{grid_search, solve, Design, PenaltySpec, PenaltyTemplate, SparseDesign};
use lrapm::{LambdaPair, Side, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_design(rng: &mut ChaCha8Rng, n: usize, truth: &[f64]) -> lrapm::Result<Design> {
    let p = truth.len();
    let mut matrix = SparseDesign::new(p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random_range(0..p / 2);
        let b = p / 2 + rng.random_range(0..p / 2);
        matrix.push_row([(a, 1.0), (b, -1.0)])?;
        y.push(1.0 + truth[a] - truth[b] + rng.random_range(-1.0..1.0));
    }
    Ok(Design { matrix, y })
}

fn main() -> lrapm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth: Vec<f64> = (0..12).map(|_| rng.random_range(-0.3..0.3)).collect();
    let centers = vec![0.1; truth.len()];
    let train = random_design(&mut rng, 400, &truth)?;
    let val = random_design(&mut rng, 200, &truth)?;

    for lambda in [0.0, 10.0, 100.0, 1e4, 1e8] {
        let sol = solve(
            &train.matrix,
            &train.y,
            &PenaltySpec::uniform(lambda, centers.clone()),
            SolveOptions::default(),
        )?;
        let max_shift = sol
            .coefficients
            .iter()
            .zip(&centers)
            .map(|(b, c)| (b - c).abs())
            .fold(0.0, f64::max);
        println!(
            "lambda {lambda:>8}: intercept {:.4}, max |beta - center| {max_shift:.2e}, {} iterations",
            sol.intercept, sol.iterations
        );
    }

    let sides = (0..truth.len())
        .map(|j| {
            if j < truth.len() / 2 {
                Side::Offense
            } else {
                Side::Defense
            }
        })
        .collect();
    let template = PenaltyTemplate { centers, sides };
    let grid = LambdaPair::grid(&[1.0, 10.0, 100.0, 1000.0], &[1.0, 10.0, 100.0, 1000.0]);
    let result = grid_search(&train, &val, &grid, &template, SolveOptions::default())?;
    println!("best {:?} with validation rmse {:.4}", result.best, result.best_rmse);
    Ok(())
}
