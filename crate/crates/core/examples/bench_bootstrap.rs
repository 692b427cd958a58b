use std::time::Instant;

use floodbench_core::bootstrap::bootstrap_ci;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

fn main() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let normal = Normal::new(0.01, 0.05).unwrap();
    let diffs: Vec<f64> = (0..1620).map(|_| normal.sample(&mut rng)).collect();
    let t = Instant::now();
    let ci = bootstrap_ci(&diffs, 100_000, 0.2, 0.99, 7).unwrap();
    println!("{ci:?} in {:?}", t.elapsed());
}
