//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use perihom::cell::{effective_assembly, CellSolution};
use perihom::operator::choose_lambda;
use perihom::{FloquetLayout, Problem, TorusFunction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub problem: Problem,
    pub cell: Arc<CellSolution>,
    pub lambda: f64,
    pub layout: FloquetLayout,
}

impl Fixture {
    pub fn new(benchmark: &str, n: usize) -> Self {
        let problem = perihom::benchmarks::load(benchmark).expect("built-in benchmark");
        let cell = Arc::new(effective_assembly(&problem).expect("cell problem"));
        let lambda = choose_lambda(&problem, &cell, &[n], 0.1).expect("lambda");
        let layout = FloquetLayout::new(problem.lattice, problem.symbol.n, n, problem.cutoff);
        Fixture { problem, cell, lambda, layout }
    }

    /// Band-limited random datum restricted to the retained modes.
    pub fn datum(&self, seed: u64) -> TorusFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.layout.project(&TorusFunction::random_band_limited(self.problem.lattice, self.problem.symbol.n, 6, &mut rng))
    }
}
