//! Fixtures shared by the benchmarks in `benches/`.

use shortmd_core::generate::gen_random;
use shortmd_core::{Domain, Interactions, LJParams};

/// Random LJ fluid at the standard bulk density, decomposed into `n_sub` subnodes.
pub fn bulk_domain(n: usize, n_sub: usize) -> Domain {
    let flat = gen_random(n, 0.8442, 0.8, 0.72, 17).expect("config");
    Domain::new(&flat, Interactions::pair_only(LJParams::fluid()), 0.3, n_sub).expect("domain")
}
