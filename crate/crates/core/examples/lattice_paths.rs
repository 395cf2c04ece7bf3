//! Paths, edge addresses and overlaps on the diamond lattice.

use diamond_polymer::lattice::{
    enumerate_paths, sample_uniform_path, separation_generation, shared_edge_count, LatticeParams,
};
use diamond_polymer::rng::stream;

fn main() -> diamond_polymer::Result<()> {
    let params = LatticeParams::new(2)?;
    for n in 0..5 {
        println!("generation {n}: {} edges, {} paths", params.edge_count(n), params.path_count(n));
    }
    let paths = enumerate_paths(params, 2)?;
    let (p, q) = (&paths[0], &paths[paths.len() - 1]);
    println!("overlap of first and last generation-2 paths: {}", shared_edge_count(p, q)?);

    let mut rng = stream(1, 0, 0);
    let p = sample_uniform_path(params, 6, &mut rng);
    let q = sample_uniform_path(params, 6, &mut rng);
    println!("random generation-6 pair shares {} edges", shared_edge_count(&p, &q)?);
    let (e, f) = (&p.edges()[0], &p.edges()[5]);
    println!("edges 0 and 5 of p separate at generation {}", separation_generation(e, f)?);
    println!("p coarse-grained to generation 3: {:?}", p.coarse_grain(3)?.decisions());
    Ok(())
}
