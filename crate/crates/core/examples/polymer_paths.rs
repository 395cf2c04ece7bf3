//! Jointly consistent disorder arrays and paths drawn from the polymer measure.

use diamond_polymer::lattice::{enumerate_paths, shared_edge_count, LatticeParams};
use diamond_polymer::polymer::{cylinder_mass, sample_limit_tree, sample_polymer_path};
use diamond_polymer::rng::stream;

fn main() -> diamond_polymer::Result<()> {
    let (b, k) = (2u32, 3usize);
    let arrays = sample_limit_tree(b, 0.0, k, 2, 5, 0)?;
    let total = arrays[0].total();
    println!("W^(0) = {total:.6}");

    let paths = enumerate_paths(LatticeParams::new(b)?, 2)?;
    let sum: f64 = paths.iter().map(|p| cylinder_mass(&arrays, p)).sum::<diamond_polymer::Result<f64>>()?;
    println!("sum of generation-2 cylinder masses = {sum:.6}");

    let mut rng = stream(5, 1, 0);
    let p = sample_polymer_path(&arrays, k, &mut rng)?;
    let q = sample_polymer_path(&arrays, k, &mut rng)?;
    println!("p = {:?}", p.decisions());
    println!("q = {:?}", q.decisions());
    println!("shared generation-{k} edges: {}", shared_edge_count(&p, &q)?);
    Ok(())
}
