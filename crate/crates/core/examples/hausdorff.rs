//! Log-Hausdorff coverage sums of the intersection set.

use diamond_polymer::flow::Flow;
use diamond_polymer::intersections::{hausdorff_scan, OffspringTable};

fn main() -> diamond_polymer::Result<()> {
    let profile = Flow::new(2)?.profile(0.0, 2002)?;
    let table = OffspringTable::new(&profile, 2000)?;
    let ns = [250usize, 500, 1000, 2000];
    for h in [0.5, 1.0, 1.5] {
        let rows = hausdorff_scan(&table, &ns, h, 2000, 9)?;
        let line: Vec<String> = rows.iter().map(|e| format!("n={} {:.4}", e.n, e.mean)).collect();
        println!("h = {h}: {}", line.join("  "));
    }
    Ok(())
}
