//! Algebraic connectivity of a few topologies next to that of their
//! decomposed networks, computed two ways.
//!
//! ```text
//! cargo run --example spectral_gap
//! ```

use privdac::graph::{
    algebraic_connectivity, decomposed_laplacian, predicted_decomposed_lambda2, NetworkGraph,
};
use privdac::rng::SplitMix64;

fn main() -> privdac::Result<()> {
    let mut graphs: Vec<(String, NetworkGraph)> =
        ["path(2)", "path(4)", "cycle(4)", "cycle(8)", "complete(4)"]
            .iter()
            .map(|s| Ok((s.to_string(), s.parse()?)))
            .collect::<privdac::Result<_>>()?;
    let mut rng = SplitMix64::new(7);
    for k in 0..3 {
        graphs.push((
            format!("random #{k}"),
            NetworkGraph::random_connected(6, 0.3, &mut rng)?,
        ));
    }

    println!(
        "{:<12} {:>10} {:>14} {:>14} {:>10}",
        "graph", "lambda2", "decomposed", "closed form", "gap"
    );
    for (name, g) in &graphs {
        let l = g.laplacian();
        let lambda2 = algebraic_connectivity(&l)?;
        let solved = algebraic_connectivity(&decomposed_laplacian(&l))?;
        let predicted = predicted_decomposed_lambda2(lambda2);
        println!(
            "{name:<12} {lambda2:>10.6} {solved:>14.10} {predicted:>14.10} {:>10.1e}",
            (solved - predicted).abs()
        );
    }
    Ok(())
}
