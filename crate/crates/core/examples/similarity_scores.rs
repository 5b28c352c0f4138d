//! Every heatmap similarity on a few hand-made 4x4 maps.
//!
//!     cargo run --release --example similarity_scores

use ex2l::similarity::{Similarity, SimilarityKind};
use ex2l::{NdArray, Scalar};

fn map(rows: [[Scalar; 4]; 4]) -> NdArray {
    NdArray::new(vec![1, 4, 4], rows.concat()).expect("4x4 map")
}

fn main() -> anyhow::Result<()> {
    let center = map([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 1.0, 0.0],
        [0.0, 1.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]);
    let shifted = map([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0],
        [0.0, 0.0, 1.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
    ]);
    let corner = map([
        [1.0, 0.5, 0.0, 0.0],
        [0.5, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]);

    println!(
        "{:<10} {:>10} {:>10} {:>10}",
        "kind", "same", "shifted", "disjoint"
    );
    for kind in SimilarityKind::ALL {
        let s = Similarity::new(kind);
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>10.4}",
            kind.name(),
            s.evaluate_arrays(&center, &center)?,
            s.evaluate_arrays(&center, &shifted)?,
            s.evaluate_arrays(&center, &corner)?,
        );
    }
    Ok(())
}
