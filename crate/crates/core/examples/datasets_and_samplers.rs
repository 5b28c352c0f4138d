//! Synthetic CMNIST and group-table datasets, and how the two batch samplers
//! see their group imbalance.
//!
//!     cargo run --release --example datasets_and_samplers

use ex2l::data::{group_table_splits, CmnistSpec, Dataset, GroupTable, Sampler, SamplingKind};

fn describe(name: &str, d: &Dataset) {
    println!(
        "{name}: {} examples, group counts {:?}",
        d.len(),
        d.group_counts()
    );
}

/// In CMNIST label 0/1 and colour 0/1 line up, so agreement measures the
/// strength of the spurious correlation.
fn describe_cmnist(name: &str, d: &Dataset) {
    describe(name, d);
    let agree = d
        .labels()
        .iter()
        .zip(d.confounders())
        .filter(|(y, c)| y == c)
        .count();
    println!(
        "  colour agrees with label for {:.1}%",
        100.0 * agree as f64 / d.len() as f64
    );
}

fn batch_group_share(d: &Dataset, kind: SamplingKind) -> anyhow::Result<Vec<f64>> {
    let mut s = Sampler::new(kind, d, 100, 0)?;
    let mut hits = vec![0usize; d.n_groups()];
    for _ in 0..100 {
        for i in s.next_batch() {
            hits[d.group(i)] += 1;
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / 10_000.0).collect())
}

fn main() -> anyhow::Result<()> {
    let spec = CmnistSpec::default();
    let (train, test) = (spec.train(), spec.test());
    describe_cmnist("cmnist train", &train);
    describe_cmnist("cmnist test", &test);

    let table = GroupTable::waterbirds();
    print!("\nwaterbirds table as csv:\n{}", table.to_csv());
    let (wb_train, _, wb_test) = group_table_splits(&table, 4000, 1000, 1000, 0);
    describe("waterbirds train", &wb_train);
    describe("waterbirds test", &wb_test);

    println!("\ngroup shares over 10^4 sampled cmnist training indices:");
    for kind in [SamplingKind::Random, SamplingKind::UniformGroup] {
        let share = batch_group_share(&train, kind)?;
        println!("{:>13}: {share:.3?}", kind.name());
    }
    Ok(())
}
