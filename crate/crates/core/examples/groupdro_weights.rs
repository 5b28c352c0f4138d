//! Exponentiated-gradient group weights drifting towards the worst group.
//!
//!     cargo run --release --example groupdro_weights

use ex2l::train::GroupWeights;
use ex2l::Scalar;

fn main() -> anyhow::Result<()> {
    let mut q = GroupWeights::uniform(4);
    // per-sample losses of one batch; group 3 is the hardest
    let groups = [0, 0, 1, 1, 2, 2, 3, 3];
    let losses: [Scalar; 8] = [0.2, 0.3, 0.4, 0.5, 0.3, 0.3, 1.5, 1.1];
    println!("group means {:?}", q.group_means(&losses, &groups)?);
    for step in 0..=5 {
        println!("step {step}: q = {:.4?}", q.q());
        q.update(&losses, &groups, 0.5)?;
    }
    // groups missing from a batch keep their relative weight
    q.update(&[2.0, 2.0], &[0, 0], 0.5)?;
    println!("after a batch of group 0 only: q = {:.4?}", q.q());
    Ok(())
}
