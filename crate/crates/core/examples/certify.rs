//! Existence certificates for the three binary model families, checked
//! against exhaustive search, plus the growth-in-k probe.
//!
//! `cargo run --release --example certify`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfi_lab::certify::{
    brute_force_max_logodds, certify_linear, greedy_kernel, greedy_onehidden, scaling_probe, Domain, Family,
    KernelHPK2Model, LinearModel, OneHiddenModel,
};

fn main() -> sfi_lab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = 8;

    let linear = LinearModel::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let cert = certify_linear(&linear, 2, 0.0, 1.0, 0.9)?;
    let (brute, _) = brute_force_max_logodds(|z| linear.logodds(z), 2, Domain::Linear { r: 0.0, big_r: 1.0 }, d)?;
    println!("linear k=2: certified {:.4}, exhaustive {brute:.4}, pixels {:?}, reaches 0.9: {:?}", cert.max_logodds, cert.index_set, cert.threshold_met);

    let u = (0..4).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let hidden = OneHiddenModel::new(u, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let kernel = KernelHPK2Model::from_delta(d, (0..d * (d + 1) / 2).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    for k in 1..=3 {
        let h = greedy_onehidden(&hidden, k, 1.0)?;
        let (hb, _) = brute_force_max_logodds(|z| hidden.logodds(z), k, Domain::ZeroBase { big_r: 1.0 }, d)?;
        let q = greedy_kernel(&kernel, k, 1.0)?;
        let (qb, _) = brute_force_max_logodds(|z| kernel.logodds(z), k, Domain::ZeroBase { big_r: 1.0 }, d)?;
        println!("k={k}: one-hidden greedy {:.4} <= {hb:.4}; kernel greedy {:.4} <= {qb:.4}", h.max_logodds, q.max_logodds);
    }

    for family in [Family::Linear, Family::OneHidden, Family::Kernel] {
        let table = scaling_probe(family, &[1, 2, 3, 4, 5, 6], 10, 3)?;
        println!("{family:?}: slope {:.4}, R^2 {:.5}", table.slope, table.r_squared);
    }
    Ok(())
}
