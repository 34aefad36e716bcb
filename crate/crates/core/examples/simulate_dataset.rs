//! Prints one dataset drawn from the Copas selection model as a study CSV.
//!
//! `cargo run -p copas-core --example simulate_dataset -- [n] [rho] [seed]`

use copas_core::sim::generate;
use copas_core::{rng, SimConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |k: usize, default: &str| args.get(k).cloned().unwrap_or(default.into());
    let cfg = SimConfig {
        n: arg(0, "30").parse().expect("n is an integer"),
        rho: arg(1, "0.8").parse().expect("rho is a number"),
        seed: arg(2, "8080").parse().expect("seed is an integer"),
        ..SimConfig::default()
    };
    let g = generate(&cfg, &mut rng::stream(cfg.seed, 0)).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1)
    });
    println!(
        "# {} studies generated from the Copas selection model",
        cfg.n
    );
    println!(
        "# mu={} tau2={} gamma0={} gamma1={} rho={}, stream 0 of seed {}",
        cfg.mu, cfg.tau2, cfg.gamma0, cfg.gamma1, cfg.rho, cfg.seed
    );
    println!("study_id,y,s");
    for (i, st) in g.data.studies().iter().enumerate() {
        println!("S{:02},{:.6},{:.6}", i + 1, st.y, st.s);
    }
}
