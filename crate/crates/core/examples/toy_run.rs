//! Full two-phase run on the 3-class 8x8 synthetic task, printing weight
//! statistics and accuracy along the way.
//!
//! ```text
//! cargo run --release --example toy_run
//! ```

use std::time::Instant;

use natcsnn::topology::{ProjectionId, WeightStats};
use natcsnn::training::{evaluate, monte_carlo_weight_search, run_phase1, run_phase2, NoObserver};
use natcsnn::{calibrate_ik, make_synthetic, EncodingConfig, NatCsnnConfig, Network, NeuronParams, SimulationConfig};

fn main() -> natcsnn::Result<()> {
    let start = Instant::now();
    let train = make_synthetic(3, 8, 8, 50, 0.1, 7)?;
    let test = make_synthetic(3, 8, 8, 20, 0.1, 8)?;
    let cfg = NatCsnnConfig {
        rows: 8,
        cols: 8,
        n_classes: 3,
        neurons_per_class: 5,
        ..NatCsnnConfig::default()
    };
    let neuron = NeuronParams::default();
    let sim = SimulationConfig::default();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());

    let i_k = calibrate_ik(&neuron, sim.window, 10, sim.dt)?;
    println!("i_k = {i_k} pA");
    let mut net = Network::new(&cfg, neuron, Some(EncodingConfig::new(i_k, sim.window, 10)?))?;
    run_phase1(&mut net, &train, &sim, &mut NoObserver)?;
    for id in [ProjectionId::P1, ProjectionId::P2, ProjectionId::P3] {
        let s = WeightStats::of(net.topology.projection(id).weights());
        println!("{} min {:.1} max {:.1} mean {:.1}", id.name(), s.min, s.max, s.mean);
    }

    let search = monte_carlo_weight_search(&mut net, (0.0, 1200.0), 5, &train, &sim, workers)?;
    print!("{}", search.render());
    net.prepare_phase2(search.best_weight, &sim)?;
    let one = SimulationConfig {
        epochs_phase2: 1,
        ..sim.clone()
    };
    for epoch in 0..sim.epochs_phase2 {
        net.presentations = 0;
        run_phase2(&mut net, &train, &one, &mut NoObserver)?;
        let mut frozen = net.clone();
        frozen.enter_testing_mode();
        println!(
            "epoch {epoch}: train accuracy {:.3}",
            evaluate(&frozen, &train, &sim, workers)?.overall
        );
    }

    net.enter_testing_mode();
    let report = evaluate(&net, &test, &sim, workers)?;
    let names: Vec<String> = (0..3).map(|k| format!("template_{k}")).collect();
    print!("{}", report.render(&names));
    println!("ties {} ({:.1?})", report.ties, start.elapsed());
    Ok(())
}
