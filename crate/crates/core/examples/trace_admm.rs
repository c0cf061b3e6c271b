use graphchoice::synth::*;

fn main() {
    for seed in 0..30u64 {
        let spec = WExperimentSpec::new(0.0, seed);
        let (_, _, truth, _) = generate_w_experiment(&spec).unwrap();
        let rate = |class: usize| {
            let members: Vec<_> = (0..spec.n_nodes).filter(|&i| truth.class[i] == class).collect();
            members.iter().filter(|&&i| truth.label[i] == 1).count() as f64 / members.len() as f64
        };
        let diff = (rate(0) - rate(1)).abs();
        println!("seed {seed}: rates {:.3} {:.3} diff {:.3} {}", rate(0), rate(1), diff, if diff < 0.035 {"OK"} else {""});
    }
}
