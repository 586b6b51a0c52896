//! Seed sweep for stall fixtures: small spatial rings whose initial values
//! have a segment turned by π. Prints every instance where stage-1 LM ends
//! above `--min-chi2`, with the pipeline's result alongside.
//!
//! `cargo run --release --example stall_search -- --write DIR` also writes
//! the recorded fixture set as g2o files into DIR.

use marine_pgo::io::{from_pose_graph, write_g2o};
use marine_pgo::lie::Pose3;
use marine_pgo::pipeline::{run_pipeline, PipelineConfig};
use marine_pgo::sim::{flip_segment, generate, Layout, SimConfig};
use marine_pgo::solver::levenberg_marquardt;

#[derive(Clone, Copy, Debug)]
struct Instance {
    n: usize,
    loop_radius: f64,
    loop_prob: f64,
    start: usize,
    len: usize,
    seed: u64,
}

/// The recorded set: five instances the pipeline improves and two winding
/// stalls it cannot leave.
const RECORDED: [Instance; 7] = [
    Instance { n: 3, loop_radius: 6.5, loop_prob: 1.0, start: 2, len: 1, seed: 0 },
    Instance { n: 5, loop_radius: 6.5, loop_prob: 1.0, start: 4, len: 1, seed: 4 },
    Instance { n: 8, loop_radius: 2.5, loop_prob: 1.0, start: 6, len: 1, seed: 0 },
    Instance { n: 8, loop_radius: 6.5, loop_prob: 1.0, start: 4, len: 4, seed: 6 },
    Instance { n: 8, loop_radius: 6.5, loop_prob: 1.0, start: 3, len: 4, seed: 9 },
    Instance { n: 8, loop_radius: 2.5, loop_prob: 0.5, start: 2, len: 3, seed: 2 },
    Instance { n: 10, loop_radius: 2.5, loop_prob: 0.5, start: 3, len: 3, seed: 5 },
];

fn build(i: &Instance) -> marine_pgo::graph::PoseGraph<Pose3> {
    let cfg = SimConfig {
        layout: Layout::Ring { radius: 3.0, n: i.n },
        odo_sigma: (0.05, 0.02),
        loop_prob: i.loop_prob,
        loop_radius: i.loop_radius,
        seed: i.seed,
        ..SimConfig::default()
    };
    let g = generate::<Pose3>(&cfg).expect("valid sim config").graph;
    flip_segment(&g, i.start..(i.start + i.len).min(i.n)).expect("same shape")
}

fn report(i: &Instance, min_chi2: f64) {
    let g = build(i);
    let pc = PipelineConfig::default();
    let (_, r1) = levenberg_marquardt(&g, &pc.solve).expect("solvable");
    if r1.final_chi2 < min_chi2 {
        return;
    }
    let (_, rep) = run_pipeline(&g, &pc).expect("pipeline runs");
    println!(
        "n={} loop_radius={} loop_prob={} flip={}+{} seed={} stage1_chi2={:.6e} pipeline_chi2={:.6e}",
        i.n, i.loop_radius, i.loop_prob, i.start, i.len, i.seed, r1.final_chi2, rep.final_chi2
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if let Some(pos) = args.iter().position(|a| a == "--write") {
        let dir = std::path::PathBuf::from(&args[pos + 1]);
        std::fs::create_dir_all(&dir).expect("create fixture dir");
        for (k, i) in RECORDED.iter().enumerate() {
            let text = write_g2o(&from_pose_graph(&build(i)));
            std::fs::write(dir.join(format!("stall_{k}.g2o")), text).expect("write fixture");
            report(i, 0.0);
        }
        return;
    }
    let min_chi2 = 200.0;
    for n in [3usize, 4, 5, 6, 8, 10] {
        for (loop_radius, loop_prob) in [(2.5, 0.5), (2.5, 1.0), (6.5, 1.0)] {
            for len in 1..=n / 2 {
                for start in 1..n {
                    for seed in 0..10 {
                        report(&Instance { n, loop_radius, loop_prob, start, len, seed }, min_chi2);
                    }
                }
            }
        }
    }
}
