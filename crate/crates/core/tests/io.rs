use marine_pgo::io::*;
use marine_pgo::lie::{Pose2, Pose3};
use marine_pgo::radiance::{ImagePlanes, Plane};
use marine_pgo::sim::{generate, Layout, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn big_sim() -> SimConfig {
    SimConfig { layout: Layout::Grid { width: 12, height: 12 }, loop_prob: 1.0, seed: 9, ..SimConfig::default() }
}

#[test]
fn g2o_round_trip_on_large_spatial_graph() {
    let out = generate::<Pose3>(&big_sim()).unwrap();
    let doc = from_pose_graph(&out.graph);
    assert!(doc.records.len() + doc.vertices.len() >= 500);
    let text = write_g2o(&doc);
    let back = parse_g2o(&text).unwrap();
    assert_eq!(back, doc);
    assert_eq!(write_g2o(&back), text);
    let g = to_pose_graph::<Pose3>(&back).unwrap().graph;
    let (a, b) = (out.graph.chi2(out.graph.initial()).unwrap(), g.chi2(g.initial()).unwrap());
    assert!((a - b).abs() <= 1e-12 * a.max(1.0));
}

#[test]
fn g2o_round_trip_preserves_chi2_on_simulator_outputs() {
    for seed in 0..20 {
        let cfg = SimConfig { seed, ..SimConfig::default() };
        let g2 = generate::<Pose2>(&cfg).unwrap().graph;
        let g3 = generate::<Pose3>(&cfg).unwrap().graph;
        let back2 = to_pose_graph::<Pose2>(&parse_g2o(&write_g2o(&from_pose_graph(&g2))).unwrap()).unwrap().graph;
        let back3 = to_pose_graph::<Pose3>(&parse_g2o(&write_g2o(&from_pose_graph(&g3))).unwrap()).unwrap().graph;
        for (a, b) in [(g2.chi2(g2.initial()).unwrap(), back2.chi2(back2.initial()).unwrap()), (g3.chi2(g3.initial()).unwrap(), back3.chi2(back3.initial()).unwrap())] {
            assert!((a - b).abs() <= 1e-12 * a.max(1.0), "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn extension_lines_are_plain_comments() {
    let g = generate::<Pose3>(&SimConfig::default()).unwrap().graph;
    let text = write_g2o(&from_pose_graph(&g));
    for line in text.lines() {
        let tag = line.split_whitespace().next().unwrap();
        assert!(["VERTEX_SE3:QUAT", "EDGE_SE3:QUAT", "FIX", "#"].contains(&tag), "{line}");
    }
}

#[test]
fn tum_round_trip_on_ground_truth() {
    let out = generate::<Pose3>(&big_sim()).unwrap();
    let traj = TumTrajectory::from_poses(&out.ground_truth);
    let back = parse_tum(&write_tum(&traj)).unwrap();
    assert_eq!(back, traj);
}

#[test]
fn pfm_round_trip_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // values representable in f32 survive exactly
    let ch = [0; 3].map(|_| (0..64).map(|_| rng.random_range(0.0f32..10.0) as f64).collect());
    let img = PfmImage::Color(ImagePlanes::new(8, 8, ch).unwrap());
    let bytes = write_pfm(&img);
    assert_eq!(read_pfm(&bytes).unwrap(), img);
    assert_eq!(write_pfm(&read_pfm(&bytes).unwrap()), bytes);
}

#[test]
fn big_endian_pfm_is_byte_swapped() {
    // 2×2 gray, rows stored bottom to top
    let vals = [[1.5f32, 2.25], [0.125, 4.0]];
    let mut bytes = b"Pf\n2 2\n1.0\n".to_vec();
    for row in vals.iter().rev() {
        for v in row {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
    }
    let expect = Plane::new(2, 2, vec![1.5, 2.25, 0.125, 4.0]).unwrap();
    assert_eq!(read_pfm(&bytes).unwrap(), PfmImage::Gray(expect));
}

#[test]
fn parsers_survive_random_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let alphabet: &[u8] = b"VERTEX_SE2 EDGE_SE3:QUAT# MARVO DEPTH_PRIOR SCALE_EDGE FIX 0123456789.-e\n\r\t PfPF";
    for k in 0..10_000 {
        let len = rng.random_range(0..200);
        let bytes: Vec<u8> = if k % 2 == 0 {
            (0..len).map(|_| rng.random()).collect()
        } else {
            (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        };
        let _ = parse_g2o_bytes(&bytes);
        let _ = read_pfm(&bytes);
        if let Ok(s) = std::str::from_utf8(&bytes) {
            let _ = parse_tum(s);
        }
    }
}
