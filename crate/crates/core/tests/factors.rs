use marine_pgo::graph::{Factor, InfoMatrix, MatchStats, Values, VariableKind};
use marine_pgo::lie::{LieGroup, Pose2, Pose3, Rot3};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

trait RandPose: LieGroup {
    fn random(rng: &mut ChaCha8Rng, spread: f64) -> Self;
}

impl RandPose for Pose2 {
    fn random(rng: &mut ChaCha8Rng, spread: f64) -> Self {
        Pose2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-spread..spread))
    }
}

impl RandPose for Pose3 {
    fn random(rng: &mut ChaCha8Rng, spread: f64) -> Self {
        let phi = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        Pose3::new(t, Rot3::exp(&(phi * spread / 3f64.sqrt())))
    }
}

/// Central differences of the residual with respect to every variable the
/// factor touches.
fn numeric_blocks<P: LieGroup>(f: &Factor<P>, values: &Values<P>) -> Vec<DMatrix<f64>> {
    let lin = f.linearize(values).unwrap();
    lin.blocks
        .iter()
        .map(|(id, j)| {
            let mut num = DMatrix::zeros(j.nrows(), j.ncols());
            for k in 0..j.ncols() {
                let eval = |h: f64| {
                    let mut v = values.clone();
                    match id.kind {
                        VariableKind::Scale => v.log_scales[id.index] += h,
                        _ => {
                            let mut e = DVector::zeros(P::DOF);
                            e[k] = h;
                            v.poses[id.index] = v.poses[id.index].retract(&e);
                        }
                    }
                    f.residual(&v).unwrap()
                };
                num.set_column(k, &((eval(H) - eval(-H)) / (2.0 * H)));
            }
            num
        })
        .collect()
}

fn max_jacobian_error<P: LieGroup>(f: &Factor<P>, values: &Values<P>) -> f64 {
    let lin = f.linearize(values).unwrap();
    numeric_blocks(f, values).iter().zip(&lin.blocks).map(|(n, (_, a))| (n - a).amax()).fold(0.0, f64::max)
}

fn instances<P: RandPose>(seed: u64, n: usize) -> Vec<(Factor<P>, Values<P>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in 0..n {
        let values = Values { poses: vec![P::random(&mut rng, 2.5), P::random(&mut rng, 2.5)], log_scales: vec![rng.random_range(-1.0..1.0)] };
        let info = InfoMatrix::identity(P::DOF);
        let measured = P::random(&mut rng, 2.5);
        let f = match k % 5 {
            0 => Factor::Odometry { from: 0, to: 1, measured, info },
            1 => Factor::LoopClosure { from: 1, to: 0, measured, info },
            2 => Factor::DepthPrior { pose: 0, depth: rng.random_range(-3.0..3.0), sigma: 0.1 },
            3 => Factor::VisualScaled { from: 0, to: 1, measured, scale: 0, info, stats: Some(MatchStats::new(150, 0.4).unwrap()) },
            _ => Factor::AnchorPrior { pose: 1, prior: measured, info },
        };
        out.push((f, values));
    }
    out
}

/// Instances whose residual rotation sits near ±π are skipped: Log is not
/// differentiable there.
fn away_from_cut<P: LieGroup>(f: &Factor<P>, v: &Values<P>) -> bool {
    let r = f.residual(v).unwrap();
    let rot = match r.len() {
        3 => r[2].abs(),
        6 => r.rows(3, 3).norm(),
        _ => 0.0,
    };
    rot < 3.0
}

#[test]
fn planar_jacobians_match_finite_differences() {
    let mut worst = 0.0f64;
    for (f, v) in instances::<Pose2>(1, 1000).iter().filter(|(f, v)| away_from_cut(f, v)) {
        worst = worst.max(max_jacobian_error(f, v));
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn spatial_jacobians_match_finite_differences() {
    let mut worst = 0.0f64;
    let mut kinds = std::collections::BTreeSet::new();
    for (f, v) in instances::<Pose3>(2, 1000).iter().filter(|(f, v)| away_from_cut(f, v)) {
        kinds.insert(f.kind().name());
        worst = worst.max(max_jacobian_error(f, v));
    }
    assert_eq!(kinds.len(), 5);
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn chi2_is_weighted_square() {
    for (f, v) in instances::<Pose3>(3, 50) {
        let r = f.residual(&v).unwrap();
        let expect = (r.transpose() * f.info().matrix() * &r)[(0, 0)];
        assert!((f.chi2(&v).unwrap() - expect).abs() <= 1e-12 * expect.max(1.0));
    }
}
