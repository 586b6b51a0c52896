use marine_pgo::io::{read_pfm, write_pfm, PfmImage};
use marine_pgo::radiance::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn planes(rng: &mut ChaCha8Rng, w: usize, h: usize, hi: f64) -> ImagePlanes {
    ImagePlanes::new(w, h, [0; 3].map(|_| (0..w * h).map(|_| rng.random_range(0.0..hi)).collect())).unwrap()
}

fn params(rng: &mut ChaCha8Rng, w: usize, h: usize, model: FormationModel) -> WaterParams {
    WaterParams {
        beta: ChannelField::PerPixel(planes(rng, w, h, 1.0)),
        b_inf: ChannelField::PerPixel(planes(rng, w, h, 0.5)),
        w_diffuse: [0; 3].map(|_| rng.random_range(0.85..1.15)),
        additive: ChannelField::PerPixel(planes(rng, w, h, 0.3)),
        model,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn invert_undoes_synthesize(seed: u64, diffuse: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = if diffuse { FormationModel::Diffuse } else { FormationModel::Saturating };
        let (w, h) = (6, 5);
        let j = planes(&mut rng, w, h, 1.0);
        // β ≤ 1 and z ≤ 8 keep β·z ≤ 8
        let z = RangeMap::new(Plane::new(w, h, (0..w * h).map(|_| rng.random_range(0.1..8.0)).collect()).unwrap()).unwrap();
        let p = params(&mut rng, w, h, model);
        let inv = invert(&synthesize(&j, &z, &p).unwrap(), &z, &p).unwrap();
        prop_assert_eq!(inv.clamped + inv.unrecoverable, 0);
        for c in 0..3 {
            for (a, b) in inv.radiance.channel(c).iter().zip(j.channel(c)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn saturating_output_is_convex_combination(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = planes(&mut rng, 4, 4, 1.0);
        let z = RangeMap::new(Plane::new(4, 4, (0..16).map(|_| rng.random_range(0.1..30.0)).collect()).unwrap()).unwrap();
        let p = params(&mut rng, 4, 4, FormationModel::Saturating);
        let i = synthesize(&j, &z, &p).unwrap();
        let ChannelField::PerPixel(b) = &p.b_inf else { unreachable!() };
        for c in 0..3 {
            for k in 0..16 {
                let (lo, hi) = (j.channel(c)[k].min(b.channel(c)[k]), j.channel(c)[k].max(b.channel(c)[k]));
                let v = i.channel(c)[k];
                prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn normalization_contract(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = planes(&mut rng, 5, 5, 100.0);
        let mask = Plane::new(5, 5, (0..25).map(|_| rng.random_range(0.0..3.0)).collect()).unwrap();
        let out = apply_mask(&f, &mask).unwrap();
        for k in 0..25 {
            let v = [0, 1, 2].map(|c| out.channels[c][k]);
            let mean = v.iter().sum::<f64>() / 3.0;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!(var <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn normalization_is_scale_invariant(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // disjoint channel bands keep every pixel's spread far above the floor
        let bands = [(0.0, 20.0), (40.0, 60.0), (80.0, 100.0)];
        let f = ImagePlanes::new(5, 5, bands.map(|(lo, hi)| (0..25).map(|_| rng.random_range(lo..hi)).collect())).unwrap();
        let scaled = ImagePlanes::new(5, 5, f.channels().clone().map(|c| c.iter().map(|x| 10.0 * x).collect())).unwrap();
        let ones = Plane::filled(5, 5, 1.0);
        let (a, b) = (apply_mask(&f, &ones).unwrap(), apply_mask(&scaled, &ones).unwrap());
        for c in 0..3 {
            for (x, y) in a.channels[c].iter().zip(&b.channels[c]) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn file_round_trip_within_single_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (w, h) = (8, 8);
    let j = planes(&mut rng, w, h, 1.0);
    let z = RangeMap::constant(w, h, 3.0).unwrap();
    let p = sample_params(5, Turbidity::Coastal, FormationModel::Saturating);
    let i = synthesize(&j, &z, &p).unwrap();
    let PfmImage::Color(read) = read_pfm(&write_pfm(&PfmImage::Color(i))).unwrap() else { panic!("color expected") };
    let inv = invert(&read, &z, &p).unwrap();
    for c in 0..3 {
        for (a, b) in inv.radiance.channel(c).iter().zip(j.channel(c)) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }
}

#[test]
fn undistorted_mask_is_near_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let i = ImagePlanes::new(6, 6, [0; 3].map(|_| (0..36).map(|_| rng.random_range(0.1..1.0)).collect())).unwrap();
    let eps = 1e-6;
    let g = correction_mask(&i, &i, eps).unwrap();
    for v in &g.data {
        assert!((v - 1.0).abs() <= eps / 0.1);
    }
}

#[test]
fn clear_water_green_mean() {
    let n = 100_000;
    let mean = (0..n)
        .map(|s| match sample_params(s, Turbidity::Clear, FormationModel::Saturating).beta {
            ChannelField::Constant(b) => b[1],
            _ => unreachable!(),
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.07).abs() < 0.002, "{mean}");
}

#[test]
fn red_attenuates_more_than_blue() {
    for t in [Turbidity::Clear, Turbidity::Coastal, Turbidity::Turbid] {
        for s in 0..10_000 {
            let ChannelField::Constant(b) = sample_params(s, t, FormationModel::Saturating).beta else { unreachable!() };
            assert!(b[0] > b[2]);
        }
    }
}
