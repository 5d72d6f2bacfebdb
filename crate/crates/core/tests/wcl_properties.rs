use nalgebra::{Vector3, Vector6};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wcl_core::geometry::{invert, transform_cloud};
use wcl_core::ot::cost_from_points;
use wcl_core::refine::{generate_scene, SceneGeometry, SyntheticScene};
use wcl_core::wcl::wcl_pair_gradient;
use wcl_core::*;

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()))
        .collect()
}

fn cloud(points: Vec<Vector3<f64>>) -> PointCloud {
    PointCloud::new("A", "A", points).unwrap()
}

fn exact() -> WclConfig {
    WclConfig {
        solver: PairSolver::ExactOracle,
        ..WclConfig::default()
    }
}

fn converged(epsilon: f64) -> WclConfig {
    WclConfig {
        sinkhorn: SinkhornConfig {
            epsilon,
            max_iterations: 200_000,
            marginal_tolerance: 1e-13,
            ..SinkhornConfig::default()
        },
        ..WclConfig::default()
    }
}

/// Absolute ε in squared meters, as used by the pose refiner.
fn absolute() -> WclConfig {
    WclConfig {
        sinkhorn: SinkhornConfig {
            cost_normalization: CostNormalization::None,
            ..SinkhornConfig::default()
        },
        ..WclConfig::default()
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn flatten(v: &[Vector3<f64>]) -> Vec<f64> {
    v.iter().flat_map(|p| p.iter().copied().collect::<Vec<_>>()).collect()
}

/// Central differences of `f` in every coordinate of `x`.
fn fd_points(x: &[Vector3<f64>], h: f64, f: impl Fn(&[Vector3<f64>]) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..x.len() {
        for a in 0..3 {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i][a] += h;
            minus[i][a] -= h;
            out.push((f(&plus) - f(&minus)) / (2.0 * h));
        }
    }
    out
}

/// Lattice of well-separated points, 0.5 m apart.
fn lattice() -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out.push(Vector3::new(i as f64, j as f64, k as f64) * 0.5);
            }
        }
    }
    out
}

#[test]
fn translated_copy_costs_the_squared_shift() {
    let x = lattice();
    let cfg = converged(1e-3);
    for norm in [0.1, 1.0, 10.0] {
        let t = Vector3::new(1.0, -2.0, 0.5).normalize() * norm;
        let y: Vec<_> = x.iter().map(|p| p + t).collect();
        let value = wcl_pair(&cloud(x.clone()), &cloud(y), &cfg).unwrap();
        assert!((value - norm * norm).abs() <= 0.01 * norm * norm, "|t| = {norm}: {value}");
    }
}

#[test]
fn identical_clouds_cost_nothing_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = cloud(random_points(&mut rng, 7));
    assert_eq!(wcl_pair(&x, &x, &exact()).unwrap(), 0.0);
}

#[test]
fn six_point_pairs_match_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let x = cloud(random_points(&mut rng, 6));
        let y = cloud(random_points(&mut rng, 6));
        let reference = wcl_pair(&x, &y, &exact()).unwrap();
        let value = wcl_pair(&x, &y, &converged(1e-3)).unwrap();
        assert!((value - reference).abs() <= 0.02 * reference);
    }
}

#[test]
fn oracle_gradients_are_refused() {
    let x = cloud(vec![Vector3::zeros()]);
    assert!(matches!(
        wcl_pair_gradient(&x, &x, &exact()),
        Err(Error::UnsupportedInstance(_))
    ));
}

fn plane_scene() -> (DepthImage, DepthImage, Intrinsics) {
    let scene = SyntheticScene::new(SceneGeometry::Plane, 128, 64);
    let (a, b, _) = generate_scene(&scene, 0).unwrap();
    (a, b, scene.intrinsics)
}

#[test]
fn plane_scene_loss_tracks_the_pose_error() {
    let (a, b, k) = plane_scene();
    let sampler = GridSampler::default();
    let cfg = absolute();
    let at_truth = wcl_total(&a, &b, &k, &RigidTransform::identity(), &sampler, &cfg).unwrap();
    assert!(at_truth.loss <= 1e-6, "{}", at_truth.loss);
    assert!((at_truth.loss - (at_truth.term_a + at_truth.term_b)).abs() <= 1e-12);

    let shifted = RigidTransform::from_translation(Vector3::new(0.1, 0.0, 0.0));
    let off = wcl_total(&a, &b, &k, &shifted, &sampler, &cfg).unwrap();
    assert!((off.loss - 0.02).abs() <= 0.05 * 0.02, "{}", off.loss);

    let stretched = b.map(|d| d * 1.1).unwrap();
    let worse = wcl_total(&a, &stretched, &k, &RigidTransform::identity(), &sampler, &cfg).unwrap();
    assert!(worse.loss > at_truth.loss);
}

#[test]
fn identical_depth_maps_give_zero_loss_and_gradient() {
    let (a, _, k) = plane_scene();
    let sampler = GridSampler::new(16, 8);
    let id = RigidTransform::identity();
    let exact_loss = wcl_total(&a, &a, &k, &id, &sampler, &exact()).unwrap();
    assert_eq!(exact_loss.loss, 0.0);
    for mode in [GradientMode::Unrolled, GradientMode::Envelope] {
        let cfg = WclConfig {
            gradient_mode: mode,
            ..absolute()
        };
        let r = wcl_gradient(&a, &a, &k, &id, &sampler, &cfg).unwrap();
        assert!(r.loss <= 1e-6);
        let g = r.grads.unwrap();
        let norm = (flatten(&g.cloud_a).iter().chain(&flatten(&g.cloud_b)).map(|x| x * x).sum::<f64>()
            + g.pose.norm_squared())
        .sqrt();
        assert!(norm <= 1e-6, "{mode:?}: {norm}");
    }
}

#[test]
fn point_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    for _ in 0..5 {
        let x = random_points(&mut rng, 5);
        let y = random_points(&mut rng, 5);

        let unrolled = WclConfig {
            sinkhorn: SinkhornConfig {
                epsilon: 1e-2,
                ..SinkhornConfig::default()
            },
            ..WclConfig::default()
        };
        let g = wcl_pair_gradient(&cloud(x.clone()), &cloud(y.clone()), &unrolled).unwrap();
        let fx = fd_points(&x, h, |p| wcl_pair(&cloud(p.to_vec()), &cloud(y.clone()), &unrolled).unwrap());
        let fy = fd_points(&y, h, |p| wcl_pair(&cloud(x.clone()), &cloud(p.to_vec()), &unrolled).unwrap());
        assert!(rel_err(&flatten(&g.grad_x), &fx) <= 1e-4);
        assert!(rel_err(&flatten(&g.grad_y), &fy) <= 1e-4);

        let envelope = WclConfig {
            value_kind: ValueKind::RegularizedValue,
            gradient_mode: GradientMode::Envelope,
            ..converged(1e-2)
        };
        let g = wcl_pair_gradient(&cloud(x.clone()), &cloud(y.clone()), &envelope).unwrap();
        let fx = fd_points(&x, h, |p| wcl_pair(&cloud(p.to_vec()), &cloud(y.clone()), &envelope).unwrap());
        assert!(rel_err(&flatten(&g.grad_x), &fx) <= 1e-4);
    }
}

fn small_pair(rng: &mut ChaCha8Rng) -> (DepthImage, DepthImage, Intrinsics) {
    let k = Intrinsics::new(4.0, 4.0, 2.5, 1.5).unwrap();
    let a = DepthImage::from_fn(6, 4, |_, _| rng.random_range(2.0..3.0)).unwrap();
    let b = DepthImage::from_fn(6, 4, |_, _| rng.random_range(2.0..3.0)).unwrap();
    (a, b, k)
}

fn small_cfg() -> WclConfig {
    WclConfig {
        sinkhorn: SinkhornConfig {
            epsilon: 5e-2,
            max_iterations: 15,
            ..SinkhornConfig::default()
        },
        ..WclConfig::default()
    }
}

#[test]
fn depth_and_pose_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sampler = GridSampler::new(2, 1);
    let cfg = small_cfg();
    let h = 1e-6;
    for _ in 0..3 {
        let (a, b, k) = small_pair(&mut rng);
        let pose = RigidTransform::from_axis_angle(
            Vector3::new(0.02, -0.03, 0.01),
            Vector3::new(0.1, 0.05, -0.1),
        );
        let loss = |a: &DepthImage, b: &DepthImage, t: &RigidTransform| {
            wcl_total(a, b, &k, t, &sampler, &cfg).unwrap().loss
        };
        let g = wcl_gradient(&a, &b, &k, &pose, &sampler, &cfg).unwrap().grads.unwrap();

        let bump = |d: &DepthImage, idx: usize, delta: f64| {
            let mut v = d.values().to_vec();
            v[idx] += delta;
            DepthImage::new(d.width(), d.height(), v).unwrap()
        };
        let fd_a: Vec<f64> = (0..a.values().len())
            .map(|i| (loss(&bump(&a, i, h), &b, &pose) - loss(&bump(&a, i, -h), &b, &pose)) / (2.0 * h))
            .collect();
        let fd_b: Vec<f64> = (0..b.values().len())
            .map(|i| (loss(&a, &bump(&b, i, h), &pose) - loss(&a, &bump(&b, i, -h), &pose)) / (2.0 * h))
            .collect();
        assert!(rel_err(&g.depth_a, &fd_a) <= 1e-4);
        assert!(rel_err(&g.depth_b, &fd_b) <= 1e-4);
        // Pixels off the sampling lattice get no gradient.
        assert!(g.depth_a.iter().skip(1).step_by(2).all(|&x| x == 0.0));

        let fd_pose: Vec<f64> = (0..6)
            .map(|i| {
                let mut xi = Vector6::zeros();
                xi[i] = h;
                (loss(&a, &b, &pose.retract(&xi)) - loss(&a, &b, &pose.retract(&-xi))) / (2.0 * h)
            })
            .collect();
        assert!(rel_err(g.pose.as_slice(), &fd_pose) <= 1e-4);
    }
}

#[test]
fn swapping_the_frames_swaps_the_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, b, k) = small_pair(&mut rng);
    let t = RigidTransform::from_axis_angle(Vector3::new(0.1, 0.0, -0.05), Vector3::new(0.2, -0.1, 0.0));
    let cfg = small_cfg();
    let sampler = GridSampler::full();
    let ab = wcl_total(&a, &b, &k, &t, &sampler, &cfg).unwrap();
    let ba = wcl_total(&b, &a, &k, &invert(&t), &sampler, &cfg).unwrap();
    assert!((ab.term_a - ba.term_b).abs() <= 1e-9);
    assert!((ab.term_b - ba.term_a).abs() <= 1e-9);
    assert!((ab.loss - ba.loss).abs() <= 1e-9);
}

#[test]
fn unrolled_and_envelope_gradients_meet_as_epsilon_shrinks() {
    // Instances with a clear optimal matching; near-ties make the primal
    // gradient of the smoothed plan grow as ε shrinks.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let mut base = lattice();
        base.shuffle(&mut rng);
        base.truncate(5);
        let jitter = |p: &Vector3<f64>, rng: &mut ChaCha8Rng| {
            p + Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05))
        };
        let x = cloud(base.iter().map(|p| jitter(p, &mut rng)).collect());
        base.shuffle(&mut rng);
        let y = cloud(base.iter().map(|p| jitter(p, &mut rng)).collect());
        let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&eps| {
                let base = WclConfig {
                    sinkhorn: SinkhornConfig {
                        epsilon: eps,
                        max_iterations: 3000,
                        ..SinkhornConfig::default()
                    },
                    ..WclConfig::default()
                };
                let env = WclConfig {
                    gradient_mode: GradientMode::Envelope,
                    ..base.clone()
                };
                let u = wcl_pair_gradient(&x, &y, &base).unwrap();
                let e = wcl_pair_gradient(&x, &y, &env).unwrap();
                flatten(&u.grad_x)
                    .iter()
                    .zip(flatten(&e.grad_x))
                    .fold(0.0, |m: f64, (p, q)| m.max((p - q).abs()))
            })
            .collect();
        assert!(gaps[1] <= gaps[0] && gaps[2] <= gaps[1], "{gaps:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rigid_motion_leaves_the_value_unchanged(
        seed in any::<u64>(),
        m in 1usize..10,
        n in 1usize..10,
        w in prop::array::uniform3(-3.0f64..3.0),
        t in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cloud(random_points(&mut rng, m));
        let y = cloud(random_points(&mut rng, n));
        let motion = RigidTransform::from_axis_angle(Vector3::from(w), Vector3::from(t));
        let cfg = small_cfg();
        let before = wcl_pair(&x, &y, &cfg).unwrap();
        let after = wcl_pair(
            &transform_cloud(&x, &motion, "A").unwrap(),
            &transform_cloud(&y, &motion, "A").unwrap(),
            &cfg,
        ).unwrap();
        prop_assert!((before - after).abs() <= 1e-9);
    }

    #[test]
    fn point_order_does_not_matter(seed in any::<u64>(), m in 1usize..12, n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_points(&mut rng, m);
        let y = random_points(&mut rng, n);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<_> = order.iter().map(|&i| x[i]).collect();
        let cfg = small_cfg();
        let a = wcl_pair_gradient(&cloud(x.clone()), &cloud(y.clone()), &cfg).unwrap();
        let b = wcl_pair_gradient(&cloud(shuffled), &cloud(y.clone()), &cfg).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9);
        for (k, &i) in order.iter().enumerate() {
            prop_assert!((a.grad_x[i] - b.grad_x[k]).norm() <= 1e-9);
        }
    }

    #[test]
    fn exact_distance_is_a_metric(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [a, b, c] = [0, 1, 2].map(|_| cloud(random_points(&mut rng, n)));
        let d = |p: &PointCloud, q: &PointCloud| wcl_pair(p, q, &exact()).unwrap().sqrt();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(d(&a, &b) > 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-9);
        prop_assert!(d(&a, &b) <= d(&a, &c) + d(&c, &b) + 1e-9);
    }

    #[test]
    fn loss_is_never_negative(seed in any::<u64>(), m in 1usize..10, n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cloud(random_points(&mut rng, m));
        let y = cloud(random_points(&mut rng, n));
        prop_assert!(wcl_pair(&x, &y, &small_cfg()).unwrap() >= 0.0);
        prop_assert!(wcl_pair(&x, &y, &WclConfig::default()).unwrap() >= 0.0);
    }
}

#[test]
fn cost_from_points_matches_cloud_builder() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_points(&mut rng, 4);
    let y = random_points(&mut rng, 3);
    assert_eq!(
        cost_from_points(&x, &y).unwrap(),
        build_cost_matrix(&cloud(x), &cloud(y)).unwrap()
    );
}
