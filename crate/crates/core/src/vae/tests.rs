use super::*;
use crate::grad::check::{check_param_gradients, relative_error};
use crate::mesh::{icosphere, Mesh};
use crate::rng::{seeded, standard_normal};
use alloc::vec;
use proptest::prelude::*;
use rand::Rng;

fn tiny_config() -> VaeConfig {
    VaeConfig {
        filters: 2,
        latent_dim: 3,
        encoder_widths: vec![4, 5],
        decoder_seed_width: 3,
        decoder_widths: vec![4],
        ring: 1,
        iterations: 20,
        batch_size: 2,
        learning_rate: 1e-2,
        ..VaeConfig::desk()
    }
}

fn sphere() -> Mesh {
    icosphere(0)
}

fn stretched(mesh: &Mesh, s: f64) -> Mesh {
    mesh.map_vertices(|v| [v[0] * s, v[1], v[2] / s]).unwrap()
}

#[test]
fn kl_closed_form_examples() {
    assert_eq!(kl_divergence(&[0.0; 4], &[0.0; 4]), 0.0);
    assert!((kl_divergence(&[1.0, 0.0, 0.0], &[0.0; 3]) - 0.5).abs() < 1e-15);
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = seeded(2024);
    let mu: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let log_var: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let closed = kl_divergence(&mu, &log_var);
    let samples = 1_000_000;
    let mut total = 0.0;
    for _ in 0..samples {
        let mut log_ratio = 0.0;
        for k in 0..4 {
            let sigma = crate::math::exp(0.5 * log_var[k]);
            let e = standard_normal(&mut rng);
            let z = mu[k] + sigma * e;
            // log q(z) − log p(z), constants cancel.
            log_ratio += -0.5 * e * e - 0.5 * log_var[k] + 0.5 * z * z;
        }
        total += log_ratio;
    }
    let estimate = total / samples as f64;
    assert!(
        (estimate - closed).abs() < 0.01 * closed,
        "closed {closed} estimate {estimate}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kl_is_non_negative_and_vanishes_only_at_prior(
        mu in proptest::collection::vec(-5.0f64..5.0, 1..8),
        lv_seed in 0u64..1000,
    ) {
        let mut rng = seeded(lv_seed);
        let log_var: Vec<f64> = mu.iter().map(|_| rng.random_range(-5.0..5.0)).collect();
        let kl = kl_divergence(&mu, &log_var);
        prop_assert!(kl >= 0.0);
        if kl < 1e-12 {
            prop_assert!(mu.iter().chain(&log_var).all(|x| x.abs() < 1e-5));
        }
    }
}

#[test]
fn encode_and_decode_are_deterministic_and_finite() {
    let mesh = sphere();
    let model = VaeModel::new(&mesh, &tiny_config()).unwrap();
    let a = model.encode(&mesh).unwrap();
    let b = model.encode(&mesh).unwrap();
    assert_eq!(a, b);
    assert!(a.mu.iter().chain(&a.log_var).all(|x| x.is_finite()));
    let z = LatentVector::zeros(3);
    let x = model.decode(&z).unwrap();
    assert!(x.same_topology(&mesh));
    assert_eq!(x.vertices(), model.decode(&z).unwrap().vertices());
}

#[test]
fn topology_and_dimension_are_checked() {
    let mesh = sphere();
    let model = VaeModel::new(&mesh, &tiny_config()).unwrap();
    assert!(matches!(
        model.encode(&icosphere(1)),
        Err(Error::TopologyMismatch { .. })
    ));
    assert!(matches!(
        model.decode(&LatentVector::zeros(4)),
        Err(Error::DimensionMismatch { expected: 3, got: 4 })
    ));
}

#[test]
fn interpolation_and_arithmetic_endpoints() {
    let mesh = sphere();
    let model = VaeModel::new(&mesh, &tiny_config()).unwrap();
    let za = LatentVector::new(vec![0.3, -1.0, 2.0]).unwrap();
    let zb = LatentVector::new(vec![-0.7, 0.4, 0.1]).unwrap();
    let da = model.decode(&za).unwrap();
    let db = model.decode(&zb).unwrap();
    assert_eq!(model.interpolate(&za, &zb, 0.0).unwrap().vertices(), da.vertices());
    assert_eq!(model.interpolate(&za, &zb, 1.0).unwrap().vertices(), db.vertices());
    assert_eq!(model.interpolate(&za, &za, 0.5).unwrap().vertices(), da.vertices());
    assert_eq!(
        model.latent_arithmetic(&za, &zb, &za, 0.0).unwrap().vertices(),
        da.vertices()
    );
    for alpha in [-2.0, 0.3, 5.0] {
        assert_eq!(
            model.latent_arithmetic(&za, &zb, &zb, alpha).unwrap().vertices(),
            da.vertices()
        );
    }
}

#[test]
fn loss_components_follow_definitions() {
    let mesh = sphere();
    let model = VaeModel::new(&mesh, &tiny_config()).unwrap();
    let enc = model.encode(&mesh).unwrap();
    let decoded = model.decode(&enc.mean()).unwrap();
    let mut sq = 0.0;
    for (a, b) in decoded.vertices().iter().zip(mesh.vertices()) {
        for k in 0..3 {
            sq += (a[k] - b[k]).powi(2);
        }
    }
    let loss = model.loss(&mesh, 0.25).unwrap();
    assert!((loss.recon - sq.sqrt()).abs() < 1e-12);
    assert!((loss.prior - kl_divergence(&enc.mu, &enc.log_var)).abs() < 1e-12);
    assert!((loss.total - (loss.recon + 0.25 * loss.prior)).abs() < 1e-12);
}

#[test]
fn sample_loss_gradients_match_finite_differences() {
    let mesh = sphere();
    for seed in 0..3u64 {
        let config = VaeConfig { seed, ..tiny_config() };
        let model = VaeModel::new(&mesh, &config).unwrap();
        let target = stretched(&mesh, 1.2);
        let x = Tensor::from_points(target.vertices());
        let mut rng = seeded(seed + 10);
        let eps: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
        let report = check_param_gradients(model.params(), 1e-6, |tape| {
            Ok(model.sample_loss_on(tape, &x, &eps, 0.3)?[0])
        })
        .unwrap();
        assert!(
            report.max_relative_error < 1e-5,
            "seed {seed}: {}",
            report.max_relative_error
        );
    }
}

#[test]
fn decoder_vector_jacobian_products_match_finite_differences() {
    let mesh = sphere();
    let model = VaeModel::new(&mesh, &tiny_config()).unwrap();
    let mut rng = seeded(5);
    let z: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
    let weights: Vec<[f64; 3]> = (0..mesh.vertex_count())
        .map(|_| {
            [
                standard_normal(&mut rng),
                standard_normal(&mut rng),
                standard_normal(&mut rng),
            ]
        })
        .collect();
    let objective = |z: &[f64]| -> f64 {
        let x = model.decode_points(&LatentVector::new(z.to_vec()).unwrap()).unwrap();
        x.iter()
            .zip(&weights)
            .map(|(p, w)| p[0] * w[0] + p[1] * w[1] + p[2] * w[2])
            .sum()
    };
    let mut tape = Tape::frozen(model.params());
    let zv = tape.input(Tensor::row(z.clone())).unwrap();
    let x = model.decode_on(&mut tape, zv).unwrap();
    let w = tape.constant(Tensor::from_points(&weights)).unwrap();
    let y = tape.mul(x, w).unwrap();
    let y = tape.sum(y, None).unwrap();
    let analytic = tape.backward(y).unwrap().wrt(zv).unwrap().clone();
    let h = 1e-6;
    let numeric: Vec<f64> = (0..3)
        .map(|k| {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus[k] += h;
            minus[k] -= h;
            (objective(&plus) - objective(&minus)) / (2.0 * h)
        })
        .collect();
    let err = relative_error(&analytic, &Tensor::row(numeric));
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn augmentation_keeps_topology_and_noise_law() {
    let mesh = icosphere(2);
    let aug = Augmentation {
        enabled: true,
        noise: 0.01,
        translation: 0.0,
        scale_min: 1.0,
        scale_max: 1.0,
    };
    let radius = crate::mesh::shape_radius(&mesh);
    let sigma = aug.noise * radius;
    let mut rng = seeded(8);
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    while count < 10_000 {
        let out = augment(mesh.vertices(), &aug, &mut rng);
        let moved = mesh.with_vertices(out.clone()).unwrap();
        assert!(moved.same_topology(&mesh));
        for (a, b) in out.iter().zip(mesh.vertices()) {
            for k in 0..3 {
                sum_sq += (a[k] - b[k]).powi(2);
                count += 1;
            }
        }
    }
    let std = (sum_sq / count as f64).sqrt();
    assert!((std - sigma).abs() < 0.1 * sigma, "std {std} sigma {sigma}");
}

#[test]
fn augmentation_translation_is_planar_and_bounded() {
    let mesh = icosphere(1);
    let aug = Augmentation {
        enabled: true,
        noise: 0.0,
        translation: 0.1,
        scale_min: 0.9,
        scale_max: 1.1,
    };
    let c0 = mesh.centroid();
    let mut rng = seeded(9);
    for _ in 0..200 {
        let out = augment(mesh.vertices(), &aug, &mut rng);
        let c = crate::mesh::centroid(&out);
        assert!((c[2] - c0[2]).abs() < 1e-12);
        assert!((c[0] - c0[0]).abs() <= 0.1 + 1e-12 && (c[1] - c0[1]).abs() <= 0.1 + 1e-12);
        let r = crate::mesh::points_radius(&out);
        assert!((0.9 - 1e-12..=1.1 + 1e-12).contains(&r));
    }
}

#[test]
fn training_is_bit_reproducible() {
    let data = vec![sphere(), stretched(&sphere(), 1.3), stretched(&sphere(), 0.8)];
    let config = tiny_config();
    let a = train(&data, &config).unwrap();
    let b = train(&data, &config).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.status, TrainStatus::Completed);
    assert_eq!(a.curve.len(), config.iterations);
    for (pa, pb) in a
        .model
        .params()
        .iter()
        .zip(b.model.params().iter())
        .map(|((_, x), (_, y))| (x, y))
    {
        assert_eq!(pa.value(), pb.value());
    }
}

#[test]
fn training_reduces_reconstruction_on_one_shape() {
    let data = vec![stretched(&sphere(), 1.4)];
    let config = VaeConfig {
        iterations: 400,
        augmentation: Augmentation::disabled(),
        ..tiny_config()
    };
    let initial = VaeModel::new(&data[0], &config)
        .unwrap()
        .loss(&data[0], 0.0)
        .unwrap()
        .recon;
    let out = train(&data, &config).unwrap();
    let fin = out.model.loss(&data[0], 0.0).unwrap().recon;
    assert!(fin < 0.2 * initial, "initial {initial} final {fin}");
}

#[test]
fn divergence_stops_with_last_good_parameters() {
    let mesh = sphere();
    let config = tiny_config();
    let mut model = VaeModel::new(&mesh, &config).unwrap();
    let id = model.params().find("encoder.log_var.bias").unwrap();
    model.params_mut().set_value(id, Tensor::row(vec![1e4; 3])).unwrap();
    let before: Vec<Tensor> = model.params().iter().map(|(_, p)| p.value().clone()).collect();
    let out = train_from(model, &[mesh], &config, &Sequential, &mut |_| {}).unwrap();
    assert_eq!(out.status, TrainStatus::Diverged { iteration: 0 });
    assert!(out.curve.is_empty());
    let after: Vec<Tensor> = out.model.params().iter().map(|(_, p)| p.value().clone()).collect();
    assert_eq!(before, after);
}

#[test]
fn named_parameters_round_trip() {
    let mesh = sphere();
    let a = VaeModel::new(&mesh, &tiny_config()).unwrap();
    let mut b = VaeModel::new(
        &mesh,
        &VaeConfig {
            seed: 99,
            ..tiny_config()
        },
    )
    .unwrap();
    let named: Vec<(alloc::string::String, Tensor)> = a
        .params()
        .iter()
        .map(|(_, p)| (p.name().into(), p.value().clone()))
        .collect();
    b.load_named(&named).unwrap();
    let z = LatentVector::new(vec![0.1, 0.2, 0.3]).unwrap();
    assert_eq!(a.decode(&z).unwrap().vertices(), b.decode(&z).unwrap().vertices());
    assert!(b.load_named(&named[1..]).is_err());
}

#[test]
fn presets_validate() {
    for name in ["paper", "desk", "face"] {
        VaeConfig::preset(name).unwrap().validate().unwrap();
    }
    let paper = VaeConfig::paper();
    assert_eq!((paper.filters, paper.latent_dim, paper.batch_size), (8, 128, 2));
    assert_eq!(paper.lambda, 1e-8);
    assert_eq!(VaeConfig::face().latent_dim, 32);
    assert_eq!(VaeConfig::face().encoder_widths.len(), 2);
}
