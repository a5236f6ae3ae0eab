use super::*;
use crate::mesh::icosphere;
use crate::rng::standard_normal;
use crate::vae::VaeConfig;
use alloc::vec;
use rand::Rng;

fn tiny_model() -> VaeModel {
    let config = VaeConfig {
        filters: 2,
        latent_dim: 3,
        encoder_widths: vec![4],
        decoder_seed_width: 4,
        decoder_widths: vec![6],
        ring: 1,
        pooling: crate::vae::Pooling::Mean,
        ..VaeConfig::desk()
    };
    VaeModel::new(&icosphere(1), &config).unwrap()
}

fn random_points(seed: u64, n: usize) -> Vec<[f64; 3]> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            [
                standard_normal(&mut rng),
                standard_normal(&mut rng),
                standard_normal(&mut rng),
            ]
        })
        .collect()
}

#[test]
fn dissimilarity_examples() {
    let full = random_points(1, 10);
    let corr = Correspondence::new(vec![(0, 3), (1, 7), (2, 1), (3, 9)], None).unwrap();
    let points: Vec<[f64; 3]> = corr.pairs().iter().map(|&(_, r)| full[r]).collect();
    let id = RigidTransform::IDENTITY;
    assert_eq!(dissimilarity(&full, &points, &corr, &id, false).unwrap(), 0.0);

    let t = [0.5, -2.0, 3.0];
    let moved: Vec<[f64; 3]> = points.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
    let back = RigidTransform::translation([-t[0], -t[1], -t[2]]);
    assert!(dissimilarity(&full, &moved, &corr, &back, false).unwrap() < 1e-12);

    let noisy = random_points(2, 4);
    let weighted = Correspondence::new(corr.pairs().to_vec(), Some(vec![0.5; 4])).unwrap();
    let brute: f64 = weighted
        .pairs()
        .iter()
        .enumerate()
        .map(|(k, &(p, r))| {
            let d: f64 = (0..3).map(|i| (full[r][i] - noisy[p][i]).powi(2)).sum();
            weighted.weight(k) * d
        })
        .sum::<f64>()
        .sqrt();
    let ours = dissimilarity(&full, &noisy, &weighted, &id, true).unwrap();
    assert!((ours - brute).abs() < 1e-12);
    let plain = dissimilarity(&full, &noisy, &weighted, &id, false).unwrap();
    assert!((ours - 0.5f64.sqrt() * plain).abs() < 1e-12);

    let empty = Correspondence::new(vec![], None).unwrap();
    assert_eq!(
        dissimilarity(&full, &points, &empty, &id, false),
        Err(Error::EmptyCorrespondence)
    );
}

#[test]
fn refinement_maps_points_to_their_vertices() {
    let full = random_points(3, 30);
    let points: Vec<[f64; 3]> = [4, 11, 17, 29].iter().map(|&i| full[i]).collect();
    let corr = refine_correspondence(&points, &full, &RigidTransform::IDENTITY).unwrap();
    assert_eq!(corr.pairs(), &[(0, 4), (1, 11), (2, 17), (3, 29)]);
}

#[test]
fn refinement_keeps_the_closer_of_two_claimants() {
    let full = vec![[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
    let points = vec![[0.3, 0.0, 0.0], [0.1, 0.0, 0.0]];
    let corr = refine_correspondence(&points, &full, &RigidTransform::IDENTITY).unwrap();
    assert_eq!(corr.pairs(), &[(1, 0)]);
}

#[test]
fn filter_thresholds() {
    let full = random_points(4, 12);
    let mut points: Vec<[f64; 3]> = (0..6).map(|i| full[i]).collect();
    points[2][0] += 0.5;
    points[4][1] -= 2.0;
    let corr = Correspondence::new((0..6).map(|k| (k, k)).collect(), None).unwrap();
    let id = RigidTransform::IDENTITY;
    let all = filter_correspondence(&points, &full, &corr, &id, Some(f64::INFINITY)).unwrap();
    assert_eq!(all, corr);
    let exact = filter_correspondence(&points, &full, &corr, &id, Some(0.0)).unwrap();
    assert_eq!(exact.pairs(), &[(0, 0), (1, 1), (3, 3), (5, 5)]);
    let default = filter_correspondence(&points, &full, &corr, &id, None).unwrap();
    assert_eq!(default.len(), 4);
}

#[test]
fn default_threshold_is_twice_the_median() {
    assert_eq!(default_filter_threshold(&[3.0, 1.0, 2.0]), 4.0);
    assert_eq!(default_filter_threshold(&[1.0, 2.0, 3.0, 4.0]), 5.0);
}

#[test]
fn zero_iterations_give_one_entry() {
    let model = tiny_model();
    let target = model.decode(&LatentVector::new(vec![0.5, -0.2, 0.8]).unwrap()).unwrap();
    let points = target.vertices().to_vec();
    let corr = Correspondence::identity(points.len());
    let config = CompletionConfig {
        max_iters: 0,
        init: LatentInit::Zero,
        ..CompletionConfig::default()
    };
    let out = complete(&points, &corr, &model, &config, None).unwrap();
    assert_eq!(out.trace.len(), 1);
    let init = model.decode_points(&LatentVector::zeros(3)).unwrap();
    let t = rigid_step(&init, &points, &corr, false).unwrap();
    let expected = seen_error(&init, &points, &corr, &t);
    assert_eq!(out.trace.entries[0].seen_error, expected);
    assert_eq!(out.latent.as_slice(), &[0.0; 3]);
}

#[test]
fn recovers_a_decodable_shape_from_full_view() {
    let model = tiny_model();
    let truth = LatentVector::new(vec![0.4, -0.3, 0.2]).unwrap();
    let target = model.decode(&truth).unwrap();
    let motion = RigidTransform::translation([0.2, -0.1, 0.3]);
    let points = motion.apply_all(target.vertices());
    let corr = Correspondence::identity(points.len());
    let config = CompletionConfig {
        max_iters: 3000,
        learning_rate: 0.01,
        rigid_period: 5,
        init: LatentInit::Zero,
        ..CompletionConfig::default()
    };
    let out = complete(&points, &corr, &model, &config, None).unwrap();
    let radius = crate::mesh::shape_radius(&target);
    let last = out.trace.entries.last().unwrap().seen_error;
    assert!(last < 1e-3 * radius, "seen error {last} radius {radius}");
}

#[test]
fn rigid_steps_never_increase_the_objective() {
    let model = tiny_model();
    let target = model.decode(&LatentVector::new(vec![-0.6, 0.9, 0.1]).unwrap()).unwrap();
    let mut rng = seeded(7);
    let points: Vec<[f64; 3]> = target
        .vertices()
        .iter()
        .map(|v| v.map(|x| x + 0.05 * rng.random_range(-1.0..1.0)))
        .collect();
    let corr = Correspondence::identity(points.len());
    let out = complete(&points, &corr, &model, &CompletionConfig::default(), None).unwrap();
    let steps: Vec<&RigidStepRecord> = out.trace.entries.iter().filter_map(|e| e.rigid_step.as_ref()).collect();
    assert_eq!(steps.len(), CompletionConfig::default().max_iters / 10);
    for s in steps {
        assert!(s.objective_after <= s.objective_before + 1e-10);
    }
}

#[test]
fn completion_is_deterministic() {
    let model = tiny_model();
    let target = model.decode(&LatentVector::new(vec![0.2, 0.2, -0.5]).unwrap()).unwrap();
    let points: Vec<[f64; 3]> = target.vertices()[..20].to_vec();
    let corr = Correspondence::identity(20);
    let config = CompletionConfig {
        max_iters: 50,
        seed: 3,
        ..CompletionConfig::default()
    };
    let a = complete(&points, &corr, &model, &config, None).unwrap();
    let b = complete(&points, &corr, &model, &config, None).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.mesh.vertices(), b.mesh.vertices());
}

#[test]
fn trace_reports_unseen_error_against_ground_truth() {
    let model = tiny_model();
    let target = model.decode(&LatentVector::new(vec![0.3, 0.0, -0.3]).unwrap()).unwrap();
    let n = target.vertex_count();
    let mask: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
    let seen: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    let points: Vec<[f64; 3]> = seen.iter().map(|&i| target.vertices()[i]).collect();
    let corr = Correspondence::new(seen.iter().enumerate().map(|(k, &i)| (k, i)).collect(), None).unwrap();
    let config = CompletionConfig {
        max_iters: 5,
        ..CompletionConfig::default()
    };
    let truth = GroundTruth {
        vertices: target.vertices(),
        mask: &mask,
    };
    let out = complete(&points, &corr, &model, &config, Some(truth)).unwrap();
    let last = out.trace.entries.last().unwrap();
    let inv_frame = out.mesh_in_partial_frame().unwrap();
    let brute: f64 = (0..n)
        .filter(|&i| !mask[i])
        .map(|i| {
            let (a, b) = (inv_frame.vertices()[i], target.vertices()[i]);
            (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
        })
        .sum::<f64>()
        / (n - seen.len()) as f64;
    assert!((last.unseen_error.unwrap() - brute).abs() < 1e-9);
}

#[test]
fn dissimilarity_gradient_matches_finite_differences() {
    let model = tiny_model();
    let target = model.decode(&LatentVector::new(vec![0.7, -0.1, 0.4]).unwrap()).unwrap();
    let points: Vec<[f64; 3]> = target.vertices()[5..30].to_vec();
    let corr = Correspondence::new((0..25).map(|k| (k, k + 5)).collect(), None).unwrap();
    let t = RigidTransform::translation([0.1, 0.0, -0.2]);
    let z = vec![0.1, 0.3, -0.2];
    let objective = |z: &[f64]| {
        let x = model.decode_points(&LatentVector::new(z.to_vec()).unwrap()).unwrap();
        dissimilarity(&x, &points, &corr, &t, false).unwrap()
    };
    let mut tape = Tape::frozen(model.params());
    let zv = tape.input(Tensor::row(z.clone())).unwrap();
    let x = model.decode_on(&mut tape, zv).unwrap();
    let idx: alloc::sync::Arc<[usize]> = corr.pairs().iter().map(|p| p.1).collect();
    let sel = tape.gather_rows(x, idx).unwrap();
    let aligned = tape.constant(Tensor::from_points(&t.apply_all(&points))).unwrap();
    let r = tape.sub(sel, aligned).unwrap();
    let d = tape.l2_norm(r).unwrap();
    let analytic = tape.backward(d).unwrap().wrt(zv).unwrap().clone();
    let h = 1e-6;
    let numeric: Vec<f64> = (0..3)
        .map(|k| {
            let (mut p, mut m) = (z.clone(), z.clone());
            p[k] += h;
            m[k] -= h;
            (objective(&p) - objective(&m)) / (2.0 * h)
        })
        .collect();
    let err = crate::grad::check::relative_error(&analytic, &Tensor::row(numeric));
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn fusion_rules() {
    let model = tiny_model();
    let a = LatentVector::new(vec![0.1, 0.7, -0.3]).unwrap();
    let b = LatentVector::new(vec![-0.4, 0.2, 0.9]).unwrap();
    let c = LatentVector::new(vec![1e-3, -2.0, 0.25]).unwrap();
    assert_eq!(
        fuse(core::slice::from_ref(&a), &model).unwrap().vertices(),
        model.decode(&a).unwrap().vertices()
    );
    assert_eq!(
        fuse(&[a.clone(), a.clone(), a.clone()], &model).unwrap().vertices(),
        model.decode(&a).unwrap().vertices()
    );
    let abc = fuse(&[a.clone(), b.clone(), c.clone()], &model).unwrap();
    let cab = fuse(&[c, a, b], &model).unwrap();
    assert_eq!(abc.vertices(), cab.vertices());
    assert_eq!(fuse(&[], &model).unwrap_err(), Error::EmptyInput("latent list"));
}

#[test]
fn hypotheses_use_distinct_initializations() {
    let model = tiny_model();
    let target = model.decode(&LatentVector::new(vec![0.2, 0.2, 0.2]).unwrap()).unwrap();
    let points: Vec<[f64; 3]> = target.vertices()[..10].to_vec();
    let corr = Correspondence::identity(10);
    let config = CompletionConfig {
        max_iters: 3,
        ..CompletionConfig::default()
    };
    let runs = complete_hypotheses(&points, &corr, &model, &config, None, &[1, 2, 3]).unwrap();
    assert_eq!(runs.len(), 3);
    assert_ne!(runs[0].trace.entries[0].z_hash, runs[1].trace.entries[0].z_hash);
}

#[test]
fn multi_start_keeps_the_lowest_objective_run() {
    let model = tiny_model();
    let target = model.decode(&LatentVector::new(vec![0.5, -0.2, 0.8]).unwrap()).unwrap();
    let points = target.vertices().to_vec();
    let corr = Correspondence::identity(points.len());
    let base = CompletionConfig {
        max_iters: 20,
        seed: 9,
        ..CompletionConfig::default()
    };
    let singles: Vec<Completion> = (0..4)
        .map(|k| {
            let cfg = CompletionConfig {
                seed: crate::rng::derive_seed(9, k),
                ..base.clone()
            };
            complete(&points, &corr, &model, &cfg, None).unwrap()
        })
        .collect();
    let best = CompletionConfig { starts: 4, ..base };
    let out = complete(&points, &corr, &model, &best, None).unwrap();
    let objective = |c: &Completion| c.trace.entries.last().unwrap().objective;
    let lowest = singles.iter().map(objective).fold(f64::INFINITY, f64::min);
    assert_eq!(objective(&out), lowest);
    assert!(singles.iter().any(|s| s.latent == out.latent));
}

#[test]
fn zero_starts_is_rejected() {
    let config = CompletionConfig {
        starts: 0,
        ..CompletionConfig::default()
    };
    assert!(matches!(config.validate(), Err(Error::InvalidConfig(_))));
}
