use std::sync::atomic::AtomicUsize;

use invgeo::autodiff::{evaluate, finite_difference_jacobian, gradient, Activation, Tensor};
use invgeo::geometry::alignment_score;
use invgeo::inversion::{
    alignment_dynamics, inversion_loss, invert, invert_from, latent_step, paa_gradient, taa_gradient, InversionConfig,
    InversionObjective, Smoothing, TransformSet,
};
use invgeo::models::{Classifier, Generator, LossKind, OracleConfig};
use invgeo::rng;

fn setup(seed: u64) -> (Classifier, Generator) {
    let g = Generator::oracle(&OracleConfig::default(), seed).unwrap();
    let c = Classifier::random(g.ambient_dim(), &[16, 16], 5, Activation::Tanh, &mut rng::stream(seed, "c"));
    (c, g)
}

#[test]
fn objective_reduces_to_class_loss() {
    let (c, g) = setup(1);
    let z = vec![0.4, -0.3, 1.2, 0.1];
    let x = g.sample(&z).unwrap();
    for kind in [LossKind::CrossEntropy, LossKind::Logit] {
        let l = inversion_loss(&z, 2, &c, &g, 0.0, kind).unwrap();
        assert_eq!(l, c.class_loss(&x, 2, kind).unwrap());
        let obj = InversionObjective {
            classifier: &c,
            generator: &g,
            target: 2,
            lambda: 0.0,
            loss: kind,
        };
        let v = evaluate(&obj, &Tensor::vector(z.clone())).unwrap().data()[0];
        assert!((v - l).abs() < 1e-12);
    }
    let zero = vec![0.0; 4];
    let at_origin = g.sample(&zero).unwrap();
    let l = inversion_loss(&zero, 1, &c, &g, 1.0, LossKind::CrossEntropy).unwrap();
    assert_eq!(l, c.class_loss(&at_origin, 1, LossKind::CrossEntropy).unwrap());
}

#[test]
fn latent_gradient_matches_central_differences() {
    let (c, g) = setup(2);
    let obj = InversionObjective {
        classifier: &c,
        generator: &g,
        target: 3,
        lambda: 0.1,
        loss: LossKind::CrossEntropy,
    };
    let z = Tensor::vector(vec![0.2, -0.7, 0.5, 0.9]);
    let a = gradient(&obj, &z, &Tensor::vector(vec![1.0])).unwrap().into_data();
    let fd = finite_difference_jacobian(&obj, &z, 1e-5).unwrap().into_data();
    for (x, y) in a.iter().zip(&fd) {
        assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-3), "{x} vs {y}");
    }
}

#[test]
fn zero_step_size_single_step_is_a_no_op() {
    let (c, g) = setup(3);
    let cfg = InversionConfig {
        steps: 1,
        step_size: 0.0,
        ..InversionConfig::default()
    };
    let z0 = vec![0.1, 0.2, 0.3, 0.4];
    let run = invert_from(&c, &g, 0, z0.clone(), &cfg).unwrap();
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.final_z, z0);
}

#[test]
fn pullback_update_is_jacobian_transpose_plus_prior() {
    let (c, g) = setup(4);
    let cfg = InversionConfig::default();
    let z = vec![-0.5, 0.3, 0.8, -0.2];
    let step = latent_step(&c, &g, 1, &z, 0, &cfg, &AtomicUsize::new(0)).unwrap();
    let jac = g.jacobian(&z).unwrap();
    let (_, gx) = c.loss_gradient(&g.sample(&z).unwrap(), 1, cfg.loss).unwrap();
    let want: Vec<f64> = jac.matvec_t(&gx).iter().zip(&z).map(|(a, b)| a + cfg.lambda * b).collect();
    for (a, b) in step.direction.iter().zip(&want) {
        assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
    }
}

#[test]
fn pushed_forward_latent_gradient_lies_in_the_tangent_space() {
    let (c, g) = setup(5);
    let z = vec![0.3, 0.3, -1.0, 0.5];
    let cfg = InversionConfig {
        lambda: 0.0,
        ..InversionConfig::default()
    };
    let step = latent_step(&c, &g, 4, &z, 0, &cfg, &AtomicUsize::new(0)).unwrap();
    let pushed = g.jacobian(&z).unwrap().matvec(&step.direction);
    let p = g.tangent(&z).unwrap();
    assert!((alignment_score(&p, &pushed).unwrap().value - 1.0).abs() < 1e-10);
}

#[test]
fn tracked_steps_and_dynamics_of_a_single_run() {
    let (c, g) = setup(6);
    let cfg = InversionConfig {
        steps: 40,
        track_every: 10,
        ..InversionConfig::default()
    };
    let run = invert(&c, &g, 2, &cfg).unwrap();
    assert_eq!(run.records.len(), 40);
    assert_eq!(run.tracked().count(), 4);
    assert_eq!(run.gradient_evaluations, 40);
    let dyn_ = alignment_dynamics(std::slice::from_ref(&run));
    let tracked: Vec<_> = run.tracked().collect();
    assert_eq!(dyn_.len(), tracked.len());
    for (p, r) in dyn_.iter().zip(tracked) {
        assert_eq!((p.step, p.mean_as_inv, p.mean_confidence, p.runs), (r.step, r.as_inv.unwrap(), r.confidence, 1));
    }
}

#[test]
fn smoothed_runs_are_deterministic_and_cost_more() {
    let (c, g) = setup(7);
    for smoothing in [Smoothing::Paa, Smoothing::Taa] {
        let cfg = InversionConfig {
            steps: 5,
            track_every: 5,
            smoothing,
            seed: 9,
            ..InversionConfig::default()
        };
        let a = invert(&c, &g, 1, &cfg).unwrap();
        let b = invert(&c, &g, 1, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.gradient_evaluations > 5);
        let as_raw = a.records[4].as_raw.unwrap();
        assert!((0.0..=1.0).contains(&as_raw));
    }
}

#[test]
fn taa_is_seeded() {
    let (c, g) = setup(8);
    let x = g.sample(&[0.1, 0.1, 0.1, 0.1]).unwrap();
    let grad = |v: &[f64]| c.loss_gradient(v, 0, LossKind::Logit).map(|r| r.1);
    let set = TransformSet::default();
    let a = taa_gradient(&x, &grad, 50, 8, &set, &mut rng::stream(1, "taa")).unwrap();
    let b = taa_gradient(&x, &grad, 50, 8, &set, &mut rng::stream(1, "taa")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn paa_estimate_stabilises_when_doubling_k() {
    // quadratic loss with H = diag(1..d): per-draw sd of coordinate i is σ·h_i
    let d = 9;
    let h: Vec<f64> = (1..=d).map(|i| i as f64).collect();
    let hh = h.clone();
    let grad = move |x: &[f64]| -> invgeo::Result<Vec<f64>> { Ok(x.iter().zip(&hh).map(|(a, b)| a * b).collect()) };
    let x: Vec<f64> = (0..d).map(|i| (i as f64 * 0.7).cos()).collect();
    let alpha = 0.05;
    let sigma = invgeo::inversion::paa_sigma(&x, alpha);
    let a = paa_gradient(&x, &grad, 5000, alpha, &mut rng::stream(2, "a")).unwrap();
    let b = paa_gradient(&x, &grad, 10_000, alpha, &mut rng::stream(2, "b")).unwrap();
    for i in 0..d {
        // the difference of independent means has sd σ h_i √(1/5000 + 1/10000)
        let band = 3.0 * sigma * h[i] * (1.0 / 5000.0 + 1.0 / 10_000.0f64).sqrt();
        assert!((a[i] - b[i]).abs() <= band, "coordinate {i}");
    }
}
