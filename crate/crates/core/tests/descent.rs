use core::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use spectral_core::dist::{normal_cdf, normal_pdf};
use spectral_core::optim::{
    allocate_budget, df_gradient, mirror_step, norm, run, run_algorithm1, run_streaming, sample_ball,
    sample_sphere, AncillarySize, Budget, FnSource, IterateState, Learner, Method, MirrorGeometry,
    RunConfig, SampleSource, SliceSource, StepSettings, StepSize,
};
use spectral_core::risk::McEstimate;
use spectral_core::{Error, Example, LossModel, Rng64, Spectrum};

#[test]
fn sphere_samples() {
    let mut rng = Rng64::seed_from_u64(61);
    for _ in 0..100 {
        let u = sample_sphere(1, &mut rng);
        assert!(u == [1.0] || u == [-1.0]);
    }
    for d in [2, 3, 17] {
        for _ in 0..1000 {
            assert!((norm(&sample_sphere(d, &mut rng)) - 1.0).abs() <= 1e-12);
            assert!(norm(&sample_ball(d, &mut rng)) <= 1.0);
        }
    }
    let n = 100_000;
    let mut sums = [0.0; 3];
    for _ in 0..n {
        for (s, v) in sums.iter_mut().zip(sample_sphere(3, &mut rng)) {
            *s += v;
        }
    }
    // each coordinate has variance 1/3
    let tol = 3.0 * (1.0f64 / 3.0).sqrt() / (n as f64).sqrt();
    for s in sums {
        assert!((s / n as f64).abs() <= tol);
    }
}

fn test_function(w: &[f64]) -> f64 {
    w[0] * w[0] + w[1] * w[1] + w[0].sin()
}

#[test]
fn sphere_estimator_matches_smoothed_gradient() {
    let (d, delta, draws) = (2usize, 0.3, 1_000_000);
    let w = [0.7, -0.4];
    let mut rng = Rng64::seed_from_u64(62);

    let mut sphere = [0.0; 2];
    for _ in 0..draws {
        let u = sample_sphere(d, &mut rng);
        let shifted = [w[0] + delta * u[0], w[1] + delta * u[1]];
        let scale = d as f64 / delta * test_function(&shifted);
        sphere[0] += scale * u[0];
        sphere[1] += scale * u[1];
    }
    let sphere = sphere.map(|s| s / draws as f64);

    // central differences of the ball average, common random numbers
    let h = 1e-3;
    let balls: Vec<Vec<f64>> = (0..draws).map(|_| sample_ball(d, &mut rng)).collect();
    let smoothed = |p: [f64; 2]| {
        balls
            .iter()
            .map(|v| test_function(&[p[0] + delta * v[0], p[1] + delta * v[1]]))
            .sum::<f64>()
            / draws as f64
    };
    let fd = [
        (smoothed([w[0] + h, w[1]]) - smoothed([w[0] - h, w[1]])) / (2.0 * h),
        (smoothed([w[0], w[1] + h]) - smoothed([w[0], w[1] - h])) / (2.0 * h),
    ];
    let err = ((sphere[0] - fd[0]).powi(2) + (sphere[1] - fd[1]).powi(2)).sqrt() / norm(&fd);
    assert!(err <= 0.05, "sphere {sphere:?} vs finite difference {fd:?}: {err}");
}

/// Loss `|w_J − Y|` with `J` uniform on the two coordinates and `Y ~ N(0, 1)`.
fn coordinate_example(rng: &mut Rng64) -> Example {
    let j = rng.random_range(0..2);
    let mut x = vec![0.0, 0.0];
    x[j] = 1.0;
    Example::regression(x, rng.sample(rand_distr::StandardNormal))
}

fn coordinate_cdf(w: &[f64], u: f64) -> f64 {
    if u < 0.0 {
        return 0.0;
    }
    0.5 * w.iter().map(|&c| normal_cdf(c + u) - normal_cdf(c - u)).sum::<f64>()
}

/// Spectral risk of the coordinate task at `w`, by quadrature over `Y`.
fn coordinate_risk(w: &[f64], spectrum: &Spectrum) -> f64 {
    let (lo, hi, n) = (-9.0, 9.0, 4000);
    let h = (hi - lo) / n as f64;
    let mut total = 0.0;
    for &c in w {
        let f = |y: f64| {
            let l = (c - y).abs();
            l * spectrum.eval(coordinate_cdf(w, l).min(1.0)).unwrap() * normal_pdf(y)
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
        }
        total += 0.5 * acc * h / 3.0;
    }
    total
}

#[test]
fn derivative_free_estimate_is_unbiased_under_the_true_cdf() {
    let spectrum = Spectrum::exponential(2.0).unwrap();
    let model = LossModel::synthetic_linear(2);
    let (w, delta) = ([0.4, -0.8], 0.5);

    // (d/δ)·E_U[S(w + δU)U] over the circle, by quadrature in the angle
    let nodes = 720;
    let mut reference = [0.0; 2];
    for i in 0..nodes {
        let theta = 2.0 * PI * (i as f64 + 0.5) / nodes as f64;
        let u = [theta.cos(), theta.sin()];
        let risk = coordinate_risk(&[w[0] + delta * u[0], w[1] + delta * u[1]], &spectrum);
        reference[0] += 2.0 / delta * risk * u[0] / nodes as f64;
        reference[1] += 2.0 / delta * risk * u[1] / nodes as f64;
    }

    // the CDF is the exact one at the perturbed point
    let mut rng = Rng64::seed_from_u64(63);
    let mut coords = [Vec::new(), Vec::new()];
    for _ in 0..100_000 {
        let u = sample_sphere(2, &mut rng);
        let z = coordinate_example(&mut rng);
        let shifted = [w[0] + delta * u[0], w[1] + delta * u[1]];
        let g = df_gradient(&w, delta, &u, &z, &model, |l| coordinate_cdf(&shifted, l).min(1.0), &spectrum).unwrap();
        coords[0].push(g.vector[0]);
        coords[1].push(g.vector[1]);
    }
    for j in 0..2 {
        let mc = McEstimate::from_samples(&coords[j]).unwrap();
        assert!(
            (mc.mean - reference[j]).abs() <= 3.0 * mc.std_error,
            "coordinate {j}: {} ± {} vs {}",
            mc.mean,
            mc.std_error,
            reference[j]
        );
    }
}

#[test]
fn df_gradient_examples() {
    // a loss of 2 at the perturbed point under the uniform spectrum
    let model = LossModel::synthetic_linear(3);
    let z = Example::regression(vec![1.0, 0.0, 0.0], -1.5);
    let g = df_gradient(&[0.0; 3], 0.5, &[1.0, 0.0, 0.0], &z, &model, |_| 0.3, &Spectrum::uniform()).unwrap();
    assert_eq!(g.vector, vec![12.0, 0.0, 0.0]);
    assert_eq!(g.loss, 2.0);

    let zero = Example::regression(vec![1.0, 0.0, 0.0], 0.5);
    let s = Spectrum::exponential(1.0).unwrap();
    let g = df_gradient(&[0.0; 3], 0.5, &[1.0, 0.0, 0.0], &zero, &model, |_| 0.9, &s).unwrap();
    assert!(g.vector.iter().all(|v| *v == 0.0));
    assert!(df_gradient(&[0.0; 3], 1.0, &[1.0, 0.0, 0.0], &zero, &model, |_| 0.9, &s).is_err());
}

#[test]
fn mirror_step_examples() {
    let geom = MirrorGeometry::euclidean(1.0).unwrap();
    let mut state = IterateState::new(vec![0.0, 0.0]);
    mirror_step(&mut state, &[-3.0, -4.0], 1.0, &geom);
    assert!((state.w()[0] - 0.6).abs() < 1e-15 && (state.w()[1] - 0.8).abs() < 1e-15);
    let before = state.w().to_vec();
    mirror_step(&mut state, &[0.0, 0.0], 0.7, &geom);
    assert_eq!(state.w(), &before[..]);

    let wide = MirrorGeometry::euclidean(10.0).unwrap();
    let mut state = IterateState::new(vec![0.0, 0.0]);
    mirror_step(&mut state, &[1.0, 2.0], 1.0, &wide);
    assert_eq!(state.w(), &[-1.0, -2.0]);
    assert_eq!(state.steps(), 1);
    assert_eq!(state.running_sum(), &[-1.0, -2.0]);
}

#[test]
fn budget_allocation_covers_every_small_budget() {
    assert_eq!(allocate_budget(100).unwrap(), Budget { ancillary: 10, steps: 9 });
    assert_eq!(allocate_budget(4).unwrap(), Budget { ancillary: 2, steps: 1 });
    assert!(allocate_budget(2).is_err());
    for n in 3..=1_000_000usize {
        let b = allocate_budget(n).unwrap();
        assert!(b.total() <= n, "n={n}");
        assert!((b.ancillary - 1) * (b.ancillary - 1) < n && n <= b.ancillary * b.ancillary);
    }
}

fn quadratic_task(w_star: [f64; 2]) -> impl FnMut() -> Example {
    let mut rng = Rng64::seed_from_u64(64);
    move || {
        let x = vec![rng.random::<f64>(), rng.random::<f64>()];
        let y = w_star[0] * x[0] + w_star[1] * x[1];
        Example::regression(x, y)
    }
}

#[test]
fn plain_descent_solves_a_noiseless_quadratic() {
    let w_star = [0.8, -1.3];
    let model = LossModel::synthetic_quadratic(2);
    let geom = MirrorGeometry::euclidean(5.0).unwrap();
    let mut cfg = RunConfig::new(Method::Off);
    cfg.step_size = StepSize::Fixed(0.5);
    let mut source = FnSource::new(quadratic_task(w_star));
    let mut rng = Rng64::seed_from_u64(65);
    let out = run_streaming(&model, &mut source, &Spectrum::uniform(), &geom, &cfg, 1000, vec![3.0, 3.0], &mut rng).unwrap();
    // E[½⟨w − w*, x⟩²] with E[xxᵀ] = [[1/3, 1/4], [1/4, 1/3]] for x uniform on the square
    let e = [out.last[0] - w_star[0], out.last[1] - w_star[1]];
    let excess = 0.5 * (e[0] * e[0] / 3.0 + e[1] * e[1] / 3.0 + e[0] * e[1] / 2.0);
    assert!(excess <= 1e-3, "{excess}");
}

fn lognormal_task(seed: u64) -> impl FnMut() -> Example {
    let kind = spectral_core::data::SyntheticKind::LinearLognormal {
        w_star: vec![1.0, -0.5, 0.25],
        noise_mu: 0.0,
        noise_sigma: 0.5,
    };
    let mut rng = Rng64::seed_from_u64(seed);
    move || kind.sample(&mut rng)
}

fn all_runs() -> Vec<(Method, Spectrum)> {
    let exp = Spectrum::exponential(1.0).unwrap();
    vec![
        (Method::Default, exp),
        (Method::Default, Spectrum::cvar(0.8).unwrap()),
        (Method::Fast, exp),
        (Method::Off, exp),
    ]
}

#[test]
fn runs_consume_their_exact_budget_and_average_exactly() {
    let model = LossModel::synthetic_linear(3);
    let geom = MirrorGeometry::euclidean(0.5).unwrap();
    for (method, spectrum) in all_runs() {
        let n = 5000;
        let mut source = FnSource::new(lognormal_task(66));
        let mut rng = Rng64::seed_from_u64(67);
        let mut cfg = RunConfig::new(method);
        cfg.step_size = StepSize::Fixed(0.3);
        let out = run(&model, &mut source, &spectrum, &geom, &cfg, n, vec![0.0; 3], &mut rng).unwrap();
        let expected = match method {
            Method::Off => out.budget.steps,
            _ => out.budget.steps * (out.budget.ancillary + 1),
        };
        assert_eq!(source.drawn(), expected, "{method}");
        assert_eq!(out.drawn, expected);
        assert!(expected <= n);

        // replay step by step to check feasibility and the running average
        let mut source = FnSource::new(lognormal_task(66));
        let mut rng = Rng64::seed_from_u64(67);
        let settings = StepSettings {
            alpha: out.alpha,
            smoothing_delta: cfg.smoothing_delta,
            ancillary: out.budget.ancillary.max(2),
        };
        let mut learner = Learner::new(&model, &spectrum, geom, method, settings, vec![0.0; 3]).unwrap();
        let mut sum = [0.0; 3];
        for _ in 0..out.budget.steps {
            learner.step(&mut source, &mut rng).unwrap();
            assert!(norm(learner.current()) <= geom.radius() + 1e-9);
            for (s, w) in sum.iter_mut().zip(learner.current()) {
                *s += w;
            }
        }
        assert_eq!(learner.current(), &out.last[..]);
        for (a, s) in out.average.iter().zip(sum) {
            assert!((a - s / out.budget.steps as f64).abs() <= 1e-12);
        }
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let model = LossModel::synthetic_linear(3);
    let geom = MirrorGeometry::euclidean(4.0).unwrap();
    for (method, spectrum) in all_runs() {
        let go = |seed: u64| {
            let mut source = FnSource::new(lognormal_task(68));
            let mut rng = Rng64::seed_from_u64(seed);
            run(&model, &mut source, &spectrum, &geom, &RunConfig::new(method), 3000, vec![0.1, 0.2, 0.3], &mut rng)
                .unwrap()
        };
        let (a, b) = (go(1), go(1));
        assert_eq!(a.average.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.average.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a, b);
        if method == Method::Default {
            assert_ne!(go(1).average, go(2).average);
        }
    }
}

#[test]
fn fast_with_uniform_spectrum_retraces_plain_descent() {
    let model = LossModel::multiclass_logistic(3, 4);
    let geom = MirrorGeometry::euclidean(100.0).unwrap();
    let spectrum = Spectrum::uniform();
    let (m, steps) = (7, 400);
    let mut rng = Rng64::seed_from_u64(69);
    let random_example = |rng: &mut Rng64| {
        let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        Example::classified(x, rng.random_range(0..3))
    };
    let updates: Vec<Example> = (0..steps).map(|_| random_example(&mut rng)).collect();
    // the fast stream interleaves M unrelated ancillary points before each update point
    let mut interleaved = Vec::new();
    for z in &updates {
        interleaved.extend((0..m).map(|_| random_example(&mut rng)));
        interleaved.push(z.clone());
    }
    let settings = StepSettings { alpha: 0.35, smoothing_delta: 0.5, ancillary: m };
    let w0: Vec<f64> = (0..12).map(|i| 0.05 * i as f64 - 0.3).collect();
    let mut fast = Learner::new(&model, &spectrum, geom, Method::Fast, settings, w0.clone()).unwrap();
    let mut off = Learner::new(&model, &spectrum, geom, Method::Off, settings, w0).unwrap();
    let (mut fast_src, mut off_src) = (SliceSource::new(&interleaved), SliceSource::new(&updates));
    for _ in 0..steps {
        fast.step(&mut fast_src, &mut rng).unwrap();
        off.step(&mut off_src, &mut rng).unwrap();
        let bits = |w: &[f64]| w.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(fast.current()), bits(off.current()));
    }
    assert_eq!(fast.average(), off.average());
}

#[test]
fn zero_loss_single_step_returns_the_start() {
    let model = LossModel::synthetic_linear(2);
    let data = vec![Example::regression(vec![0.0, 0.0], 0.0); 4];
    let geom = MirrorGeometry::euclidean(1.0).unwrap();
    let mut rng = Rng64::seed_from_u64(70);
    let cfg = RunConfig::new(Method::Default);
    let out = run_algorithm1(&model, &mut SliceSource::new(&data), &Spectrum::uniform(), &geom, &cfg, 4, vec![0.3, -0.1], &mut rng).unwrap();
    assert_eq!(out.budget, Budget { ancillary: 2, steps: 1 });
    assert_eq!(out.average, vec![0.3, -0.1]);
}

#[test]
fn configuration_errors() {
    let model = LossModel::synthetic_linear(2);
    let geom = MirrorGeometry::euclidean(1.0).unwrap();
    let data = vec![Example::regression(vec![0.5, 0.5], 1.0); 100];
    let mut rng = Rng64::seed_from_u64(71);
    let cvar = Spectrum::cvar(0.5).unwrap();
    let exp = Spectrum::exponential(1.0).unwrap();
    let w0 = vec![0.0, 0.0];

    let fast = RunConfig::new(Method::Fast);
    let err = run_streaming(&model, &mut SliceSource::new(&data), &cvar, &geom, &fast, 100, w0.clone(), &mut rng);
    assert_eq!(err.unwrap_err(), Error::UnsupportedSpectrum("cvar"));
    let default = RunConfig::new(Method::Default);
    assert!(run_streaming(&model, &mut SliceSource::new(&data), &exp, &geom, &default, 100, w0.clone(), &mut rng).is_err());
    // too short a stream for the planned budget
    let err = run_algorithm1(&model, &mut SliceSource::new(&data[..50]), &exp, &geom, &default, 100, w0.clone(), &mut rng);
    assert!(matches!(err, Err(Error::BudgetExhausted { .. })));
    let mut small = RunConfig::new(Method::Default);
    small.ancillary_size = AncillarySize::Fixed(1);
    assert!(run_algorithm1(&model, &mut SliceSource::new(&data), &exp, &geom, &small, 100, w0, &mut rng).is_err());
    let outside = run_algorithm1(&model, &mut SliceSource::new(&data), &exp, &geom, &default, 100, vec![2.0, 0.0], &mut rng);
    assert!(outside.is_err());
}

proptest! {
    #[test]
    fn projection_keeps_iterates_feasible(
        radius in 0.01f64..100.0,
        start in prop::collection::vec(-1.0f64..1.0, 4),
        steps in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 4), 1..30),
        alpha in 1e-4f64..10.0,
    ) {
        let geom = MirrorGeometry::euclidean(radius).unwrap();
        let mut w0: Vec<f64> = start.iter().map(|v| v * radius / 2.0).collect();
        geom.project(&mut w0);
        let mut state = IterateState::new(w0);
        let mut sum = vec![0.0; 4];
        for g in &steps {
            mirror_step(&mut state, g, alpha, &geom);
            prop_assert!(norm(state.w()) <= radius + 1e-9);
            for (s, w) in sum.iter_mut().zip(state.w()) {
                *s += w;
            }
        }
        prop_assert_eq!(state.running_sum(), &sum[..]);
        for (a, s) in state.average().iter().zip(&sum) {
            prop_assert!((a - s / steps.len() as f64).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }
}
