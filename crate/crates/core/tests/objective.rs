use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sasd::datagen::{make_instance, truncated_shift_coherence, InstanceSpec, KernelFamily, PlantedInstance};
use sasd::eigen::EigenOptions;
use sasd::shiftspace::truncated_shift;
use sasd::signal::{pad_to, project_tangent};
use sasd::surrogate::rho;
use sasd::{project_sphere, zero_pad_window, ObjectiveContext, Observation, SurrogateParams};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn instance(p0: usize, n: usize, theta: f64, seed: u64) -> PlantedInstance {
    make_instance(&InstanceSpec {
        p0,
        n,
        theta,
        family: KernelFamily::Generic,
        seed,
    })
    .unwrap()
}

fn default_params(p0: usize, theta: f64) -> SurrogateParams {
    let lambda = 0.5 / (p0 as f64 * theta).sqrt();
    SurrogateParams::new(lambda, 1e-2 * lambda).unwrap()
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn sphere_point(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    project_sphere(&gaussian(rng, p)).unwrap()
}

fn tangent(rng: &mut ChaCha8Rng, a: &[f64]) -> Vec<f64> {
    let v = project_tangent(a, &gaussian(rng, a.len()));
    let s = norm(&v);
    v.iter().map(|x| x / s).collect()
}

fn retract(a: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    project_sphere(&a.iter().zip(v).map(|(x, d)| x + h * d).collect::<Vec<_>>()).unwrap()
}

#[test]
fn euclidean_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let inst = instance(8, 256, 0.1, seed);
        let p = 22;
        let ctx = ObjectiveContext::new(&inst.y, p, default_params(8, 0.1)).unwrap();
        for _ in 0..100 {
            let a = sphere_point(&mut rng, p);
            let g = ctx.egrad_phi_rho(&a).unwrap();
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for _ in 0..10 {
                let i = rng.random_range(0..p);
                let h = 1e-6;
                let mut plus = a.clone();
                plus[i] += h;
                let mut minus = a.clone();
                minus[i] -= h;
                let fd = (ctx.eval_phi_rho_ambient(&plus).unwrap().value
                    - ctx.eval_phi_rho_ambient(&minus).unwrap().value)
                    / (2.0 * h);
                let err = (fd - g[i]).abs();
                assert!(
                    err <= 1e-4 * g[i].abs().max(1e-2 * scale),
                    "seed {seed} coord {i}: fd {fd} vs {}",
                    g[i]
                );
            }
        }
    }
}

#[test]
fn riemannian_gradient_is_tangent_and_matches_retraction_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..20 {
        let inst = instance(8, 256, 0.1, 100 + seed);
        let ctx = ObjectiveContext::new(&inst.y, 22, default_params(8, 0.1)).unwrap();
        for _ in 0..100 {
            let a = sphere_point(&mut rng, 22);
            let rg = ctx.rgrad_phi_rho(&a).unwrap();
            assert!(dot(&rg, &a).abs() <= 1e-12 * norm(&rg).max(1e-300) * 10.0);
            let v = tangent(&mut rng, &a);
            let h = 1e-5;
            let fd = (ctx.eval_phi_rho(&retract(&a, &v, h)).unwrap().value
                - ctx.eval_phi_rho(&retract(&a, &v, -h)).unwrap().value)
                / (2.0 * h);
            let exact = dot(&rg, &v);
            assert!(
                (fd - exact).abs() <= 1e-4 * exact.abs().max(1e-2 * norm(&rg)),
                "seed {seed}: {fd} vs {exact}"
            );
        }
    }
}

#[test]
fn projection_kills_parallel_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = sphere_point(&mut rng, 10);
    let g: Vec<f64> = a.iter().map(|v| -3.5 * v).collect();
    assert!(norm(&project_tangent(&a, &g)) <= 1e-14);
}

#[test]
fn hessian_is_symmetric_and_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..10 {
        let inst = instance(8, 256, 0.1, 200 + seed);
        let ctx = ObjectiveContext::new(&inst.y, 22, default_params(8, 0.1)).unwrap();
        let a = sphere_point(&mut rng, 22);
        let lin = ctx.linearize(&a).unwrap();
        let u = tangent(&mut rng, &a);
        let w = tangent(&mut rng, &a);
        let hu = lin.rhess_vec(&u).unwrap();
        let hw = lin.rhess_vec(&w).unwrap();
        assert!((dot(&u, &hw) - dot(&w, &hu)).abs() <= 1e-9);
        let (al, be) = (0.7, -1.9);
        let comb: Vec<f64> = u.iter().zip(&w).map(|(x, y)| al * x + be * y).collect();
        let hc = lin.rhess_vec(&comb).unwrap();
        for i in 0..22 {
            assert!((hc[i] - al * hu[i] - be * hw[i]).abs() <= 1e-10);
        }
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let inst = instance(8, 256, 0.1, 300 + seed);
        let ctx = ObjectiveContext::new(&inst.y, 22, default_params(8, 0.1)).unwrap();
        let a = sphere_point(&mut rng, 22);
        let lin = ctx.linearize(&a).unwrap();
        let v = tangent(&mut rng, &a);
        let hv = lin.rhess_vec(&v).unwrap();
        let h = 1e-6;
        let gp = project_tangent(&a, &ctx.rgrad_phi_rho(&retract(&a, &v, h)).unwrap());
        let gm = project_tangent(&a, &ctx.rgrad_phi_rho(&retract(&a, &v, -h)).unwrap());
        let fd: Vec<f64> = gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * h)).collect();
        let diff: Vec<f64> = fd.iter().zip(&hv).map(|(f, e)| f - e).collect();
        assert!(norm(&diff) <= 1e-3 * norm(&hv), "seed {seed}: {} vs {}", norm(&diff), norm(&hv));
    }
}

#[test]
fn rejects_off_sphere_and_non_tangent() {
    let inst = instance(4, 64, 0.1, 1);
    let ctx = ObjectiveContext::new(&inst.y, 10, default_params(4, 0.1)).unwrap();
    let a = pad_to(&[2.0], 10);
    assert!(matches!(ctx.eval_phi_rho(&a), Err(sasd::Error::NotNormalized { .. })));
    let a = pad_to(&[1.0], 10);
    let lin = ctx.linearize(&a).unwrap();
    assert!(matches!(lin.rhess_vec(&a), Err(sasd::Error::NotTangent { .. })));
}

#[test]
fn huge_lambda_collapses_to_constant() {
    let inst = instance(8, 64, 0.2, 6);
    let params = SurrogateParams::new(1e6, 1e-2).unwrap();
    let ctx = ObjectiveContext::new(&inst.y, 22, params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = sphere_point(&mut rng, 22);
    let value = ctx.eval_phi_rho(&a).unwrap().value;
    let limit = 0.5 * inst.y.norm_sq() + 1e6 * 64.0 * 1e-2;
    assert!((value - limit).abs() <= 1e-6, "{value} vs {limit}");
    let g = ctx.egrad_phi_rho(&a).unwrap();
    assert!(norm(&g) <= 64.0 * (1e6f64 * 1e-2).sqrt() * inst.y.norm_sq().sqrt());
}

/// Gradient descent on `x -> lambda rho(x) + 1/2 ||x||^2 - <x, corr> + 1/2 ||y||^2`.
fn inner_minimum(ctx: &ObjectiveContext<'_>, a: &[f64]) -> f64 {
    let corr = ctx.y.correlate(a).unwrap();
    let (lambda, delta) = (ctx.params.lambda, ctx.params.delta);
    let step = 1.0 / (1.0 + lambda / delta);
    let mut x = corr.clone();
    for _ in 0..10_000 {
        for (xi, c) in x.iter_mut().zip(&corr) {
            let g = lambda * *xi / xi.hypot(delta) + *xi - c;
            *xi -= step * g;
        }
    }
    lambda * rho(&x, delta) + 0.5 * dot(&x, &x) - dot(&x, &corr) + 0.5 * ctx.y.norm_sq()
}

#[test]
fn closed_form_matches_inner_minimisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..5 {
        let inst = instance(4, 64, 0.2, 400 + seed);
        let ctx = ObjectiveContext::new(&inst.y, 10, default_params(4, 0.2)).unwrap();
        for _ in 0..5 {
            let a = sphere_point(&mut rng, 10);
            let closed = ctx.eval_phi_rho(&a).unwrap().value;
            let direct = inner_minimum(&ctx, &a);
            assert!((closed - direct).abs() <= 1e-6, "{closed} vs {direct}");
        }
    }
}

#[test]
fn marginal_value_is_below_planted_sparse_map() {
    for seed in 0..10 {
        let inst = instance(8, 256, 0.1, 500 + seed);
        let ctx = ObjectiveContext::new(&inst.y, 22, default_params(8, 0.1)).unwrap();
        let a = zero_pad_window(inst.a0.as_slice());
        let bundle = ctx.eval_phi_rho(&a).unwrap();
        let x0 = pad_to(inst.x0.values(), 256);
        // x0 lives at the unshifted position; the window places a0 at p0 - 1.
        let x0 = sasd::shift(&x0, -7);
        let (lambda, delta) = (ctx.params.lambda, ctx.params.delta);
        let at_x0 = lambda * rho(&x0, delta) + 0.5 * dot(&x0, &x0) - dot(&x0, &bundle.corr)
            + 0.5 * inst.y.norm_sq();
        assert!(bundle.value <= at_x0 + 1e-9, "{} > {at_x0}", bundle.value);
    }
}

#[test]
fn repeated_evaluation_is_bit_identical() {
    let inst = instance(8, 256, 0.1, 8);
    let ctx = ObjectiveContext::new(&inst.y, 22, default_params(8, 0.1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = sphere_point(&mut rng, 22);
    let first = ctx.eval_phi_rho(&a).unwrap().value;
    for _ in 0..5 {
        assert_eq!(ctx.eval_phi_rho(&a).unwrap().value.to_bits(), first.to_bits());
    }
}

#[test]
fn ell1_special_cases_and_smoothing_gap() {
    let zero = Observation::new(vec![0.0; 64]);
    let ctx = ObjectiveContext::new(&zero, 10, SurrogateParams::new(0.3, 3e-3).unwrap()).unwrap();
    let a = pad_to(&[1.0], 10);
    assert_eq!(ctx.eval_phi_ell1(&a).unwrap(), 0.0);

    let inst = instance(4, 64, 0.2, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = sphere_point(&mut rng, 10);
    let corr = inst.y.correlate(&a).unwrap();
    let top = corr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ctx = ObjectiveContext::new(&inst.y, 10, SurrogateParams::new(top, 1e-4 * top).unwrap()).unwrap();
    assert!((ctx.eval_phi_ell1(&a).unwrap() - 0.5 * inst.y.norm_sq()).abs() <= 1e-12);

    for seed in 0..10 {
        let inst = instance(8, 256, 0.1, 600 + seed);
        let lambda = 0.5 / 0.8f64.sqrt();
        let delta = 1e-4 * lambda;
        let ctx = ObjectiveContext::new(&inst.y, 22, SurrogateParams::new(lambda, delta).unwrap()).unwrap();
        let a = sphere_point(&mut rng, 22);
        let gap = ctx.eval_phi_rho(&a).unwrap().value - ctx.eval_phi_ell1(&a).unwrap();
        assert!(gap.abs() <= 2.0 * 256.0 * lambda * delta, "gap {gap}");
    }
}

#[test]
fn planted_shift_beats_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..20 {
        let inst = instance(8, 512, 0.05, 700 + seed);
        let ctx = ObjectiveContext::new(&inst.y, 22, default_params(8, 0.05)).unwrap();
        let planted = ctx.eval_phi_rho(&zero_pad_window(inst.a0.as_slice())).unwrap().value;
        let random = ctx.eval_phi_rho(&sphere_point(&mut rng, 22)).unwrap().value;
        assert!(planted < random, "seed {seed}: {planted} >= {random}");
    }
}

fn single_spike(p0: usize, n: usize, seed: u64) -> (Vec<f64>, Observation) {
    let a0 = instance(p0, n, 0.1, seed).a0.into_vec();
    let y = Observation::new(pad_to(&a0, n));
    (a0, y)
}

#[test]
fn planted_single_spike_is_stationary() {
    for seed in 0..10 {
        let (a0, y) = single_spike(16, 256, 800 + seed);
        let mu = truncated_shift_coherence(&a0);
        let lambda = 0.5 * (1.0 + mu);
        let ctx = ObjectiveContext::new(&y, 46, SurrogateParams::new(lambda, 1e-4 * lambda).unwrap()).unwrap();
        let a = zero_pad_window(&a0);
        let g = ctx.egrad_phi_rho(&a).unwrap();
        let cos = (dot(&g, &a) / norm(&g)).abs().min(1.0);
        assert!(cos.acos() <= 1e-3, "seed {seed}: angle {}", cos.acos());
    }
}

#[test]
fn convex_near_planted_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..10 {
        let (a0, y) = single_spike(16, 256, 900 + seed);
        let lambda = 0.5 * (1.0 + truncated_shift_coherence(&a0));
        let ctx = ObjectiveContext::new(&y, 46, SurrogateParams::new(lambda, 1e-2 * lambda).unwrap()).unwrap();
        let lin = ctx.linearize(&zero_pad_window(&a0)).unwrap();
        for _ in 0..50 {
            let v = tangent(&mut rng, &lin.a);
            assert!(dot(&v, &lin.rhess_vec(&v).unwrap()) > 0.0, "seed {seed}");
        }
    }
}

fn dense_min_tangent_eig(lin: &sasd::Linearization<'_>) -> f64 {
    let p = lin.a.len();
    let mut cols = Vec::with_capacity(p * p);
    for i in 0..p {
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        let pe = project_tangent(&lin.a, &e);
        cols.extend(project_tangent(&lin.a, &lin.rhess_vec(&pe).unwrap()));
    }
    let mut h = DMatrix::from_column_slice(p, p, &cols);
    h = 0.5 * (&h + h.transpose());
    let shift = 1e6;
    let aa = DMatrix::from_fn(p, p, |i, j| shift * lin.a[i] * lin.a[j]);
    let eig = SymmetricEigen::new(h + aa);
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn eigensolvers_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..6 {
        let inst = instance(5, 128, 0.1, 1000 + seed);
        let ctx = ObjectiveContext::new(&inst.y, 13, default_params(5, 0.1)).unwrap();
        let a = sphere_point(&mut rng, 13);
        let lin = ctx.linearize(&a).unwrap();
        let oracle = dense_min_tangent_eig(&lin);
        for opts in [EigenOptions::power(1e-7), EigenOptions::lanczos(1e-7)] {
            let pair = lin.min_eigpair(&opts).unwrap();
            assert!((pair.value - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "{} vs {oracle}", pair.value);
            assert!(dot(&pair.vector, &a).abs() <= 1e-10);
            assert!((norm(&pair.vector) - 1.0).abs() <= 1e-10);
            assert!(dot(&pair.vector, &lin.rgrad) >= 0.0);
        }
    }
}

#[test]
fn two_shift_point_has_negative_curvature() {
    for seed in 0..20 {
        let inst = instance(16, 1024, 0.02, 1100 + seed);
        let a0 = inst.a0.as_slice();
        let ctx = ObjectiveContext::new(&inst.y, 46, default_params(16, 0.02)).unwrap();
        let two: Vec<f64> = truncated_shift(a0, 0)
            .iter()
            .zip(truncated_shift(a0, 6))
            .map(|(x, y)| x + y)
            .collect();
        let a = project_sphere(&two).unwrap();
        let pair = ctx.linearize(&a).unwrap().min_eigpair(&EigenOptions::lanczos(1e-6)).unwrap();
        assert!(pair.value < 0.0, "seed {seed}: {}", pair.value);
    }
}
