use proptest::prelude::*;

use super::*;
use crate::linalg::{left_projector, DenseMatrix, FactorStrategy};
use crate::rng::SeededRng;

const PSD: FactorStrategy = FactorStrategy::PsdEigendecomposition;

/// Gauss-Jordan inverse with partial pivoting; an oracle independent of the SVD.
fn gauss_inverse(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = DenseMatrix::identity(n);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs())).unwrap();
        for j in 0..n {
            let (x, y) = (m[(c, j)], m[(p, j)]);
            m[(c, j)] = y;
            m[(p, j)] = x;
            let (x, y) = (inv[(c, j)], inv[(p, j)]);
            inv[(c, j)] = y;
            inv[(p, j)] = x;
        }
        let d = m[(c, c)];
        for j in 0..n {
            m[(c, j)] /= d;
            inv[(c, j)] /= d;
        }
        for i in 0..n {
            if i != c {
                let f = m[(i, c)];
                for j in 0..n {
                    m[(i, j)] -= f * m[(c, j)];
                    inv[(i, j)] -= f * inv[(c, j)];
                }
            }
        }
    }
    inv
}

fn spd(rng: &mut SeededRng, n: usize, k: usize) -> DenseMatrix {
    rng.normal_matrix(n, k).gram_outer()
}

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
}

fn linear(kind: Task, f: Option<DenseMatrix>, gx: &DenseMatrix, ge: Option<&DenseMatrix>, r: usize) -> ProblemSpec {
    let signal = MomentModel::second_moment(gx, PSD, 0.0).unwrap();
    let noise = ge.map(|g| MomentModel::second_moment(g, PSD, 0.0).unwrap());
    ProblemSpec::new(ProblemKind::new(kind, Form::Linear), f, signal, noise, r).unwrap()
}

fn affine(
    kind: Task,
    f: Option<DenseMatrix>,
    sx: &DenseMatrix,
    mu: Vec<f64>,
    se: Option<&DenseMatrix>,
    r: usize,
) -> ProblemSpec {
    let signal = MomentModel::covariance(sx, mu, PSD, 0.0).unwrap();
    let noise = se.map(|g| MomentModel::second_moment(g, PSD, 0.0).unwrap());
    ProblemSpec::new(ProblemKind::new(kind, Form::Affine), f, signal, noise, r).unwrap()
}

#[test]
fn forward_full_rank_recovers_operator() {
    let mut rng = SeededRng::new(1);
    let f = rng.normal_matrix(4, 5);
    let gx = spd(&mut rng, 5, 5);
    let map = optimal_forward(&linear(Task::Forward, Some(f.clone()), &gx, None, 5)).unwrap();
    assert!(rel(&map.a, &f) < 1e-8);
    assert_eq!(map.trace.branch, Branch::OperatorRecovery);
    assert!(map.risk.abs() < 1e-10);
}

#[test]
fn forward_rank_deficient_factor_projects_operator() {
    let mut rng = SeededRng::new(2);
    let f = rng.normal_matrix(6, 5);
    let gx = spd(&mut rng, 5, 2);
    let map = optimal_forward(&linear(Task::Forward, Some(f.clone()), &gx, None, 4)).unwrap();
    let oracle = f.matmul(&left_projector(&gx).unwrap()).unwrap();
    assert!(rel(&map.a, &oracle) < 1e-8);
    assert_eq!(map.trace.branch, Branch::ProjectedOperator);
    assert!(map.trace.clamped);
}

#[test]
fn forward_noise_only_adds_its_trace() {
    let mut rng = SeededRng::new(3);
    let f = rng.normal_matrix(3, 3);
    let gx = spd(&mut rng, 3, 3);
    let ge = spd(&mut rng, 3, 3);
    let map = optimal_forward(&linear(Task::Forward, Some(f), &gx, Some(&ge), 3)).unwrap();
    assert!((map.risk - ge.trace()).abs() < 1e-9 * ge.trace());
}

#[test]
fn affine_forward_with_zero_mean_matches_linear() {
    let mut rng = SeededRng::new(4);
    let f = rng.normal_matrix(4, 4);
    let sx = spd(&mut rng, 4, 4);
    let aff = optimal_forward_affine(&affine(Task::Forward, Some(f.clone()), &sx, vec![0.0; 4], None, 2)).unwrap();
    let lin = optimal_forward(&linear(Task::Forward, Some(f), &sx, None, 2)).unwrap();
    assert!(rel(&aff.a, &lin.a) < 1e-12);
    assert!(aff.bias.unwrap().iter().all(|&b| b.abs() < 1e-12));
}

#[test]
fn affine_forward_full_rank_has_zero_bias() {
    let mut rng = SeededRng::new(5);
    let f = rng.normal_matrix(4, 4);
    let sx = spd(&mut rng, 4, 4);
    let map =
        optimal_forward_affine(&affine(Task::Forward, Some(f.clone()), &sx, vec![1.0, -2.0, 0.5, 3.0], None, 4))
            .unwrap();
    assert!(rel(&map.a, &f) < 1e-8);
    assert!(map.bias.unwrap().iter().all(|&b| b.abs() < 1e-8));
}

#[test]
fn inverse_full_rank_matches_direct_assembly() {
    let mut rng = SeededRng::new(6);
    let f = rng.normal_matrix(5, 4);
    let gx = spd(&mut rng, 4, 4);
    let ge = spd(&mut rng, 5, 5).scale(0.1);
    let map = optimal_inverse(&linear(Task::Inverse, Some(f.clone()), &gx, Some(&ge), 4)).unwrap();
    let gy = f.matmul(&gx).unwrap().matmul_t(&f).unwrap().add(&ge).unwrap();
    let oracle = gx.matmul_t(&f).unwrap().matmul(&gauss_inverse(&gy)).unwrap();
    assert!(rel(&map.a, &oracle) < 1e-8);
    assert_eq!(map.trace.branch, Branch::FullRankInverse);
}

#[test]
fn noiseless_identity_inverse_is_autoencoder_projector() {
    let mut rng = SeededRng::new(7);
    let gx = spd(&mut rng, 5, 5);
    let inv = optimal_inverse(&linear(Task::Inverse, Some(DenseMatrix::identity(5)), &gx, None, 2)).unwrap();
    let ae = optimal_autoencoder(&linear(Task::Autoencode, None, &gx, None, 2)).unwrap();
    assert!(rel(&inv.a, &ae.a) < 1e-8);
}

#[test]
fn foster_estimator_at_full_rank() {
    let mut rng = SeededRng::new(8);
    let f = rng.normal_matrix(4, 4);
    let sx = spd(&mut rng, 4, 4);
    let se = spd(&mut rng, 4, 4).scale(0.2);
    let mu = vec![0.3, -1.0, 2.0, 0.0];
    let map = optimal_inverse_affine(&affine(Task::Inverse, Some(f.clone()), &sx, mu.clone(), Some(&se), 4)).unwrap();
    let sy = f.matmul(&sx).unwrap().matmul_t(&f).unwrap().add(&se).unwrap();
    let oracle = sx.matmul_t(&f).unwrap().matmul(&gauss_inverse(&sy)).unwrap();
    assert!(rel(&map.a, &oracle) < 1e-8);
    assert_eq!(map.trace.branch, Branch::Foster);
    let afmu = oracle.mul_vec(&f.mul_vec(&mu).unwrap()).unwrap();
    for (b, (m, v)) in map.bias.unwrap().iter().zip(mu.iter().zip(afmu)) {
        assert!((b - (m - v)).abs() < 1e-8);
    }
}

#[test]
fn affine_inverse_never_worse_than_linear() {
    let mut rng = SeededRng::new(9);
    let f = rng.normal_matrix(5, 4);
    let sx = spd(&mut rng, 4, 3);
    let se = spd(&mut rng, 5, 5).scale(0.1);
    let mu = vec![1.0, 2.0, -1.0, 0.5];
    let aff = optimal_inverse_affine(&affine(Task::Inverse, Some(f.clone()), &sx, mu.clone(), Some(&se), 2)).unwrap();
    // The linear map on the same data sees Γ_X = S_X + μμᵀ.
    let gx = sx.add(&DenseMatrix::from_fn(4, 4, |i, j| mu[i] * mu[j])).unwrap();
    let lin_spec = linear(Task::Inverse, Some(f), &gx, Some(&se), 2);
    let lin = optimal_inverse(&lin_spec).unwrap();
    let aff_spec = affine(
        Task::Inverse,
        lin_spec.forward_operator.clone(),
        &sx,
        mu,
        Some(&se),
        2,
    );
    let lin_as_affine = risk_of(&lin.a, Some(&[0.0; 4]), &aff_spec).unwrap();
    assert!((lin_as_affine - lin.risk).abs() < 1e-9 * lin.risk);
    assert!(aff.risk <= lin.risk + 1e-10);
}

#[test]
fn autoencoder_identity_recovery_and_projector_algebra() {
    let mut rng = SeededRng::new(10);
    let gx = spd(&mut rng, 6, 6);
    let full = optimal_autoencoder(&linear(Task::Autoencode, None, &gx, None, 6)).unwrap();
    assert!(rel(&full.a, &DenseMatrix::identity(6)) < 1e-8);
    assert_eq!(full.trace.branch, Branch::IdentityRecovery);
    let low = optimal_autoencoder(&linear(Task::Autoencode, None, &gx, None, 3)).unwrap();
    let a2 = low.a.matmul(&low.a).unwrap();
    assert!(rel(&a2, &low.a) < 1e-8);
    assert_eq!(low.a.asymmetry(), 0.0);
    assert!((low.a.trace() - 3.0).abs() < 1e-10);
}

#[test]
fn autoencoder_factorization_is_not_unique() {
    let mut rng = SeededRng::new(11);
    let gx = spd(&mut rng, 5, 5);
    let map = optimal_autoencoder(&linear(Task::Autoencode, None, &gx, None, 2)).unwrap();
    let ur = crate::linalg::svd(&gx, 0.0).unwrap().u_leading(2);
    let q = rng.normal_matrix(2, 2).add_identity(2.0);
    let decoder = ur.matmul(&q).unwrap();
    let encoder = gauss_inverse(&q).matmul_t(&ur).unwrap();
    assert!(rel(&decoder.matmul(&encoder).unwrap(), &map.a) < 1e-8);
}

#[test]
fn scalar_wiener_halves_the_observation() {
    let id = DenseMatrix::identity(3);
    let map = optimal_denoiser(&linear(Task::Denoise, None, &id, Some(&id), 3)).unwrap();
    assert!(rel(&map.a, &id.scale(0.5)) < 1e-12);
    assert_eq!(map.trace.branch, Branch::Wiener);
}

#[test]
fn wiener_filter_matches_oracle() {
    let mut rng = SeededRng::new(12);
    let gx = spd(&mut rng, 5, 5);
    let ge = spd(&mut rng, 5, 5).scale(0.3);
    let map = optimal_denoiser(&linear(Task::Denoise, None, &gx, Some(&ge), 5)).unwrap();
    let oracle = gx.matmul(&gauss_inverse(&gx.add(&ge).unwrap())).unwrap();
    assert!(rel(&map.a, &oracle) < 1e-8);
}

#[test]
fn noiseless_denoiser_is_autoencoder() {
    let mut rng = SeededRng::new(13);
    let gx = spd(&mut rng, 5, 5);
    let zero = DenseMatrix::zeros(5, 5);
    let den = optimal_denoiser(&linear(Task::Denoise, None, &gx, Some(&zero), 2)).unwrap();
    let ae = optimal_autoencoder(&linear(Task::Autoencode, None, &gx, None, 2)).unwrap();
    assert!(rel(&den.a, &ae.a) < 1e-8);
}

#[test]
fn identity_operator_noiseless_tasks_agree() {
    let mut rng = SeededRng::new(14);
    let gx = spd(&mut rng, 4, 4);
    let id = DenseMatrix::identity(4);
    let zero = DenseMatrix::zeros(4, 4);
    let ae = optimal_map(&linear(Task::Autoencode, None, &gx, None, 2)).unwrap();
    for spec in [
        linear(Task::Forward, Some(id.clone()), &gx, None, 2),
        linear(Task::Inverse, Some(id.clone()), &gx, None, 2),
        linear(Task::Denoise, None, &gx, Some(&zero), 2),
    ] {
        let m = optimal_map(&spec).unwrap();
        assert!(rel(&m.a, &ae.a) < 1e-8, "{}", spec.kind);
    }
}

#[test]
fn closed_form_risk_matches_monte_carlo() {
    let mut rng = SeededRng::new(15);
    let (n, m) = (4, 3);
    let f = rng.normal_matrix(m, n);
    let lx = rng.normal_matrix(n, n);
    let le = rng.normal_matrix(m, m).scale(0.3);
    let gx = lx.gram_outer();
    let ge = le.gram_outer();
    for task in [Task::Forward, Task::Inverse] {
        let spec = linear(task, Some(f.clone()), &gx, Some(&ge), 2);
        let map = optimal_map(&spec).unwrap();
        let draws = 100_000;
        let x = lx.matmul(&rng.normal_matrix(n, draws)).unwrap();
        let e = le.matmul(&rng.normal_matrix(m, draws)).unwrap();
        let y = f.matmul(&x).unwrap().add(&e).unwrap();
        let resid = match task {
            Task::Forward => map.a.matmul(&x).unwrap().sub(&y).unwrap(),
            _ => map.a.matmul(&y).unwrap().sub(&x).unwrap(),
        };
        let losses: Vec<f64> = (0..draws).map(|j| resid.col(j).iter().map(|v| v * v).sum()).collect();
        let mean = losses.iter().sum::<f64>() / draws as f64;
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - map.risk).abs() < 3.0 * se, "{task:?}: mc {mean} closed {}", map.risk);
    }
}

#[test]
fn optimal_maps_beat_random_candidates() {
    let mut rng = SeededRng::new(16);
    let f = rng.normal_matrix(5, 5);
    let gx = spd(&mut rng, 5, 5);
    let ge = spd(&mut rng, 5, 5).scale(0.2);
    for task in [Task::Forward, Task::Inverse] {
        let spec = linear(task, Some(f.clone()), &gx, Some(&ge), 2);
        let map = optimal_map(&spec).unwrap();
        for _ in 0..500 {
            let d = rng.normal_matrix(5, 2);
            let e = rng.normal_matrix(2, 5);
            let mut cand = d.matmul(&e).unwrap();
            // Scale each candidate to its own best multiple so the family is not trivially bad.
            let c = cand.scale(1.0);
            let base = risk_of(&c.scale(0.0), None, &spec).unwrap();
            let r1 = risk_of(&c, None, &spec).unwrap();
            let r2 = risk_of(&c.scale(2.0), None, &spec).unwrap();
            // risk(t) = base + t g + t² h is quadratic in t.
            let h = (r2 - 2.0 * r1 + base) / 2.0;
            let g = r1 - base - h;
            if h > 0.0 {
                cand = c.scale(-g / (2.0 * h));
            }
            assert!(map.risk <= risk_of(&cand, None, &spec).unwrap() + 1e-9);
        }
    }
}

#[test]
fn clamped_rank_reports_saturated_map() {
    let mut rng = SeededRng::new(17);
    let gx = spd(&mut rng, 5, 2);
    let spec = linear(Task::Autoencode, None, &gx, None, 4);
    let map = optimal_autoencoder(&spec).unwrap();
    assert!(map.trace.clamped);
    assert_eq!(map.trace.used_rank, 2);
    let at2 = optimal_autoencoder(&spec.with_rank(2)).unwrap();
    assert!((map.risk - at2.risk).abs() < 1e-12);
}

#[test]
fn tie_is_flagged() {
    let gx = DenseMatrix::from_diagonal(&[3.0, 2.0, 2.0]);
    let map = optimal_autoencoder(&linear(Task::Autoencode, None, &gx, None, 2)).unwrap();
    assert!(map.trace.tie);
}

#[test]
fn contract_violations_are_reported() {
    let id = DenseMatrix::identity(3);
    let signal = MomentModel::second_moment(&id, PSD, 0.0).unwrap();
    let missing_mean = ProblemSpec::new(
        ProblemKind::new(Task::Forward, Form::Affine),
        Some(id.clone()),
        signal.clone(),
        None,
        1,
    );
    assert!(matches!(missing_mean, Err(MappingError::Contract(_))));
    let bad_f = ProblemSpec::new(
        ProblemKind::new(Task::Forward, Form::Linear),
        Some(DenseMatrix::identity(2)),
        signal.clone(),
        None,
        1,
    );
    assert!(matches!(bad_f, Err(MappingError::Dimension(_))));
    let spec = linear(Task::Forward, Some(id.clone()), &id, None, 1);
    assert!(matches!(optimal_inverse(&spec), Err(MappingError::KindMismatch { .. })));
}

#[test]
fn affine_centering_decomposes_prediction() {
    let mut rng = SeededRng::new(18);
    let f = rng.normal_matrix(4, 4);
    let sx = spd(&mut rng, 4, 4);
    let mu = vec![1.0, -1.0, 2.0, 0.5];
    let aff = optimal_forward_affine(&affine(Task::Forward, Some(f.clone()), &sx, mu.clone(), None, 2)).unwrap();
    let lin = optimal_forward(&linear(Task::Forward, Some(f.clone()), &sx, None, 2)).unwrap();
    let x = rng.normal_matrix(4, 7);
    let mut centered = x.clone();
    centered.add_to_columns(&mu.iter().map(|m| -m).collect::<Vec<_>>());
    let mut expected = lin.a.matmul(&centered).unwrap();
    // A (x − μ) + F μ
    expected.add_to_columns(&f.mul_vec(&mu).unwrap());
    assert!(rel(&aff.apply(&x).unwrap(), &expected) < 1e-10);
}

fn kind_strategy() -> impl Strategy<Value = (Task, Form)> {
    (
        prop_oneof![Just(Task::Forward), Just(Task::Inverse), Just(Task::Autoencode), Just(Task::Denoise)],
        prop_oneof![Just(Form::Linear), Just(Form::Affine)],
    )
}

fn random_spec(seed: u64, task: Task, form: Form, n: usize, m: usize, k: usize, r: usize) -> ProblemSpec {
    let mut rng = SeededRng::new(seed);
    let m = if matches!(task, Task::Autoencode | Task::Denoise) { n } else { m };
    let f = matches!(task, Task::Forward | Task::Inverse).then(|| rng.normal_matrix(m, n));
    let gx = spd(&mut rng, n, k);
    let ge = (task != Task::Autoencode).then(|| spd(&mut rng, m, m).scale(0.1));
    match form {
        Form::Linear => linear(task, f, &gx, ge.as_ref(), r),
        Form::Affine => {
            let mu = (0..n).map(|_| rng.normal()).collect();
            affine(task, f, &gx, mu, ge.as_ref(), r)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn risk_is_nonincreasing_in_rank(seed in 0u64..10_000, (task, form) in kind_strategy(), n in 2usize..7, m in 2usize..7, k in 1usize..7) {
        let spec = random_spec(seed, task, form, n, m, k.min(n), 1);
        let prepared = prepare(&spec).unwrap();
        let mut prev = f64::INFINITY;
        for r in 1..=n.max(m) {
            let map = prepared.map_at(r).unwrap();
            prop_assert!(map.risk >= -1e-10);
            prop_assert!(map.risk <= prev + 1e-10 * prev.abs().max(1.0));
            prev = map.risk;
        }
    }

    #[test]
    fn map_rank_respects_target(seed in 0u64..10_000, (task, form) in kind_strategy(), n in 2usize..7, m in 2usize..7, r in 1usize..4) {
        let spec = random_spec(seed, task, form, n, m, n, r);
        let map = optimal_map(&spec).unwrap();
        let rank = crate::linalg::svd(&map.a, 0.0).unwrap().effective_rank;
        prop_assert!(rank <= r);
        prop_assert_eq!(map.bias.is_some(), form == Form::Affine);
    }

    #[test]
    fn forward_branch_formula_agrees(seed in 0u64..10_000, n in 2usize..7, m in 2usize..7, k in 1usize..7) {
        let spec = random_spec(seed, Task::Forward, Form::Linear, n, m, k.min(n), n.max(m));
        let map = optimal_forward(&spec).unwrap();
        let f = spec.forward_operator.clone().unwrap();
        let simplified = match map.trace.branch {
            Branch::OperatorRecovery => f.clone(),
            Branch::ProjectedOperator => f.matmul(&left_projector(&spec.signal.moment).unwrap()).unwrap(),
            other => panic!("unexpected branch {other:?}"),
        };
        prop_assert!(map.a.sub(&simplified).unwrap().frobenius_norm() <= 1e-8 * f.frobenius_norm());
    }
}
