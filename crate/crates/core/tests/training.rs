use nalgebra::{DMatrix, DVector};
use pumrom::components::{Archetype, ArchetypeComponent, MeshSpec};
use pumrom::fem::NewtonSettings;
use pumrom::linalg::SparseMatrix;
use pumrom::training::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn fourier_weight_ratio() {
    let r = fourier_weight(1, 1.0) / fourier_weight(1, 2.0);
    let tp = 2.0 * std::f64::consts::PI;
    assert!((r - ((1.0 + tp.powi(4)) / (1.0 + tp.powi(2))).sqrt()).abs() < 1e-12);
    assert!((r - 6.2071).abs() < 1e-4);
}

#[test]
fn zero_coefficients_give_zero_field() {
    let f = FourierField { alpha: 1.0, c_re: vec![0.0; 5], c_im: vec![0.0; 5] };
    assert_eq!(f.eval(0.3), (0.0, 0.0));
    assert_eq!(f.h_alpha_norm2(), 0.0);
}

#[test]
fn quadrature_norm_matches_coefficients() {
    let mut r = rng(1);
    for alpha in [1.0, 2.0] {
        for _ in 0..5 {
            let f = sample_fourier_field(20, alpha, &mut r);
            let (a, b) = (f.h_alpha_norm2(), f.h_alpha_norm2_quadrature(64));
            assert!((a - b).abs() <= 1e-8 * a, "{a} {b}");
            // equals the coefficient sum of squares
            let c: f64 = f.c_re.iter().chain(&f.c_im).map(|x| x * x).sum();
            assert!((a - c).abs() <= 1e-10 * c);
        }
    }
}

#[test]
fn smooth_sampler_ranges() {
    let mesh = MeshSpec::fast();
    let mut r = rng(2);
    let settings = SamplerSettings::default();
    for arch in Archetype::ALL {
        let comp = ArchetypeComponent::new(arch, mesh).unwrap();
        let s: Vec<f64> = comp.patch.inlet.iter().map(|p| p.1).collect();
        for _ in 0..50 {
            let g = sample_bc(arch, &s, &settings, &mut r).unwrap();
            assert!(g.values.iter().all(|v| (0.0..=0.5).contains(v)));
            for (v, t) in g.values.iter().zip(&s) {
                if arch != Archetype::Int && (*t == 0.0 || *t == 1.0) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }
    // internal: periodic data, g(0) = g(1)
    let s = [0.0, 0.25, 1.0];
    let g = sample_bc(Archetype::Int, &s, &settings, &mut r).unwrap();
    assert!((g.values[0] - g.values[2]).abs() < 1e-12);
}

#[test]
fn gaussian_sampler() {
    let mut r = rng(3);
    let s: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let g = sample_gaussian_bc(Archetype::Ed, &s, Some(0.5), &mut r);
    assert!(g.values.iter().all(|v| (0.0..=0.5).contains(v)));
    assert_eq!(g.values[0], 0.0);
    assert_eq!(g.values[10], 0.0);
    // linear case variance
    let mut acc = Vec::new();
    for _ in 0..1000 {
        acc.extend(sample_gaussian_bc(Archetype::Int, &s[..10], None, &mut r).values);
    }
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / n;
    let var = acc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!((var - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn source_probability() {
    let mut r = rng(4);
    let mut counts = [0usize; 5];
    for _ in 0..10_000 {
        let p = sample_local_parameters(Archetype::Co, 1.0, &mut r);
        counts[p.i_star] += 1;
        assert!(p.params.iter().all(|m| (0.1..=0.2).contains(&m[0]) && (30.0..=40.0).contains(&m[1])));
    }
    assert_eq!(counts[0], 0);
    for c in &counts[1..] {
        assert!((*c as f64 / 1e4 - 0.25).abs() < 0.02);
    }
    assert!((0..100).all(|_| sample_local_parameters(Archetype::Int, 0.0, &mut r).i_star == 0));
}

#[test]
fn seed_determinism() {
    let s: Vec<f64> = (0..30).map(|k| k as f64 / 29.0).collect();
    let st = SamplerSettings::default();
    let a = sample_bc(Archetype::Ed, &s, &st, &mut rng(9)).unwrap();
    let b = sample_bc(Archetype::Ed, &s, &st, &mut rng(9)).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn transfer_constant_state_and_zero() {
    let mesh = MeshSpec::fast();
    let comp = ArchetypeComponent::new(Archetype::Int, mesh).unwrap();
    let mu = LocalParams { params: vec![[0.15, 35.0]; 9], i_star: 0 };
    let n_in = comp.patch.inlet.len();
    let g = BoundarySample { values: vec![0.3; n_in], kind: SamplerKind::Smooth, alpha: 1.0, n_f: 20, u_max: Some(0.5) };
    let u = solve_transfer(&comp, &mu, &g, &NewtonSettings::default()).unwrap();
    assert!(u.iter().all(|v| (v - 0.3).abs() < 1e-10));
    let g0 = BoundarySample { values: vec![0.0; n_in], ..g };
    let u = solve_transfer(&comp, &mu, &g0, &NewtonSettings::default()).unwrap();
    assert!(u.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn localized_training_spans_snapshots() {
    let mesh = MeshSpec::fast();
    let comp = ArchetypeComponent::new(Archetype::Co, mesh).unwrap();
    let settings = TrainingSettings { n_train: 8, n: 8, ..Default::default() };
    let out = localized_training(&comp, &settings, &mut rng(5)).unwrap();
    let z = &out.basis.modes;
    let g = z.transpose() * comp.norm_gram.mul_dense(z);
    assert!((g - DMatrix::identity(z.ncols(), z.ncols())).amax() < 1e-10);
    if !out.basis.rank_deficient {
        let e = projection_errors(z, &comp.norm_gram, &out.snapshots).unwrap();
        assert!(e.column(z.ncols()).amax() < 1e-10);
    }
}

fn random_gram(n: usize, seed: u64) -> SparseMatrix {
    let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3 + seed as usize) % 11) as f64 / 11.0);
    SparseMatrix::from_dense(&(a.transpose() * a + DMatrix::identity(n, n)))
}

#[test]
fn pod_examples() {
    let g = random_gram(6, 1);
    let v = DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.3]);
    let s = DMatrix::from_columns(&[v.clone(), v.clone()]);
    let p = pod(&s, &g, 1).unwrap();
    assert_eq!(p.modes.ncols(), 1);
    assert!(p.eigenvalues[1].abs() < 1e-12 * p.eigenvalues[0]);
    let nv = g.quad_form(v.as_slice()).sqrt();
    let m = p.modes.column(0);
    let sign = m[0].signum() * v[0].signum();
    assert!((m * sign - &v / nv).amax() < 1e-12);
    assert!(pod(&s, &g, 2).unwrap().rank_deficient);

    // rank-2 data reconstructed exactly; optimality identity
    let a = DVector::from_fn(6, |i, _| (i as f64).sin());
    let b = DVector::from_fn(6, |i, _| (i as f64 * 0.7).cos());
    let s = DMatrix::from_columns(&[a.clone(), b.clone(), &a + &b * 2.0, &a * 3.0 - &b]);
    let p = pod(&s, &g, 2).unwrap();
    let e = projection_errors(&p.modes, &g, &s).unwrap();
    assert!(e.column(2).amax() < 1e-10);
    let p1 = pod(&s, &g, 1).unwrap();
    let gs = g.mul_dense(&s);
    let z = &p1.modes;
    let mut sq = 0.0;
    for j in 0..s.ncols() {
        let w = s.column(j);
        let c = z.column(0).dot(&gs.column(j));
        let r = w - z.column(0) * c;
        sq += g.quad_form(r.as_slice());
    }
    let tail: f64 = p1.eigenvalues[1..].iter().sum();
    assert!((sq - tail).abs() <= 1e-10 * p1.eigenvalues[0]);
}

#[test]
fn projection_indicator_examples() {
    let g = random_gram(5, 2);
    let t = DMatrix::from_fn(5, 3, |i, j| (i + 2 * j) as f64 + 1.0);
    let empty = DMatrix::zeros(5, 0);
    assert_eq!(projection_error_indicator(&empty, &g, &t).unwrap(), 1.0);
    let p = pod(&t, &g, 3).unwrap();
    assert!(projection_error_indicator(&p.modes, &g, &t).unwrap() < 1e-10);
    let z = DMatrix::from_columns(&[t.column(0).into_owned(), DVector::zeros(5)]);
    assert!(matches!(
        projection_error_indicator(&empty, &g, &z),
        Err(pumrom::Error::ZeroSnapshot(1))
    ));
}

#[test]
fn linear_setup_and_superposition() {
    let setup = LinearSetup::new(9, 3).unwrap();
    assert_eq!(setup.disc.ndofs(), 784);
    assert_eq!(setup.n_in(), 108);
    let t = setup.transfer([0.5, 0.3, -0.2, 0.4]).unwrap();
    let s = setup.arclength();
    let mut r = rng(6);
    let g1 = sample_fourier_bc(&s, 20, 1.0, &mut r).values;
    let g2 = sample_fourier_bc(&s, 20, 1.0, &mut r).values;
    let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
    let (u1, u2, u12) = (t.apply(&g1).unwrap(), t.apply(&g2).unwrap(), t.apply(&sum).unwrap());
    for k in 0..u1.len() {
        assert!((u1[k] + u2[k] - u12[k]).abs() < 1e-10);
    }
}

#[test]
fn te_pod_full_range_identity() {
    let setup = LinearSetup::new(3, 5).unwrap();
    assert_eq!(setup.n_in(), 60);
    let mu = [0.7, 0.2, -0.5, 0.3];
    let te = te_pod_baseline(&setup, &[mu], setup.n_in()).unwrap();
    let sv = &te.singular_values[0];
    assert!(sv.windows(2).all(|w| w[0] >= w[1]));
    let t = setup.transfer(mu).unwrap();
    let mut r = rng(7);
    let g = sample_fourier_bc(&setup.arclength(), 20, 1.0, &mut r).values;
    let u = DMatrix::from_column_slice(setup.omega.ndofs(), 1, &t.apply(&g).unwrap());
    let e = projection_errors(&te.modes, &setup.gram, &u).unwrap();
    assert!(e[(0, te.modes.ncols())] < 1e-8, "{}", e[(0, te.modes.ncols())]);
}
