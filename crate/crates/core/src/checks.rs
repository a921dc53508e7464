//! Numerical invariant checks shared by `verify` and the acceptance suite.
//! Every check returns the worst observed value next to its threshold.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::components::*;
use crate::enrichment::{mark_components, simplified_enrich_linear};
use crate::error::Result;
use crate::estimator::*;
use crate::fem::assembly::assemble_mass;
use crate::fem::io::{read_matrix, write_matrix};
use crate::fem::{assemble_h1_seminorm_gram, assemble_jacobian, NewtonSettings, RotoTranslation};
use crate::linalg::orthonormalize_against;
use crate::models::LinearCoercive;
use crate::rom::*;
use crate::training::*;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed quantity; compared against `threshold`.
    pub worst: f64,
    pub threshold: f64,
    pub detail: String,
    pub seconds: f64,
}

fn finish(name: &str, start: Instant, passed: bool, worst: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        worst,
        threshold,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Wraps a fallible check so errors become failures.
pub fn run(name: &str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    let start = Instant::now();
    f().unwrap_or_else(|e| finish(name, start, false, f64::NAN, f64::NAN, format!("error: {e}")))
}

/// Smooth random field on the global mesh vanishing on the boundary.
pub fn random_global_field(space: &PumSpace, amp: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let k: [f64; 6] = std::array::from_fn(|_| rng.random::<f64>() - 0.5);
    let w = space.cfg.h * space.cfg.n_dd as f64;
    (0..space.disc.ndofs())
        .map(|d| {
            let noise = rng.random::<f64>() - 0.5;
            if space.dirichlet[d] {
                return 0.0;
            }
            let [x, y] = space.disc.node(d);
            let (x, y) = (x / w, y / w);
            amp * (k[0] + k[1] * x + k[2] * (7.0 * y).sin() + k[3] * (11.0 * x * y).cos() + k[4] * x * x + 0.1 * k[5] * noise)
        })
        .collect()
}

/// Smooth random local modes, orthonormal in the local norm, zero on walls.
pub fn random_local_bases(lib: &ComponentLibrary, n: usize, rng: &mut dyn RngCore) -> Vec<DMatrix<f64>> {
    Archetype::ALL
        .iter()
        .map(|a| {
            let comp = lib.get(*a);
            let nd = comp.ndofs();
            let coef: Vec<[f64; 6]> = (0..n + 4).map(|_| std::array::from_fn(|_| rng.random::<f64>() - 0.5)).collect();
            let cand = DMatrix::from_fn(nd, coef.len(), |l, c| {
                if comp.wall[l] {
                    return 0.0;
                }
                let [x, y] = comp.disc.node(l);
                let (x, y) = (x / H, y / H);
                let k = coef[c];
                k[0] + k[1] * x + k[2] * y + k[3] * x * y + k[4] * (3.0 * x).sin() + k[5] * (2.0 * y).cos()
            });
            let z = orthonormalize_against(&comp.norm_gram, &DMatrix::zeros(nd, 0), &cand, 1e-8);
            z.columns(0, n.min(z.ncols())).into_owned()
        })
        .collect()
}

fn random_config(n_dd: usize, rng: &mut dyn RngCore) -> Result<GlobalConfiguration> {
    let params = (0..n_dd * n_dd).map(|_| sample_box(rng)).collect();
    instantiate_configuration(n_dd, params, rng.random_range(1..=n_dd * n_dd))
}

fn space_for(lib: &ComponentLibrary, n_dd: usize, rng: &mut dyn RngCore) -> Result<Arc<PumSpace>> {
    Ok(Arc::new(PumSpace::new(random_config(n_dd, rng)?, lib)?))
}

/// Partition of unity: nodal sum, overlap count and gradient bound.
pub fn pou(mesh: MeshSpec, n_dd: usize) -> CheckResult {
    run("pou_exactness", || {
        let start = Instant::now();
        let cfg = instantiate_configuration(n_dd, vec![[0.15, 35.0]; n_dd * n_dd], 0)?;
        let disc = mesh.global_discretization(n_dd)?;
        let p = build_pou(&cfg, &disc, mesh.delta)?;
        let sum_err = p.nodal_sum().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        let grad_err = p.grad_max.iter().map(|g| (g / p.c_bound - 1.0).abs()).fold(0.0, f64::max);
        let ok = sum_err <= 1e-13 && p.max_cover() == OVERLAP_COUNT && grad_err <= 0.02;
        Ok(finish(
            "pou_exactness",
            start,
            ok,
            sum_err,
            1e-13,
            format!("max cover {} (M = {OVERLAP_COUNT}), gradient deviation {grad_err:.2e} (<= 2%)", p.max_cover()),
        ))
    })
}

/// Best local approximations glued by the PoU satisfy both global bounds.
pub fn approximation_bound(lib: &Arc<ComponentLibrary>, n_dd: usize, trials: usize, n: usize, seed: u64) -> CheckResult {
    run("approximation_bound", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = space_for(lib, n_dd, &mut rng)?;
        let bases = random_local_bases(lib, n, &mut rng);
        let pou = build_pou(&space.cfg, &space.disc, lib.get(Archetype::Co).mesh.delta)?;
        let disc = &space.disc;
        let nc = space.n_components();
        let phis: Vec<Vec<f64>> = (0..nc).map(|i| pou.values(i)).collect();
        let locals: Vec<(crate::linalg::SparseMatrix, crate::linalg::SparseMatrix)> = Archetype::ALL
            .iter()
            .map(|a| {
                let d = &lib.get(*a).disc;
                (assemble_mass(d), assemble_h1_seminorm_gram(d))
            })
            .collect();
        // components touching each element
        let active: Vec<Vec<usize>> = (0..disc.n_elems())
            .map(|e| {
                let dofs = disc.elem_dofs_vec(e);
                (0..nc).filter(|j| dofs.iter().any(|d| phis[*j][*d] > 0.0)).collect()
            })
            .collect();
        let (mut worst_l2, mut worst_h1): (f64, f64) = (0.0, 0.0);
        for _ in 0..trials {
            let u = random_global_field(&space, 1.0, &mut rng);
            let mut eps = 0.0;
            let mut eps_h1 = 0.0;
            let mut zetas = Vec::with_capacity(nc);
            for i in 0..nc {
                let a = space.cfg.labels[i];
                let comp = lib.get(a);
                let z = &bases[a.index()];
                let ul = DVector::from_vec(gather(&space, i, &u));
                let kz = comp.h1_gram.mul_dense(z);
                let m = z.transpose() * &kz;
                let c = nalgebra::Cholesky::new(m)
                    .ok_or(crate::error::Error::IndefiniteGram)?
                    .solve(&(kz.transpose() * &ul));
                let zeta = z * c;
                let e = &ul - &zeta;
                let (mass, semi) = &locals[a.index()];
                eps += mass.quad_form(e.as_slice());
                eps_h1 += semi.quad_form(e.as_slice());
                let mut g = vec![0.0; disc.ndofs()];
                for (l, gi) in space.ref_to_global[i].iter().enumerate() {
                    g[*gi] = zeta[l];
                }
                zetas.push(g);
            }
            let mut l2 = 0.0;
            let mut h1 = 0.0;
            for e in 0..disc.n_elems() {
                let q = disc.quad_points(e);
                let mut err: Vec<(f64, [f64; 2])> = disc.eval_at_quad(e, &u);
                for j in &active[e] {
                    let ph = disc.eval_at_quad(e, &phis[*j]);
                    let ze = disc.eval_at_quad(e, &zetas[*j]);
                    for k in 0..q.len() {
                        let (p, gp) = ph[k];
                        let (z, gz) = ze[k];
                        err[k].0 -= p * z;
                        err[k].1[0] -= gp[0] * z + p * gz[0];
                        err[k].1[1] -= gp[1] * z + p * gz[1];
                    }
                }
                for (k, (_, w)) in q.iter().enumerate() {
                    l2 += w * err[k].0 * err[k].0;
                    h1 += w * (err[k].1[0].powi(2) + err[k].1[1].powi(2));
                }
            }
            let m = pou.overlap_count as f64;
            let bound_l2 = (m * eps).sqrt();
            let bound_h1 = (2.0 * m * (pou.c_bound.powi(2) * eps + eps_h1)).sqrt();
            worst_l2 = worst_l2.max(l2.sqrt() / bound_l2);
            worst_h1 = worst_h1.max(h1.sqrt() / bound_h1);
        }
        let worst = worst_l2.max(worst_h1);
        Ok(finish(
            "approximation_bound",
            start,
            worst <= 1.0 + 1e-10,
            worst,
            1.0,
            format!("{trials} fields, n = {n}: max ratio L2 {worst_l2:.3e}, H1 {worst_h1:.3e}"),
        ))
    })
}

/// Global dual residual against `R_mu[u]` with `C^r` multiplied by `c_scale`.
pub fn residual_bound(lib: &Arc<ComponentLibrary>, states: usize, seed: u64, c_scale: f64) -> CheckResult {
    run("residual_bound", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut violations = 0;
        for s in 0..states {
            let n_dd = 2 + s % 3;
            let space = space_for(lib, n_dd, &mut rng)?;
            let form = space.cfg.model()?;
            let dual = global_h1_dual(&space)?;
            let u = random_global_field(&space, 0.4, &mut rng);
            let res = local_residuals(&space, lib, &u, &form)?;
            let c = 2f64.sqrt() / lib.get(Archetype::Co).mesh.delta;
            let bound = c_scale * global_residual_bound(&res, &[c], OVERLAP_COUNT);
            let lhs = global_dual_residual(&space, &dual, &u, &form)?;
            let ratio = lhs / bound;
            if ratio > 1.0 + 1e-10 {
                violations += 1;
            }
            worst = worst.max(ratio);
        }
        Ok(finish(
            "residual_bound",
            start,
            violations == 0,
            worst,
            1.0,
            format!("{states} states, {violations} violations, C^r scale {c_scale}"),
        ))
    })
}

/// `sup ||I_h(phi v)||_1 / ||v||_1` on every archetype against `C^r`.
pub fn pou_multiplier(lib: &ComponentLibrary, c_scale: f64) -> CheckResult {
    run("pou_multiplier_constant", || {
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        for comp in lib.iter() {
            let l = nalgebra::Cholesky::new(comp.h1_gram.to_dense())
                .ok_or(crate::error::Error::IndefiniteGram)?
                .l();
            let li = l.solve_lower_triangular(&DMatrix::identity(comp.ndofs(), comp.ndofs())).expect("triangular");
            let m = &li * comp.norm_gram.to_dense() * li.transpose();
            let m = (&m + m.transpose()) * 0.5;
            let sup = m.symmetric_eigenvalues().max().max(0.0).sqrt();
            let cr = c_scale * c_r(2f64.sqrt() / comp.mesh.delta);
            worst = worst.max(sup / cr);
            parts.push(format!("{} {sup:.2}", comp.archetype));
        }
        Ok(finish(
            "pou_multiplier_constant",
            start,
            worst <= 1.0,
            worst,
            1.0,
            format!("sup per archetype: {} (ratio to scaled C^r)", parts.join(", ")),
        ))
    })
}

/// Worst-case covector of the localization on a small configuration.
pub fn residual_bound_sharp(lib: &ComponentLibrary, c_scale: f64) -> CheckResult {
    run("residual_bound_sharp", || {
        let start = Instant::now();
        let cfg = instantiate_configuration(2, vec![[0.15, 35.0]; 4], 1)?;
        let space = PumSpace::new(cfg, lib)?;
        let free: Vec<usize> = (0..space.disc.ndofs()).filter(|d| !space.dirichlet[*d]).collect();
        let mut pos = vec![usize::MAX; space.disc.ndofs()];
        for (k, d) in free.iter().enumerate() {
            pos[*d] = k;
        }
        let nf = free.len();
        let g = global_h1_gram(&space).to_dense();
        let gf = DMatrix::from_fn(nf, nf, |a, b| g[(free[a], free[b])]);
        let mut b = DMatrix::<f64>::zeros(nf, nf);
        for i in 0..space.n_components() {
            let comp = lib.get(space.cfg.labels[i]);
            let idx: Vec<usize> = (0..comp.ndofs()).filter(|l| comp.interior[*l]).collect();
            let k = comp.h1_gram.to_dense();
            let ki = DMatrix::from_fn(idx.len(), idx.len(), |a, c| k[(idx[a], idx[c])])
                .try_inverse()
                .ok_or(crate::error::Error::IndefiniteGram)?;
            for (a, la) in idx.iter().enumerate() {
                for (c, lc) in idx.iter().enumerate() {
                    b[(pos[space.ref_to_global[i][*la]], pos[space.ref_to_global[i][*lc]])] += ki[(a, c)];
                }
            }
        }
        let l = nalgebra::Cholesky::new(b).ok_or(crate::error::Error::IndefiniteGram)?.l();
        let li = l.solve_lower_triangular(&DMatrix::identity(nf, nf)).expect("triangular");
        let gi = nalgebra::Cholesky::new(gf).ok_or(crate::error::Error::IndefiniteGram)?.inverse();
        let m: DMatrix<f64> = li.transpose() * gi * &li;
        let m = (&m + m.transpose()) * 0.5;
        let sharp = m.symmetric_eigenvalues().max().max(0.0).sqrt();
        let bound = c_scale * (OVERLAP_COUNT as f64).sqrt() * c_r(2f64.sqrt() / lib.get(Archetype::Co).mesh.delta);
        Ok(finish(
            "residual_bound_sharp",
            start,
            sharp <= bound,
            sharp / bound,
            1.0,
            format!("sharp constant {sharp:.3} vs sqrt(M) max C^r = {bound:.3}"),
        ))
    })
}

/// Mean of `||g||^2_{H^alpha}` against `2 N_f`.
pub fn chi_squared(samples: usize, n_f: usize, alphas: &[f64], seed: u64) -> CheckResult {
    run("fourier_chi2", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        for a in alphas {
            let mean = (0..samples)
                .map(|_| sample_fourier_field(n_f, *a, &mut rng).h_alpha_norm2())
                .sum::<f64>()
                / samples as f64;
            let dev = (mean / (2.0 * n_f as f64) - 1.0).abs();
            worst = worst.max(dev);
            parts.push(format!("alpha {a}: mean {mean:.3}"));
        }
        Ok(finish(
            "fourier_chi2",
            start,
            worst <= 0.05,
            worst,
            0.05,
            format!("{samples} samples, 2 N_f = {}; {}", 2 * n_f, parts.join(", ")),
        ))
    })
}

/// Analytic reduced Jacobian against central differences.
pub fn jacobian_fd(lib: &Arc<ComponentLibrary>, states: usize, seed: u64) -> CheckResult {
    run("jacobian_fd", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = space_for(lib, 3, &mut rng)?;
        let form = space.cfg.model()?;
        let sys = assemble_rom(space, lib.clone(), &random_local_bases(lib, 3, &mut rng))?;
        let mut worst: f64 = 0.0;
        for _ in 0..states {
            let u: Vec<f64> = (0..sys.dim()).map(|_| 0.1 * (rng.random::<f64>() - 0.5)).collect();
            let (_, j) = reduced_jacobian(&sys, &form, &u)?;
            let jd = j.to_dense();
            let h = 1e-6;
            let mut fd = DMatrix::zeros(sys.dim(), sys.dim());
            for c in 0..sys.dim() {
                let mut up = u.clone();
                let mut um = u.clone();
                up[c] += h;
                um[c] -= h;
                let rp = reduced_residual(&sys, &form, &up)?;
                let rm = reduced_residual(&sys, &form, &um)?;
                for r in 0..sys.dim() {
                    fd[(r, c)] = (rp[r] - rm[r]) / (2.0 * h);
                }
            }
            worst = worst.max((&jd - fd).norm() / jd.norm());
        }
        Ok(finish("jacobian_fd", start, worst <= 1e-6, worst, 1e-6, format!("{states} random states, relative Frobenius error")))
    })
}

/// Galerkin ROM error equals the best approximation error and the dual
/// residual norm in the energy norm.
pub fn galerkin_optimality(lib: &Arc<ComponentLibrary>, seed: u64) -> CheckResult {
    run("galerkin_optimality", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = space_for(lib, 3, &mut rng)?;
        let model = LinearCoercive::new(
            rng.random_range(0.2..1.0),
            rng.random_range(0.0..1.0),
            [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)],
        );
        let settings = NewtonSettings::default();
        let (exact, _) = solve_hf(&space, &model, &settings)?;
        let sys = assemble_rom(space.clone(), lib.clone(), &random_local_bases(lib, 4, &mut rng))?;
        let (coef, _) = solve_rom(&sys, &model, &settings, None)?;
        let zero = vec![0.0; space.disc.ndofs()];
        let (_, a) = assemble_jacobian(&space.disc, &model.bilinear(), &RotoTranslation::identity(), &zero)?;
        let err = |f: &[f64]| {
            let e: Vec<f64> = exact.iter().zip(f).map(|(x, y)| x - y).collect();
            a.quad_form(&e).max(0.0).sqrt()
        };
        let u_hat = sys.reconstruct(&coef);
        let e_gal = err(&u_hat);
        let e_best = err(&sys.reconstruct(&sys.project(&exact, &a)?));
        let dual = GlobalDualNorm::new(&a, &space.dirichlet)?;
        let e_dual = global_dual_residual(&space, &dual, &u_hat, &model)?;
        let d1 = (e_gal - e_best).abs() / e_best;
        let d2 = (e_gal - e_dual).abs() / e_gal;
        let worst = d1.max(d2);
        Ok(finish(
            "galerkin_optimality",
            start,
            worst <= 1e-8,
            worst,
            1e-8,
            format!("energy error {e_gal:.6e}, best {e_best:.6e}, dual residual {e_dual:.6e}"),
        ))
    })
}

/// Simplified enrichment on a linear coercive problem: monotone decrease,
/// per-step identity and the geometric bound.
pub fn enrichment_convergence(lib: &Arc<ComponentLibrary>, n_dd: usize, iterations: usize, seeds: &[u64]) -> CheckResult {
    run("enrichment_convergence", || {
        let start = Instant::now();
        let mut worst: f64 = f64::NEG_INFINITY;
        let mut fails = Vec::new();
        let mut reduction: f64 = 0.0;
        for seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let space = space_for(lib, n_dd, &mut rng)?;
            let w = space.cfg.h * n_dd as f64;
            let model = LinearCoercive::new(
                rng.random_range(0.2..1.0),
                rng.random_range(0.0..1.0),
                [rng.random_range(0.0..w), rng.random_range(0.0..w)],
            );
            let t = simplified_enrich_linear(&space, lib, &model, random_local_bases(lib, 1, &mut rng), iterations)?;
            let e0 = t.errors[0];
            for l in 0..iterations {
                let (a, b, r) = (t.errors[l], t.errors[l + 1], t.residuals[l]);
                // all violations are measured relative to e0^2
                let v = [
                    (b - a) / e0,
                    (b * b - (a * a - r * r)) / (e0 * e0) - 1e-8,
                    (b - t.bound[l + 1]) / e0,
                ];
                let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max(m);
                if m > 0.0 {
                    fails.push(format!("seed {seed} step {l}"));
                }
            }
            reduction = reduction.max(t.errors[iterations] / e0);
        }
        Ok(finish(
            "enrichment_convergence",
            start,
            fails.is_empty(),
            worst,
            0.0,
            format!(
                "N_dd = {}, {iterations} steps x {} seeds; worst final/initial error {reduction:.3e}; failures: {:?}",
                n_dd * n_dd,
                seeds.len(),
                fails
            ),
        ))
    })
}

/// Riesz residual homogeneity for a linear unloaded model.
pub fn riesz_homogeneity(lib: &Arc<ComponentLibrary>, seed: u64) -> CheckResult {
    run("riesz_homogeneity", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = space_for(lib, 3, &mut rng)?;
        let form = LinearCoercive::new(0.6, 0.3, [0.1, 0.1]).bilinear();
        let u = random_global_field(&space, 1.0, &mut rng);
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let a = local_residuals(&space, lib, &u, &form)?;
        let b = local_residuals(&space, lib, &u2, &form)?;
        let worst = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (2.0 * x - y).abs() / y.abs().max(1e-300))
            .fold(0.0, f64::max);
        Ok(finish("riesz_homogeneity", start, worst <= 1e-12, worst, 1e-12, "r[2u] = 2 r[u]".into()))
    })
}

/// HF solution has vanishing local residuals and global dual residual.
pub fn exact_solution_residual(lib: &Arc<ComponentLibrary>, seed: u64) -> CheckResult {
    run("exact_solution_residual", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = space_for(lib, 2, &mut rng)?;
        let form = space.cfg.model()?;
        let (u, _) = solve_hf(&space, &form, &NewtonSettings::default())?;
        let d = delta_indicator(&local_residuals(&space, lib, &u, &form)?);
        let g = global_dual_residual(&space, &global_h1_dual(&space)?, &u, &form)?;
        let worst = d.max(g);
        Ok(finish("exact_solution_residual", start, worst <= 1e-8, worst, 1e-8, format!("Delta {d:.2e}, dual {g:.2e}")))
    })
}

/// POD modes are orthonormal in the local norm.
pub fn pod_orthonormality(lib: &ComponentLibrary, seed: u64) -> CheckResult {
    run("pod_orthonormality", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comp = lib.get(Archetype::Int);
        let snaps = DMatrix::from_fn(comp.ndofs(), 12, |l, c| {
            let [x, y] = comp.disc.node(l);
            ((c + 1) as f64 * x / H).sin() * (y / H + rng.random::<f64>() * 0.01) + c as f64 * 0.1
        });
        let p = pod(&snaps, &comp.norm_gram, 8)?;
        let g = p.modes.transpose() * comp.norm_gram.mul_dense(&p.modes);
        let worst = (g - DMatrix::identity(p.modes.ncols(), p.modes.ncols())).abs().max();
        Ok(finish("pod_orthonormality", start, worst <= 1e-10, worst, 1e-10, format!("{} modes", p.modes.ncols())))
    })
}

/// Smooth boundary samples respect `[0, u_max]` and vanish at the ends of
/// corner and edge inlets.
pub fn sampler_bounds(lib: &ComponentLibrary, samples: usize, seed: u64) -> CheckResult {
    run("sampler_bounds", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let settings = SamplerSettings::default();
        let mut worst: f64 = 0.0;
        for comp in lib.iter() {
            let s: Vec<f64> = comp.patch.inlet.iter().map(|p| p.1).collect();
            for _ in 0..samples {
                let g = sample_bc(comp.archetype, &s, &settings, &mut rng)?;
                for (v, t) in g.values.iter().zip(&s) {
                    worst = worst.max(-v).max(v - settings.u_max);
                    if comp.archetype != Archetype::Int && (*t == 0.0 || *t == 1.0) {
                        worst = worst.max(v.abs());
                    }
                }
            }
        }
        Ok(finish("sampler_bounds", start, worst <= 1e-14, worst, 1e-14, format!("{samples} samples per archetype")))
    })
}

/// Identical seeds give bit-identical training output.
pub fn determinism(lib: &ComponentLibrary, seed: u64) -> CheckResult {
    run("determinism", || {
        let start = Instant::now();
        let comp = lib.get(Archetype::Ed);
        let settings = TrainingSettings { n_train: 4, n: 3, ..Default::default() };
        let a = localized_training(comp, &settings, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let b = localized_training(comp, &settings, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let same = a.snapshots == b.snapshots && a.basis.modes == b.basis.modes;
        Ok(finish("determinism", start, same, if same { 0.0 } else { 1.0 }, 0.0, "two training runs, same seed".into()))
    })
}

/// Matrix files round-trip exactly.
pub fn matrix_io(seed: u64) -> CheckResult {
    run("matrix_io_roundtrip", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(7, 3, |_, _| rng.random::<f64>() - 0.5);
        let path = std::env::temp_dir().join(format!("pumrom-verify-{}-{seed}.bin", std::process::id()));
        write_matrix(&path, &m)?;
        let back = read_matrix(&path)?;
        let _ = std::fs::remove_file(&path);
        let same = back == m;
        Ok(finish("matrix_io_roundtrip", start, same, if same { 0.0 } else { 1.0 }, 0.0, "7x3 matrix".into()))
    })
}

/// Marking returns the largest residuals with ties to the lower index.
pub fn marking() -> CheckResult {
    let start = Instant::now();
    let ok = mark_components(&[1.0, 5.0, 3.0], 34.0) == vec![1]
        && mark_components(&[1.0, 5.0, 3.0], 100.0).len() == 3
        && mark_components(&[2.0; 4], 50.0) == vec![0, 1];
    finish("marking", start, ok, if ok { 0.0 } else { 1.0 }, 0.0, "documented examples".into())
}

/// TE+POD with all transfer modes of a single parameter reproduces any
/// snapshot of that parameter.
pub fn te_pod_identity(seed: u64) -> CheckResult {
    run("te_pod_identity", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let setup = LinearSetup::new(3, 5)?;
        let mu = LinearSetup::sample_mu(&mut rng);
        let te = te_pod_baseline(&setup, &[mu], setup.n_in())?;
        let tr = setup.transfer(mu)?;
        let s = setup.arclength();
        let g = sample_fourier_bc(&s, 20, 1.0, &mut rng).values;
        let w = DMatrix::from_column_slice(setup.omega.ndofs(), 1, &tr.apply(&g)?);
        let e = projection_errors(&te.modes, &setup.gram, &w)?;
        let worst = e[(0, te.modes.ncols())];
        Ok(finish("te_pod_identity", start, worst <= 1e-8, worst, 1e-8, format!("N_in = {}", setup.n_in())))
    })
}
