#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use pumrom::components::*;
use pumrom::linalg::orthonormalize_against;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth random modes (low-order polynomials times noise-free bumps),
/// orthonormal in the local norm and zero on walls.
pub fn random_bases(lib: &ComponentLibrary, n: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Archetype::ALL
        .iter()
        .map(|a| {
            let comp = lib.get(*a);
            let nd = comp.ndofs();
            let coef: Vec<[f64; 6]> = (0..n + 4).map(|_| std::array::from_fn(|_| rng.random::<f64>() - 0.5)).collect();
            let mut cand = DMatrix::zeros(nd, coef.len());
            for l in 0..nd {
                let [x, y] = comp.disc.node(l);
                let (x, y) = (x / 0.1, y / 0.1);
                for (c, k) in coef.iter().enumerate() {
                    let v = k[0] + k[1] * x + k[2] * y + k[3] * x * y + k[4] * (3.0 * x).sin() + k[5] * (2.0 * y).cos();
                    cand[(l, c)] = if comp.wall[l] { 0.0 } else { v };
                }
            }
            let z = orthonormalize_against(&comp.norm_gram, &DMatrix::zeros(nd, 0), &cand, 1e-8);
            z.columns(0, n).into_owned()
        })
        .collect()
}

pub fn setup(n_dd: usize, i_star: usize, seed: u64) -> (Arc<ComponentLibrary>, Arc<PumSpace>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lib = Arc::new(ComponentLibrary::new(MeshSpec::fast()).unwrap());
    let params = (0..n_dd * n_dd)
        .map(|_| [rng.random_range(0.1..0.2), rng.random_range(30.0..40.0)])
        .collect();
    let cfg = instantiate_configuration(n_dd, params, i_star).unwrap();
    let space = Arc::new(PumSpace::new(cfg, &lib).unwrap());
    (lib, space)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
    num / den
}
