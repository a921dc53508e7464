use std::sync::Arc;

use pumrom::checks::*;
use pumrom::components::*;

fn lib() -> Arc<ComponentLibrary> {
    Arc::new(ComponentLibrary::new(MeshSpec::fast()).unwrap())
}

fn assert_pass(c: &CheckResult) {
    assert!(c.passed, "{}: worst {} threshold {} ({})", c.name, c.worst, c.threshold, c.detail);
}

#[test]
fn all_checks_pass_at_small_scale() {
    let lib = lib();
    for c in [
        pou(MeshSpec::fast(), 3),
        pou(MeshSpec::standard(), 4),
        approximation_bound(&lib, 3, 3, 4, 1),
        residual_bound(&lib, 6, 2, 1.0),
        pou_multiplier(&lib, 1.0),
        residual_bound_sharp(&lib, 1.0),
        chi_squared(2000, 20, &[1.0, 2.0], 3),
        jacobian_fd(&lib, 2, 4),
        galerkin_optimality(&lib, 5),
        enrichment_convergence(&lib, 2, 8, &[6, 7]),
        riesz_homogeneity(&lib, 8),
        exact_solution_residual(&lib, 9),
        pod_orthonormality(&lib, 10),
        sampler_bounds(&lib, 20, 11),
        determinism(&lib, 12),
        matrix_io(13),
        marking(),
        te_pod_identity(14),
    ] {
        assert_pass(&c);
    }
}

#[test]
fn fault_injection_sensitivity() {
    let lib = lib();
    // the constants are loose: halving is not detectable
    assert!(pou_multiplier(&lib, 0.5).passed);
    assert!(residual_bound_sharp(&lib, 0.5).passed);
    // stronger perturbations are
    assert!(!pou_multiplier(&lib, 0.3).passed);
    assert!(!residual_bound_sharp(&lib, 0.01).passed);
    assert!(!residual_bound(&lib, 3, 2, 1e-4).passed);
}
