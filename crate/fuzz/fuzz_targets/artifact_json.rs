#![no_main]

use funcmed::inference::BootstrapBands;
use funcmed::mediation::FittedMediation;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(fit) = serde_json::from_slice::<FittedMediation>(data) {
        // Sampling allocates n x n surfaces; keep inputs to a plausible size.
        let small =
            fit.grid.n_points() <= 512 && [fit.alpha(), fit.gamma(), fit.beta()].iter().all(|e| e_size(e) <= 4096);
        if small {
            let _ = fit.paths();
        }
    }
    if let Ok(b) = serde_json::from_slice::<BootstrapBands>(data) {
        for band in &b.bands {
            band.write_csv(std::io::sink()).unwrap();
        }
    }
});

fn e_size(e: &funcmed::regression::CoefficientEstimate) -> usize {
    use funcmed::regression::CoefficientEstimate::*;
    match e {
        Curve { basis, .. } => basis.n_basis(),
        Surface { basis_s, basis_t, .. } => basis_s.n_basis().saturating_mul(basis_t.n_basis()),
    }
}
