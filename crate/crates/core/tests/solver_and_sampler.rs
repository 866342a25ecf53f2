use num_complex::Complex64;
use padic_heat::cauchy::{SchwartzBruhat, SolutionHandle};
use padic_heat::markov::{occupancy_histogram, IncrementSampler, SamplerConfig};
use padic_heat::verify::{annulus_partition, median_level, reference, two_atom_datum};
use padic_heat::{Ball, Execution, PAdicVector, Prime};

#[test]
fn solution_mass_is_conserved() {
    // ∫u(·,t) = ∫φ since every ball mass over Q_p^n is 1.
    for case in reference::evaluators().unwrap().iter().step_by(4) {
        let ev = &case.evaluator;
        let datum = two_atom_datum(ev.prime(), ev.dim()).unwrap();
        let total: Complex64 = datum.atoms().iter().map(|(b, c)| c * b.volume().to_f64(ev.prime())).sum();
        let h = SolutionHandle::new(ev.clone(), datum, 4.0).unwrap();
        let norms = h.solution_norms(1.0, 1e-10, Execution::default()).unwrap();
        assert!(norms.l1 <= total.re + norms.l1_tail_bound + 1e-8, "{}: {norms:?}", case.label);
        assert!(norms.sup <= h.datum().sup_norm() + 1e-8);
    }
}

#[test]
fn overlapping_atoms_are_rejected_or_merged() {
    let p = Prime::new(2).unwrap();
    let r = SchwartzBruhat::normalize(vec![
        (Ball::unit(p, 1), Complex64::new(1.0, 0.0)),
        (Ball::centered(p, 1, -1), Complex64::new(2.0, 0.0)),
    ]);
    if let Ok(phi) = r {
        let inner = PAdicVector::zero(p, 1);
        assert!((phi.value_at(&inner) - Complex64::new(3.0, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn two_step_occupancy_passes_chi_square() {
    for case in reference::evaluators().unwrap().iter().filter(|c| c.symbol != "S2") {
        let ev = &case.evaluator;
        let s = IncrementSampler::new(ev.clone(), SamplerConfig::default()).unwrap();
        let x0 = reference::point(ev.prime(), ev.dim(), -1, 0);
        let paths = s.simulate_paths(&x0, 2, 7, 20_000, Execution::default()).unwrap();
        let mid = median_level(ev, 2.0, -1, s.outer()).unwrap();
        let partition = annulus_partition(&x0, mid - 1, mid + 2).unwrap();
        let mut hist = occupancy_histogram(&paths, &partition, 2).unwrap();
        hist.attach_exact(ev, &x0, 2.0, 1e-12).unwrap();
        let chi = hist.chi_square().expect("enough populated bins");
        assert!(chi.passes(), "{}: {chi:?}", case.label);
    }
}
