use modulon::bloch::{scan_bloch, unstable_eigenfunction, ScanOptions};
use modulon::evolution::{
    bloch_mode_on_torus, conserved_quantities, lift_wave, orbital_distance, real_part_field, ConservedLedger,
    EvolutionState, Evolver, Integrator, Invariants,
};
use modulon::wave::{solve_wave, SeedParams};
use modulon::{Error, ModelSpec, PeriodicField, TravelingWave};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn bbm() -> (ModelSpec, TravelingWave) {
    let model = ModelSpec::bbm(2.0).unwrap();
    let wave = solve_wave(&model, SeedParams { a: 0.05, b: 0.0 }, 32).unwrap();
    (model, wave)
}

fn shifted(f: &PeriodicField, y: f64) -> PeriodicField {
    PeriodicField::from_modes(f.q(), f.n(), true, |m| f.mode(m) * Complex64::from_polar(1.0, f.freq(m) * y)).unwrap()
}

#[test]
fn integrator_names() {
    assert_eq!(Integrator::parse("etdrk4").unwrap(), Integrator::Etdrk4);
    assert_eq!(Integrator::parse("rk4").unwrap(), Integrator::Rk4);
    assert!(Integrator::parse("euler").is_err());
}

#[test]
fn lifted_wave_repeats_q_times() {
    let (_, wave) = bbm();
    let lifted = lift_wave(&wave, 4, 128).unwrap();
    assert_eq!((lifted.q(), lifted.n()), (4, 128));
    assert!((lifted.l2_norm() - 2.0 * wave.profile.l2_norm()).abs() < 1e-14);
    for x in [0.3, 2.0] {
        assert!((lifted.eval_at(x + 2.0 * PI).re - wave.profile.eval_at(x).re).abs() < 1e-13);
    }
}

#[test]
fn traveling_wave_is_steady_in_its_frame() {
    let (model, wave) = bbm();
    for scheme in [Integrator::Etdrk4, Integrator::Rk4] {
        let ev = Evolver::nonlinear(&model, &wave, 1, 32, 0.1, scheme).unwrap();
        let mut st = EvolutionState { field: wave.profile.clone(), t: 0.0 };
        ev.advance(&mut st, 20.0).unwrap();
        assert!((st.t - 20.0).abs() < 1e-9);
        assert!(st.field.sub(&wave.profile).unwrap().l2_norm() < 1e-9, "{scheme:?}");
    }
    let ev = Evolver::nonlinear(&model, &wave, 1, 32, 0.1, Integrator::Etdrk4).unwrap();
    assert!(ev.rhs(&wave.profile).unwrap().l2_norm() < 1e-11);
}

#[test]
fn state_must_match_the_stepper() {
    let (model, wave) = bbm();
    let ev = Evolver::nonlinear(&model, &wave, 2, 64, 0.1, Integrator::Etdrk4).unwrap();
    let mut st = EvolutionState { field: wave.profile.clone(), t: 0.0 };
    assert!(matches!(ev.step(&mut st), Err(Error::GridMismatch(_))));
    let mut complex = EvolutionState { field: lift_wave(&wave, 2, 64).unwrap().into_complex(), t: 0.0 };
    assert!(ev.step(&mut complex).is_err());
}

#[test]
fn schemes_agree_on_a_perturbed_run() {
    let (model, wave) = bbm();
    let init = wave
        .profile
        .axpy(
            0.01,
            &PeriodicField::from_modes(1, 32, true, |m| {
                if m.abs() == 2 {
                    Complex64::new(0.5, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .unwrap(),
        )
        .unwrap();
    let run = |scheme: Integrator| {
        let ev = Evolver::nonlinear(&model, &wave, 1, 32, 0.05, scheme).unwrap();
        let mut st = EvolutionState { field: init.clone(), t: 0.0 };
        ev.advance(&mut st, 10.0).unwrap();
        st.field
    };
    let a = run(Integrator::Etdrk4);
    let b = run(Integrator::Rk4);
    assert!(a.sub(&b).unwrap().l2_norm() < 1e-8);
}

#[test]
fn invariants_of_a_cosine() {
    // u = cos x on T_{2 pi} with M = 1 - m^2 d_x^2 at m = 2: int u = 0,
    // <M u, u> = 5 pi, int u^2 / 2 = pi / 2, int u^3 = 0.
    let u =
        PeriodicField::from_modes(1, 16, true, |m| Complex64::new(if m.abs() == 1 { 0.5 } else { 0.0 }, 0.0)).unwrap();
    let b = conserved_quantities(&ModelSpec::bbm(2.0).unwrap(), &u).unwrap();
    assert!(b.mass.abs() < 1e-15);
    assert!((b.momentum - 2.5 * PI).abs() < 1e-13);
    assert!((b.energy - PI / 2.0).abs() < 1e-13);
    let w = conserved_quantities(
        &ModelSpec::whitham(1.0).unwrap(),
        &u.axpy(
            1.0,
            &PeriodicField::from_modes(1, 16, true, |m| Complex64::new(if m == 0 { 1.0 } else { 0.0 }, 0.0)).unwrap(),
        )
        .unwrap(),
    )
    .unwrap();
    // u = 1 + cos x: mass 2 pi, momentum (2 pi + pi) / 2.
    assert!((w.mass - 2.0 * PI).abs() < 1e-13);
    assert!((w.momentum - 1.5 * PI).abs() < 1e-13);
    assert!(conserved_quantities(&ModelSpec::whitham(1.0).unwrap(), &u.clone().into_complex()).is_err());
}

#[test]
fn nonlinear_flow_conserves_the_invariants() {
    let (model, wave) = bbm();
    let init = lift_wave(&wave, 2, 64)
        .unwrap()
        .axpy(
            0.02,
            &PeriodicField::from_modes(2, 64, true, |m| Complex64::new(if m.abs() == 1 { 0.5 } else { 0.0 }, 0.0))
                .unwrap(),
        )
        .unwrap();
    let ev = Evolver::nonlinear(&model, &wave, 2, 64, 0.1, Integrator::Etdrk4).unwrap();
    let mut st = EvolutionState { field: init, t: 0.0 };
    let mut ledger = ConservedLedger::default();
    ledger.push(0.0, conserved_quantities(&model, &st.field).unwrap());
    for i in 1..=10 {
        ev.advance(&mut st, 5.0 * i as f64).unwrap();
        ledger.push(st.t, conserved_quantities(&model, &st.field).unwrap());
    }
    let d = ledger.max_drift();
    assert!(d.mass < 1e-13 && d.momentum < 1e-9 && d.energy < 1e-9, "{d:?}");
}

#[test]
fn ledger_drifts_are_relative() {
    let mut led = ConservedLedger::default();
    let i0 = Invariants { mass: 0.0, momentum: 2.0, energy: -4.0 };
    assert_eq!(led.drift(&i0).momentum, 0.0);
    led.push(0.0, i0);
    led.push(1.0, Invariants { mass: 1e-3, momentum: 2.2, energy: -4.0 });
    let d = led.max_drift();
    assert_eq!(d.mass, 1e-3);
    assert!((d.momentum - 0.1).abs() < 1e-15);
    assert_eq!(d.energy, 0.0);
}

#[test]
fn linearized_bloch_flow_grows_at_the_eigenvalue() {
    let (model, wave) = bbm();
    let spec = scan_bloch(&model, &wave, &ScanOptions { count: 32, ..ScanOptions::default() }).unwrap();
    let (lam, v) = unstable_eigenfunction(&model, &wave, spec.k0, None, 1e-8).unwrap();
    let ev = Evolver::linearized_bloch(&model, &wave, 1, 32, 0.05, Integrator::Etdrk4, spec.k0).unwrap();
    let mut st = EvolutionState { field: v.clone(), t: 0.0 };
    ev.advance(&mut st, 10.0).unwrap();
    let expect = v.map_modes(false, |_| (lam * 10.0).exp());
    assert!(st.field.sub(&expect).unwrap().l2_norm() < 1e-7 * expect.l2_norm());
    let mut real = EvolutionState { field: lift_wave(&wave, 1, 32).unwrap(), t: 0.0 };
    assert!(ev.step(&mut real).is_err());
}

#[test]
fn bloch_mode_placement() {
    let w = PeriodicField::from_modes(1, 8, false, |m| Complex64::new(m as f64, 1.0)).unwrap();
    let big = bloch_mode_on_torus(&w, 1, 4, 32).unwrap();
    for m in w.modes() {
        assert_eq!(big.mode(4 * m + 1), w.mode(m));
    }
    assert_eq!(big.mode(2), Complex64::new(0.0, 0.0));
    assert!(bloch_mode_on_torus(&w, 1, 4, 16).is_err());
    let r = real_part_field(&big).unwrap();
    assert!(r.is_real());
    for x in [0.0, 1.0, 5.5] {
        assert!((r.eval_at(x).re - 2.0 * big.eval_at(x).re).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn orbital_distance_recovers_a_shift(y in 0.0f64..(2.0 * PI), q in 1usize..4) {
        let (_, wave) = bbm();
        let u = shifted(&lift_wave(&wave, q, 32 * q).unwrap(), y);
        let (d, found) = orbital_distance(&u, &wave.profile).unwrap();
        // The distance comes from ||U||^2 + ||u_c||^2 - 2 <U, u_c>, so only
        // half the digits survive the cancellation.
        prop_assert!(d < 1e-7 * u.l2_norm(), "distance {}", d);
        let gap = (found - y).rem_euclid(2.0 * PI);
        prop_assert!(gap.min(2.0 * PI - gap) < 1e-6, "found {} for {}", found, y);
    }

    #[test]
    fn orbital_distance_is_at_most_the_plain_distance(eps in 0.0f64..0.05) {
        let (_, wave) = bbm();
        let bump = PeriodicField::from_modes(1, 32, true, |m| Complex64::new(if m.abs() == 3 { 0.5 } else { 0.0 }, 0.0)).unwrap();
        let u = wave.profile.axpy(eps, &bump).unwrap();
        let (d, _) = orbital_distance(&u, &wave.profile).unwrap();
        prop_assert!(d <= u.sub(&wave.profile).unwrap().l2_norm() + 1e-12);
    }
}
