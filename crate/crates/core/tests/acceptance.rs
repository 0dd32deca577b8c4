//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its runtime (`cargo test --test acceptance -- --nocapture` shows
//! them). Tolerances are pinned in the assertions.

mod common;

use std::time::Instant;

use locbound::array::{
    array_efim, orientation_center, speb_decomposition, ArrayGeometry, ArrayRanging,
    ReferencePoint,
};
use locbound::channel::{AnchorPaths, MultipathChannel};
use locbound::clock::efim_with_offset_from_riis;
use locbound::experiments::{AveragePocStudy, RaoStudy};
use locbound::fim::{
    efim_from_ranging, efim_reduce, full_fim, path_overlap_coefficient, rii_no_prior,
    rii_partial_model,
};
use locbound::geometry::{NetworkTopology, Sight};
use locbound::linalg::min_symmetric_eigenvalue;
use locbound::priors::{rii_with_prior, AnchorPrior, Fisher, PositionPrior};
use locbound::scenario::{build_scenario, builtin, sweep};
use locbound::{SingularPolicy, Waveform64};
use nalgebra::{vector, DMatrix};
use rand::Rng;

fn pulse() -> Waveform64 {
    Waveform64::canonical_pulse()
}

fn report(criterion: u32, start: Instant, detail: &str) {
    println!(
        "[criterion {criterion:2}] PASS ({:.2}s) — {detail}",
        start.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_01_closed_form_speb_two_routes() {
    let t0 = Instant::now();
    let w = pulse();
    let topo = NetworkTopology::ring(vector![0.0, 0.0], 80.0, 4, 0.0, Sight::Los).unwrap();
    let channel = MultipathChannel::new(
        (0..4).map(|_| AnchorPaths::single(1.0)).collect::<Vec<_>>(),
    );
    let lambda0 = rii_no_prior(Sight::Los, channel.anchor(0), &w, 1.0).unwrap();

    // Route 1: canonical RDM-weighted assembly.
    let assembled =
        locbound::fim::efim_position_no_prior(&topo, &channel, &w, 1.0).unwrap();
    // Route 2: full FIM plus Schur reduction.
    let reduced = full_fim(&topo, &channel, &w, 1.0).unwrap().speb().unwrap();

    let expected = 1.0 / lambda0;
    assert!(
        (assembled.speb - expected).abs() < 1e-12 * expected,
        "assembly route {} vs 1/lambda {}",
        assembled.speb,
        expected
    );
    assert!(
        (reduced - expected).abs() < 1e-12 * expected,
        "reduction route {reduced} vs 1/lambda {expected}"
    );
    assert!((assembled.speb - reduced).abs() < 1e-12 * expected);
    report(1, t0, &format!("SPEB = 1/λ₀ = {expected:.6e} m² by both routes"));
}

#[test]
fn criterion_02_schur_matches_dense_inverse() {
    let t0 = Instant::now();
    let mut rng = common::seeded(20_2024);
    for case in 0..100 {
        let dim = 4 + (case % 37); // up to 40
        let keep = 1 + (case % (dim - 1));
        let j = common::random_spd(dim, &mut rng);
        let reduced = efim_reduce(&j, keep, SingularPolicy::Reject).unwrap();
        let inv_of_reduced = reduced.try_inverse().unwrap();
        let top_of_inverse = j
            .clone()
            .try_inverse()
            .unwrap()
            .view((0, 0), (keep, keep))
            .into_owned();
        let err = common::max_rel_diff(&inv_of_reduced, &top_of_inverse);
        assert!(err < 1e-10, "case {case}: dim {dim}, keep {keep}, err {err:.3e}");
    }
    report(2, t0, "inverse-of-EFIM equals top-left of dense inverse on 100 SPD FIMs");
}

#[test]
fn criterion_03_path_separation_structure() {
    let t0 = Instant::now();
    let w = pulse();
    let a2 = 10f64.powf(-0.15);
    let speb_of = |lambda: f64| 1.0 / lambda; // symmetric 4-ring
    let lam_nonov = rii_no_prior(Sight::Los, &AnchorPaths::single(1.0), &w, 1.0).unwrap();
    for sep_ns in [4.0, 4.5, 5.0, 6.0, 7.5] {
        let paths = AnchorPaths::two_path(sep_ns * 1e-9, 1.0, a2).unwrap();
        let full = rii_no_prior(Sight::Los, &paths, &w, 1.0).unwrap();
        let partial = rii_partial_model(Sight::Los, &paths, &w, 1.0).unwrap();
        for lam in [full, partial] {
            assert!(
                (speb_of(lam) - speb_of(lam_nonov)).abs() < 1e-9 * speb_of(lam_nonov),
                "separation {sep_ns} ns: {} vs {}",
                speb_of(lam),
                speb_of(lam_nonov)
            );
        }
    }
    let paths = AnchorPaths::two_path(1.0e-9, 1.0, a2).unwrap();
    let full = speb_of(rii_no_prior(Sight::Los, &paths, &w, 1.0).unwrap());
    let partial = speb_of(rii_partial_model(Sight::Los, &paths, &w, 1.0).unwrap());
    assert!(
        partial < full - 1e-6 * full,
        "expected a strictly loose partial-parameter bound at 1 ns: {partial} vs {full}"
    );
    report(3, t0, "models agree beyond 4 ns; partial bound strictly loose at 1 ns");
}

#[test]
fn criterion_04_poc_properties() {
    let t0 = Instant::now();
    let w = pulse();
    let mut rng = common::seeded(4_2024);
    for i in 0..10_000 {
        let sep = (1e-3 + rng.gen::<f64>() * 8.0) * 1e-9;
        let a2: f64 = (0.05 + rng.gen::<f64>() * 3.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let paths = AnchorPaths::two_path(sep, 1.0, a2).unwrap();
        let chi = path_overlap_coefficient(&paths, &w).unwrap();
        assert!((0.0..=1.0).contains(&chi), "draw {i}: chi {chi}");
        let s1 = 10f64.powf(rng.gen::<f64>() * 4.0 - 2.0);
        let s2 = 10f64.powf(rng.gen::<f64>() * 4.0 - 2.0);
        let rescaled =
            AnchorPaths::new(paths.biases_m().to_vec(), vec![s1, a2 * s2]).unwrap();
        let chi2 = path_overlap_coefficient(&rescaled, &w).unwrap();
        assert!(
            (chi - chi2).abs() < 1e-10,
            "draw {i}: amplitude dependence {chi} vs {chi2}"
        );
    }
    assert_eq!(
        path_overlap_coefficient(&AnchorPaths::single(1.0), &w).unwrap(),
        0.0
    );
    report(4, t0, "χ ∈ [0,1], amplitude-invariant on 10⁴ draws, single path exactly 0");
}

#[test]
fn criterion_05_average_poc_trend() {
    let t0 = Instant::now();
    let study = AveragePocStudy {
        waveform: pulse(),
        inter_arrival_s: vec![1.4e-9, 3.5e-9],
        path_counts: vec![50],
        replications: 1000,
        seed: 65_2024,
    };
    let table = study.run().unwrap();
    let mean = table.column_values("mean_chi_L50").unwrap();
    let se = table.column_values("se_chi_L50").unwrap();
    let combined = (se[0] * se[0] + se[1] * se[1]).sqrt();
    assert!(
        mean[1] < mean[0] - 3.0 * combined,
        "mean χ at 3.5 ns ({}) not below 1.4 ns ({}) by 3 SE ({:.2e})",
        mean[1],
        mean[0],
        combined
    );
    report(
        5,
        t0,
        &format!(
            "mean χ: {:.4} (1.4 ns) vs {:.4} (3.5 ns), gap {:.1}σ",
            mean[0],
            mean[1],
            (mean[0] - mean[1]) / combined
        ),
    );
}

#[test]
fn criterion_06_rao_properties() {
    let t0 = Instant::now();
    let study = RaoStudy {
        waveform: pulse(),
        thresholds: (0..=50).map(|i| i as f64 / 50.0).collect(),
        inter_arrival_s: vec![3.5e-9, 2.5e-9, 2.0e-9, 1.6e-9, 1.4e-9],
        path_count: 50,
        replications: 1000,
        seed: 66_2024,
    };
    let table = study.run().unwrap();
    let names = ["ia3.5ns", "ia2.5ns", "ia2ns", "ia1.6ns", "ia1.4ns"];
    let curves: Vec<Vec<f64>> = names
        .iter()
        .map(|n| table.column_values(&format!("pout_{n}")).unwrap())
        .collect();
    let ses: Vec<Vec<f64>> = names
        .iter()
        .map(|n| table.column_values(&format!("se_{n}")).unwrap())
        .collect();
    for (name, curve) in names.iter().zip(&curves) {
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{name} not nonincreasing");
        }
        assert_eq!(*curve.last().unwrap(), 0.0, "{name} must vanish at χ_th = 1");
    }
    // Denser arrivals (smaller 1/ν) dominate pointwise within 3 SE.
    for c in 0..curves.len() - 1 {
        for row in 0..curves[c].len() {
            let slack =
                3.0 * (ses[c][row].powi(2) + ses[c + 1][row].powi(2)).sqrt() + 1e-12;
            assert!(
                curves[c][row] <= curves[c + 1][row] + slack,
                "ordering violated between {} and {} at row {row}",
                names[c],
                names[c + 1]
            );
        }
    }
    report(6, t0, "outage curves nonincreasing, zero at χ_th = 1, ordered by arrival rate");
}

#[test]
fn criterion_07_prior_monotonicity() {
    let t0 = Instant::now();
    let w = pulse();
    let mut rng = common::seeded(7_2024);
    // λ with PSD prior is never below λ without, slack −1e-10.
    for i in 0..1000 {
        let sep = (0.05 + rng.gen::<f64>() * 6.0) * 1e-9;
        let a2 = 0.1 + rng.gen::<f64>() * 2.0;
        let paths = AnchorPaths::two_path(sep, 1.0, a2).unwrap();
        let m = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let stacked = &m * m.transpose() * (rng.gen::<f64>() * 10.0);
        let prior = AnchorPrior::from_stacked(stacked, std::iter::empty()).unwrap();
        let with = rii_with_prior(Sight::Los, &paths, &w, 1.0, &prior).unwrap();
        let without = rii_no_prior(Sight::Los, &paths, &w, 1.0).unwrap();
        assert!(with >= without - 1e-10, "draw {i}: {with} < {without}");
    }
    // Zero-prior reduction is exact (the Schur route equals the POC route).
    for sep_ns in [0.4, 1.0, 2.3, 5.0] {
        let paths = AnchorPaths::two_path(sep_ns * 1e-9, 1.0, 0.7).unwrap();
        let with = rii_with_prior(Sight::Los, &paths, &w, 1.0, &AnchorPrior::zero(3)).unwrap();
        let without = rii_no_prior(Sight::Los, &paths, &w, 1.0).unwrap();
        assert!(
            (with - without).abs() <= 1e-12 * without.abs(),
            "zero-prior mismatch at {sep_ns} ns: {with} vs {without}"
        );
        let nlos = AnchorPaths::new(
            vec![1.0, 1.0 + sep_ns * 1e-9 * locbound::SPEED_OF_LIGHT],
            vec![1.0, 0.7],
        )
        .unwrap();
        let nlos_lam =
            rii_with_prior(Sight::Nlos, &nlos, &w, 1.0, &AnchorPrior::zero(4)).unwrap();
        assert!(
            nlos_lam.abs() <= 1e-12 * without,
            "NLOS zero-prior RII must vanish, got {nlos_lam}"
        );
    }
    // Corollary-3 convergence error is nonincreasing in t².
    for _ in 0..50 {
        let sep = (0.2 + rng.gen::<f64>() * 3.0) * 1e-9;
        let a2 = 0.3 + rng.gen::<f64>() * 1.5;
        let b1 = 0.1 + rng.gen::<f64>() * 4.0;
        let nlos = AnchorPaths::new(
            vec![b1, b1 + sep * locbound::SPEED_OF_LIGHT],
            vec![1.0, a2],
        )
        .unwrap();
        let los = AnchorPaths::two_path(sep, 1.0, a2).unwrap();
        let lam_los =
            rii_with_prior(Sight::Los, &los, &w, 1.0, &AnchorPrior::zero(3)).unwrap();
        let mut prev = f64::INFINITY;
        for exp in [2.0f64, 4.0, 6.0, 8.0, 10.0, 12.0] {
            let prior = AnchorPrior::diagonal(
                0.0,
                &[
                    Fisher::Finite(10f64.powf(exp)),
                    Fisher::Finite(0.0),
                    Fisher::Finite(0.0),
                    Fisher::Finite(0.0),
                ],
            )
            .unwrap();
            let lam = rii_with_prior(Sight::Nlos, &nlos, &w, 1.0, &prior).unwrap();
            let err = (lam - lam_los).abs();
            assert!(err <= prev + 1e-12, "convergence not monotone at t²=1e{exp}");
            prev = err;
        }
    }
    report(7, t0, "prior-aware λ dominates, zero-prior exact, limit convergence monotone");
}

#[test]
fn criterion_08_array_identities() {
    let t0 = Instant::now();
    // §VII-E scene: six anchors on a circle, far-field λ = 10, 4-antenna
    // ULA with 0.5 m spacing.
    let topo = NetworkTopology::ring(vector![0.0, 0.0], 100.0, 6, 0.0, Sight::Los).unwrap();
    let locals = vec![
        vector![-0.75, 0.0],
        vector![-0.25, 0.0],
        vector![0.25, 0.0],
        vector![0.75, 0.0],
    ];
    let ranging = ArrayRanging::far_field(vec![10.0; 6]);
    let geometry_at = |d: f64| {
        ArrayGeometry::new(locals.clone(), 0.0, ReferencePoint::Local(vector![d, 0.0])).unwrap()
    };

    // SOEB identical across five reference points.
    let mut soebs = Vec::new();
    for d in [0.0, 0.4, 0.9, 1.3, 2.0] {
        let res = array_efim(
            &topo,
            &geometry_at(d),
            &ranging,
            Fisher::Finite(0.0),
            &PositionPrior::none(),
        )
        .unwrap();
        soebs.push(res.soeb.unwrap());
    }
    for s in &soebs[1..] {
        assert!((s - soebs[0]).abs() < 1e-9 * soebs[0], "SOEB varies: {soebs:?}");
    }

    // Decomposition identity at a 1 m offset.
    let d = speb_decomposition(&topo, &geometry_at(1.0), &ranging, Fisher::Finite(0.0)).unwrap();
    assert!(
        (d.direct - d.decomposed).abs() < 1e-9 * d.direct,
        "decomposition {} vs {}",
        d.direct,
        d.decomposed
    );

    // Orientation-aware SPEB independent of the reference point.
    let aware: Vec<f64> = [0.0, 0.7, 1.6]
        .iter()
        .map(|&dd| {
            array_efim(
                &topo,
                &geometry_at(dd),
                &ranging,
                Fisher::Infinite,
                &PositionPrior::none(),
            )
            .unwrap()
            .speb
        })
        .collect();
    assert!((aware[1] - aware[0]).abs() < 1e-12 && (aware[2] - aware[0]).abs() < 1e-12);

    // Far-field orientation center coincides with the array center.
    let p_star = orientation_center(&topo, &geometry_at(1.0), &ranging).unwrap();
    assert!(
        (p_star - vector![-1.0, 0.0]).norm() < 1e-9,
        "orientation center {p_star:?}"
    );
    report(8, t0, "SOEB reference-free, decomposition exact, center = array center");
}

#[test]
fn criterion_09_clock_offset_values_and_ordering() {
    let t0 = Instant::now();
    let quarter = std::f64::consts::FRAC_PI_2;
    let sym = [0.0, quarter, 2.0 * quarter, 3.0 * quarter];
    let lambdas = [10.0; 4];
    for xi in [
        Fisher::Finite(0.0),
        Fisher::Finite(10.0),
        Fisher::Finite(100.0),
        Fisher::Infinite,
    ] {
        let res = efim_with_offset_from_riis(&sym, &lambdas, xi, &PositionPrior::none()).unwrap();
        assert!((res.speb - 0.1).abs() < 1e-10, "SPEB {} for {xi:?}", res.speb);
    }
    // Constructed asymmetric configuration.
    let asym = [2.0 * quarter, quarter, 2.0 * quarter, 3.0 * quarter];
    let res = efim_with_offset_from_riis(
        &asym,
        &lambdas,
        Fisher::Finite(0.0),
        &PositionPrior::none(),
    )
    .unwrap();
    assert!((res.speb - 0.15).abs() < 1e-10, "asymmetric SPEB {}", res.speb);
    let j_b = 1.0 / res.steb.unwrap();
    assert!((j_b - 20.0).abs() < 1e-10, "J_e(B) {j_b}");

    // Ξ_B = ∞ equals the offset-free baseline pointwise along the sweep.
    for step in 0..=60 {
        let phi1 = std::f64::consts::TAU * step as f64 / 60.0;
        let angles = [phi1, quarter, 2.0 * quarter, 3.0 * quarter];
        let with = efim_with_offset_from_riis(
            &angles,
            &lambdas,
            Fisher::Infinite,
            &PositionPrior::none(),
        )
        .unwrap();
        let baseline =
            locbound::fim::position_efim_result(efim_from_ranging(&angles, &lambdas))
                .unwrap();
        assert!(
            (with.speb - baseline.speb).abs() < 1e-12 * baseline.speb,
            "phi1 = {phi1}"
        );
    }

    // PSD ordering J_e^B ⪯ J_e on 100 random scenes.
    let mut rng = common::seeded(9_2024);
    let mut checked = 0;
    while checked < 100 {
        let n = 3 + (checked % 4);
        let angles: Vec<f64> = (0..n)
            .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
            .collect();
        let lams: Vec<f64> = (0..n).map(|_| 0.5 + rng.gen::<f64>() * 20.0).collect();
        let xi = rng.gen::<f64>() * 50.0;
        let without = efim_from_ranging(&angles, &lams);
        match efim_with_offset_from_riis(
            &angles,
            &lams,
            Fisher::Finite(xi),
            &PositionPrior::none(),
        ) {
            Ok(with) => {
                let pos = with.position_efim().unwrap();
                let diff = DMatrix::from_fn(2, 2, |i, j| without[(i, j)] - pos[(i, j)]);
                assert!(
                    min_symmetric_eigenvalue(&diff) > -1e-9 * without.norm(),
                    "ordering violated on scene {checked}"
                );
                checked += 1;
            }
            Err(locbound::Error::UnlocalizableGeometry { .. }) => {} // collinear draw
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    report(9, t0, "SPEB 0.1/0.15 and J_e(B) = 20 exact; Ξ_B = ∞ baseline; ordering holds");
}

#[test]
fn criterion_10_deterministic_csv() {
    let t0 = Instant::now();
    let cfg = builtin("fig6").unwrap().config;
    let run = || {
        let scn = build_scenario(&cfg).unwrap();
        sweep(&scn).unwrap().to_csv_string()
    };
    let first = run();
    let second = run();
    assert_eq!(first.as_bytes(), second.as_bytes(), "fig6 CSV not byte-identical");
    assert!(first.len() > 1000, "suspiciously small table");
    report(
        10,
        t0,
        &format!("fig6 rerun byte-identical ({} bytes)", first.len()),
    );
}
