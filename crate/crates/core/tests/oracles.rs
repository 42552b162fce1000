//! Independent oracles for the metric, surrogate, surface and block-update
//! layers: reference quantiles, scalar re-derivations, grid and random search.

use std::f64::consts::{LN_2, LOG2_E};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use starris::convex::dinkelbach::{generalized_dinkelbach, DinkelbachOptions, MaxMinRatioProgram};
use starris::convex::ConvexSubproblem;
use starris::framework::init_maxmin_sinr;
use starris::metrics::{fbl_rate, lemma2_analysis, lemma2_curve, q_inv};
use starris::ris::{convex_pair_conditions, orthogonal_pair_conditions};
use starris::ris_opt::{update_ris, RisOptions};
use starris::surrogate::{
    neg_penalty_upper_bound, rate_surrogate, shannon_lower_bound, ComplexAffine, LinkAffine, QuadraticForm, Variables,
};
use starris::{
    optimize, update_beams, AoOptions, BeamformingSet, ChannelSet, EnergyParams, FblParams, FeasibilitySet, Instance,
    NetworkTopology, RateReport, RisState, UtilityKind, UtilitySpec, C64,
};

fn cn(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0
}

fn cvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| cn(rng)).collect()
}

/// One cell, one surface at the origin, all users in its reflection space.
fn toy_topology(k: usize, n_bs: usize, n_ris: usize, power: f64) -> NetworkTopology {
    NetworkTopology {
        cells: 1,
        num_ris: 1,
        users_per_cell: k,
        bs_antennas: n_bs,
        ris_elements: n_ris,
        bs_positions: vec![[-50.0, -10.0, 10.0]],
        ris_positions: vec![[0.0, 0.0, 10.0]],
        user_positions: (0..k).map(|u| [u as f64, 5.0, 1.5]).collect(),
        power_budgets: vec![power],
        noise_power: 1.0,
    }
}

fn toy_instance(k: usize, n_bs: usize, n_ris: usize, power: f64, kind: UtilityKind, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = toy_topology(k, n_bs, n_ris, power);
    let channels = ChannelSet {
        cells: 1,
        num_ris: 1,
        users_per_cell: k,
        bs_antennas: n_bs,
        ris_elements: n_ris,
        noise_power: 1.0,
        direct: (0..k).map(|_| cvec(&mut rng, n_bs)).collect(),
        bs_ris: vec![cvec(&mut rng, n_ris * n_bs)],
        ris_user: (0..k).map(|_| cvec(&mut rng, n_ris)).collect(),
    };
    Instance {
        topology,
        channels,
        fbl: FblParams::default(),
        energy: EnergyParams::default(),
        utility: UtilitySpec::new(kind, k),
    }
}

fn no_surface_opts() -> AoOptions {
    AoOptions { optimize_ris: false, ..AoOptions::default() }
}

/// Random beams with a random share of the budget, split randomly.
fn random_beams(rng: &mut ChaCha8Rng, k: usize, n_bs: usize, power: f64) -> BeamformingSet {
    let mut x: Vec<Vec<C64>> = (0..k).map(|_| cvec(rng, n_bs)).collect();
    let shares: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let total: f64 = shares.iter().sum();
    let budget = power * rng.random::<f64>();
    for (v, s) in x.iter_mut().zip(&shares) {
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let scale = (budget * s / total).sqrt() / n;
        v.iter_mut().for_each(|z| *z *= scale);
    }
    BeamformingSet { x }
}

#[test]
fn q_inv_matches_reference_quantiles() {
    // 40-digit root finding on log(erfc(x/sqrt 2)/2) = log(eps).
    let reference = [
        (0.49, 0.025068908258711058),
        (0.45, 0.125661346855074006),
        (0.3, 0.524400512708040816),
        (0.25, 0.674489750196081743),
        (0.2, 0.841621233572914166),
        (0.15, 1.0364333894937896),
        (0.05, 1.64485362695147269),
        (0.02, 2.05374891063182304),
        (1e-2, 2.32634787404084109),
        (5e-3, 2.57582930354890075),
        (2e-3, 2.87816173909548344),
        (1e-4, 3.71901648545568055),
        (5e-5, 3.89059188641309396),
        (1e-6, 4.75342430882289896),
        (1e-7, 5.19933758219281694),
        (1e-8, 5.61200124417478873),
        (1e-10, 6.3613409024040562),
        (1e-11, 6.7060231554951363),
        (1e-12, 7.03448382530113193),
        (1e-14, 7.65062809293526882),
    ];
    for (eps, want) in reference {
        let got = q_inv(eps);
        assert!(((got - want) / want).abs() < 1e-10, "Q^-1({eps}) = {got}, want {want}");
    }
}

#[test]
fn rate_root_is_gamma_zero() {
    let fbl = FblParams::new(200.0, 1e-3).unwrap();
    let (mut lo, mut hi) = (1e-12, 10.0);
    assert!(fbl_rate(lo, &fbl) < 0.0 && fbl_rate(hi, &fbl) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fbl_rate(mid, &fbl) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((0.5 * (lo + hi) - fbl.gamma_zero()).abs() < 1e-8);
}

#[test]
fn curve_minimizer_changes_derivative_sign() {
    let a: f64 = 0.2185;
    let gs = (-1.0 + (1.0 + a * a).sqrt()) / 2.0;
    let an = lemma2_analysis(a).unwrap();
    assert!((an.gamma_star - gs).abs() < 1e-15);
    let slope = |g: f64| (lemma2_curve(a, g * (1.0 + 1e-7)) - lemma2_curve(a, g * (1.0 - 1e-7))) / (2e-7 * g);
    assert!(slope(gs * 0.99) < 0.0 && slope(gs * 1.01) > 0.0);
}

#[test]
fn two_user_rates_match_scalar_arithmetic() {
    let h = [[C64::new(0.8, -0.3), C64::new(0.1, 0.9)], [C64::new(-0.4, 0.2), C64::new(0.6, 0.5)]];
    let x = [[C64::new(1.1, 0.2), C64::new(-0.3, 0.7)], [C64::new(0.05, -0.6), C64::new(0.9, 0.1)]];
    let mut inst = toy_instance(2, 2, 1, 10.0, UtilityKind::WeightedSumRate, 0);
    inst.channels.direct = h.iter().map(|r| r.to_vec()).collect();
    inst.channels.bs_ris = vec![vec![C64::new(0.0, 0.0); 2]];
    let beams = BeamformingSet { x: x.iter().map(|r| r.to_vec()).collect() };
    let ris = RisState::off(&inst.topology);
    let report = inst.report(&ris, &beams);
    let amp = |u: usize, v: usize| h[u][0] * x[v][0] + h[u][1] * x[v][1];
    for u in 0..2 {
        let gamma = amp(u, u).norm_sqr() / (1.0 + amp(u, 1 - u).norm_sqr());
        let penalty = inst.fbl.q_inv * (2.0 * gamma / ((1.0 + gamma) * inst.fbl.n_t)).sqrt() / LN_2;
        let r = (1.0 + gamma).log2() - penalty;
        assert!((report.gamma[u] - gamma).abs() < 1e-12 * gamma.max(1.0));
        assert!((report.r[u] - r).abs() < 1e-12);
    }
}

#[test]
fn gee_lies_between_user_efficiencies() {
    let energy = EnergyParams::default();
    let report = RateReport::from_sinr(vec![3.0, 40.0], &[1.0, 1.0], &[0.5, 7.0], &FblParams::default(), &energy);
    let (lo, hi) = (report.e[0].min(report.e[1]), report.e[0].max(report.e[1]));
    assert!(lo < hi);
    assert!(report.gee >= lo && report.gee <= hi);
}

fn random_link(rng: &mut ChaCha8Rng, n: usize, interferers: usize) -> LinkAffine {
    let aff =
        |rng: &mut ChaCha8Rng| ComplexAffine { constant: cn(rng) * 0.3, terms: (0..n).map(|i| (i, cn(rng))).collect() };
    LinkAffine { user: 0, own: aff(rng), interferers: (0..interferers).map(|_| aff(rng)).collect() }
}

#[test]
fn rate_surrogate_splits_into_shannon_and_penalty_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fbl = FblParams::new(128.0, 1e-5).unwrap();
    for _ in 0..200 {
        let link = random_link(&mut rng, 3, 2);
        let z_bar = cvec(&mut rng, 3);
        let q = rate_surrogate(&link, &z_bar, 1.0, &fbl, 1.0).unwrap();
        let mut parts = shannon_lower_bound(&link, &z_bar, 1.0);
        parts.add(&neg_penalty_upper_bound(&link, &z_bar, 1.0, &fbl).unwrap());
        for _ in 0..20 {
            let z = cvec(&mut rng, 3);
            let a = q.eval_parts(&z, &[]);
            let b = LOG2_E * parts.eval_parts(&z, &[]);
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn convex_pair_description_matches_orthogonality() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut inside, mut outside) = (0, 0);
    for i in 0..100_000 {
        let (r, t) = if i % 2 == 0 {
            // On the orthogonal set by construction.
            let a: f64 = rng.random();
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let b = (1.0 - a * a).sqrt();
            (C64::from_polar(a, phi), C64::from_polar(b, phi + sign * std::f64::consts::FRAC_PI_2))
        } else {
            let (r, t) = (cn(&mut rng), cn(&mut rng));
            let n = (r.norm_sqr() + t.norm_sqr()).sqrt();
            (r / n, t / n)
        };
        let lhs = convex_pair_conditions(r, t, 1e-12);
        assert_eq!(lhs, orthogonal_pair_conditions(r, t, 1e-12), "r = {r}, t = {t}");
        if lhs {
            inside += 1;
        } else {
            outside += 1;
        }
    }
    assert!(inside >= 50_000 && outside > 40_000);
}

#[test]
fn single_user_converges_to_matched_filter() {
    let inst = toy_instance(1, 4, 1, 10.0, UtilityKind::MinWeightedRate, 5);
    let ris = RisState::off(&inst.topology);
    let state = optimize(&inst, &ris, &no_surface_opts()).unwrap();
    let h = &inst.channels.direct[0];
    let hn: f64 = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let x = &state.beams.x[0];
    let gain: C64 = h.iter().zip(x).map(|(a, b)| a * b).sum();
    assert!((state.beams.power(0) - 10.0).abs() < 1e-6);
    assert!((gain.norm() - 10f64.sqrt() * hn).abs() < 1e-6 * hn);
}

#[test]
fn wsr_beats_random_search() {
    for seed in 0..3 {
        let inst = toy_instance(2, 2, 1, 10.0, UtilityKind::WeightedSumRate, 100 + seed);
        let ris = RisState::off(&inst.topology);
        let state = optimize(&inst, &ris, &no_surface_opts()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let best = (0..10_000)
            .map(|_| inst.utility_value(&ris, &random_beams(&mut rng, 2, 2, 10.0)))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(state.utility() >= best - 1e-9, "seed {seed}: {} < {best}", state.utility());
    }
}

#[test]
fn wsr_argmax_ignores_weight_scale() {
    let inst = toy_instance(2, 3, 1, 10.0, UtilityKind::WeightedSumRate, 21);
    let ris = RisState::off(&inst.topology);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let start = random_beams(&mut rng, 2, 3, 10.0);
    let mut scaled = inst.clone();
    scaled.utility.weights = vec![10.0, 10.0];
    let opts = AoOptions::default().beam;
    let a = update_beams(&inst, &ris, &start, &opts).unwrap().beams;
    let b = update_beams(&scaled, &ris, &start, &opts).unwrap().beams;
    for (xa, xb) in a.x.iter().zip(&b.x) {
        for (p, q) in xa.iter().zip(xb) {
            assert!((p - q).norm() < 1e-5, "{p} vs {q}");
        }
    }
}

#[test]
fn unit_ball_surface_matches_grid_on_one_element() {
    let mut inst = toy_instance(1, 1, 1, 10.0, UtilityKind::MinWeightedRate, 8);
    inst.channels.direct[0][0] *= 0.2;
    let mut ris = RisState::off(&inst.topology);
    ris.set_tag = FeasibilitySet::Tu;
    let beams = BeamformingSet { x: vec![vec![C64::new(10f64.sqrt(), 0.0)]] };
    let before = inst.utility_value(&ris, &beams);
    let opts = RisOptions::default();
    let first = update_ris(&inst, &beams, &ris, &opts).unwrap();
    assert!(first.ris.reflect[0][0].norm() <= 1.0 + 1e-12);
    assert!(inst.utility_value(&first.ris, &beams) > before);
    ris = first.ris;
    for _ in 0..100 {
        ris = update_ris(&inst, &beams, &ris, &opts).unwrap().ris;
    }
    let got = inst.utility_value(&ris, &beams);

    let mut best = f64::NEG_INFINITY;
    let mut probe = ris.clone();
    for i in 0..=400 {
        for j in 0..3600 {
            probe.reflect[0][0] = C64::from_polar(i as f64 / 400.0, j as f64 * std::f64::consts::TAU / 3600.0);
            best = best.max(inst.utility_value(&probe, &beams));
        }
    }
    assert!((got - best).abs() < 1e-3, "{got} vs grid {best}");
}

#[test]
fn initializer_min_sinr_near_random_search() {
    let inst = toy_instance(2, 2, 1, 10.0, UtilityKind::MinWeightedRate, 31);
    let ris = RisState::off(&inst.topology);
    let (_, _, min_sinr) = init_maxmin_sinr(&inst, &ris, &no_surface_opts()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let best = (0..10_000)
        .map(|_| {
            let b = random_beams(&mut rng, 2, 2, 10.0);
            inst.report(&ris, &b).gamma.iter().copied().fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    assert!(min_sinr >= best * (1.0 - 1e-2), "{min_sinr} vs random search {best}");
}

#[test]
fn max_min_ratio_matches_grid() {
    // Two users with one complex power variable each; user u's numerator is
    // hurt by the other user's power.
    let (c, a, b, g) = ([0.2, 0.1], [1.5, 2.2], [0.6, 0.9], [0.3, 0.5]);
    let p_c = 0.4;
    let var = |i: usize| ComplexAffine { constant: C64::new(0.0, 0.0), terms: vec![(i, C64::new(1.0, 0.0))] };
    let mut base = ConvexSubproblem::new(2, 0);
    base.constraints = vec![QuadraticForm::ball([0], 1.0), QuadraticForm::ball([1], 1.0)];
    let mut numerators = Vec::new();
    let mut neg_denominators = Vec::new();
    for u in 0..2 {
        let mut n = QuadraticForm::constant(c[u]);
        n.add_re(C64::new(a[u], 0.0), &var(u));
        n.sub_square(b[u], var(u));
        n.sub_square(g[u], var(1 - u));
        numerators.push(n);
        let mut d = QuadraticForm::constant(-p_c);
        d.sub_square(1.0, var(u));
        neg_denominators.push(d);
    }
    let program = MaxMinRatioProgram { base, numerators, neg_denominators, weights: vec![1.0, 1.0] };
    let (res, state) = generalized_dinkelbach(&program, &DinkelbachOptions::default()).unwrap();
    assert!(state.history.windows(2).all(|w| w[1] >= w[0]));
    let got = program.min_ratio(&res.vars);

    let ratio = |u: usize, mine: f64, other: f64| {
        (c[u] + a[u] * mine - b[u] * mine * mine - g[u] * other * other) / (p_c + mine * mine)
    };
    let steps = 2000;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        let x0 = i as f64 / steps as f64;
        for j in 0..=steps {
            let x1 = j as f64 / steps as f64;
            best = best.max(ratio(0, x0, x1).min(ratio(1, x1, x0)));
        }
    }
    let v = Variables::new(res.vars.complex.clone(), vec![]);
    assert!((program.min_ratio(&v) - got).abs() < 1e-12);
    assert!((got - best).abs() < 1e-3, "{got} vs grid {best}");
}
