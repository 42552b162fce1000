use proptest::prelude::*;
use starris::channel::effective_channel_flat;
use starris::metrics::{dispersion, dispersion_optimal, fbl_rate, lemma2_analysis, lemma2_curve, shannon_rate};
use starris::ris::{project_pair, project_pair_orthogonal, project_unit, PhaseAmplitudeModel};
use starris::surrogate::{rate_surrogate, ComplexAffine, LinkAffine};
use starris::topology::Layout;
use starris::{generate_channels, FblParams, PropagationParams, RisState, C64};

fn c64() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn affine(n: usize) -> impl Strategy<Value = ComplexAffine> {
    (c64(), prop::collection::vec(c64(), n))
        .prop_map(|(c, t)| ComplexAffine { constant: c * 0.3, terms: t.into_iter().enumerate().collect() })
}

fn link(n: usize, interferers: usize) -> impl Strategy<Value = LinkAffine> {
    (affine(n), prop::collection::vec(affine(n), interferers)).prop_map(|(own, interferers)| LinkAffine {
        user: 0,
        own,
        interferers,
    })
}

fn fbl() -> impl Strategy<Value = FblParams> {
    (50.0..1000.0f64, -9.0..-1.5f64).prop_map(|(n, e)| FblParams::new(n, 10f64.powf(e)).unwrap())
}

proptest! {
    #[test]
    fn rate_bounds(g in 0.0..1e4f64, p in fbl()) {
        let v = dispersion(g).unwrap();
        prop_assert!((0.0..2.0).contains(&v));
        prop_assert!(dispersion_optimal(g).unwrap() <= v + 1e-15);
        prop_assert!(fbl_rate(g, &p) <= shannon_rate(g));
    }

    #[test]
    fn curve_shape(a in 1e-3..3.0f64) {
        let an = lemma2_analysis(a).unwrap();
        prop_assert!(an.gamma_star > 0.0 && an.gamma_star < an.gamma_zero);
        prop_assert!(an.f_min < 0.0);
        prop_assert!(lemma2_curve(a, an.gamma_zero).abs() <= 1e-10);
    }

    #[test]
    fn surrogate_minorizes_and_touches(
        l in link(3, 2),
        z_bar in prop::collection::vec(c64(), 3),
        dz in prop::collection::vec(c64(), 3),
        p in fbl(),
        frac in 0.1..1.0f64,
    ) {
        let g_bar = l.sinr(&z_bar, 1.0);
        prop_assume!(g_bar > 1e-6);
        let q = rate_surrogate(&l, &z_bar, 1.0, &p, frac).unwrap();
        let exact = |z: &[C64]| frac * fbl_rate(l.sinr(z, 1.0), &p);
        prop_assert!((q.eval_parts(&z_bar, &[]) - exact(&z_bar)).abs() <= 1e-9 * exact(&z_bar).abs().max(1.0));
        let z: Vec<C64> = z_bar.iter().zip(&dz).map(|(a, b)| a + b).collect();
        prop_assert!(q.eval_parts(&z, &[]) <= exact(&z) + 1e-9);
        prop_assert!(q.quadratic_part(&dz) <= 0.0);
    }

    #[test]
    fn projections_land_on_sets(r in c64(), t in c64(), tmin in 0.0..1.0f64, alpha in 0.0..4.0f64, phi in -3.2..3.2f64) {
        prop_assert!((project_unit(r).norm() - 1.0).abs() < 1e-12);
        let (a, b) = project_pair(r, t);
        prop_assert!((a.norm_sqr() + b.norm_sqr() - 1.0).abs() < 1e-12);
        let (a, b) = project_pair_orthogonal(r, t);
        prop_assert!((a.norm_sqr() + b.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((a.conj() * b).re.abs() < 1e-12);
        let model = PhaseAmplitudeModel { theta_min: tmin, alpha, phi };
        let amp = model.project(r).norm();
        prop_assert!(amp >= tmin - 1e-12 && amp <= 1.0 + 1e-12);
    }

    #[test]
    fn effective_channel_is_affine(seed in 0u64..1000, w in 0.0..1.0f64) {
        let topo = starris::topology::two_cell_topology(&Layout { ris_elements: 4, ..Layout::default() });
        let ch = generate_channels(&topo, &PropagationParams::default(), seed);
        let a = RisState::random_phases(&topo, seed);
        let b = RisState::random_phases(&topo, seed + 1);
        let mut mix = a.clone();
        for (m, row) in mix.reflect.iter_mut().enumerate() {
            for (n, z) in row.iter_mut().enumerate() {
                *z = a.reflect[m][n] * w + b.reflect[m][n] * (1.0 - w);
            }
        }
        for u in 0..topo.num_users() {
            let (ha, hb, hm) = (
                effective_channel_flat(&ch, &a, u, 0).unwrap(),
                effective_channel_flat(&ch, &b, u, 0).unwrap(),
                effective_channel_flat(&ch, &mix, u, 0).unwrap(),
            );
            for i in 0..ha.len() {
                let want = ha[i] * w + hb[i] * (1.0 - w);
                prop_assert!((hm[i] - want).norm() <= 1e-12 * want.norm().max(1.0));
            }
        }
    }
}
