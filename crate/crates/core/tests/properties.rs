use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ktori::bimodule::{build_embeddings, act_a, inner_a, module_trace_numeric};
use ktori::cocycle::{
    cocycle_class, cocycle_phase, cohomology_invariant, dual_parameter_blocks, twist_by_coboundary, verify_cocycle_box,
    Coboundary, Phase, PhaseCocycle,
};
use ktori::elliott::{elliott_generator, elliott_matching_sum};
use ktori::field::{build_path, skew_factorize};
use ktori::ktheory::{generator_catalog, k0_rank, symbolic_theta};
use ktori::normalize::{find_positive_shift, shift_coefficients, shifted};
use ktori::skewmat::{even_subsets, signed_permutation_det, signed_permutation_matrix};
use ktori::{Backend, GaussianAtom, Matrix, MatrixFile, ModuleElement, Rational, Scalar, SkewMatrix, Subset};

fn rational_entries(len: usize) -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((-9i64..=9, 1i64..=6), len)
}

fn skew(n: usize, entries: &[(i64, i64)]) -> SkewMatrix {
    let upper = entries
        .iter()
        .map(|&(a, b)| Scalar::Rational(Rational::new(a.into(), b.into())))
        .collect();
    SkewMatrix::from_upper(n, Backend::Rational, upper).unwrap()
}

fn sized_skew(max_n: usize) -> impl Strategy<Value = SkewMatrix> {
    (1..=max_n).prop_flat_map(|n| rational_entries(n * (n - 1) / 2).prop_map(move |e| skew(n, &e)))
}

fn signed_permutation(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<i8>)> {
    (
        Just((1..=n).collect::<Vec<usize>>()).prop_shuffle(),
        prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), n),
    )
}

fn float_skew(n: usize, values: &[f64]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    let mut it = values.iter();
    for i in 0..n {
        for j in i + 1..n {
            let v = *it.next().unwrap();
            g[(i, j)] = v;
            g[(j, i)] = -v;
        }
    }
    g
}

/// Skew matrix with a positive-pfaffian leading `2p` block built as `XᵀJ₀X`.
fn positive_endpoint(p: usize, q: usize, x: &[f64], rest: &[f64]) -> SkewMatrix {
    let n = 2 * p + q;
    let k = 2 * p;
    let mut xm = DMatrix::from_row_slice(k, k, &x[..k * k]) + DMatrix::identity(k, k) * 2.0;
    if xm.determinant() < 0.0 {
        xm.row_mut(0).neg_mut();
    }
    let block = xm.transpose() * SkewMatrix::j0(p, Backend::Float).to_f64().unwrap() * &xm;
    let mut g = float_skew(n, rest);
    for i in 0..k {
        for j in i + 1..k {
            g[(i, j)] = block[(i, j)];
            g[(j, i)] = -block[(i, j)];
        }
    }
    SkewMatrix::from_f64(&g).unwrap().with_split(p, q).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pfaffian_squares_to_determinant(a in sized_skew(8)) {
        let pf = a.pfaffian();
        prop_assert_eq!(pf.try_mul(&pf).unwrap(), a.determinant());
    }

    #[test]
    fn signed_permutation_scales_pfaffian(
        (a, (perm, signs)) in (2usize..=7).prop_flat_map(|n| (
            rational_entries(n * (n - 1) / 2).prop_map(move |e| skew(n, &e)),
            signed_permutation(n),
        ))
    ) {
        let moved = a.signed_permutation_congruence(&perm, &signs).unwrap();
        let det = Scalar::from_int(signed_permutation_det(&perm, &signs) as i64, Backend::Rational);
        prop_assert_eq!(moved.pfaffian(), det.try_mul(&a.pfaffian()).unwrap());
        // the same congruence through the explicit matrix
        let p = signed_permutation_matrix(&perm, &signs, Backend::Rational);
        prop_assert_eq!(a.congruence(&p).unwrap(), moved);
    }

    #[test]
    fn general_congruence_scales_pfaffian(
        (a, b) in (1usize..=6).prop_flat_map(|n| (
            rational_entries(n * (n - 1) / 2).prop_map(move |e| skew(n, &e)),
            prop::collection::vec((-4i64..=4, 1i64..=3), n * n).prop_map(move |v| {
                Matrix::from_fn(n, n, Backend::Rational, |i, j| {
                    let (x, y) = v[i * n + j];
                    Scalar::Rational(Rational::new(x.into(), y.into()))
                })
                .unwrap()
            }),
        ))
    ) {
        let lhs = a.congruence(&b).unwrap().pfaffian();
        let rhs = b.determinant().unwrap().try_mul(&a.pfaffian()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn minor_count(a in sized_skew(8)) {
        prop_assert_eq!(a.all_pfaffian_minors().len(), 1usize << (a.n().max(1) - 1));
    }

    #[test]
    fn matching_sum_is_minor(a in sized_skew(8)) {
        for s in even_subsets(a.n()) {
            let sum = elliott_matching_sum(&a, &s).unwrap();
            prop_assert_eq!(&sum.value, &a.pfaffian_minor(&s).unwrap());
            let m = s.len() / 2;
            prop_assert_eq!(sum.terms, (1..=m).map(|k| 2 * k - 1).product::<usize>());
        }
    }

    #[test]
    fn shift_polynomials_match_minors(a in (2usize..=6).prop_flat_map(|n| rational_entries(n * (n - 1) / 2).prop_map(move |e| skew(n, &e)))) {
        let report = find_positive_shift(&a).unwrap();
        for t in 0..=5i64 {
            let moved = shifted(&a, t).unwrap();
            for (s, poly) in &report.polynomials {
                let c = shift_coefficients(poly);
                let value = c.iter().rev().fold(Rational::from_integer(0.into()), |acc, ci| acc * Rational::from_integer(t.into()) + ci);
                let minor = moved.pfaffian_minor(s).unwrap();
                prop_assert_eq!(minor.as_rational(), Some(&value));
            }
        }
        for (s, poly) in &report.polynomials {
            let c = shift_coefficients(poly);
            prop_assert_eq!(c.len(), s.len() / 2 + 1);
            prop_assert!(c.last().unwrap() == &Rational::from_integer(1.into()));
        }
        if report.t > 0 {
            let before = shifted(&a, report.t as i64 - 1).unwrap();
            prop_assert!(before
                .all_pfaffian_minors()
                .iter()
                .any(|(s, v)| !s.is_empty() && !v.is_positive().unwrap()));
        }
    }

    #[test]
    fn twist_preserves_identity_and_class(
        (a, coeffs) in (1usize..=3).prop_flat_map(|n| (
            rational_entries(n * (n - 1) / 2).prop_map(move |e| skew(n, &e)),
            prop::collection::vec(-5i64..=5, n),
        )),
        den in 2i128..=11,
    ) {
        let n = a.n();
        let omega = PhaseCocycle::from_matrix(&a).unwrap();
        let f = Coboundary::from_fn(n, "test", move |x| {
            let s: i64 = x.iter().zip(&coeffs).map(|(v, c)| c * v * v + v * v * v).sum();
            Phase::exact(s as i128, den).unwrap()
        });
        let twisted = twist_by_coboundary(&omega, &f).unwrap();
        prop_assert!(verify_cocycle_box(&twisted, 1).unwrap().pass);
        prop_assert_eq!(cocycle_class(&twisted), cocycle_class(&omega));
        prop_assert_eq!(cocycle_class(&omega), cohomology_invariant(&a).unwrap());
    }

    #[test]
    fn invariant_ignores_integer_shift(a in sized_skew(5), t in -6i64..=6) {
        prop_assert_eq!(cohomology_invariant(&shifted(&a, t).unwrap()).unwrap(), cohomology_invariant(&a).unwrap());
    }

    #[test]
    fn dual_parameter_is_skew(
        (a, p) in (1usize..=3).prop_flat_map(|p| (0usize..=2).prop_flat_map(move |q| {
            let n = 2 * p + q;
            rational_entries(n * (n - 1) / 2).prop_map(move |e| (skew(n, &e), p))
        }))
    ) {
        let q = a.n() - 2 * p;
        let a = a.with_split(p, q).unwrap();
        prop_assume!(!a.block11().unwrap().pfaffian().is_zero());
        let d = dual_parameter_blocks(&a).unwrap();
        prop_assert_eq!(d.transpose(), d.neg());
        prop_assert!((0..a.n()).all(|i| d.get(i, i).is_zero()));
    }

    #[test]
    fn matrix_file_round_trip(a in sized_skew(6)) {
        let file = MatrixFile::from_matrix(&a, &[]);
        let back = MatrixFile::from_json(&file.to_json()).unwrap().to_matrix().unwrap();
        prop_assert_eq!(back, a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn field_paths_stay_positive(
        (p, q, x, rest, y, rest2) in (1usize..=3, 0usize..=2).prop_flat_map(|(p, q)| {
            let n = 2 * p + q;
            let k = 2 * p;
            (
                Just(p),
                Just(q),
                prop::collection::vec(-1.0f64..1.0, k * k),
                prop::collection::vec(-1.0f64..1.0, n * (n - 1) / 2),
                prop::collection::vec(-1.0f64..1.0, k * k),
                prop::collection::vec(-1.0f64..1.0, n * (n - 1) / 2),
            )
        })
    ) {
        let psi = positive_endpoint(p, q, &x, &rest);
        let theta = positive_endpoint(p, q, &y, &rest2);
        let path = Arc::new(build_path(&psi, &theta, p, q).unwrap());
        let (psi_f, theta_f) = (psi.to_f64().unwrap(), theta.to_f64().unwrap());
        let k = 2 * p;
        let samples = 200;
        let mut prev = path.gamma(0.0).unwrap();
        let mut steps = Vec::new();
        for i in 0..=samples {
            let r = i as f64 / samples as f64;
            let g = path.gamma(r).unwrap();
            let pf = SkewMatrix::from_f64(&g.view((0, 0), (k, k)).into_owned()).unwrap().pfaffian().as_float().unwrap();
            prop_assert!(pf >= 1e-8 * (1.0 + pf.abs()), "pf {} at r = {}", pf, r);
            let line = &psi_f * (1.0 - r) + &theta_f * r;
            for a in 0..g.nrows() {
                for b in 0..g.ncols() {
                    if a >= k || b >= k {
                        prop_assert_eq!(g[(a, b)], line[(a, b)]);
                    }
                }
            }
            steps.push((&g - &prev).amax());
            let dim = g.nrows();
            prev = g;
            // fiber consistency of the field cocycle
            if i % 50 == 0 {
                let omega = PhaseCocycle::field_fiber(path.clone(), r).unwrap();
                let gm = SkewMatrix::from_f64(&path.gamma(r).unwrap()).unwrap();
                for (u, v) in [(vec![1i64; dim], vec![0i64; dim]), (vec![2; dim], vec![-1; dim])] {
                    let mut v = v;
                    v[0] = 3;
                    prop_assert_eq!(omega.phase(&u, &v), cocycle_phase(&gm, &u, &v).unwrap());
                }
            }
        }
        // crude Lipschitz smoke check: no step far above the typical one
        let mut sorted = steps[1..].to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        prop_assert!(sorted.last().unwrap() <= &(50.0 * median + 1e-12));
    }
}

fn unit_atom(center: f64, freq: f64) -> ModuleElement {
    ModuleElement::atom(GaussianAtom::unit(
        DVector::from_element(1, center),
        DVector::from_element(1, freq),
        DMatrix::identity(1, 1),
        vec![],
    ))
}

fn maps_for(theta: f64) -> ktori::EmbeddingMaps {
    let g = float_skew(2, &[theta]);
    let gamma = SkewMatrix::from_f64(&g).unwrap().with_split(1, 0).unwrap();
    build_embeddings(&gamma, &skew_factorize(&g).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trace_invariant_under_right_translation(theta in 0.2f64..0.95, l0 in -2i64..=2, l1 in -2i64..=2) {
        let maps = maps_for(theta);
        let f = unit_atom(0.1, -0.2);
        let base = module_trace_numeric(&f, &maps, 10).unwrap().trace;
        let moved = module_trace_numeric(&act_a(&f, &[l0, l1], &maps), &maps, 10).unwrap().trace;
        prop_assert!((base - moved).abs() <= 1e-6, "{} vs {}", base, moved);
    }

    #[test]
    fn inner_a_mass_and_hermitian(theta in 0.2f64..0.95, c in -0.5f64..0.5, w in -0.5f64..0.5) {
        let maps = maps_for(theta);
        let f = unit_atom(c, w).add(&unit_atom(-c, 0.3));
        let g = unit_atom(0.2, w);
        let ff = inner_a(&f, &f, &maps, 8);
        let zero = ff.get(&[0, 0]);
        prop_assert!(zero.re >= 0.0 && zero.im.abs() < 1e-12);
        prop_assert!((zero.re - f.l2_norm_sq()).abs() < 1e-12);
        let fg = inner_a(&f, &g, &maps, 8);
        let gf = inner_a(&g, &f, &maps, 8);
        prop_assert!(fg.adjoint().max_abs_diff(&gf) < 1e-12);
    }
}

#[test]
fn catalog_traces_agree_with_minors_and_generators() {
    for n in 1..=6 {
        let theta = symbolic_theta(n);
        let catalog = generator_catalog(&theta).unwrap();
        assert_eq!(catalog.len(), k0_rank(n).unwrap());
        for d in &catalog {
            assert_eq!(d.expected_trace, theta.pfaffian_minor(&d.subset).unwrap());
            assert_eq!(d.expected_trace, elliott_generator(&theta, &d.subset).unwrap());
            assert_eq!(d.rotated.matrix(), theta.signed_permutation_congruence(&d.perm, &d.signs).unwrap().matrix());
        }
    }
}

#[test]
fn rotated_leading_pfaffian_positive_after_shift() {
    let a = skew(5, &[(-3, 2), (1, 5), (-7, 3), (2, 1), (-1, 4), (5, 6), (-2, 3), (1, 1), (-4, 5), (3, 2)]);
    let t = find_positive_shift(&a).unwrap().t as i64;
    let theta = shifted(&a, t).unwrap();
    for d in generator_catalog(&theta).unwrap() {
        let k = d.subset.len();
        let lead = d.rotated.principal(&Subset::new((1..=k).collect()));
        assert!(lead.pfaffian().is_positive().unwrap(), "{}", d.label);
        assert_eq!(lead.pfaffian(), d.expected_trace);
    }
}
