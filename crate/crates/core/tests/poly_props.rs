use proptest::prelude::*;
use ratpeak::expr::{parse_expr, parse_polynomial};
use ratpeak::poly::{Context, Monomial, Polynomial, VariableContext};

fn ctx() -> Context {
    VariableContext::new(["x1", "x2", "x3"]).unwrap()
}

fn poly_strategy(max_terms: usize, max_exp: u32) -> impl Strategy<Value = Vec<([u32; 3], i32)>> {
    prop::collection::vec(([0..=max_exp, 0..=max_exp, 0..=max_exp], -6i32..=6), 0..=max_terms)
}

fn build(c: &Context, spec: &[([u32; 3], i32)]) -> Polynomial {
    Polynomial::from_terms(
        c,
        spec.iter().map(|(e, k)| (Monomial::from_exponents(e).unwrap(), *k as f64)),
    )
    .unwrap()
}

fn real_poly_strategy() -> impl Strategy<Value = Vec<([u32; 3], f64)>> {
    prop::collection::vec(([0u32..=3, 0u32..=3, 0u32..=3], -10.0f64..10.0), 0..=8)
}

fn build_real(c: &Context, spec: &[([u32; 3], f64)]) -> Polynomial {
    Polynomial::from_terms(c, spec.iter().map(|(e, k)| (Monomial::from_exponents(e).unwrap(), *k))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ring_laws(a in poly_strategy(5, 3), b in poly_strategy(5, 3), c in poly_strategy(5, 3)) {
        let k = ctx();
        let (p, q, r) = (build(&k, &a), build(&k, &b), build(&k, &c));
        prop_assert_eq!(p.add(&q).unwrap(), q.add(&p).unwrap());
        prop_assert_eq!(p.mul(&q).unwrap(), q.mul(&p).unwrap());
        prop_assert_eq!(p.add(&q).unwrap().add(&r).unwrap(), p.add(&q.add(&r).unwrap()).unwrap());
        prop_assert_eq!(p.mul(&q).unwrap().mul(&r).unwrap(), p.mul(&q.mul(&r).unwrap()).unwrap());
        prop_assert_eq!(
            p.mul(&q.add(&r).unwrap()).unwrap(),
            p.mul(&q).unwrap().add(&p.mul(&r).unwrap()).unwrap()
        );
        prop_assert!(p.sub(&p).unwrap().is_zero());
        prop_assert_eq!(p.mul(&Polynomial::constant(&k, 1.0)).unwrap(), p.clone());
        prop_assert!(p.mul(&Polynomial::zero(&k)).unwrap().is_zero());
    }

    #[test]
    fn leibniz_rule(a in poly_strategy(5, 3), b in poly_strategy(5, 3), i in 0usize..3) {
        let k = ctx();
        let (p, q) = (build(&k, &a), build(&k, &b));
        let lhs = p.mul(&q).unwrap().partial(i).unwrap();
        let rhs = p.partial(i).unwrap().mul(&q).unwrap()
            .add(&p.mul(&q.partial(i).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn partial_matches_finite_difference(
        a in real_poly_strategy(),
        pt in [-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5],
        i in 0usize..3,
    ) {
        let k = ctx();
        let p = build_real(&k, &a);
        let h = 1e-5;
        let mut hi = pt; hi[i] += h;
        let mut lo = pt; lo[i] -= h;
        let fd = (p.evaluate(&hi).unwrap() - p.evaluate(&lo).unwrap()) / (2.0 * h);
        let exact = p.partial(i).unwrap().evaluate(&pt).unwrap();
        let scale = 1.0 + p.max_abs_coefficient() * 50.0;
        prop_assert!((fd - exact).abs() <= 1e-6 * scale, "fd {} exact {}", fd, exact);
    }

    #[test]
    fn evaluation_is_a_ring_homomorphism(
        a in real_poly_strategy(),
        b in real_poly_strategy(),
        pt in [-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5],
    ) {
        let k = ctx();
        let (p, q) = (build_real(&k, &a), build_real(&k, &b));
        let (pv, qv) = (p.evaluate(&pt).unwrap(), q.evaluate(&pt).unwrap());
        let prod = p.mul(&q).unwrap().evaluate(&pt).unwrap();
        let sum = p.add(&q).unwrap().evaluate(&pt).unwrap();
        let tol = 1e-9 * (1.0 + pv.abs() * qv.abs() + p.max_abs_coefficient() * q.max_abs_coefficient() * 1e3);
        prop_assert!((prod - pv * qv).abs() <= tol);
        prop_assert!((sum - pv - qv).abs() <= 1e-9 * (1.0 + (p.max_abs_coefficient() + q.max_abs_coefficient()) * 100.0));
    }
}

#[derive(Debug, Clone)]
enum Tree {
    Num(u32),
    Var(usize),
    Neg(Box<Tree>),
    Add(Box<Tree>, Box<Tree>),
    Sub(Box<Tree>, Box<Tree>),
    Mul(Box<Tree>, Box<Tree>),
    Pow(Box<Tree>, u32),
}

impl Tree {
    // Fully parenthesised rendering so the text encodes the tree exactly.
    fn render(&self) -> String {
        match self {
            Tree::Num(v) => format!("{v}"),
            Tree::Var(i) => format!("x{}", i + 1),
            Tree::Neg(a) => format!("(-{})", a.render()),
            Tree::Add(a, b) => format!("({} + {})", a.render(), b.render()),
            Tree::Sub(a, b) => format!("({} - {})", a.render(), b.render()),
            Tree::Mul(a, b) => format!("({} * {})", a.render(), b.render()),
            Tree::Pow(a, e) => format!("({})^{e}", a.render()),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Tree::Num(v) => *v as f64,
            Tree::Var(i) => x[*i],
            Tree::Neg(a) => -a.eval(x),
            Tree::Add(a, b) => a.eval(x) + b.eval(x),
            Tree::Sub(a, b) => a.eval(x) - b.eval(x),
            Tree::Mul(a, b) => a.eval(x) * b.eval(x),
            Tree::Pow(a, e) => a.eval(x).powi(*e as i32),
        }
    }
}

fn tree_strategy() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![(0u32..10).prop_map(Tree::Num), (0usize..3).prop_map(Tree::Var)];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Tree::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Mul(Box::new(a), Box::new(b))),
            (inner, 0u32..4).prop_map(|(a, e)| Tree::Pow(Box::new(a), e)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn display_then_parse_round_trips(a in real_poly_strategy()) {
        let k = ctx();
        let p = build_real(&k, &a);
        let back = parse_polynomial(&p.to_string(), &k).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn parsed_trees_agree_with_direct_evaluation(
        t in tree_strategy(),
        pt in [-1.2f64..1.2, -1.2f64..1.2, -1.2f64..1.2],
    ) {
        let k = ctx();
        let text = t.render();
        let expected = t.eval(&pt);
        let e = parse_expr(&text, &k).unwrap();
        prop_assert_eq!(e.eval(&pt), expected);
        let p = parse_polynomial(&text, &k).unwrap();
        let got = p.evaluate(&pt).unwrap();
        prop_assert!((got - expected).abs() <= 1e-8 * (1.0 + expected.abs() + p.max_abs_coefficient() * 50.0),
            "{} -> {} vs {}", text, got, expected);
    }
}
