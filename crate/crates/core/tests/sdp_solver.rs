use nalgebra::DMatrix;
use proptest::prelude::*;
use ratpeak::sdp::sdpa::{from_sdpa_str, to_sdpa_string};
use ratpeak::sdp::{matrix_to_svec, solve, svec_len, ConeLayout, SdpInstance, SolveSettings, Status};

struct Lcg(u64);

impl Lcg {
    fn uniform(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
    fn sym(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }
}

/// Random orthogonal matrix from Gram-Schmidt on a random square.
fn orthogonal(n: usize, rng: &mut Lcg) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sym());
    g.qr().q()
}

/// A feasible instance with a known optimum built from a strictly
/// complementary primal-dual pair.
fn complementary_instance(seed: u64, layout: ConeLayout, m: usize) -> (SdpInstance, f64) {
    let mut rng = Lcg(seed);
    let width = layout.width();
    let mut x = vec![0.0; width];
    let mut s = vec![0.0; width];
    for k in 0..layout.free {
        x[k] = rng.sym() * 3.0;
    }
    for k in 0..layout.nonneg {
        let idx = layout.free + k;
        if rng.uniform() < 0.5 {
            x[idx] = 0.5 + rng.uniform();
        } else {
            s[idx] = 0.5 + rng.uniform();
        }
    }
    for (j, &side) in layout.psd.iter().enumerate() {
        let q = orthogonal(side, &mut rng);
        let rank = 1 + (rng.uniform() * side as f64) as usize % side;
        let mut dx = DMatrix::zeros(side, side);
        let mut ds = DMatrix::zeros(side, side);
        for i in 0..side {
            if i < rank {
                dx[(i, i)] = 0.5 + rng.uniform();
            } else {
                ds[(i, i)] = 0.5 + rng.uniform();
            }
        }
        let xm = &q * dx * q.transpose();
        let sm = &q * ds * q.transpose();
        let off = layout.psd_offset(j);
        x[off..off + svec_len(side)].copy_from_slice(&matrix_to_svec(&xm));
        s[off..off + svec_len(side)].copy_from_slice(&matrix_to_svec(&sm));
    }
    let y: Vec<f64> = (0..m).map(|_| rng.sym()).collect();
    let mut inst = SdpInstance::new(layout);
    let mut c = s.clone();
    for yi in &y {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for k in 0..width {
            if rng.uniform() < 0.6 {
                row.push((k, rng.sym()));
            }
        }
        let b: f64 = row.iter().map(|&(k, a)| a * x[k]).sum();
        for &(k, a) in &row {
            c[k] += a * yi;
        }
        inst.push_row(row, b);
    }
    inst.c = c;
    let opt = inst.objective(&x);
    (inst, opt)
}

#[test]
fn scalar_psd_block() {
    let mut inst = SdpInstance::new(ConeLayout { free: 0, nonneg: 0, psd: vec![1] });
    inst.c = vec![1.0];
    inst.push_row(vec![(0, 1.0)], 2.0);
    let sol = solve(&inst, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.primal_objective - 2.0).abs() < 1e-7);
    assert!((sol.y[0] - 1.0).abs() < 1e-6);
}

#[test]
fn free_variable_with_lower_bound() {
    // min g  s.t.  g - s = 5, s >= 0.
    let mut inst = SdpInstance::new(ConeLayout { free: 1, nonneg: 1, psd: vec![] });
    inst.c = vec![1.0, 0.0];
    inst.push_row(vec![(0, 1.0), (1, -1.0)], 5.0);
    let sol = solve(&inst, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[0] - 5.0).abs() < 1e-6);
}

#[test]
fn infeasibility_is_detected() {
    let mut inst = SdpInstance::new(ConeLayout { free: 0, nonneg: 1, psd: vec![2] });
    inst.c = vec![0.0, 1.0, 0.0, 1.0];
    // x_lp + X_00 + X_11 = -1 with everything in the cone.
    inst.push_row(vec![(0, 1.0), (1, 1.0), (3, 1.0)], -1.0);
    let sol = solve(&inst, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);

    let mut unbounded = SdpInstance::new(ConeLayout { free: 0, nonneg: 2, psd: vec![] });
    unbounded.c = vec![-1.0, 0.0];
    unbounded.push_row(vec![(1, 1.0)], 1.0);
    let sol = solve(&unbounded, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, Status::DualInfeasible);

    let mut contradictory = SdpInstance::new(ConeLayout { free: 2, nonneg: 0, psd: vec![1] });
    contradictory.c = vec![0.0, 0.0, 1.0];
    contradictory.push_row(vec![(0, 1.0), (1, 1.0)], 1.0);
    contradictory.push_row(vec![(0, 2.0), (1, 2.0)], 3.0);
    let sol = solve(&contradictory, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
}

#[test]
fn redundant_free_rows_are_tolerated() {
    let mut inst = SdpInstance::new(ConeLayout { free: 2, nonneg: 0, psd: vec![1] });
    inst.c = vec![1.0, 0.0, 1.0];
    inst.push_row(vec![(0, 1.0), (1, 1.0)], 1.0);
    inst.push_row(vec![(0, 2.0), (1, 2.0)], 2.0);
    inst.push_row(vec![(1, 1.0), (2, 1.0)], 3.0);
    inst.push_row(vec![], 0.0);
    let sol = solve(&inst, &SolveSettings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    // x0 = 1 - x1, X = 3 - x1 >= 0  =>  objective 4 - 2 x1 minimized at x1 = 3.
    assert!((sol.primal_objective + 2.0).abs() < 1e-6, "{}", sol.primal_objective);
}

#[test]
fn sdpa_round_trip_preserves_optimum() {
    let layout = ConeLayout { free: 2, nonneg: 2, psd: vec![3, 2] };
    let (inst, opt) = complementary_instance(11, layout, 6);
    let text = to_sdpa_string(&inst);
    let back = from_sdpa_str(&text).unwrap();
    assert_eq!(back.layout.free, 0);
    assert_eq!(back.layout.nonneg, 2 * 2 + 2);
    let a = solve(&inst, &SolveSettings::default()).unwrap();
    let b = solve(&back, &SolveSettings::default()).unwrap();
    assert_eq!(a.status, Status::Optimal);
    assert_eq!(b.status, Status::Optimal);
    assert!((a.primal_objective - opt).abs() < 1e-6 * (1.0 + opt.abs()));
    assert!((b.primal_objective - opt).abs() < 1e-6 * (1.0 + opt.abs()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_complementary_instances(
        seed in any::<u64>(),
        free in 0usize..4,
        nonneg in 0usize..4,
        sides in prop::collection::vec(1usize..6, 1..4),
        extra_rows in 0usize..6,
    ) {
        let layout = ConeLayout { free, nonneg, psd: sides };
        let m = free + extra_rows + 1;
        let (inst, opt) = complementary_instance(seed, layout, m);
        let sol = solve(&inst, &SolveSettings::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        prop_assert!((sol.primal_objective - opt).abs() <= 1e-6 * (1.0 + opt.abs()),
            "got {} expected {}", sol.primal_objective, opt);
        prop_assert!(sol.primal_objective >= sol.dual_objective - 1e-7 * (1.0 + opt.abs()));
    }

    #[test]
    fn row_permutation_invariance(seed in any::<u64>(), rot in 1usize..5) {
        let layout = ConeLayout { free: 1, nonneg: 2, psd: vec![3, 2] };
        let (inst, _) = complementary_instance(seed, layout, 6);
        let mut perm = inst.clone();
        perm.rows.rotate_left(rot);
        perm.b.rotate_left(rot);
        perm.rows.reverse();
        perm.b.reverse();
        let a = solve(&inst, &SolveSettings::default()).unwrap();
        let b = solve(&perm, &SolveSettings::default()).unwrap();
        prop_assert_eq!(a.status, Status::Optimal);
        prop_assert_eq!(b.status, Status::Optimal);
        prop_assert!((a.primal_objective - b.primal_objective).abs() <= 1e-7 * (1.0 + a.primal_objective.abs()));
    }
}
