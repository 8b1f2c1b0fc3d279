mod common;

use common::{params, random_channels};
use ddlink_core::access::{ddma_mask, AccessScheme};
use ddlink_core::allocator::{
    build_subproblem, dc_decompose, grad_zbar, initial_state, linearize_z, penalty_ccp,
    round_schedule, solve_subproblem, solve_subproblem_projected, AllocationState, CcpConfig,
    RateModel, SolverOptions,
};
use ddlink_core::linkmodel::{otfs_sum_rate, GridDomain, LinkBudget, PowerGrid};
use ddlink_core::random::substream;
use ddlink_core::{Error, Tensor3, UserChannel, C64};
use rand::Rng;

fn random_power<R: Rng>(rng: &mut R, m: usize, n: usize, k: usize, p0: f64) -> PowerGrid {
    let raw = Tensor3::from_fn(m, n, k, |_, _, _| rng.random_range(0.0..1.0));
    let scale = p0 / raw.sum();
    PowerGrid::new(raw.map(|v| v * scale), GridDomain::Dd).unwrap()
}

/// Independent evaluation of `sum_{i,l,k} log2(1 + Gamma)` from the expanded
/// SINR sum.
fn brute_force_rate(rho: &PowerGrid, channels: &[UserChannel], n0: f64) -> f64 {
    let (m, n, k) = rho.rho.dims();
    let mut total = 0.0;
    for i in 0..k {
        let paths = channels[i].paths();
        for kk in 0..n {
            for l in 0..m {
                let at = |p: usize, j: usize| {
                    let sl = (l as i64 - paths[p].delay_tap as i64).rem_euclid(m as i64) as usize;
                    let sk = (kk as i64 - paths[p].doppler_tap).rem_euclid(n as i64) as usize;
                    paths[p].power() * rho.rho[(sl, sk, j)]
                };
                let signal = at(0, i);
                let mut denom = n0;
                for p in 1..paths.len() {
                    denom += at(p, i);
                }
                for j in (0..k).filter(|&j| j != i) {
                    for p in 0..paths.len() {
                        denom += at(p, j);
                    }
                }
                total += (1.0 + signal / denom).log2();
            }
        }
    }
    total
}

#[test]
fn dc_terms_without_interference() {
    let p = params(2, 2);
    let h = C64::new(0.6, 0.3);
    let ch =
        vec![UserChannel::new(0, vec![ddlink_core::Path::new(h, 0, 0, &p).unwrap()], &p).unwrap()];
    let rho = PowerGrid::new(Tensor3::filled(2, 2, 1, 0.5), GridDomain::Dd).unwrap();
    let n0 = 0.1;
    let t = dc_decompose(&rho, &ch, n0, &p).unwrap();
    assert!((t.z_bar - 4.0 * n0.log2()).abs() < 1e-12);
    let expect = 4.0 * (1.0 + h.norm_sqr() * 0.5 / n0).log2();
    assert!((t.rate() - expect).abs() < 1e-12);
    assert!(t.grad_z.iter().all(|g| *g == 0.0));

    let zero = PowerGrid::zeros(&p, 1, GridDomain::Dd);
    let t0 = dc_decompose(&zero, &ch, n0, &p).unwrap();
    assert!((t0.q_bar - 4.0 * n0.log2()).abs() < 1e-12);
    assert!((t0.z_bar - t0.q_bar).abs() < 1e-12);
}

#[test]
fn dc_difference_matches_link_model() {
    let p = params(4, 4);
    let mut rng = substream(21, 0);
    for _ in 0..5 {
        let channels = random_channels(&mut rng, 2, 3, &p);
        let rho = random_power(&mut rng, 4, 4, 2, 2.0);
        let t = dc_decompose(&rho, &channels, 0.01, &p).unwrap();
        let r = otfs_sum_rate(&rho, &channels, 0.01, &p).unwrap();
        assert!((t.rate() - 2.0 * r).abs() < 1e-10);
        assert!((t.rate() - brute_force_rate(&rho, &channels, 0.01)).abs() < 1e-10);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let p = params(4, 4);
    let mut rng = substream(22, 0);
    let p0 = 1.0;
    for _ in 0..10 {
        let channels = random_channels(&mut rng, 2, 3, &p);
        let rho = random_power(&mut rng, 4, 4, 2, p0);
        let n0 = 0.02;
        let g = grad_zbar(&rho, &channels, n0, &p).unwrap();
        let h = 1e-6 * p0;
        for e in 0..rho.rho.len() {
            let mut up = rho.clone();
            let mut down = rho.clone();
            up.rho.as_mut_slice()[e] += h;
            down.rho.as_mut_slice()[e] -= h;
            let fd = (dc_decompose(&up, &channels, n0, &p).unwrap().z_bar
                - dc_decompose(&down, &channels, n0, &p).unwrap().z_bar)
                / (2.0 * h);
            let analytic = g.as_slice()[e];
            assert!(
                (analytic - fd).abs() / (1.0 + analytic.abs()) < 1e-6,
                "{analytic} vs {fd}"
            );
        }
    }
}

#[test]
fn single_path_gradient_is_zero_and_shift_invariant_gradient() {
    let p = params(4, 4);
    let ch = vec![UserChannel::identity(0)];
    let rho = PowerGrid::new(Tensor3::filled(4, 4, 1, 0.1), GridDomain::Dd).unwrap();
    assert!(grad_zbar(&rho, &ch, 0.1, &p)
        .unwrap()
        .iter()
        .all(|g| *g == 0.0));

    // Equal powers and a two-path channel: the gradient cannot depend on k.
    let two = vec![UserChannel::new(
        0,
        vec![
            ddlink_core::Path::new(C64::new(0.9, 0.0), 0, 0, &p).unwrap(),
            ddlink_core::Path::new(C64::new(0.3, 0.0), 1, 1, &p).unwrap(),
        ],
        &p,
    )
    .unwrap()];
    let g = grad_zbar(&rho, &two, 0.1, &p).unwrap();
    for l in 0..4 {
        for k in 1..4 {
            assert!((g[(l, k, 0)] - g[(l, 0, 0)]).abs() < 1e-12);
        }
    }
}

#[test]
fn linearization_is_tangent_upper_bound() {
    let p = params(4, 4);
    let mut rng = substream(23, 0);
    let channels = random_channels(&mut rng, 2, 3, &p);
    let n0 = 0.05;
    let rho_m = random_power(&mut rng, 4, 4, 2, 1.0);
    let at_m = dc_decompose(&rho_m, &channels, n0, &p).unwrap();
    assert!((linearize_z(&rho_m.rho, &rho_m.rho, &at_m) - at_m.z_bar).abs() < 1e-12);
    for _ in 0..1000 {
        let total = rng.random_range(0.0..1.0);
        let rho = random_power(&mut rng, 4, 4, 2, total);
        let z = dc_decompose(&rho, &channels, n0, &p).unwrap().z_bar;
        assert!(linearize_z(&rho.rho, &rho_m.rho, &at_m) >= z - 1e-12);
    }
}

fn desk_budget(p: &ddlink_core::FrameParams, snr_db: f64) -> LinkBudget {
    LinkBudget::from_snr_db(1.0, snr_db, p).unwrap()
}

#[test]
fn binary_linearization_reads_one_minus_s() {
    let p = params(2, 2);
    let ch = vec![UserChannel::identity(0)];
    let model = RateModel::new(&ch, &p);
    let init = initial_state(&ddma_mask(&p, 1).unwrap(), 1.0).unwrap();
    let spec = build_subproblem(&model, &init, 1.0, &desk_budget(&p, 10.0), 1e-6).unwrap();
    for e in 0..4 {
        // (s_m - s_m^2) + (1 - 2 s_m)(s - s_m) = 1 - s at s_m = 1.
        let (c0, c1) = spec.c7_coefficients(e);
        assert_eq!((c0, c1), (1.0, -1.0));
    }
}

#[test]
fn subproblem_objective_is_tangent_at_the_iterate() {
    let p = params(4, 4);
    let mut rng = substream(24, 0);
    let channels = random_channels(&mut rng, 2, 3, &p);
    let budget = desk_budget(&p, 15.0);
    let model = RateModel::new(&channels, &p);
    let init = initial_state(&AccessScheme::Ddma.mask(&p, 2).unwrap(), budget.p0).unwrap();
    let spec = build_subproblem(&model, &init, 2.5, &budget, 1e-6).unwrap();
    let rate = dc_decompose(
        &PowerGrid::new(init.rho.clone(), GridDomain::Dd).unwrap(),
        &channels,
        budget.n0,
        &p,
    )
    .unwrap()
    .rate();
    // Binary s and zero slack: the penalized linearization equals the rate.
    assert!((spec.objective(&init) - rate).abs() < 1e-9);
    assert!(spec.max_violation(&init) <= 0.0);

    // The origin with s = 0 is feasible once slacks take their tight values.
    let zero = AllocationState {
        rho: Tensor3::zeros(4, 4, 2),
        s: Tensor3::zeros(4, 4, 2),
        a: init.s.clone(),
    };
    assert!(spec.max_violation(&zero) <= 0.0);
}

#[test]
fn single_user_single_path_subproblem_is_uniform() {
    let p = params(4, 2);
    let ch = vec![UserChannel::identity(0)];
    let budget = desk_budget(&p, 10.0);
    let model = RateModel::new(&ch, &p);
    let init = initial_state(&ddma_mask(&p, 1).unwrap(), budget.p0).unwrap();
    let spec = build_subproblem(&model, &init, 1.0, &budget, 1e-6 * budget.p0).unwrap();
    let (sol, report) = solve_subproblem(&spec, &init, &SolverOptions::default()).unwrap();
    for r in sol.rho.iter() {
        assert!((r - budget.p0 / 8.0).abs() < 1e-5, "{r}");
    }
    assert!(sol.s.iter().all(|s| (s - 1.0).abs() < 1e-5));
    assert!(sol.a.iter().all(|a| a.abs() < 1e-5));
    assert!(report.complementarity < 1e-5);
    assert!(report.primal_infeasibility == 0.0);
    let warm = spec.objective(&init);
    assert!(report.objective >= warm - 1e-7 * (1.0 + warm.abs()));
}

#[test]
fn big_m_margin_beyond_budget_is_infeasible() {
    let p = params(2, 2);
    let ch = vec![UserChannel::identity(0)];
    let budget = desk_budget(&p, 10.0);
    let model = RateModel::new(&ch, &p);
    let init = initial_state(&ddma_mask(&p, 1).unwrap(), budget.p0).unwrap();
    assert!(matches!(
        build_subproblem(&model, &init, 1.0, &budget, 2.0 * budget.p0),
        Err(Error::Infeasible(_))
    ));
}

/// Best objective over the feasible set, for the DDMA linearization point
/// where the slack-optimal schedule has a closed form.
fn grid_oracle(
    spec: &ddlink_core::allocator::SubproblemSpec,
    owner: &[usize],
    mn: usize,
    k: usize,
) -> f64 {
    let value = |x: &[f64]| -> f64 {
        let mut rho = Tensor3::zeros(mn, 1, k);
        let mut s = Tensor3::zeros(mn, 1, k);
        let mut a = Tensor3::zeros(mn, 1, k);
        for b in 0..mn {
            for i in 0..k {
                rho[(b, 0, i)] = x[b + mn * i];
                if i == owner[b] {
                    let others: f64 = (0..k).filter(|&j| j != i).map(|j| x[b + mn * j]).sum();
                    s[(b, 0, i)] = 1.0 - others;
                    a[(b, 0, i)] = others;
                } else {
                    s[(b, 0, i)] = x[b + mn * i];
                    a[(b, 0, i)] = x[b + mn * i];
                }
            }
        }
        spec.objective(&AllocationState { rho, s, a })
    };
    let n = mn * k;
    let steps = 24;
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut idx = vec![0usize; n];
    loop {
        if idx.iter().sum::<usize>() <= steps {
            let x: Vec<f64> = idx.iter().map(|v| *v as f64 / steps as f64).collect();
            let v = value(&x);
            if v > best.0 {
                best = (v, x);
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                break;
            }
            idx[pos] += 1;
            if idx[pos] <= steps {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }
    // Pattern search refinement along coordinate and exchange directions.
    let (mut fbest, mut x) = best;
    let mut h = 1.0 / steps as f64;
    while h > 1e-9 {
        let mut improved = false;
        for i in 0..n {
            for j in 0..=n {
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[i] += sign * h;
                    if j < n && j != i {
                        y[j] -= sign * h;
                    }
                    if y.iter().all(|v| *v >= 0.0) && y.iter().sum::<f64>() <= 1.0 {
                        let v = value(&y);
                        if v > fbest {
                            fbest = v;
                            x = y;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    fbest
}

#[test]
fn barrier_solution_matches_grid_oracle() {
    let p = params(2, 1);
    let mut rng = substream(25, 0);
    for trial in 0..3 {
        let channels = random_channels(&mut rng, 2, 2, &p);
        let budget = desk_budget(&p, 10.0);
        let model = RateModel::new(&channels, &p);
        let init = initial_state(&ddma_mask(&p, 2).unwrap(), budget.p0).unwrap();
        let spec = build_subproblem(&model, &init, 0.5, &budget, 1e-6).unwrap();
        let (_, report) = solve_subproblem(&spec, &init, &SolverOptions::default()).unwrap();
        let oracle = grid_oracle(&spec, &[0, 1], 2, 2);
        assert!(
            (report.objective - oracle).abs() < 1e-3,
            "trial {trial}: {} vs {oracle}",
            report.objective
        );
    }
}

#[test]
fn barrier_and_projected_gradient_agree() {
    let p = params(2, 2);
    let mut rng = substream(26, 0);
    for _ in 0..3 {
        let channels = random_channels(&mut rng, 2, 3, &p);
        let budget = desk_budget(&p, 12.0);
        let model = RateModel::new(&channels, &p);
        let mut warm = initial_state(&AccessScheme::Dodma.mask(&p, 2).unwrap(), budget.p0).unwrap();
        // A fractional schedule exercises every linearization slope.
        warm.s
            .as_mut_slice()
            .iter_mut()
            .for_each(|s| *s = 0.2 + 0.6 * *s);
        let spec = build_subproblem(&model, &warm, 0.8, &budget, 1e-6).unwrap();
        let (_, ipm) = solve_subproblem(&spec, &warm, &SolverOptions::default()).unwrap();
        let (_, pg) = solve_subproblem_projected(&spec, &warm, 50_000).unwrap();
        assert!(
            (ipm.objective - pg.objective).abs() < 1e-3,
            "{} vs {}",
            ipm.objective,
            pg.objective
        );
    }
}

#[test]
fn ccp_single_user_converges_to_uniform_power() {
    let p = params(4, 2);
    let ch = vec![UserChannel::identity(0)];
    let budget = desk_budget(&p, 10.0);
    let init = initial_state(&ddma_mask(&p, 1).unwrap(), budget.p0).unwrap();
    let config = CcpConfig::defaults(budget.p0, &p, 1);
    let out = penalty_ccp(&ch, &p, &budget, &config, init).unwrap();
    assert!(out.converged);
    assert!(out.iterations() <= 3);
    let expect = 8.0 * 11f64.log2();
    assert!((2.0 * out.sum_rate - expect).abs() < 1e-4);
    assert_eq!(out.schedule.active_blocks(), 8);
}

#[test]
fn ccp_trace_is_monotone_and_schedule_binary() {
    let p = params(4, 4);
    let mut rng = substream(27, 0);
    let channels = random_channels(&mut rng, 2, 3, &p);
    let budget = desk_budget(&p, 20.0);
    let init = initial_state(&ddma_mask(&p, 2).unwrap(), budget.p0).unwrap();
    let config = CcpConfig::defaults(budget.p0, &p, 2);
    let out = penalty_ccp(&channels, &p, &budget, &config, init).unwrap();
    for row in &out.trace {
        assert!(row.objective >= row.warm_objective - 1e-6, "{row:?}");
    }
    let last = out.trace.last().unwrap();
    assert!(last.binary_gap <= 1e-3, "{last:?}");
    assert!(out.state.rho.sum() <= budget.p0 * (1.0 + 1e-7));
    let rounded = out.sum_rate;
    assert!((rounded - out.relaxed_sum_rate).abs() <= 0.02 * out.relaxed_sum_rate);
}

#[test]
fn rounding_examples() {
    let s = Tensor3::from_vec(1, 1, 2, vec![0.5001, 0.2]).unwrap();
    let state = AllocationState {
        rho: Tensor3::from_vec(1, 1, 2, vec![0.3, 0.1]).unwrap(),
        s,
        a: Tensor3::zeros(1, 1, 2),
    };
    let (mask, power) = round_schedule(&state, 0.5, 1.0).unwrap();
    assert!(mask.get(0, 0, 0) && !mask.get(0, 0, 1));
    assert!((power.rho[(0, 0, 0)] - 1.0).abs() < 1e-12);

    let binary = AllocationState {
        rho: Tensor3::from_vec(2, 1, 1, vec![0.5, 0.5]).unwrap(),
        s: Tensor3::filled(2, 1, 1, 1.0),
        a: Tensor3::zeros(2, 1, 1),
    };
    let (mask, power) = round_schedule(&binary, 0.5, 1.0).unwrap();
    assert_eq!(mask.active_blocks(), 2);
    assert_eq!(power.rho, binary.rho);

    let tie = AllocationState {
        rho: Tensor3::from_vec(1, 1, 2, vec![0.2, 0.4]).unwrap(),
        s: Tensor3::filled(1, 1, 2, 0.50001),
        a: Tensor3::zeros(1, 1, 2),
    };
    let (mask, _) = round_schedule(&tie, 0.5, 1.0).unwrap();
    assert_eq!(mask.owner(0, 0), Some(1));
}
