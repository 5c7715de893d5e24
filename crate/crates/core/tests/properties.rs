use proptest::prelude::*;

use vcs_core::dynamics::{self, ControllerParams, DemandSchedule, SimOptions, Termination};
use vcs_core::equilibrium::{self, Branch, Equilibrium, Region};
use vcs_core::game::{self, LneTolerance};
use vcs_core::network::{self, ConductanceState, IndexSet, LoadSpec, NetworkParams, SystemConfig};
use vcs_core::scenario::{run, Scenario};
use vcs_core::stability::{self, dense, Classification, JacobianDecomposition, JacobianKind};

#[derive(Debug, Clone)]
struct Case {
    cfg: SystemConfig,
    g: Vec<f64>,
}

prop_compose! {
    fn params()(e in 0.0f64..1.5, gl in -1.0f64..1.0) -> NetworkParams {
        NetworkParams::new(10f64.powf(e), 10f64.powf(gl)).unwrap()
    }
}

prop_compose! {
    /// Mixed configs with total demand `load · P_max` and a state on a log scale.
    fn case(max_n: usize, min_load: f64, max_load: f64)(n in 1..=max_n)(
        p in params(),
        nf in 0..=n,
        shares in prop::collection::vec(0.1f64..1.0, n),
        thetas in prop::collection::vec(0.25f64..4.0, n),
        load in min_load..max_load,
        kappa in 1.0f64..20.0,
        state in prop::collection::vec(-3.0f64..0.7, n),
    ) -> Case {
        let total: f64 = shares.iter().sum();
        let p_tot = load * p.max_power();
        let loads = (0..shares.len())
            .map(|i| {
                let d = p_tot * shares[i] / total;
                if i < nf { LoadSpec::flexible(d, thetas[i]) } else { LoadSpec::inflexible(d) }
            })
            .collect();
        let gl = p.line_conductance();
        let g = state.iter().map(|s| gl * 10f64.powf(*s)).collect();
        Case { cfg: SystemConfig::new(p, loads, kappa).unwrap(), g }
    }
}

fn inflexible(case: &Case) -> SystemConfig {
    let loads = case.cfg.demands().into_iter().map(LoadSpec::inflexible).collect();
    SystemConfig::new(*case.cfg.params(), loads, case.cfg.kappa()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn delivered_power_never_exceeds_capacity(c in case(5, 0.1, 1.5)) {
        let flow = network::power_flow(&c.cfg, &c.g);
        let p_max = c.cfg.max_power();
        prop_assert!(flow.total_power <= p_max * (1.0 + 1e-12));
        let gl = c.cfg.params().line_conductance();
        let gap = (flow.g_eq - gl) / (flow.g_eq + gl);
        // P_max - P_tot = P_max ((g_eq - g_l)/(g_eq + g_l))²
        prop_assert!((p_max - flow.total_power - p_max * gap * gap).abs() <= 1e-12 * p_max);
    }

    #[test]
    fn partition_powers_add_up(c in case(5, 0.1, 1.5), mask in any::<u64>()) {
        let n = c.cfg.n();
        let set = IndexSet::from_mask(mask, n);
        let rest = set.complement(n);
        let flow = network::power_flow(&c.cfg, &c.g);
        let sum = network::aggregate_power(&c.cfg, &c.g, &set) + network::aggregate_power(&c.cfg, &c.g, &rest);
        prop_assert!((sum - flow.total_power).abs() <= 1e-12 * flow.total_power.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn sensitivity_matches_finite_difference(c in case(5, 0.1, 1.5), k in 0usize..5) {
        let i = k % c.cfg.n();
        let s = network::power_sensitivity(&c.cfg, &c.g, i);
        let h = 1e-4 * (c.g[i] + c.cfg.params().line_conductance());
        let p = |dx: f64| {
            let mut x = c.g.clone();
            x[i] += dx;
            network::power_flow(&c.cfg, &x).power[i]
        };
        let fd = (-p(2.0 * h) + 8.0 * p(h) - 8.0 * p(-h) + p(-2.0 * h)) / (12.0 * h);
        let flow = network::power_flow(&c.cfg, &c.g);
        let denom = flow.g_eq + c.cfg.params().line_conductance();
        let scale = s.abs().max(c.cfg.params().power_scale() / (denom * denom));
        prop_assert!((fd - s).abs() <= 1e-6 * scale, "fd {} analytic {}", fd, s);
    }

    #[test]
    fn voltage_decreases_in_every_conductance(c in case(5, 0.1, 1.5), k in 0usize..5, step in 1e-3f64..10.0) {
        let i = k % c.cfg.n();
        let mut up = c.g.clone();
        up[i] += step * c.cfg.params().line_conductance();
        prop_assert!(network::voltage(&c.cfg, &up) < network::voltage(&c.cfg, &c.g));
    }

    #[test]
    fn gradient_is_negative_mismatch(c in case(5, 0.1, 1.5)) {
        let flow = network::power_flow(&c.cfg, &c.g);
        for i in 0..c.cfg.n() {
            let grad = game::utility_gradient(&c.cfg, &c.g, i);
            prop_assert!((grad + flow.mismatch[i]).abs() <= 1e-12 * (flow.power[i] + c.cfg.demand(i)));
        }
    }

    #[test]
    fn utility_vanishes_without_own_conductance(c in case(5, 0.1, 1.5), k in 0usize..5) {
        let mut g = c.g.clone();
        g[k % c.cfg.n()] = 0.0;
        prop_assert_eq!(game::utility(&c.cfg, &g, k % c.cfg.n()), 0.0);
    }

    #[test]
    fn lne_test_is_permutation_invariant(c in case(5, 0.1, 1.5), shift in 0usize..5) {
        let cfg = inflexible(&c);
        let n = cfg.n();
        let rotate = |v: &[f64]| (0..n).map(|i| v[(i + shift) % n]).collect::<Vec<_>>();
        let loads = rotate(&cfg.demands()).into_iter().map(LoadSpec::inflexible).collect();
        let permuted = SystemConfig::new(*cfg.params(), loads, cfg.kappa()).unwrap();
        let a = game::check_lne(&cfg, &c.g, LneTolerance::for_config(&cfg));
        let b = game::check_lne(&permuted, &rotate(&c.g), LneTolerance::for_config(&permuted));
        prop_assert_eq!(a.is_lne, b.is_lne);
        prop_assert_eq!(a.is_equilibrium, b.is_equilibrium);
        for (x, y) in rotate(&a.gradient).iter().zip(&b.gradient) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()) * cfg.max_power());
        }
    }

    #[test]
    fn inflexible_field_is_negative_mismatch(c in case(5, 0.1, 1.5)) {
        let cfg = inflexible(&c);
        let ctrl = ControllerParams::from_config(&cfg);
        let rhs = dynamics::rhs(&cfg, &ctrl, &c.g).unwrap();
        let flow = network::power_flow(&cfg, &c.g);
        for (r, m) in rhs.iter().zip(&flow.mismatch) {
            prop_assert_eq!(*r, -m);
        }
    }

    #[test]
    fn inflexible_field_points_inward_at_zero(c in case(5, 0.1, 1.5), k in 0usize..5) {
        let cfg = inflexible(&c);
        let i = k % cfg.n();
        let mut g = c.g.clone();
        g[i] = 0.0;
        let rhs = dynamics::rhs(&cfg, &ControllerParams::from_config(&cfg), &g).unwrap();
        prop_assert!(rhs[i] > 0.0);
    }

    #[test]
    fn schedule_stays_between_breakpoints(
        points in prop::collection::vec((0.1f64..10.0, 0.0f64..5.0), 1..6),
        t in -1.0f64..60.0,
    ) {
        let mut time = 0.0;
        let profile: Vec<(f64, f64)> = points.iter().map(|(dt, p)| { time += dt; (time, *p) }).collect();
        let lo = profile.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = profile.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let schedule = DemandSchedule::new(vec![profile.clone()]).unwrap();
        let v = schedule.eval(t)[0];
        prop_assert!(v >= lo && v <= hi);
        for (tk, pk) in &profile {
            prop_assert_eq!(schedule.eval(*tk)[0], *pk);
        }
    }

    #[test]
    fn equilibria_are_fixed_points(c in case(4, 0.2, 1.5)) {
        let ctrl = ControllerParams::from_config(&c.cfg);
        let catalog = equilibrium::enumerate_equilibria(&c.cfg, &ctrl).unwrap();
        for eq in &catalog.entries {
            let rhs = dynamics::rhs(&c.cfg, &ctrl, &eq.state).unwrap();
            prop_assert!(rhs.iter().all(|r| r.abs() <= 1e-9), "{:?} at {:?}", rhs, eq.state);
        }
    }

    #[test]
    fn branches_straddle_the_fold(c in case(4, 0.2, 1.5)) {
        let ctrl = ControllerParams::from_config(&c.cfg);
        let nf = c.cfg.n_flexible();
        for mask in 0..(1u64 << nf) {
            let subset = IndexSet::from_mask(mask, nf);
            let sol = equilibrium::solve_subset(&c.cfg, &ctrl, &subset).unwrap();
            if sol.equilibria.len() != 2 {
                continue;
            }
            let pivot = c.cfg.params().line_conductance() + subset.iter().map(|i| ctrl.target[i]).sum::<f64>();
            let free = |eq: &Equilibrium| subset.complement(c.cfg.n()).iter().map(|i| eq.state[i]).sum::<f64>();
            let low = sol.equilibria.iter().find(|e| e.branch == Branch::Low).unwrap();
            let high = sol.equilibria.iter().find(|e| e.branch == Branch::High).unwrap();
            prop_assert!(free(low) < pivot && pivot < free(high));
        }
    }

    #[test]
    fn stabilized_overload_sits_at_capacity(c in case(4, 1.01, 1.5)) {
        let ctrl = ControllerParams::from_config(&c.cfg);
        let flexible = c.cfg.flexible();
        prop_assume!(!flexible.is_empty());
        prop_assume!(ctrl.target.iter().all(|t| *t >= 0.0));
        let sol = equilibrium::solve_subset(&c.cfg, &ctrl, &flexible).unwrap();
        let low = sol.equilibria.iter().find(|e| e.branch == Branch::Low);
        prop_assume!(low.is_some());
        let low = low.unwrap();
        let gl = c.cfg.params().line_conductance();
        let half = c.cfg.params().source_voltage() / 2.0;
        prop_assert!((low.flow.g_eq - gl).abs() <= 1e-10 * gl);
        prop_assert!((low.flow.voltage - half).abs() <= 1e-10 * half);
        for i in c.cfg.inflexible().iter() {
            let expected = c.cfg.demand(i) / c.cfg.half_voltage_sq();
            prop_assert!((low.state[i] - expected).abs() <= 1e-10 * gl);
        }
    }

    #[test]
    fn secular_matches_dense(
        diag in prop::collection::vec(-5.0f64..5.0, 1..7),
        mags in prop::collection::vec(0.01f64..3.0, 6),
        w in prop::collection::vec(0.1f64..2.0, 6),
        negative in any::<bool>(),
    ) {
        let n = diag.len();
        let mut sorted = diag.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|p| p[1] - p[0] >= 0.05));
        let sign = if negative { -1.0 } else { 1.0 };
        let jd = JacobianDecomposition {
            diag,
            u: mags[..n].iter().map(|m| sign * m).collect(),
            w: w[..n].to_vec(),
            kind: JacobianKind::Vcs,
        };
        let secular = stability::eigenvalues_secular(&jd).unwrap();
        prop_assert_eq!(secular.len(), n);
        let oracle = dense::dense_eigenvalues(&jd.dense());
        prop_assert_eq!(oracle.real.len(), n);
        for (a, b) in secular.iter().zip(&oracle.real) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn inflexible_stability_follows_the_line(
        p in params(),
        weights in prop::collection::vec(0.1f64..1.0, 1..6),
        ratio in prop_oneof![0.05f64..0.95, 1.05f64..5.0],
    ) {
        let gl = p.line_conductance();
        let g_eq = ratio * gl;
        let total: f64 = weights.iter().sum();
        let g: Vec<f64> = weights.iter().map(|w| g_eq * w / total).collect();
        let v = p.source_voltage() * gl / (g_eq + gl);
        let loads = g.iter().map(|x| LoadSpec::inflexible(v * v * x)).collect();
        let cfg = SystemConfig::new(p, loads, 10.0).unwrap();
        let ctrl = ControllerParams::from_config(&cfg);
        let eq = Equilibrium::verified(&cfg, &ctrl, ConductanceState::new(g.clone()).unwrap(), IndexSet::empty()).unwrap();
        let verdict = stability::classify(&cfg, &ctrl, &eq, stability::default_tol_hyp(&cfg)).unwrap();
        let stable = verdict.classification == Classification::Stable;
        prop_assert_eq!(stable, ratio < 1.0);
        prop_assert_eq!(verdict.spectrum.eigenvalues.len(), g.len());
        if stable {
            prop_assert!(game::check_lne(&cfg, &g, LneTolerance::for_config(&cfg)).is_lne);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn overload_drives_conductance_up(c in case(3, 1.05, 1.5)) {
        let cfg = inflexible(&c);
        let eps = cfg.total_demand() - cfg.max_power();
        let mut opts = SimOptions::for_config(&cfg, 2.0 * cfg.params().line_conductance() / eps);
        opts.sample_stride = 1;
        let schedule = DemandSchedule::constant(&cfg.demands()).unwrap();
        let trace = dynamics::integrate(&cfg, &c.g, &schedule, &opts).unwrap();
        for pair in trace.samples.windows(2) {
            let slope = (pair[1].flow.g_eq - pair[0].flow.g_eq) / (pair[1].time - pair[0].time);
            prop_assert!(slope >= eps - 1e-6, "slope {} eps {}", slope, eps);
        }
    }

    #[test]
    fn trajectories_stay_nonnegative(c in case(3, 0.1, 1.5), project in any::<bool>()) {
        let cfg = inflexible(&c);
        let mut opts = SimOptions::for_config(&cfg, 20.0 * cfg.params().line_conductance() / cfg.max_power());
        opts.project_nonnegative = project;
        opts.sample_stride = 1;
        let schedule = DemandSchedule::constant(&cfg.demands()).unwrap();
        let trace = dynamics::integrate(&cfg, &c.g, &schedule, &opts).unwrap();
        prop_assert!(trace.samples.iter().all(|s| s.state.iter().all(|x| *x >= 0.0)));
    }

    #[test]
    fn halving_the_step_keeps_the_settled_state(c in case(3, 0.2, 0.8)) {
        let cfg = inflexible(&c);
        let t_end = 200.0 * cfg.params().line_conductance() / cfg.max_power();
        let schedule = DemandSchedule::constant(&cfg.demands()).unwrap();
        let run = |dt_scale: f64| {
            let mut opts = SimOptions::for_config(&cfg, t_end);
            opts.dt *= 10.0 * dt_scale;
            opts.settle_window *= 10.0 * dt_scale;
            opts.settle_tol = 1e-13 * cfg.max_power();
            // from the open circuit, which lies below the unstable root
            dynamics::integrate(&cfg, &vec![0.0; cfg.n()], &schedule, &opts).unwrap()
        };
        let (a, b) = (run(1.0), run(0.5));
        prop_assert!(matches!(a.termination, Termination::Converged { .. }), "{:?}", a.termination);
        prop_assert!(matches!(b.termination, Termination::Converged { .. }), "{:?}", b.termination);
        for (x, y) in a.last().state.iter().zip(&b.last().state) {
            prop_assert!((x - y).abs() < 1e-8, "{} vs {}", x, y);
        }
        prop_assert_eq!(Region::of(&cfg, a.last().flow.g_eq), Region::Interior);
    }

    #[test]
    fn traces_are_reproducible(
        demand in prop::collection::vec(0.05f64..0.6, 1..4),
        thetas in prop::collection::vec(0.5f64..3.0, 3),
        nf in 0usize..4,
    ) {
        let nf = nf.min(demand.len());
        let loads: Vec<String> = demand
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i < nf {
                    format!(r#"{{"kind": "flexible", "theta": {}, "P0": [[0, {p}], [2, {}]]}}"#, thetas[i], 1.5 * p)
                } else {
                    format!(r#"{{"kind": "inflexible", "P0": [[0, {p}]]}}"#)
                }
            })
            .collect();
        let json = format!(
            r#"{{"network": {{"E": 2, "g_l": 1}}, "loads": [{}], "simulation": {{"dt": 0.01, "t_end": 20, "initial_g": [{}]}}}}"#,
            loads.join(","),
            vec!["0.05"; demand.len()].join(",")
        );
        let scenario = Scenario::from_json(&json).unwrap();
        let bytes = |s: &Scenario| {
            let mut out = Vec::new();
            run::write_trace(&mut out, &run::simulate(s).unwrap().trace).unwrap();
            out
        };
        prop_assert_eq!(bytes(&scenario), bytes(&scenario));
    }
}
