use proptest::prelude::*;
use sbfd::env::{action_table, build_state, slot_dynamics, Allocation, EnvConfig, SbfdEnv, Split};
use sbfd::forecaster::ForecastTable;
use sbfd::traffic::{SlotDemand, TrafficTrace};

proptest! {
    #[test]
    fn slot_dynamics_conserve_and_bound(
        q_ul in 0u64..2_000_000, q_dl in 0u64..2_000_000,
        arr_ul in 0u64..150_000, arr_dl in 0u64..150_000,
        a in 0usize..5, switched in any::<bool>(),
    ) {
        let cfg = EnvConfig::default();
        let alloc = Allocation::from_split(action_table().get(a).unwrap(), cfg.capacity);
        let (r, nu, nd) = slot_dynamics(&cfg, q_ul, q_dl, arr_ul, arr_dl, alloc, switched);
        prop_assert_eq!(q_ul + arr_ul, r.served_ul + nu);
        prop_assert_eq!(q_dl + arr_dl, r.served_dl + nd);
        prop_assert!(r.served_ul <= alloc.cap_ul && r.served_dl <= alloc.cap_dl);
        prop_assert!((-1.0..=1.0).contains(&r.reward));
        prop_assert!((0.0..=1.0).contains(&r.sat_ul) && (0.0..=1.0).contains(&r.sat_dl));
        prop_assert!(r.served_ul == alloc.cap_ul || nu == 0);
    }

    #[test]
    fn balanced_split_is_the_quiet_optimum(arr_ul in 0u64..5_000, arr_dl in 0u64..5_000) {
        let cfg = EnvConfig::default();
        let table = action_table();
        let k40 = table.index_of(Split::new(40, 60)).unwrap();
        let r: Vec<f64> = (0..table.len())
            .map(|k| {
                let al = Allocation::from_split(table.get(k).unwrap(), cfg.capacity);
                slot_dynamics(&cfg, 0, 0, arr_ul, arr_dl, al, false).0.reward
            })
            .collect();
        prop_assert!(r.iter().all(|&x| x <= r[k40]), "{:?}", r);
    }
}

#[test]
fn state_normalizes_queues_by_ten_capacities() {
    let s = build_state(&[[0.5, 0.25]; 10], 1_000_000.0, 250_000.0, 100_000).unwrap();
    assert_eq!(s.q_ul_norm, 1.0);
    assert_eq!(s.q_dl_norm, 0.25);
    assert_eq!(s.to_vec().len(), 22);
    assert!(build_state(&[[0.0, 0.0]; 10], -1.0, 0.0, 100_000).is_err());
}

#[test]
fn first_step_is_never_a_switch_and_queues_reset() {
    let trace = TrafficTrace::new(vec![SlotDemand { ul: 50_000, dl: 50_000 }; 20]).unwrap();
    let src = ForecastTable::from_rows(10, 0, vec![0.0; 20 * 21]).unwrap();
    let mut env = SbfdEnv::new(EnvConfig::default(), &trace, &src).unwrap();
    env.reset_with_len(0, 10).unwrap();
    let r = env.step(4).unwrap().record;
    assert_eq!(r.penalties.switch, 0.0);
    assert_eq!(env.step(0).unwrap().record.penalties.switch, 0.05);
    assert_ne!(env.queues(), (0, 0));
    env.reset_with_len(5, 10).unwrap();
    assert_eq!(env.queues(), (0, 0));
    assert_eq!(env.step(0).unwrap().record.penalties.switch, 0.0);
}
