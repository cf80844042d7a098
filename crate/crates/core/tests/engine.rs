//! Drop-level invariants of the event engine.

use coexsim::config::{RunConfig, RunKind};
use coexsim::coexistence::CycleConfig;
use coexsim::engine::{run_drop, run_drops, run_drops_sequential, topology_for_seed};
use coexsim::topology::NodeKind;
use coexsim::traffic::RampProfile;

fn config(kind: RunKind, lambda_l: f64, duration_ms: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.coexistence.mode = kind;
    cfg.lte.arrival_rate = lambda_l;
    cfg.engine.duration_ms = duration_ms;
    cfg.engine.drops = 3;
    cfg
}

#[test]
fn hundred_second_drop_yields_hundred_cycles() {
    let cfg = config(RunKind::Fixed(2), 0.5, 100_000);
    assert_eq!(run_drop(&cfg, 1).unwrap().cycles.len(), 100);
}

#[test]
fn totals_equal_sum_of_cycle_bits() {
    let cfg = config(RunKind::Adaptive, 1.0, 5_000);
    let r = run_drop(&cfg, 4).unwrap();
    let t_c_s = cfg.coexistence.t_c_ms as f64 / 1_000.0;
    assert_eq!(r.lte_bits, r.cycles.iter().map(|c| c.lte_bits).sum::<u64>());
    assert_eq!(r.wlan_bits, r.cycles.iter().map(|c| c.wlan_bits).sum::<u64>());
    for c in &r.cycles {
        assert_eq!((c.lte_mbps * 1e6 * t_c_s).round() as u64, c.lte_bits);
        assert_eq!((c.wlan_mbps * 1e6 * t_c_s).round() as u64, c.wlan_bits);
    }
}

#[test]
fn delivered_never_exceeds_offered() {
    for kind in [RunKind::LteOnly, RunKind::WlanOnly, RunKind::Adaptive, RunKind::Fixed(3)] {
        let cfg = config(kind, 1.5, 3_000);
        let r = run_drop(&cfg, 2).unwrap();
        assert!(r.lte_bits <= r.stats.lte_offered_bits, "{kind}");
        assert!(r.wlan_bits <= r.stats.wlan_offered_bits, "{kind}");
    }
}

#[test]
fn single_system_runs_leave_the_other_silent() {
    let r = run_drop(&config(RunKind::LteOnly, 1.0, 2_000), 1).unwrap();
    assert_eq!(r.wlan_bits, 0);
    assert!(r.cycles.iter().all(|c| c.n_listen == 0 && c.spared_count == 0));
    let r = run_drop(&config(RunKind::WlanOnly, 1.0, 2_000), 1).unwrap();
    assert_eq!(r.lte_bits, 0);
    assert!(r.cycles.iter().all(|c| c.n_listen == 0 && c.spared_count == 0));
}

#[test]
fn wlan_only_ignores_lte_arrival_rate() {
    let a = run_drop(&config(RunKind::WlanOnly, 0.5, 2_000), 9).unwrap();
    let b = run_drop(&config(RunKind::WlanOnly, 2.0, 2_000), 9).unwrap();
    assert_eq!(a.cycles, b.cycles);
}

#[test]
fn every_mute_subframe_is_sensed_once() {
    let cfg = config(RunKind::Adaptive, 1.0, 10_000);
    let frames = cfg.coexistence.cycle().frames_per_cycle();
    for seed in 1..4 {
        let r = run_drop(&cfg, seed).unwrap();
        for c in &r.cycles {
            assert_eq!(c.n_listen, frames * c.spared_count as u64);
            assert!(c.n_seize <= c.n_listen);
            assert!((0.0..=1.0).contains(&c.gamma));
            assert!((1..=9).contains(&c.spared_count));
        }
        assert_eq!(r.cycles[0].spared_count, CycleConfig::default().initial_spared);
    }
}

#[test]
fn quiet_wlan_shrinks_to_one_spare_and_saturated_wlan_grows_to_nine() {
    let mut cfg = config(RunKind::Adaptive, 1.0, 3_000);
    cfg.wlan.ramp = RampProfile::constant(0.0);
    let r = run_drop(&cfg, 1).unwrap();
    assert_eq!(r.cycles[1].spared_count, 1);
    assert_eq!(r.cycles[2].spared_count, 1);

    let mut cfg = config(RunKind::Adaptive, 1.0, 3_000);
    cfg.wlan.full_buffer = true;
    let r = run_drop(&cfg, 1).unwrap();
    assert_eq!(r.cycles[0].gamma, 1.0);
    assert_eq!(r.cycles[1].spared_count, 9);
}

#[test]
fn dcf_decrements_match_idle_slots_and_wlan_packets_are_conserved() {
    for kind in [RunKind::WlanOnly, RunKind::Adaptive, RunKind::Fixed(1)] {
        let r = run_drop(&config(kind, 1.0, 4_000), 5).unwrap();
        let mut arrived = 0;
        let mut delivered = 0;
        for s in &r.stats.wlan_stations {
            assert_eq!(s.decrements, s.idle_backoff_slots, "{kind}");
            assert!(s.attempts >= s.delivered);
            assert_eq!(s.attempts, s.delivered + s.failures, "{kind}");
            arrived += s.arrived;
            delivered += s.delivered;
        }
        assert_eq!(arrived, delivered + r.stats.wlan_queued, "{kind}");
    }
}

#[test]
fn lte_packets_are_conserved() {
    let r = run_drop(&config(RunKind::Fixed(4), 2.0, 3_000), 3).unwrap();
    let q = r.stats.lte;
    assert!(q.arrived_packets > 0);
    assert!(q.delivered_packets + q.dropped_packets <= q.arrived_packets);
    assert!(q.delivered_bits + q.dropped_bits <= q.arrived_bits);
}

#[test]
fn topology_is_seed_deterministic_and_well_formed() {
    let cfg = RunConfig::default();
    let a = topology_for_seed(&cfg, 11).unwrap();
    let b = topology_for_seed(&cfg, 11).unwrap();
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.nodes.len(), 3 + 10 + 10);
    assert_eq!(a.nodes[0].kind, NodeKind::Pico);
    assert!(a.nodes[1..3].iter().all(|n| n.kind == NodeKind::Ap));
    for (i, n) in a.nodes[..3].iter().enumerate() {
        assert!(a.geometry.corridor.contains(&n.point()));
        for m in &a.nodes[i + 1..3] {
            assert!(n.point().distance(&m.point()) >= 10.0);
        }
    }
    assert!(a.nodes.iter().all(|n| a.geometry.extent.contains(&n.point())));
    let lowest = cfg.wlan.rate_ladder.lowest_threshold();
    for (u, &node) in a.wlan_users.iter().enumerate() {
        let ap = a.aps[a.wlan_serving_ap[u]];
        assert!(a.budget.snr(node, ap) >= lowest);
        for &other in &a.aps {
            assert!(a.budget.rx_dbm(ap, node) >= a.budget.rx_dbm(other, node));
        }
    }
}

#[test]
fn drop_runner_backends_agree_and_keep_order() {
    let cfg = config(RunKind::Adaptive, 1.0, 2_000);
    let seq = run_drops_sequential(&cfg).unwrap();
    let any = run_drops(&cfg).unwrap();
    assert_eq!(seq, any);
    let seeds: Vec<u64> = seq.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![1, 2, 3]);
}

#[test]
fn heavier_lte_load_costs_wlan_nothing_under_wlan_only_but_something_under_fixed_modes() {
    let wlan_only = run_drop(&config(RunKind::WlanOnly, 2.0, 5_000), 2).unwrap();
    let mode1 = run_drop(&config(RunKind::Fixed(1), 2.0, 5_000), 2).unwrap();
    assert!(mode1.wlan_bits < wlan_only.wlan_bits);
}
