use rushsim::harness::{csv_string, run_experiment, AttackSelection, ExperimentConfig};
use rushsim::{sim, Placement};

fn small(attack: AttackSelection) -> ExperimentConfig {
    ExperimentConfig {
        n_nodes: 30,
        duration: 40.0,
        runs: 4,
        attack,
        placement: Placement::NearReceiver,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn identical_event_logs() {
    let cfg = small(AttackSelection::Blackhole);
    let mut a = cfg.scenario(2).unwrap();
    a.record_events = true;
    let b = a.clone();
    let ta = sim::run(&a).unwrap();
    let tb = sim::run(&b).unwrap();
    let (la, lb) = (ta.event_log.unwrap(), tb.event_log.unwrap());
    assert!(la.len() > 1000);
    assert_eq!(la, lb);
}

#[test]
fn csv_bytes_repeat() {
    for attack in [AttackSelection::None, AttackSelection::Rushing, AttackSelection::Jellyfish] {
        let cfg = small(attack);
        let first = csv_string(&run_experiment(&cfg).unwrap());
        let second = csv_string(&run_experiment(&cfg).unwrap());
        assert_eq!(first, second);
        assert_eq!(first.lines().count(), cfg.runs + 1);
    }
}

#[test]
fn different_seeds_differ() {
    let cfg = small(AttackSelection::Rushing);
    let other = ExperimentConfig { seed: 12, ..cfg.clone() };
    let a = sim::run(&cfg.scenario(0).unwrap()).unwrap();
    let b = sim::run(&other.scenario(0).unwrap()).unwrap();
    assert_ne!(a.transmissions, b.transmissions);
}

#[test]
fn placement_does_not_perturb_mobility() {
    // Non-attacker nodes follow the same trajectories whatever the placement.
    let base = small(AttackSelection::Rushing);
    let runs: Vec<_> = Placement::ALL
        .iter()
        .map(|&placement| {
            let s = ExperimentConfig { placement, ..base.clone() }.scenario(1).unwrap();
            let mut simulation = sim::Simulation::new(&s).unwrap();
            simulation.run_until(rushsim::SimTime::from_secs(25.0)).unwrap();
            let attacker = s.attackers[0].0;
            (0..s.positions.len() as u32)
                .map(rushsim::NodeId)
                .filter(|&n| n != attacker)
                .map(|n| simulation.world().position_at(n, simulation.now()))
                .collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}
