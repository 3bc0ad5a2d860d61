use approx::assert_relative_eq;
use dsa_core::channel::{FadingField, FadingMode, PropagationParams};
use dsa_core::environment::*;
use dsa_core::rng::{SeedTree, SimRng, Stream};
use proptest::prelude::*;
use rand::SeedableRng;

fn one_su_geometry(n_channels: usize) -> Geometry {
    Geometry {
        su_tx: vec![Point::new(0.0, 0.0)],
        su_rx: vec![Point::new(30.0, 0.0)],
        pu_tx: vec![Point::new(100.0, 100.0); n_channels],
        pu_rx: vec![Point::new(120.0, 100.0); n_channels],
    }
}

fn los_only() -> PropagationParams {
    PropagationParams {
        k_factor: f64::INFINITY,
        ..PropagationParams::default()
    }
}

fn rate_oracle(p_mw: f64, d: f64, interferers: &[(f64, f64)]) -> f64 {
    let gain = |d: f64| 10f64.powf(-(41.0 + 22.7 * d.log10()) / 10.0);
    let noise = 1e6 * 10f64.powf(-14.7);
    let i: f64 = interferers.iter().map(|&(p, d)| p * gain(d)).sum();
    (1.0 + p_mw * gain(d) / (i + noise)).log2()
}

#[test]
fn markov_transition_frequencies() {
    let m = TransitionMatrix::new(0.8, 0.3).unwrap();
    let mut rng = SimRng::seed_from_u64(11);
    let mut state = ChannelState::Inactive;
    let mut counts = [[0usize; 2]; 2];
    for _ in 0..100_000 {
        let next = m.next(state, &mut rng);
        counts[state.bit() as usize][next.bit() as usize] += 1;
        state = next;
    }
    let freq = |from: usize, to: usize| counts[from][to] as f64 / (counts[from][0] + counts[from][1]) as f64;
    assert!((freq(1, 1) - 0.8).abs() < 0.01);
    assert!((freq(1, 0) - 0.2).abs() < 0.01);
    assert!((freq(0, 0) - 0.3).abs() < 0.01);
    assert!((freq(0, 1) - 0.7).abs() < 0.01);
}

#[test]
fn sensing_flip_rate() {
    let occ = ChannelOccupancy(vec![ChannelState::Inactive, ChannelState::Active]);
    let mut rng = SimRng::seed_from_u64(3);
    let n = 100_000;
    let mut flips = [0usize; 2];
    for _ in 0..n {
        let s = sense_one(&occ, &[0.1, 0.3], &mut rng).unwrap();
        flips[0] += usize::from(s.0[0] != 1);
        flips[1] += usize::from(s.0[1] != 0);
    }
    assert!((flips[0] as f64 / n as f64 - 0.1).abs() < 0.01);
    assert!((flips[1] as f64 / n as f64 - 0.3).abs() < 0.01);
}

#[test]
fn perfect_sensing_is_truth() {
    let occ = ChannelOccupancy(vec![ChannelState::Inactive, ChannelState::Active, ChannelState::Inactive]);
    let mut rng = SimRng::seed_from_u64(0);
    for _ in 0..100 {
        assert_eq!(sense_one(&occ, &[0.0; 3], &mut rng).unwrap(), SensedState(vec![1, 0, 1]));
    }
}

#[test]
fn schedule_examples() {
    let s = DeterministicSchedule::uniform(
        vec![ChannelState::Inactive, ChannelState::Inactive, ChannelState::Active],
        1,
    )
    .unwrap();
    assert_eq!(step_deterministic(&s, 0).0, vec![ChannelState::Inactive]);
    assert_eq!(step_deterministic(&s, 2).0, vec![ChannelState::Active]);
    assert_eq!(step_deterministic(&s, 5).0, vec![ChannelState::Active]);
}

#[test]
fn reward_cases_by_hand() {
    let geom = Geometry {
        su_tx: vec![Point::new(0.0, 0.0), Point::new(60.0, 0.0)],
        su_rx: vec![Point::new(30.0, 0.0), Point::new(60.0, 25.0)],
        pu_tx: vec![Point::new(100.0, 100.0); 2],
        pu_rx: vec![Point::new(120.0, 100.0); 2],
    };
    let occ = ChannelOccupancy(vec![ChannelState::Active, ChannelState::Inactive]);
    let fading = FadingField::new(1, FadingMode::Block);
    let powers = TransmitPowers::default();
    let run = |actions: &[usize]| {
        let a: Vec<Action> = actions.iter().map(|&x| Action(x)).collect();
        resolve_actions(&occ, &a, &geom, &los_only(), &powers, 2.0, &fading, 0).unwrap()
    };

    let out = run(&[0, 1]);
    assert_eq!(out[0].reward, 0.0);
    assert_eq!(out[0].label, OutcomeLabel::Idle);
    assert_eq!(out[1].reward, -2.0);
    assert!(out[1].warning_received);
    assert_eq!(out[1].label, OutcomeLabel::CollisionWithPu);

    let alone = run(&[2, 0]);
    assert_eq!(alone[0].label, OutcomeLabel::Success);
    assert_relative_eq!(alone[0].reward, rate_oracle(20.0, 30.0, &[]), max_relative = 1e-9);

    let shared = run(&[2, 2]);
    let d10 = Point::new(60.0, 0.0).distance(&Point::new(30.0, 0.0));
    let d01 = Point::new(0.0, 0.0).distance(&Point::new(60.0, 25.0));
    assert_eq!(shared[0].label, OutcomeLabel::CollisionWithSu);
    assert_relative_eq!(shared[0].reward, rate_oracle(20.0, 30.0, &[(20.0, d10)]), max_relative = 1e-9);
    assert_relative_eq!(shared[1].reward, rate_oracle(20.0, 25.0, &[(20.0, d01)]), max_relative = 1e-9);
    assert!(shared[0].reward < alone[0].reward);

    // Both on the Active channel: both punished, both warned.
    let both = run(&[1, 1]);
    assert!(both.iter().all(|o| o.reward == -2.0 && o.warning_received));
}

#[test]
fn out_of_range_action_is_contract_error() {
    let geom = one_su_geometry(2);
    let occ = ChannelOccupancy(vec![ChannelState::Inactive; 2]);
    let r = resolve_actions(
        &occ,
        &[Action(3)],
        &geom,
        &PropagationParams::default(),
        &TransmitPowers::default(),
        2.0,
        &FadingField::new(0, FadingMode::Block),
        0,
    );
    assert!(r.is_err());
    assert!(Action::new(3, 2).is_err());
    assert_eq!(Action::new(0, 2).unwrap(), Action::IDLE);
}

#[test]
fn accessing_sensed_inactive_never_punished_when_channel_stays_free() {
    let mut spec = ScenarioSpec {
        n_channels: 3,
        n_sus: 1,
        p11_range: (1.0, 1.0),
        ..ScenarioSpec::default()
    };
    spec.p00_range = (0.0, 0.3);
    let tree = SeedTree::new(4);
    let sc = generate_scenario(
        &spec,
        SensingErrorProfile::uniform(1, 3, 0.0).unwrap(),
        4,
        &mut tree.rng(Stream::Scenario, 0),
    )
    .unwrap();
    let mut env = Environment::new(EnvironmentParts {
        scenario: sc,
        schedule: None,
        params: PropagationParams::default(),
        powers: TransmitPowers::default(),
        penalty: 2.0,
        timing: RewardTiming::PostTransition,
        fading: FadingField::new(1, FadingMode::Block),
        markov_rng: tree.rng(Stream::Markov, 0),
        sensing_rngs: vec![tree.rng(Stream::Sensing, 0)],
    })
    .unwrap();
    for _ in 0..500 {
        let s = env.observe().unwrap();
        let a = s[0].0.iter().position(|&b| b == 1).map_or(Action::IDLE, |c| Action(c + 1));
        let out = env.step(&[a]).unwrap();
        assert!(out[0].reward >= 0.0);
    }
}

fn scenario_for(seed: u64, n_channels: usize, n_sus: usize) -> Scenario {
    let spec = ScenarioSpec {
        n_channels,
        n_sus,
        ..ScenarioSpec::default()
    };
    generate_scenario(
        &spec,
        SensingErrorProfile::uniform(n_sus, n_channels, 0.1).unwrap(),
        seed,
        &mut SeedTree::new(seed).rng(Stream::Scenario, 0),
    )
    .unwrap()
}

#[test]
fn scenario_snapshot_round_trip() {
    let sc = scenario_for(9, 4, 3);
    let text = sc.to_toml_string().unwrap();
    assert_eq!(Scenario::from_toml_str(&text).unwrap(), sc);
}

#[test]
fn impossible_geometry_is_config_error() {
    let spec = ScenarioSpec {
        arena_m: 10.0,
        link_distance_m: (20.0, 40.0),
        ..ScenarioSpec::default()
    };
    let err = generate_scenario(
        &spec,
        SensingErrorProfile::uniform(1, 22, 0.1).unwrap(),
        0,
        &mut SimRng::seed_from_u64(0),
    )
    .unwrap_err();
    assert!(err.to_string().contains("link_distance"), "{err}");
}

#[test]
fn sensing_error_above_half_rejected() {
    let err = SensingErrorProfile(vec![vec![0.1, 0.7]]).validate().unwrap_err();
    assert!(err.to_string().contains("sensing_error[0][1]"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_scenarios_respect_ranges(seed in any::<u64>(), n in 1usize..8, l in 1usize..4) {
        let sc = scenario_for(seed, n, l);
        let g = &sc.geometry;
        for p in g.su_tx.iter().chain(&g.su_rx).chain(&g.pu_tx).chain(&g.pu_rx) {
            prop_assert!((0.0..=150.0).contains(&p.x) && (0.0..=150.0).contains(&p.y));
        }
        for k in 0..l {
            let d = g.su_tx[k].distance(&g.su_rx[k]);
            prop_assert!((20.0 - 1e-9..=40.0 + 1e-9).contains(&d));
        }
        for m in &sc.matrices {
            prop_assert!((0.7..=1.0).contains(&m.p11) && (0.0..=0.3).contains(&m.p00));
            prop_assert!((m.p00 + m.p01 - 1.0).abs() < 1e-12 && (m.p10 + m.p11 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn every_su_gets_exactly_one_label(seed in any::<u64>(), acts in proptest::collection::vec(0usize..=4, 3)) {
        let sc = scenario_for(seed, 4, 3);
        let mut rng = SimRng::seed_from_u64(seed);
        let occ = ChannelOccupancy((0..4).map(|_| if rand::Rng::random::<bool>(&mut rng) { ChannelState::Inactive } else { ChannelState::Active }).collect());
        let actions: Vec<Action> = acts.iter().map(|&a| Action(a)).collect();
        let out = resolve_actions(&occ, &actions, &sc.geometry, &PropagationParams::default(), &TransmitPowers::default(), 2.0, &FadingField::new(seed, FadingMode::Block), 0).unwrap();
        prop_assert_eq!(out.len(), 3);
        for (o, a) in out.iter().zip(&actions) {
            match a.channel() {
                None => prop_assert!(o.label == OutcomeLabel::Idle && o.reward == 0.0),
                Some(c) if occ.0[c] == ChannelState::Active => prop_assert!(o.label == OutcomeLabel::CollisionWithPu && o.reward == -2.0),
                Some(_) => {
                    prop_assert!(o.reward >= 0.0);
                    prop_assert_eq!(o.label == OutcomeLabel::CollisionWithSu, !o.co_channel_sus.is_empty());
                }
            }
        }
    }

    #[test]
    fn sensed_key_packs_bits(bits in proptest::collection::vec(0u8..=1, 1..40)) {
        let s = SensedState(bits.clone());
        let key = s.key().unwrap();
        for (i, b) in bits.iter().enumerate() {
            prop_assert_eq!(((key >> i) & 1) as u8, *b);
        }
        let expected: Vec<f64> = bits.iter().map(|&b| f64::from(b) * 2.0 - 1.0).collect();
        prop_assert_eq!(s.to_inputs(), expected);
    }
}
