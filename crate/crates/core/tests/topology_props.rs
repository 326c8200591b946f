use natcsnn::topology::{attach_teachers, ReadoutWiring, WeightSpec};
use natcsnn::{build_network, NatCsnnConfig, NetworkTopology, ProjectionId, Sign, SnnError};
use proptest::prelude::*;

fn pairs(net: &NetworkTopology, id: ProjectionId) -> Vec<(usize, usize)> {
    let p = net.projection(id);
    p.pre_index()
        .iter()
        .zip(p.post_index())
        .map(|(&i, &j)| (i as usize, j as usize))
        .collect()
}

/// Checks every structural invariant against counts computed from the layer sizes.
fn check_invariants(net: &NetworkTopology) {
    let cfg = &net.config;
    let n1 = cfg.rows * cfg.cols;
    let n2 = (n1 as f64 * cfg.l2_fraction).round() as usize;
    let n3 = cfg.n_classes * cfg.neurons_per_class;
    let l = &net.layout;
    assert_eq!((l.l1.len(), l.l2a.len(), l.l2b.len(), l.l3.len()), (n1, n2, n2, n3));

    assert_eq!(net.projection(ProjectionId::P1).len(), n1 * n2);
    assert_eq!(net.projection(ProjectionId::P2).len(), n2);
    assert_eq!(net.projection(ProjectionId::P3).len(), n2 * (n2 - 1));
    if cfg.l2a_to_l3 == ReadoutWiring::AllToAll {
        assert_eq!(net.projection(ProjectionId::P4).len(), n2 * n3);
    }
    let per = cfg.neurons_per_class;
    assert_eq!(net.projection(ProjectionId::P5).len(), n3 * (n3 - per));

    assert!(pairs(net, ProjectionId::P2).iter().all(|(i, j)| i == j));
    assert!(pairs(net, ProjectionId::P3).iter().all(|(i, j)| i != j));
    for (i, j) in pairs(net, ProjectionId::P5) {
        assert_ne!(net.class_of[i], net.class_of[j]);
        assert_ne!(i / per, j / per);
    }

    for id in ProjectionId::ALL {
        let p = net.projection(id);
        for &w in p.weights() {
            match p.sign() {
                Sign::Excitatory => assert!(w >= 0.0),
                Sign::Inhibitory => assert!(w <= 0.0),
            }
        }
    }
    assert_eq!(net.projection(ProjectionId::P1).sign(), Sign::Excitatory);
    assert_eq!(net.projection(ProjectionId::P2).sign(), Sign::Excitatory);
    assert_eq!(net.projection(ProjectionId::P3).sign(), Sign::Inhibitory);
    assert_eq!(net.projection(ProjectionId::P4).sign(), Sign::Excitatory);
    assert_eq!(net.projection(ProjectionId::P5).sign(), Sign::Inhibitory);
}

#[test]
fn default_network_counts() {
    let net = build_network(&NatCsnnConfig::default()).unwrap();
    let l = &net.layout;
    assert_eq!(
        (l.l1.len(), l.l2a.len(), l.l2b.len(), l.l3.len()),
        (1024, 256, 256, 100)
    );
    assert_eq!(net.projection(ProjectionId::P1).len(), 262_144);
    assert_eq!(net.projection(ProjectionId::P2).len(), 256);
    assert_eq!(net.projection(ProjectionId::P3).len(), 256 * 255);
    assert_eq!(net.projection(ProjectionId::P4).len(), 256 * 100);
    assert_eq!(net.projection(ProjectionId::P5).len(), 100 * 90);
    check_invariants(&net);
}

#[test]
fn default_initial_weight_ranges() {
    let net = build_network(&NatCsnnConfig::default()).unwrap();
    let within = |id, lo: f64, hi: f64| {
        net.projection(id)
            .weights()
            .iter()
            .all(|&w| (lo - 1e-9..=hi + 1e-9).contains(&w))
    };
    assert!(within(ProjectionId::P1, 540.0, 660.0));
    assert!(within(ProjectionId::P2, 490.84 * 0.9, 490.84 * 1.1));
    assert!(within(ProjectionId::P3, -110.0, -90.0));
    assert!(net.projection(ProjectionId::P4).weights().iter().all(|&w| w == 241.0));
    assert!(net.projection(ProjectionId::P5).weights().iter().all(|&w| w == -120.0));
    // A uniform draw of 262k values fills its interval.
    let w = net.projection(ProjectionId::P1).weights();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    assert!((mean - 600.0).abs() < 1.0, "{mean}");
    assert!(w.iter().cloned().fold(f64::INFINITY, f64::min) < 541.0);
    assert!(w.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > 659.0);
}

#[test]
fn toy_network_counts() {
    let cfg = NatCsnnConfig {
        rows: 8,
        cols: 8,
        n_classes: 3,
        neurons_per_class: 5,
        ..NatCsnnConfig::default()
    };
    let net = build_network(&cfg).unwrap();
    let l = &net.layout;
    assert_eq!((l.l1.len(), l.l2a.len(), l.l2b.len(), l.l3.len()), (64, 16, 16, 15));
    assert_eq!(net.projection(ProjectionId::P3).len(), 240);
    check_invariants(&net);
}

#[test]
fn same_seed_is_bit_identical_and_other_seed_differs() {
    let cfg = NatCsnnConfig::default();
    let a = build_network(&cfg).unwrap();
    let b = build_network(&cfg).unwrap();
    for id in ProjectionId::ALL {
        let wa: Vec<u64> = a.projection(id).weights().iter().map(|w| w.to_bits()).collect();
        let wb: Vec<u64> = b.projection(id).weights().iter().map(|w| w.to_bits()).collect();
        assert_eq!(wa, wb);
    }
    assert_eq!(a.fingerprint(), b.fingerprint());
    let c = build_network(&NatCsnnConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(
        a.projection(ProjectionId::P1).weights(),
        c.projection(ProjectionId::P1).weights()
    );
    // Shape fingerprint ignores the seed.
    assert_eq!(a.fingerprint(), c.fingerprint());
}

#[test]
fn teachers_cover_each_class_group() {
    let mut net = build_network(&NatCsnnConfig::default()).unwrap();
    attach_teachers(&mut net).unwrap();
    let t = net.teachers.as_ref().unwrap();
    assert_eq!(t.len(), 10);
    for k in 0..10 {
        assert_eq!(t.targets[k], (k * 10..k * 10 + 10).collect::<Vec<_>>());
        for label in 0..10 {
            assert_eq!(t.active(k, label), k == label);
        }
    }
    assert!(matches!(attach_teachers(&mut net), Err(SnnError::TeachersAttached)));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = NatCsnnConfig::default();
    let bad = [
        NatCsnnConfig {
            rows: 3,
            cols: 3,
            ..base.clone()
        },
        NatCsnnConfig {
            l2_fraction: 0.0,
            ..base.clone()
        },
        NatCsnnConfig {
            l2_fraction: 1.5,
            ..base.clone()
        },
        NatCsnnConfig {
            n_classes: 1,
            ..base.clone()
        },
        NatCsnnConfig {
            neurons_per_class: 0,
            ..base.clone()
        },
        NatCsnnConfig {
            p1_weight: WeightSpec::new(-600.0, 0.1),
            ..base.clone()
        },
        NatCsnnConfig {
            p3_weight: WeightSpec::new(100.0, 0.1),
            ..base.clone()
        },
        NatCsnnConfig {
            p5_weight: 5.0,
            ..base.clone()
        },
    ];
    for cfg in bad {
        let e = build_network(&cfg).unwrap_err();
        assert!(matches!(e, SnnError::InvalidParameter(_)), "{e}");
    }
}

fn valid_config() -> impl Strategy<Value = NatCsnnConfig> {
    (
        1usize..=12,
        1usize..=12,
        2usize..=6,
        1usize..=6,
        1usize..=4,
        any::<u64>(),
    )
        .prop_filter_map(
            "l2 size must be integral",
            |(rows, cols, n_classes, per, quarters, seed)| {
                let l2_fraction = quarters as f64 / 4.0;
                let n1 = rows * cols;
                if (n1 * quarters) % 4 != 0 || n1 * quarters / 4 < 2 {
                    return None;
                }
                Some(NatCsnnConfig {
                    rows,
                    cols,
                    n_classes,
                    neurons_per_class: per,
                    l2_fraction,
                    seed,
                    ..NatCsnnConfig::default()
                })
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn counts_hold_for_random_configs(cfg in valid_config()) {
        let net = build_network(&cfg).unwrap();
        check_invariants(&net);
        let again = build_network(&cfg).unwrap();
        prop_assert_eq!(net.projection(ProjectionId::P1).weights(), again.projection(ProjectionId::P1).weights());
        prop_assert_eq!(net.projection(ProjectionId::P3).weights(), again.projection(ProjectionId::P3).weights());
    }
}
