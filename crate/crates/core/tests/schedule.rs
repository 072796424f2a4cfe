use ampgrad_core::schedule::{parse_schedule, PhaseParams, Schedule, Template};
use proptest::prelude::*;

#[test]
fn baseline_learning_rate_steps_after_epoch_100() {
    let s = parse_schedule("[(50,0.1,0,1),(100,0.1,0,1),(130,0.01,0,1),(150,0.01,0,1)]").unwrap();
    assert_eq!(s.label(), "baseline");
    for epoch in [1, 50, 100] {
        assert_eq!(s.lr_at_epoch(epoch).unwrap().lr, 0.1, "epoch {}", epoch);
    }
    for epoch in [101, 130, 150] {
        assert_eq!(s.lr_at_epoch(epoch).unwrap().lr, 0.01, "epoch {}", epoch);
    }
    assert!(s.lr_at_epoch(0).is_err());
    assert!(s.lr_at_epoch(151).is_err());
    assert_eq!(s, Template::FULL.baseline().unwrap());
}

#[test]
fn two_window_lookups() {
    let s = Schedule::from_label("S2_0.5_0.3", &Template::FULL).unwrap();
    assert_eq!(
        s.phases(),
        &[
            PhaseParams::new(50, 0.1, 0.0, 1.0),
            PhaseParams::new(100, 0.1, 0.5, 2.0),
            PhaseParams::new(130, 0.01, 0.3, 2.0),
            PhaseParams::new(150, 0.01, 0.0, 1.0),
        ]
    );
    let at = |e| s.lr_at_epoch(e).unwrap();
    assert_eq!((at(75).beta, at(75).gamma), (0.5, 2.0));
    assert_eq!((at(115).beta, at(115).gamma), (0.3, 2.0));
    assert_eq!(at(140).beta, 0.0);
    assert_eq!((at(50).phase, at(51).phase, at(101).phase, at(131).phase), (1, 2, 3, 4));
}

#[test]
fn display_parses_back() {
    for s in [
        Template::FULL.s2(0.6, 0.1, 2.0).unwrap(),
        Template::DESK.s1(0.3, 2.5).unwrap(),
        parse_schedule("[(3,0.5,0.25,1.5),(7,0.05,0,1)]").unwrap(),
    ] {
        let back = parse_schedule(&s.to_string()).unwrap();
        assert_eq!(back.phases(), s.phases());
        assert_eq!(back.label(), s.label());
    }
}

#[test]
fn malformed_schedules_are_rejected() {
    for text in [
        "",
        "[]",
        "[(10,0.1,0)]",
        "[(10,0.1,0,1),(5,0.1,0,1)]",
        "[(10,0,0,1)]",
        "[(10,0.1,1.5,2)]",
        "[(10,0.1,0.5,0.5)]",
        "[(10,0.1,0,1)",
    ] {
        assert!(parse_schedule(text).is_err(), "accepted {:?}", text);
    }
    for label in ["S1_0.10", "S3_0.5", "S1", "S2_0.5", "S1_x", "S1_1.5"] {
        assert!(Schedule::from_label(label, &Template::FULL).is_err(), "accepted {}", label);
    }
}

proptest! {
    #[test]
    fn generated_labels_parse_back(mm in 0usize..=10, nn in 0usize..=10, g in 10usize..=30, desk in any::<bool>()) {
        let t = if desk { Template::DESK } else { Template::FULL };
        let (mm, nn, gamma) = (mm as f64 / 10.0, nn as f64 / 10.0, g as f64 / 10.0);
        for s in [t.s1(mm, gamma).unwrap(), t.s2(mm, nn, gamma).unwrap()] {
            let back = Schedule::from_label(s.label(), &t).unwrap();
            prop_assert_eq!(&back, &s);
            // a zero window reads back under the shorter name
            if s.phases()[1..3].iter().all(|p| p.amplified()) || (s.label().starts_with("S1") && mm > 0.0) {
                let derived = Schedule::new(s.phases().to_vec()).unwrap();
                prop_assert_eq!(derived.label(), s.label());
            }
        }
    }
}
