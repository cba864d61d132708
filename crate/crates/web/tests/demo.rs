use spoofprompt_web::demo::{cluster_points, planted_points, synthetic_rgba, Scores, FAMILIES};

#[test]
fn every_family_renders_opaque_rgba() {
    for fam in FAMILIES {
        let px = synthetic_rgba(fam, 0.7, 3, 32).unwrap();
        assert_eq!(px.len(), 32 * 32 * 4, "{fam}");
        assert!(px.chunks(4).all(|p| p[3] == 255));
    }
}

#[test]
fn alpha_zero_attack_matches_live_and_cue_grows_with_alpha() {
    let live = synthetic_rgba("live", 0.0, 5, 32).unwrap();
    assert_eq!(synthetic_rgba("print", 0.0, 5, 32).unwrap(), live);
    let diff = |a: f64| {
        let img = synthetic_rgba("print", a, 5, 32).unwrap();
        img.iter().zip(&live).map(|(x, y)| (*x as i32 - *y as i32).unsigned_abs() as u64).sum::<u64>()
    };
    assert!(diff(0.3) < diff(1.0));
}

#[test]
fn bad_inputs_are_reported() {
    assert!(synthetic_rgba("hologram", 0.5, 0, 32).is_err());
    assert!(synthetic_rgba("edit", 1.5, 0, 32).is_err());
    assert!(Scores::from_csv("id,score\n").is_err());
    assert!(cluster_points(&[0.0, 1.0, 2.0], 1, 0).is_err());
}

#[test]
fn separated_scores_are_easy_and_threshold_queries_are_rates() {
    let far = Scores::synthetic(8.0, 200, 200, 1).unwrap();
    let near = Scores::synthetic(0.5, 200, 200, 1).unwrap();
    assert_eq!(far.len(), 400);
    assert!(far.auc() > 0.99 && far.auc() > near.auc());
    assert!(far.eer() < near.eer());
    let at = far.at(far.eer_threshold());
    assert_eq!(at.len(), 4);
    assert!(at.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!((at[3] - (at[1] + at[2]) / 2.0).abs() < 1e-12);
    let roc = far.roc();
    assert!(roc.len() >= 4 && roc.len() % 2 == 0);
}

#[test]
fn csv_round_trip_through_the_explorer() {
    let csv = "id,label,family,score,score_phys,score_dig\nb0,live,,0.9,0.9,0.9\nb1,live,,0.8,0.8,0.8\na0,physical_attack,print,0.2,0.2,0.3\na1,digital_attack,swap,0.6,0.7,0.6\n";
    let s = Scores::from_csv(csv).unwrap();
    assert_eq!(s.len(), 4);
    assert!((s.auc() - 1.0).abs() < 1e-12);
    assert_eq!(s.points(), vec![0.9, 1.0, 0.8, 1.0, 0.2, 0.0, 0.6, 0.0]);
}

#[test]
fn kmeans_recovers_planted_clusters() {
    let pts = planted_points(4, 30, 0.05, 9);
    assert_eq!(pts.len(), 240);
    let r = cluster_points(&pts, 4, 2).unwrap();
    for c in 0..4 {
        let first = r.assignment[c * 30];
        assert!(r.assignment[c * 30..(c + 1) * 30].iter().all(|&a| a == first));
    }
    let mut labels: Vec<usize> = (0..4).map(|c| r.assignment[c * 30]).collect();
    labels.sort();
    labels.dedup();
    assert_eq!(labels.len(), 4);
}
