use std::sync::OnceLock;

use handover::classifier::{session_samples, train_on_sessions, ClassifierKind};
use handover::features::MirrorMap;
use handover::nn::TrainConfig;
use handover::policy::{ApDurations, ClassifierSet, HandoverPolicy, TriggerConfig};
use handover::session::{load_session_canonical, save_session, validate_ap_model, Otp, SessionRecord};
use handover::sim::{
    generate_session, run_closed_loop, score_policy, simulate_study, EpisodePlan, GestureModel, ModelSource, ParticipantScript,
    ScriptGenerator,
};

fn study(otp_weights: [f64; 3], seed: u64) -> Vec<SessionRecord> {
    let generator = ScriptGenerator { otp_weights, ..Default::default() };
    simulate_study(&generator, &GestureModel::default(), 12, 4, seed).unwrap().into_iter().map(|(_, s, _)| s).collect()
}

/// Timing models see every position; the location model never sees a
/// right-hand transfer.
fn models() -> &'static ClassifierSet {
    static MODELS: OnceLock<ClassifierSet> = OnceLock::new();
    MODELS.get_or_init(|| {
        let config = TrainConfig { max_epochs: 20, patience: 5, seed: 2, ..Default::default() };
        let map = MirrorMap::default();
        let all = study([1.0, 1.0, 1.0], 77);
        let no_right = study([1.0, 1.0, 0.0], 78);
        let trained = ClassifierKind::ALL
            .iter()
            .map(|k| {
                let sessions = if *k == ClassifierKind::OtpType { &no_right } else { &all };
                train_on_sessions(*k, sessions, &config, &map).unwrap()
            })
            .collect();
        ClassifierSet::new(trained).unwrap()
    })
}

fn two_sided_script() -> ParticipantScript {
    let mut script = ParticipantScript::empty("p09");
    for (i, otp) in [Otp::Left, Otp::Right, Otp::Left, Otp::Right].into_iter().enumerate() {
        let t0 = 8.0 + 50.0 * i as f64;
        script.episodes.push(EpisodePlan {
            ep_start: t0,
            otp_start: t0 + 13.0,
            otp_complete: t0 + 25.0,
            otp,
            cue_strength: 1.0,
            handover_type: handover::session::HandoverType::R2H,
        });
    }
    script
}

#[test]
fn mirrored_training_recognises_unseen_right_cue() {
    let (session, _) = generate_session(&two_sided_script(), &GestureModel::default(), 5).unwrap();
    let model = &models().otp_type;
    for otp in [Otp::Left, Otp::Right] {
        let samples: Vec<_> =
            session_samples(ClassifierKind::OtpType, &session, 0).unwrap().into_iter().filter(|s| s.label == otp.index()).collect();
        assert!(!samples.is_empty());
        let acc = model.accuracy(&samples);
        assert!(acc > 0.9, "{otp}: accuracy {acc}");
    }
}

#[test]
fn learned_policy_hands_over_on_the_cued_side() {
    let mut set = models().clone();
    let policy = HandoverPolicy::new(TriggerConfig::default(), ApDurations::default()).unwrap();
    let run =
        run_closed_loop(policy, ModelSource::Learned(&mut set), &two_sided_script(), &GestureModel::default(), 6).unwrap();
    let score = score_policy(&run.events, &run.truth).unwrap();
    assert_eq!(score.deadlocks, 0, "{score}");
    assert_eq!(score.otp_matched, 4, "{score}");
    assert_eq!(score.otp_accuracy, Some(1.0), "{score}");
}

#[test]
fn adversarial_reaching_still_terminates() {
    let generator = ScriptGenerator { adversarial: true, ..Default::default() };
    let script = generator.generate("p03", 31);
    let mut set = models().clone();
    let policy = HandoverPolicy::new(TriggerConfig::default(), ApDurations::default()).unwrap();
    let run = run_closed_loop(policy, ModelSource::Learned(&mut set), &script, &GestureModel::default(), 8).unwrap();
    assert!(!run.truth.overran);
    let score = score_policy(&run.events, &run.truth).unwrap();
    assert_eq!(score.matched + score.misses, score.intents);

    let policy = HandoverPolicy::new(TriggerConfig::default(), ApDurations::default()).unwrap();
    let oracle = run_closed_loop(policy, ModelSource::Oracle, &script, &GestureModel::default(), 8).unwrap();
    let score = score_policy(&oracle.events, &oracle.truth).unwrap();
    assert_eq!((score.misses, score.false_triggers, score.deadlocks), (0, 0, 0));
}

#[test]
fn simulated_session_survives_csv_round_trip() {
    let script = ScriptGenerator { episodes: 1, ..Default::default() }.generate("p11", 4);
    let (session, _) = generate_session(&script, &GestureModel::default(), 4).unwrap();
    assert!(session.len() >= 600);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.csv");
    save_session(&path, &session).unwrap();
    let back = load_session_canonical(&path).unwrap();
    assert_eq!(back.participant_id, "p11");
    assert_eq!(back.len(), session.len());
    assert_eq!(back.robot(), session.robot());
    assert_eq!(back.annotations(), session.annotations());
    assert_eq!(back.episodes.len(), session.episodes.len());
    for (a, b) in back.frames().iter().zip(session.frames()) {
        assert!(a.features().iter().zip(b.features()).all(|(x, y)| (x - y).abs() < 1e-9));
    }
}

#[test]
fn middle_only_demonstrations_conform_to_the_action_primitives() {
    let generator = ScriptGenerator { otp_weights: [0.0, 1.0, 0.0], ..Default::default() };
    let sessions: Vec<SessionRecord> =
        simulate_study(&generator, &GestureModel::default(), 4, 2, 3).unwrap().into_iter().map(|(_, s, _)| s).collect();
    let report = validate_ap_model(&sessions);
    assert_eq!(report.total_episodes, 16, "{report:?}");
    assert_eq!(report.coverage_fraction, Some(1.0), "{report:?}");
}
