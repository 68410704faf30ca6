use mep_core::attacks::{perturb, AttackConfig, AttackMethod};
use mep_core::encoder::TargetEmbedding;
use mep_core::sem_mask::EnergyMask;
use mep_core::spectral::{power, stft};
use mep_core::corpus::{generate, CorpusSpec};
use mep_core::evaluation::{evaluate, Evaluator};
use mep_core::sem_mask::MaskConfig;
use mep_core::{SpeakerModel, StftConfig};

fn small_corpus() -> Vec<mep_core::corpus::Utterance> {
    generate(&CorpusSpec {
        speakers: 3,
        utterances_per_speaker: 3,
        duration_secs: 0.5,
        ..CorpusSpec::default()
    })
    .unwrap()
}

#[test]
fn zero_budget_reproduces_the_baseline() {
    let utts = small_corpus();
    let model = SpeakerModel::new(0);
    let ev = Evaluator::new(&utts, &model, StftConfig::default(), MaskConfig::default()).unwrap();
    for method in AttackMethod::ALL {
        let cfg = AttackConfig { epsilon: 0.0, ..AttackConfig::for_method(method) };
        let row = ev.evaluate_attack(&cfg).unwrap();
        assert_eq!(row.eer_percent, ev.baseline_eer(), "{method}");
        assert!(row.snr_db_per_utterance.iter().all(|s| *s == f64::INFINITY));
        assert_eq!(row.max_abs_delta, 0.0);
        assert_eq!(row.lsd_db_mean, 0.0);
    }
}

#[test]
fn empty_mask_leaves_embeddings_and_scores_unchanged() {
    let utts = small_corpus();
    let model = SpeakerModel::new(0);
    let stft_cfg = StftConfig::default();
    let embed = |u: &mep_core::corpus::Utterance| model.embed(&power(&stft(&u.wave, &stft_cfg).unwrap())).unwrap();
    let enroll = embed(&utts[0]);
    let target = TargetEmbedding::normalized(enroll).unwrap();
    for u in &utts[1..3] {
        let p = power(&stft(&u.wave, &stft_cfg).unwrap());
        let zeros = EnergyMask::all_zeros(p.shape());
        for method in [AttackMethod::Mep, AttackMethod::IMep] {
            let out = perturb(&model, p.data().view(), &target, Some(&zeros), &AttackConfig::for_method(method)).unwrap();
            assert!(out.delta.iter().all(|&d| d == 0.0));
            assert_eq!(model.embed_matrix(out.perturbed.view()).unwrap(), model.embed(&p).unwrap());
        }
    }
}

#[test]
fn i_mep_is_quieter_than_i_fgsm() {
    let utts = generate(&CorpusSpec {
        speakers: 4,
        utterances_per_speaker: 6,
        ..CorpusSpec::default()
    })
    .unwrap();
    let model = SpeakerModel::new(0);
    let ev = Evaluator::new(&utts, &model, StftConfig::default(), MaskConfig::default()).unwrap();
    assert_eq!(ev.trial_counts().test, 20);
    let imep = ev.evaluate_attack(&AttackConfig::for_method(AttackMethod::IMep)).unwrap();
    let ifgsm = ev.evaluate_attack(&AttackConfig::for_method(AttackMethod::IFgsm)).unwrap();
    assert!(imep.snr_db_mean > ifgsm.snr_db_mean);
    let wins = imep
        .snr_db_per_utterance
        .iter()
        .zip(&ifgsm.snr_db_per_utterance)
        .filter(|(a, b)| a > b)
        .count();
    assert!(wins >= 18, "{wins}/20");
    assert!(imep.budget_ok && ifgsm.budget_ok);
}

#[test]
fn report_serializes_sentinels_and_is_deterministic() {
    let utts = small_corpus();
    let spec = CorpusSpec::default();
    let model = SpeakerModel::new(1);
    let run = || {
        evaluate(
            &utts,
            Some(&spec),
            &model,
            &[AttackMethod::Fgsm, AttackMethod::Mep],
            &AttackConfig { iterations: 3, ..AttackConfig::default() },
            &MaskConfig::default(),
        )
        .unwrap()
    };
    let a = run();
    assert_eq!(a.to_json(), run().to_json());
    assert_eq!(a.reports.len(), 3);
    let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(json["reports"][0]["snr_db_mean"], "inf");
    assert!(json["reports"][0]["pesq"].is_null());
    assert_eq!(json["trials"]["enroll"], 3);
    assert_eq!(json["trials"]["genuine"], 6);
    let csv = a.to_csv();
    assert!(csv.starts_with("model,method,pesq,snr_db,lsd_db,eer_percent\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(a.row("MEP").is_some());
}
