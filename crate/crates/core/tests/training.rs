use caue::concepts::{default_exclusions, ConceptMatcher, LexiconEntry, MentionStore};
use caue::corpus::{Corpus, Preprocessor, DEFAULT_MAX_SIZE};
use caue::nn::EncoderKind;
use caue::synth::{generate, SizeRange, SynthConfig};
use caue::training::{
    decode_checkpoint, encode_checkpoint, fit, init_params, init_rng, train, ConceptInputs, TrainConfig, TrainState,
    TrainingData,
};

fn corpus(seed: u64) -> (Corpus, MentionStore, Vec<LexiconEntry>) {
    let synth = generate(&SynthConfig {
        n_patients: 16,
        n_concepts: 10,
        vocab_size: 200,
        notes_per_patient: SizeRange::new(1, 2),
        note_length: SizeRange::new(40, 60),
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let corpus = Corpus::build(&synth.records, &Preprocessor::default(), DEFAULT_MAX_SIZE).unwrap();
    let matcher = ConceptMatcher::new(synth.lexicon.clone(), &default_exclusions()).unwrap();
    let mentions = MentionStore::extract(&corpus, &matcher);
    (corpus, mentions, synth.lexicon)
}

fn config(encoder: EncoderKind, epochs: usize) -> TrainConfig {
    TrainConfig { encoder, dim: 6, epochs, lr: 1e-2, seed: 4, ..TrainConfig::default() }
}

fn bytes(state: &TrainState<f64>, cfg: &TrainConfig) -> Vec<u8> {
    encode_checkpoint(state, cfg).unwrap()
}

#[test]
fn resuming_from_a_checkpoint_matches_one_run() {
    let (corpus, mentions, lexicon) = corpus(2);
    let inputs = ConceptInputs { mentions: &mentions, lexicon: &lexicon };
    for encoder in [EncoderKind::Meanpool, EncoderKind::Bigru] {
        let full_cfg = config(encoder, 3);
        let full = fit::<f64, &[u8], _>(&corpus, Some(inputs), &full_cfg, None, |_, _| Ok(())).unwrap();

        let mut saved = Vec::new();
        let half_cfg = config(encoder, 1);
        fit::<f64, &[u8], _>(&corpus, Some(inputs), &half_cfg, None, |_, s| {
            saved = bytes(s, &half_cfg);
            Ok(())
        })
        .unwrap();
        let (mut state, header) = decode_checkpoint::<f64>(&saved).unwrap();
        assert_eq!(state.next_epoch, 1);
        assert_eq!(header.rng.next_epoch, 1);
        let data = TrainingData::from_corpus(&corpus, Some(&mentions), &state.params.concept_vocab);
        let log = train(&mut state, &data, &full_cfg, |_, _| Ok(())).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[1].mean_loss.to_bits(), full.log[2].mean_loss.to_bits());
        assert!(bytes(&state, &full_cfg) == bytes(&full.state, &full_cfg), "{encoder:?}");
    }
}

#[test]
fn checkpoint_round_trip_is_lossless() {
    let (corpus, mentions, lexicon) = corpus(3);
    let inputs = ConceptInputs { mentions: &mentions, lexicon: &lexicon };
    let cfg = config(EncoderKind::Bigru, 1);
    let out = fit::<f64, &[u8], _>(&corpus, Some(inputs), &cfg, None, |_, _| Ok(())).unwrap();
    let encoded = bytes(&out.state, &cfg);
    let (back, header) = decode_checkpoint::<f64>(&encoded).unwrap();
    assert_eq!(header.config, cfg);
    assert_eq!(header.config_fingerprint, cfg.fingerprint());
    assert_eq!(back.params.users.weights, out.state.params.users.weights);
    assert_eq!(back.params.concept_vocab, out.state.params.concept_vocab);
    assert!(bytes(&back, &cfg) == encoded);
    assert!(decode_checkpoint::<f64>(&encoded[..encoded.len() - 3]).is_err());
    assert!(decode_checkpoint::<f64>(b"not a checkpoint").is_err());
}

#[test]
fn thread_count_does_not_change_results() {
    let (corpus, mentions, lexicon) = corpus(5);
    let inputs = ConceptInputs { mentions: &mentions, lexicon: &lexicon };
    let cfg = config(EncoderKind::Bigru, 2);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let out = fit::<f64, &[u8], _>(&corpus, Some(inputs), &cfg, None, |_, _| Ok(())).unwrap();
            bytes(&out.state, &cfg)
        })
    };
    assert!(run(1) == run(4));
}

#[test]
fn disabled_concepts_leave_the_concept_table_untouched() {
    let (corpus, mentions, lexicon) = corpus(6);
    let inputs = ConceptInputs { mentions: &mentions, lexicon: &lexicon };
    let cfg = TrainConfig { enable_concepts: false, ..config(EncoderKind::Meanpool, 2) };
    let initial = init_params::<f64, _, &[u8]>(&corpus, Some(inputs), &cfg, None, &mut init_rng(cfg.seed)).unwrap();
    let out = fit::<f64, &[u8], _>(&corpus, Some(inputs), &cfg, None, |_, _| Ok(())).unwrap();
    assert!(out.log.iter().all(|e| e.mean_concept_loss == 0.0));
    let before: Vec<u64> = initial.concepts.weights.iter().map(|x| x.to_bits()).collect();
    let after: Vec<u64> = out.state.params.concepts.weights.iter().map(|x| x.to_bits()).collect();
    assert_eq!(before, after);
    assert_ne!(initial.users.weights, out.state.params.users.weights);
}

#[test]
fn single_precision_trains_and_lowers_the_loss() {
    let (corpus, mentions, lexicon) = corpus(7);
    let inputs = ConceptInputs { mentions: &mentions, lexicon: &lexicon };
    let cfg = config(EncoderKind::Meanpool, 6);
    let out = fit::<f32, &[u8], _>(&corpus, Some(inputs), &cfg, None, |_, _| Ok(())).unwrap();
    assert!(out.state.params.all_finite());
    assert!(out.log.last().unwrap().mean_loss < out.log[0].mean_loss);
}
