use sedkit::corruptor::{corrupt_batch, ConjunctionLexicon, CorruptConfig};
use sedkit::deptree::{parse_conllu, serialize_conllu};
use sedkit::edits::{apply_edits, extract_edits, format_m2, read_m2, tokenize, Granularity, M2Record};
use sedkit::metrics::{m2_score, M2Config};
use sedkit::sampler::{read_examples, sample_corpus, write_examples, SamplerConfig, Scheme, DEFAULT_RELATIONS};

const CORPUS: &str = include_str!("data/small.conllu");

fn corrupted_m2() -> (Vec<M2Record>, Vec<Vec<String>>) {
    let trees = parse_conllu(CORPUS).unwrap();
    let cfg = CorruptConfig { seed: 11, ..CorruptConfig::default() };
    let records = corrupt_batch(&trees, &cfg, &ConjunctionLexicon::default()).unwrap();
    assert!(!records.is_empty());
    let mut m2 = Vec::new();
    let mut targets = Vec::new();
    for r in &records {
        let src = tokenize(&r.corrupted, Granularity::Char);
        let tgt = tokenize(&r.source, Granularity::Char);
        let edits = extract_edits(&src, &tgt);
        assert_eq!(apply_edits(&src, edits.edits()).unwrap(), tgt);
        m2.push(M2Record { source: src, references: vec![edits] });
        targets.push(tgt);
    }
    (m2, targets)
}

#[test]
fn corrupted_pairs_score_through_m2() {
    let (m2, targets) = corrupted_m2();
    let reread = read_m2(&format_m2(&m2)).unwrap();
    assert_eq!(reread, m2);

    let sources: Vec<Vec<String>> = m2.iter().map(|r| r.source.clone()).collect();
    let cfg = M2Config::default();
    let perfect = m2_score(&sources, &targets, &reread, &cfg).unwrap();
    assert_eq!((perfect.precision, perfect.recall, perfect.f_beta), (1.0, 1.0, 1.0));

    let unchanged = m2_score(&sources, &sources, &reread, &cfg).unwrap();
    assert_eq!(unchanged.tp, 0);
    assert_eq!(unchanged.fp, 0);
    assert!(unchanged.fn_ > 0);
    assert_eq!(unchanged.recall, 0.0);
}

#[test]
fn trees_and_examples_round_trip() {
    let trees = parse_conllu(CORPUS).unwrap();
    assert_eq!(parse_conllu(&serialize_conllu(&trees)).unwrap(), trees);

    let relations = DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect();
    let cfg = SamplerConfig::new(4, relations, 3).unwrap();
    for scheme in [Scheme::Dsp, Scheme::Drp] {
        let examples = sample_corpus(&trees, &cfg, scheme);
        assert!(!examples.is_empty());
        let mut buf = Vec::new();
        write_examples(&examples, &mut buf).unwrap();
        assert_eq!(read_examples(std::str::from_utf8(&buf).unwrap()).unwrap(), examples);
        assert_eq!(sample_corpus(&trees, &cfg, scheme), examples);
    }
}
