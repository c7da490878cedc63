use std::collections::BTreeSet;

use super::CorpusManifest;
use crate::error::{Error, Result};

/// Disjoint speaker and sentence sets for training and testing. An utterance
/// is a training item when both its speaker and its sentence are on the
/// training side, a test item when both are on the test side, and unused
/// otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    train_speakers: BTreeSet<String>,
    test_speakers: BTreeSet<String>,
    train_sentences: BTreeSet<u32>,
    test_sentences: BTreeSet<u32>,
}

impl SplitSpec {
    pub fn new(
        train_speakers: BTreeSet<String>,
        test_speakers: BTreeSet<String>,
        train_sentences: BTreeSet<u32>,
        test_sentences: BTreeSet<u32>,
    ) -> Result<Self> {
        if let Some(s) = train_speakers.intersection(&test_speakers).next() {
            return Err(Error::Split(format!("speaker `{s}` is on both sides")));
        }
        if let Some(s) = train_sentences.intersection(&test_sentences).next() {
            return Err(Error::Split(format!("sentence {s} is on both sides")));
        }
        if train_speakers.is_empty() || test_speakers.is_empty() {
            return Err(Error::Split("both sides need at least one speaker".into()));
        }
        if train_sentences.is_empty() || test_sentences.is_empty() {
            return Err(Error::Split("both sides need at least one sentence".into()));
        }
        Ok(SplitSpec {
            train_speakers,
            test_speakers,
            train_sentences,
            test_sentences,
        })
    }

    pub fn train_speakers(&self) -> &BTreeSet<String> {
        &self.train_speakers
    }

    pub fn test_speakers(&self) -> &BTreeSet<String> {
        &self.test_speakers
    }

    pub fn train_sentences(&self) -> &BTreeSet<u32> {
        &self.train_sentences
    }

    pub fn test_sentences(&self) -> &BTreeSet<u32> {
        &self.test_sentences
    }

    /// Indices into `manifest.utterances()` of training and test items.
    pub fn partition(&self, manifest: &CorpusManifest) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, u) in manifest.utterances().iter().enumerate() {
            if self.train_speakers.contains(&u.speaker_id) && self.train_sentences.contains(&u.sentence_id) {
                train.push(i);
            } else if self.test_speakers.contains(&u.speaker_id) && self.test_sentences.contains(&u.sentence_id) {
                test.push(i);
            }
        }
        (train, test)
    }
}

/// First two thirds of the speakers (sorted by id, rounded up) and the first
/// half of the sentence ids (rounded up) train; the rest test. Each side keeps
/// at least one speaker and one sentence.
pub fn paper_split(manifest: &CorpusManifest) -> Result<SplitSpec> {
    let speakers = manifest.speakers();
    let sentences = manifest.sentences();
    if speakers.len() < 2 {
        return Err(Error::Split(format!("need >= 2 speakers, have {}", speakers.len())));
    }
    if sentences.len() < 2 {
        return Err(Error::Split(format!(
            "need >= 2 sentence ids, have {}",
            sentences.len()
        )));
    }
    let n_spk = (2 * speakers.len()).div_ceil(3).min(speakers.len() - 1);
    let n_sent = sentences.len().div_ceil(2).min(sentences.len() - 1);
    SplitSpec::new(
        speakers[..n_spk].iter().cloned().collect(),
        speakers[n_spk..].iter().cloned().collect(),
        sentences[..n_sent].iter().copied().collect(),
        sentences[n_sent..].iter().copied().collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::utt;
    use crate::corpus::ConditionSet;
    use proptest::prelude::*;

    fn grid(speakers: usize, sentences: u32, reps: u32) -> CorpusManifest {
        let mut v = Vec::new();
        for s in 1..=speakers {
            for sent in 1..=sentences {
                for c in ConditionSet::stress().labels() {
                    for r in 1..=reps {
                        v.push(utt(&format!("s{s:02}"), sent, c, r));
                    }
                }
            }
        }
        CorpusManifest::new(ConditionSet::stress(), v, 16000, ".").unwrap()
    }

    #[test]
    fn paper_shaped_counts() {
        let m = grid(30, 8, 9);
        assert_eq!(m.utterances().len(), 12960);
        let split = paper_split(&m).unwrap();
        assert_eq!(split.train_speakers().len(), 20);
        assert_eq!(split.test_speakers().len(), 10);
        assert_eq!(split.train_sentences(), &(1..=4).collect());
        let (train, test) = split.partition(&m);
        assert_eq!(test.len(), 2160);
        for c in 0..6 {
            assert_eq!(train.iter().filter(|&&i| m.label_index(i) == c).count(), 720);
        }
    }

    #[test]
    fn smallest_legal_split() {
        let m = grid(3, 2, 1);
        let s = paper_split(&m).unwrap();
        assert_eq!(s.train_speakers().len(), 2);
        assert_eq!(s.test_speakers().len(), 1);
        assert_eq!(s.train_sentences().len(), 1);
        assert_eq!(s.test_sentences().len(), 1);
    }

    #[test]
    fn too_few_speakers_or_sentences() {
        assert!(matches!(paper_split(&grid(1, 4, 1)), Err(Error::Split(_))));
        assert!(matches!(paper_split(&grid(4, 1, 1)), Err(Error::Split(_))));
        let two = paper_split(&grid(2, 2, 1)).unwrap();
        assert_eq!(two.train_speakers().len(), 1);
    }

    #[test]
    fn split_ordering_is_lexicographic() {
        let v = ["b", "a10", "a2"]
            .iter()
            .flat_map(|s| [utt(s, 1, "loud", 1), utt(s, 2, "loud", 1)])
            .collect();
        let m = CorpusManifest::new(ConditionSet::stress(), v, 16000, ".").unwrap();
        let s = paper_split(&m).unwrap();
        let train: Vec<_> = s.train_speakers().iter().cloned().collect();
        assert_eq!(train, vec!["a10".to_string(), "a2".to_string()]);
    }

    #[test]
    fn overlapping_explicit_split_rejected() {
        let sp = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert!(SplitSpec::new(sp(&["a"]), sp(&["a"]), [1].into(), [2].into()).is_err());
        assert!(SplitSpec::new(sp(&["a"]), sp(&["b"]), [1].into(), [1].into()).is_err());
    }

    proptest! {
        #[test]
        fn paper_split_is_always_disjoint(
            keys in prop::collection::btree_set((0u8..12, 1u32..10), 1..60)
        ) {
            let v: Vec<_> = keys.iter().map(|&(s, sent)| utt(&format!("p{s}"), sent, "soft", 1)).collect();
            let m = CorpusManifest::new(ConditionSet::stress(), v, 16000, ".").unwrap();
            match paper_split(&m) {
                Ok(s) => {
                    prop_assert!(s.train_speakers().is_disjoint(s.test_speakers()));
                    prop_assert!(s.train_sentences().is_disjoint(s.test_sentences()));
                    let (train, test) = s.partition(&m);
                    for &i in &train {
                        prop_assert!(!test.contains(&i));
                    }
                }
                Err(_) => prop_assert!(m.speakers().len() < 2 || m.sentences().len() < 2),
            }
        }
    }
}
