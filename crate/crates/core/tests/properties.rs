mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use s2a_core::align::{align_notes, DEFAULT_GAP_PENALTY};
use s2a_core::midi::{parse_smf, resample_grid, write_smf};
use s2a_core::tokenizer::{from_tsv, segment, to_tsv, tokenize, SEGMENT_LEN};

proptest! {
    #[test]
    fn tsv_round_trip(seed in any::<u64>()) {
        let x = common::random_grid_sequence(&mut ChaCha8Rng::seed_from_u64(seed), 100);
        let tokens = tokenize(&x, false).unwrap();
        prop_assert_eq!(from_tsv(&to_tsv(&tokens)).unwrap(), tokens);
    }

    #[test]
    fn segments_cover_every_note_once(seed in any::<u64>(), performer in 0usize..4) {
        let x = common::random_grid_sequence(&mut ChaCha8Rng::seed_from_u64(seed), 700);
        let tokens = tokenize(&x, true).unwrap();
        let segs = segment(&tokens, performer);
        let mut rebuilt = Vec::new();
        for s in &segs {
            prop_assert_eq!(s.len(), SEGMENT_LEN);
            prop_assert_eq!(s.performer_id, performer);
            prop_assert_eq!(s.source_offset, rebuilt.len());
            rebuilt.extend_from_slice(s.notes());
        }
        prop_assert_eq!(rebuilt, tokens);
    }

    #[test]
    fn score_tokens_have_constant_velocity(seed in any::<u64>()) {
        let x = common::random_grid_sequence(&mut ChaCha8Rng::seed_from_u64(seed), 50);
        let tokens = tokenize(&x, true).unwrap();
        prop_assert!(tokens.windows(2).all(|w| w[0].velocity == w[1].velocity));
    }

    #[test]
    fn resampling_keeps_note_count_and_order(seed in any::<u64>()) {
        let x = common::random_midi_sequence(&mut ChaCha8Rng::seed_from_u64(seed));
        let y = resample_grid(&x, 96);
        prop_assert_eq!(y.ppq, 96);
        prop_assert_eq!(y.notes.len(), x.notes.len());
        prop_assert!(y.notes.windows(2).all(|w| w[0].onset_ticks <= w[1].onset_ticks));
    }

    #[test]
    fn written_files_parse_back(seed in any::<u64>()) {
        let x = common::random_midi_sequence(&mut ChaCha8Rng::seed_from_u64(seed));
        let once = write_smf(&x).unwrap();
        let twice = write_smf(&parse_smf(&once).unwrap()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn self_alignment_is_identity(seed in any::<u64>()) {
        let x = common::random_grid_sequence(&mut ChaCha8Rng::seed_from_u64(seed), 80);
        let map = align_notes(&x, &x, DEFAULT_GAP_PENALTY);
        prop_assert_eq!(map.pairs.len(), x.notes.len());
        prop_assert!(map.pairs.iter().all(|&(i, j)| x.notes[i].pitch == x.notes[j].pitch));
        prop_assert!(map.unmatched_score.is_empty() && map.unmatched_perf.is_empty());
    }
}
