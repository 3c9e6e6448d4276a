//! Property tests for the invariants that define the code family and the
//! waveform representation.

use proptest::prelude::*;

use cdcm::codec::{make_general_unary, make_minimal_distortion, Symbol};
use cdcm::stream::Scrambler;
use cdcm::waveform::{
    inject_jitter, serialize_words, sidecar_json, waveform_from_csv, waveform_to_csv,
    EdgeWaveform, JitterModel,
};

proptest! {
    #[test]
    fn general_unary_decode_inverts_encode(n in 3usize..40, seed in any::<u64>()) {
        let p = 1 + (seed as usize) % (n - 2);
        let scheme = make_general_unary(n, p).unwrap();
        for u in 0..=p as u32 {
            let w = scheme.encode_cycle(Symbol::Data(u)).unwrap().clone();
            prop_assert_eq!(scheme.decode_cycle(&w).unwrap(), Symbol::Data(u));
        }
    }

    #[test]
    fn rising_edge_spacing_is_exactly_the_period(
        n in 3usize..24,
        period in 1_000u64..100_000,
        bits in proptest::collection::vec(any::<bool>(), 16..200),
    ) {
        let scheme = match make_minimal_distortion(n) {
            Ok(s) => s,
            Err(_) => return Ok(()), // n = 4 has no minimal-distortion form
        };
        let words: Vec<_> = bits
            .iter()
            .map(|&b| scheme.encode_cycle(Symbol::Data(b as u32)).unwrap().clone())
            .collect();
        let w = serialize_words(words.iter(), period, 1).unwrap();
        let rising: Vec<u64> = w.rising_edges().collect();
        prop_assert_eq!(rising.len(), bits.len());
        for pair in rising.windows(2) {
            prop_assert_eq!(pair[1] - pair[0], period);
        }
    }

    #[test]
    fn jitter_preserves_count_and_order(
        sigma in 0.0f64..30.0,
        seed in any::<u64>(),
        bits in proptest::collection::vec(any::<bool>(), 8..100),
    ) {
        let scheme = make_general_unary(3, 1).unwrap();
        let words: Vec<_> = bits
            .iter()
            .map(|&b| scheme.encode_cycle(Symbol::Data(b as u32)).unwrap().clone())
            .collect();
        let w = serialize_words(words.iter(), 3_000, 1).unwrap();
        let model = JitterModel::gaussian(sigma, seed);
        if let Ok(j) = inject_jitter(&w, &model) {
            prop_assert_eq!(j.edge_count(), w.edge_count());
            prop_assert_eq!(j.initial_level(), w.initial_level());
            let times = j.edge_times();
            for k in 1..times.len() {
                prop_assert!(times[k] > times[k - 1]);
            }
        }
    }

    #[test]
    fn waveform_csv_roundtrip(
        initial in any::<bool>(),
        deltas in proptest::collection::vec(1u64..5_000, 0..64),
    ) {
        let mut edges = Vec::new();
        let mut t = 0u64;
        for d in deltas {
            t += d;
            edges.push(t);
        }
        let w = EdgeWaveform::new(initial, edges, t + 100, 7).unwrap();
        let back = waveform_from_csv(&waveform_to_csv(&w), &sidecar_json(&w)).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn scrambler_is_invertible(
        bits in proptest::collection::vec(any::<bool>(), 1..512),
        state in 0u8..128,
    ) {
        let line = Scrambler::new(state).scramble(&bits);
        let back = Scrambler::new(state).descramble(&line);
        prop_assert_eq!(back, bits);
    }
}
