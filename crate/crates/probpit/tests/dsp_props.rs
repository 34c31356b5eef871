//! Property tests for the time-frequency front end.

use probpit::dsp::{istft, mix_at_sir, stft, SignalBuffer, StftConfig, DEFAULT_SAMPLE_RATE};
use proptest::prelude::*;

fn signal_strategy(min_len: usize, max_len: usize) -> impl Strategy<Value = SignalBuffer> {
    proptest::collection::vec(-1.0f64..1.0, min_len..max_len)
        .prop_map(|samples| SignalBuffer::new(samples, DEFAULT_SAMPLE_RATE).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stft_is_linear(
        x in signal_strategy(1024, 2048),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let cfg = StftConfig::bins129();
        let len = x.len() / 2;
        let y = SignalBuffer::new(
            x.samples[len..].to_vec(), DEFAULT_SAMPLE_RATE).unwrap();
        let x = SignalBuffer::new(x.samples[..len].to_vec(), DEFAULT_SAMPLE_RATE).unwrap();
        let combo = SignalBuffer::new(
            x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect::<Vec<_>>(),
            DEFAULT_SAMPLE_RATE,
        ).unwrap();

        let sx = stft(&x, &cfg).unwrap();
        let sy = stft(&y, &cfg).unwrap();
        let sc = stft(&combo, &cfg).unwrap();
        let scale = sc.bins.iter().map(|c| c.norm()).fold(0.0f64, f64::max).max(1.0);
        for ((k, m), v) in sc.bins.indexed_iter() {
            let expect = a * sx.bins[[k, m]] + b * sy.bins[[k, m]];
            prop_assert!((v - expect).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn round_trip_recovers_interior(x in signal_strategy(1200, 6000)) {
        let cfg = StftConfig::bins129();
        let rec = istft(&stft(&x, &cfg).unwrap()).unwrap();
        let (lo, hi) = (cfg.frame_len(), rec.len().saturating_sub(cfg.frame_len()));
        let mut num = 0.0;
        let mut den = 0.0;
        for n in lo..hi {
            let d = rec.samples[n] - x.samples[n];
            num += d * d;
            den += x.samples[n] * x.samples[n];
        }
        if den > 0.0 {
            prop_assert!((num / den).sqrt() < 1e-6);
        }
    }

    #[test]
    fn mix_hits_requested_sir_and_sums_exactly(
        t in signal_strategy(400, 1200),
        i in signal_strategy(400, 1200),
        sir in -10.0f64..10.0,
    ) {
        prop_assume!(t.power() > 1e-12 && i.power() > 1e-12);
        let (mix, [ts, is]) = mix_at_sir(&t, &i, sir).unwrap();
        let measured = 10.0 * (ts.power() / is.power()).log10();
        prop_assert!((measured - sir).abs() < 1e-9);
        for n in 0..mix.len() {
            prop_assert_eq!(mix.samples[n], ts.samples[n] + is.samples[n]);
        }
    }
}
