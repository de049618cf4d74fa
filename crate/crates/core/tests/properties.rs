//! Property tests over randomized shapes and signals.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use szc_core::filterdesign::{FilterTag, ObservationIrs};
use szc_core::irdata::{GridPoint, MicCounts, SCHEMA_VERSION};
use szc_core::metrics::{fd_ac, fd_nsdp, fft_size, td_ac, td_nsdp};
use szc_core::runtime::frame_input;
use szc_core::tracker::{ncs, select_position};
use szc_core::{
    load_irset, save_irset, ControlFilterSet, DesignParams, FrameEngine, IrSet, Manifest, Method, PositionId,
};

#[derive(Clone, Copy, Debug)]
struct Shape {
    positions: usize,
    loudspeakers: usize,
    ir_len: usize,
    bright: usize,
    dark: usize,
    observation: usize,
}

fn shape() -> impl Strategy<Value = Shape> {
    (1usize..5, 1usize..4, 1usize..9, 1usize..3, 1usize..3, 1usize..3).prop_map(
        |(positions, loudspeakers, ir_len, bright, dark, observation)| Shape {
            positions,
            loudspeakers,
            ir_len,
            bright,
            dark,
            observation,
        },
    )
}

fn random_set(shape: Shape, seed: u64) -> IrSet {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        sample_rate_hz: 8000,
        ir_length: shape.ir_len,
        num_loudspeakers: shape.loudspeakers,
        mics: MicCounts {
            bright: shape.bright,
            dark: shape.dark,
            observation: shape.observation,
        },
        grid: (0..shape.positions)
            .map(|i| GridPoint {
                id: PositionId(i),
                x: 0.1 * i as f64,
                y: 0.0,
                z: 1.2,
                original_id: None,
            })
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    IrSet::from_fn(manifest, |_, _, _, _| {
        Ok((0..shape.ir_len).map(|_| rng.random_range(-1.0..1.0)).collect())
    })
    .unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn params(filter_len: usize) -> DesignParams {
    DesignParams {
        lambda: 1e-5,
        zeta: 0.5,
        l_ref: 0,
        delay: 1,
        filter_len,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn irset_save_load_is_bit_exact(shape in shape(), seed in any::<u64>()) {
        let set = random_set(shape, seed);
        let dir = tempfile::tempdir().unwrap();
        save_irset(&set, dir.path()).unwrap();
        let back = load_irset(dir.path()).unwrap();
        prop_assert_eq!(back.manifest(), set.manifest());
        for pos in set.positions() {
            let a: Vec<u64> = set.position_block(pos).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.position_block(pos).iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn subset_then_inverse_subset_is_idempotent(shape in shape(), seed in any::<u64>(), pick in any::<u64>()) {
        let set = random_set(shape, seed);
        let mut keep: Vec<PositionId> = set.positions().filter(|p| (pick >> p.0) & 1 == 1).collect();
        if keep.is_empty() {
            keep.push(PositionId(0));
        }
        let sub = set.subset_positions(&keep).unwrap();
        prop_assert_eq!(sub.num_positions(), keep.len());
        for (i, &orig) in keep.iter().enumerate() {
            prop_assert_eq!(sub.original_id(PositionId(i)), orig);
            prop_assert_eq!(sub.position_block(PositionId(i)), set.position_block(orig));
        }
        let all: Vec<PositionId> = sub.positions().collect();
        let again = sub.subset_positions(&all).unwrap();
        prop_assert_eq!(again.original_ids(), sub.original_ids());
        for p in sub.positions() {
            prop_assert_eq!(again.position_block(p), sub.position_block(p));
        }
    }

    #[test]
    fn ncs_is_bounded_and_scale_invariant(
        a in prop::collection::vec(-10.0f64..10.0, 1..64),
        seed in any::<u64>(),
        alpha in 1e-3f64..1e3,
        beta in 1e-3f64..1e3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_vec(&mut rng, a.len());
        let eps = 1e-12;
        let c = ncs(&a, &b, eps);
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!((ncs(&b, &a, eps) - c).abs() <= 1e-15);
        let sa: Vec<f64> = a.iter().map(|v| v * alpha).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * beta).collect();
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
        prop_assert!((ncs(&sa, &sb, eps) - c).abs() <= 1e-12);
    }

    #[test]
    fn selection_is_an_argmax(c in prop::collection::vec(-2.0f64..2.0, 1..10), prev in 0usize..10) {
        let previous = (prev < c.len()).then_some(PositionId(prev));
        let d = select_position(3, c.clone(), previous);
        let best = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(c[d.selected.0], best);
        if let Some(p) = previous {
            if c[p.0] == best {
                prop_assert_eq!(d.selected, p);
            }
        }
    }

    #[test]
    fn engine_is_linear_in_the_input(shape in shape(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let set = Arc::new(random_set(shape, seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let n = 8;
        let j = 1 + (seed % 6) as usize;
        let p = params(j);
        let filters = ControlFilterSet::new(random_vec(&mut rng, shape.loudspeakers * j), shape.loudspeakers, Method::Pm, FilterTag::Mix, p).unwrap();
        let x1 = random_vec(&mut rng, 4 * n);
        let x2 = random_vec(&mut rng, 4 * n);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
        let pos = PositionId((seed as usize) % shape.positions);
        let run = |x: &[f64]| {
            let obs = ObservationIrs::new(Arc::clone(&set));
            let mut e = FrameEngine::new(n, Arc::clone(&set), Some(obs), filters.clone(), &p).unwrap();
            let mut out = Vec::new();
            for tau in 0..4 {
                let f = e.process_frame(&frame_input(x, tau, n), pos, true).unwrap();
                out.extend(f.loudspeakers.into_iter().flatten());
                out.extend(f.mics.bright.into_iter().flatten());
                out.extend(f.mics.dark.into_iter().flatten());
                out.extend(f.estimates.into_iter().flatten().flatten());
                out.extend(f.desired.into_iter().flatten());
            }
            out
        };
        let (o1, o2, om) = (run(&x1), run(&x2), run(&mix));
        let scale = om.iter().chain(&o1).chain(&o2).fold(1.0f64, |m, v| m.max(v.abs()));
        for ((u, v), w) in o1.iter().zip(&o2).zip(&om) {
            prop_assert!((a * u + b * v - w).abs() <= 1e-12 * scale);
        }
    }

    /// Writing into one position's estimate tail changes exactly that
    /// position's next estimate, by exactly the written values.
    #[test]
    fn estimate_tails_are_isolated(shape in shape(), seed in any::<u64>(), target in 0usize..5) {
        prop_assume!(shape.ir_len >= 2);
        let set = Arc::new(random_set(shape, seed));
        let target = PositionId(target % shape.positions);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let n = 8;
        let p = params(3);
        let filters = ControlFilterSet::new(random_vec(&mut rng, shape.loudspeakers * 3), shape.loudspeakers, Method::Pm, FilterTag::Mix, p).unwrap();
        let x = random_vec(&mut rng, 2 * n);
        let obs = ObservationIrs::new(Arc::clone(&set));
        let mut clean = FrameEngine::new(n, Arc::clone(&set), Some(obs), filters, &p).unwrap();
        clean.process_frame(&frame_input(&x, 0, n), PositionId(0), true).unwrap();
        let mut poked = clean.clone();
        let sentinel: Vec<f64> = (0..shape.ir_len - 1).map(|i| 1000.0 + i as f64).collect();
        for m in 0..shape.observation {
            for (t, s) in poked.estimate_tail_mut(target, m).iter_mut().zip(&sentinel) {
                *t += s;
            }
        }
        let a = clean.process_frame(&frame_input(&x, 1, n), PositionId(0), true).unwrap();
        let b = poked.process_frame(&frame_input(&x, 1, n), PositionId(0), true).unwrap();
        prop_assert_eq!(&a.mics, &b.mics);
        prop_assert_eq!(&a.loudspeakers, &b.loudspeakers);
        for s in 0..shape.positions {
            for m in 0..shape.observation {
                let (ea, eb) = (&a.estimates[s][m], &b.estimates[s][m]);
                if s == target.0 {
                    for i in 0..n {
                        let added = sentinel.get(i).copied().unwrap_or(0.0);
                        prop_assert!((eb[i] - ea[i] - added).abs() <= 1e-9);
                    }
                } else {
                    prop_assert_eq!(ea, eb);
                }
            }
        }
    }

    #[test]
    fn metrics_ignore_a_common_gain(seed in any::<u64>(), gain in 1e-3f64..1e3, len in 4usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sig = |count: usize| -> Vec<Vec<f64>> { (0..count).map(|_| random_vec(&mut rng, len)).collect() };
        let (bright, dark, desired) = (sig(2), sig(3), sig(2));
        let scale = |s: &[Vec<f64>]| -> Vec<Vec<f64>> { s.iter().map(|c| c.iter().map(|v| v * gain).collect()).collect() };
        let (b2, d2, r2) = (scale(&bright), scale(&dark), scale(&desired));
        prop_assert!((td_ac(&bright, &dark) - td_ac(&b2, &d2)).abs() <= 1e-9);
        prop_assert!((td_nsdp(&bright, &desired) - td_nsdp(&b2, &r2)).abs() <= 1e-9);
        let nfft = fft_size(len);
        for (u, v) in fd_ac(&bright, &dark, nfft).iter().zip(fd_ac(&b2, &d2, nfft)) {
            prop_assert!((u - v).abs() <= 1e-9);
        }
        for (u, v) in fd_nsdp(&bright, &desired, nfft).iter().zip(fd_nsdp(&b2, &r2, nfft)) {
            prop_assert!((u - v).abs() <= 1e-9);
        }
    }

    #[test]
    fn fd_bins_match_direct_dft(seed in any::<u64>(), len in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bright = vec![random_vec(&mut rng, len)];
        let dark = vec![random_vec(&mut rng, len)];
        let nfft = fft_size(len);
        let pb = szc_core::oracle::dft_power(&bright[0], nfft);
        let pd = szc_core::oracle::dft_power(&dark[0], nfft);
        for (k, v) in fd_ac(&bright, &dark, nfft).iter().enumerate() {
            let expected = (10.0 * (pb[k + 1] / pd[k + 1].max(1e-300)).log10()).clamp(-200.0, 200.0);
            prop_assert!((v - expected).abs() <= 1e-9, "bin {}: {} vs {}", k + 1, v, expected);
        }
    }
}

#[test]
fn observation_mic_count_mismatch_is_rejected() {
    let shape = Shape { positions: 2, loudspeakers: 1, ir_len: 3, bright: 1, dark: 1, observation: 1 };
    let set = Arc::new(random_set(shape, 1));
    let other = Arc::new(random_set(Shape { observation: 2, ..shape }, 2));
    let p = params(2);
    let filters = ControlFilterSet::identity(1, p);
    assert!(FrameEngine::new(4, set, Some(ObservationIrs::new(other)), filters, &p).is_err());
}
