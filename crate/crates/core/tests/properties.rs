mod common;

use common::{params, random_channels};
use ddlink_core::access::uniform_power;
use ddlink_core::channel::{apply_cfo, build_h_dd, CfoModel};
use ddlink_core::linkmodel::{effective_coeff, otfs_rate_terms, otfs_sum_rate, symbolwise_grid};
use ddlink_core::random::{complex_gaussian, substream};
use ddlink_core::rxchain::{cfo_compensate, Constellation};
use ddlink_core::{AccessScheme, DdGrid, OtfsModem, Path, PulseShape, TfGrid, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn grid(m: usize, n: usize, seed: u64) -> DMatrix<C64> {
    let mut rng = substream(seed, 0);
    DMatrix::from_fn(m, n, |_, _| complex_gaussian(&mut rng, 1.0))
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (
        prop::sample::select(vec![1usize, 2, 3, 4, 8, 12]),
        prop::sample::select(vec![1usize, 2, 4, 5, 8]),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transforms_round_trip_and_preserve_energy((m, n) in dims(), seed in any::<u64>()) {
        let p = params(m, n);
        let modem = OtfsModem::new(p);
        let x = grid(m, n, seed);
        let tf = modem.isfft(&DdGrid(x.clone())).unwrap();
        prop_assert!((tf.0.norm() - x.norm()).abs() < 1e-10 * (1.0 + x.norm()));
        let back = modem.sfft(&TfGrid(tf.0.clone())).unwrap();
        prop_assert!((&back.0 - &x).norm() < 1e-10);

        let pulse = PulseShape::rectangular(m);
        let s = modem.modulate(&DdGrid(x.clone()), &pulse).unwrap();
        prop_assert!((modem.demodulate(&s, &pulse).unwrap().0 - &x).norm() < 1e-10);
        let v = DVector::from_column_slice(x.as_slice());
        prop_assert!((modem.wigner(&modem.heisenberg(&v).unwrap()).unwrap() - &v).norm() < 1e-10);
    }

    #[test]
    fn effective_coefficient_keeps_path_magnitude(
        l in 0usize..8, k in 0usize..4, delay in 0usize..8, doppler in -6i64..6, re in -2.0f64..2.0, im in -2.0f64..2.0
    ) {
        let p = params(8, 4);
        let path = Path { gain: C64::new(re, im), delay_tap: delay, doppler_tap: doppler };
        prop_assert!((effective_coeff(l, k, &path, &p).norm() - path.gain.norm()).abs() < 1e-12);
    }

    #[test]
    fn dd_matrix_matches_symbolwise_assembly(seed in any::<u64>(), paths in 1usize..4) {
        let p = params(4, 4);
        let mut rng = substream(seed, 1);
        let ch = random_channels(&mut rng, 1, paths, &p);
        let x = grid(4, 4, seed);
        let y = build_h_dd(&ch[0], &p).apply(&DVector::from_column_slice(x.as_slice())).unwrap();
        let y_sym = symbolwise_grid(&[x], &ch, 0, &p).unwrap();
        prop_assert!((DVector::from_column_slice(y_sym.as_slice()) - y).camax() < 1e-10);
    }

    #[test]
    fn oma_masks_are_disjoint_and_fair(
        scheme in prop::sample::select(AccessScheme::ALL.to_vec()),
        (m, n) in (prop::sample::select(vec![4usize, 8, 16]), prop::sample::select(vec![4usize, 8])),
        k in prop::sample::select(vec![1usize, 4]),
    ) {
        let mask = scheme.mask(&params(m, n), k).unwrap();
        for l in 0..m {
            for kk in 0..n {
                prop_assert_eq!((0..k).filter(|&u| mask.get(l, kk, u)).count(), 1);
            }
        }
        for u in 0..k {
            prop_assert_eq!(mask.blocks_of(u), m * n / k);
        }
    }

    #[test]
    fn rates_nonnegative_and_monotone_in_noise(seed in any::<u64>(), n0 in 1e-3f64..10.0) {
        let p = params(4, 4);
        let mut rng = substream(seed, 2);
        let ch = random_channels(&mut rng, 4, 3, &p);
        let rho = uniform_power(&AccessScheme::Ddodma.mask(&p, 4).unwrap(), 16.0).unwrap();
        let rates = otfs_rate_terms(&rho, &ch, n0, &p).unwrap();
        prop_assert!(rates.iter().all(|&r| r >= 0.0));
        let low = otfs_sum_rate(&rho, &ch, n0, &p).unwrap();
        let high = otfs_sum_rate(&rho, &ch, n0 * 0.5, &p).unwrap();
        prop_assert!(high >= low - 1e-12);
    }

    #[test]
    fn cfo_compensation_is_exact_inverse(seed in any::<u64>(), eps in -1.0f64..1.0) {
        let p = params(8, 4);
        let s = DVector::from_column_slice(grid(8, 4, seed).as_slice());
        let r = apply_cfo(&s, &CfoModel::new(eps).unwrap(), &p).unwrap();
        prop_assert!((cfo_compensate(&r, eps, 8) - s).norm() < 1e-12);
    }

    #[test]
    fn constellation_labels_round_trip(bits in prop::collection::vec(0u8..2, 0..64)) {
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            let b = c.bits_per_symbol();
            let bits = &bits[..bits.len() / b * b];
            let symbols = c.map_all(bits).unwrap();
            prop_assert_eq!(c.demap_all(&symbols), bits.to_vec());
        }
    }
}
