use omnict_core::linalg::Mat;
use omnict_core::ose::{aggregate, project_mask_to_tokens, AggPlan, OrganTokens, TokenGeometry};
use omnict_core::pipeline::{init_projection, tokenize, FrontEnd, OrganRequest};
use omnict_core::sce::{reshuffle, unshuffle, Stage, TokenGrid};
use omnict_core::volume::OrganMask;
use omnict_core::{Modality, PipelineConfig, Prng, Tensor};
use proptest::prelude::*;

fn positioned(n: usize, rows: usize, cols: usize, d: usize, seed: u64) -> TokenGrid {
    let mut rng = Prng::new(seed);
    let data = rng.uniform(n * rows * cols * d, -1.0, 1.0).unwrap();
    TokenGrid::new(Tensor::from_vec(&[n, rows, cols, d], data).unwrap(), Stage::Positioned, Modality::Volume).unwrap()
}

/// Token (unit, row, col) is on iff some voxel of its receptive field carries the label.
fn brute_force_flags(mask: &OrganMask, organ: u8, patch: usize, m: usize, n_s: usize, per_unit: usize) -> Vec<bool> {
    let [_, h, w] = mask.dims();
    let s = patch * m;
    let mut out = Vec::new();
    for unit in 0..n_s {
        for r in 0..h / s {
            for c in 0..w / s {
                let mut hit = false;
                for z in unit * per_unit..(unit + 1) * per_unit {
                    for y in r * s..(r + 1) * s {
                        for x in c * s..(c + 1) * s {
                            hit |= mask.label(z, y, x) == organ;
                        }
                    }
                }
                out.push(hit);
            }
        }
    }
    out
}

#[test]
fn default_shape_chain() {
    let config = PipelineConfig::default();
    let front = FrontEnd::new(config.clone()).unwrap();
    let projection = init_projection(&config).unwrap();
    let input = Tensor::from_vec(&[32, 384, 384], vec![0.5; 32 * 384 * 384]).unwrap();
    let mut labels = vec![0u8; 32 * 384 * 384];
    labels[(4 * 384 + 100) * 384 + 200] = 9;
    let mask = OrganMask::new([32, 384, 384], labels).unwrap();
    let t = tokenize(&front, &projection, &input, Modality::Volume, Some(OrganRequest { mask: &mask, organ: 9 })).unwrap();
    assert_eq!(t.shapes.units, vec![10, 3, 384, 384]);
    assert_eq!(t.shapes.encoded, vec![10, 24, 24, 64]);
    assert_eq!(t.shapes.unshuffled, vec![10, 12, 12, 4 * 112]);
    assert_eq!(t.shapes.token_count, 1440);
    assert_eq!(t.tokens.shape(), &[1530, 128]);
    assert_eq!(t.organ_tokens, Some(1));
}

#[test]
fn unshuffle_places_each_sub_token_by_formula() {
    let (n, rows, cols, d, m) = (2, 6, 9, 3, 3);
    let g = positioned(n, rows, cols, d, 11);
    let u = unshuffle(&g, m).unwrap();
    for i in 0..n {
        for r in 0..rows / m {
            for c in 0..cols / m {
                let merged = u.token(i, r, c);
                for a in 0..m {
                    for b in 0..m {
                        let k = (a * m + b) * d;
                        assert_eq!(&merged[k..k + d], g.token(i, r * m + a, c * m + b));
                    }
                }
            }
        }
    }
}

#[test]
fn routing_ignores_the_other_expert() {
    let config = PipelineConfig { d_f: 8, ..omnict_core::lm::gradcheck::small_config(2) };
    let (_, model, batch) = omnict_core::lm::gradcheck::small_instance(&config).unwrap();
    for (sample, other) in [(&batch[0], Modality::Slice), (&batch[1], Modality::Volume)] {
        assert_ne!(sample.modality, other);
        let mut perturbed = model.clone();
        let lin = match other {
            Modality::Slice => &mut perturbed.mhp.slice,
            Modality::Volume => &mut perturbed.mhp.volume,
        };
        lin.weight.data.iter_mut().for_each(|w| *w = *w * -3.0 + 0.7);
        lin.bias.iter_mut().for_each(|b| *b += 5.0);

        let mut g0 = model.zeros_like();
        let mut g1 = model.zeros_like();
        let l0 = model.sample_loss_grad(sample, &mut g0).unwrap();
        let l1 = perturbed.sample_loss_grad(sample, &mut g1).unwrap();
        assert_eq!(l0.to_bits(), l1.to_bits());
        for (a, b) in g0.slices().iter().zip(g1.slices()) {
            assert_eq!(*a, b);
        }
        let unused = match other {
            Modality::Slice => &g0.mhp.slice,
            Modality::Volume => &g0.mhp.volume,
        };
        assert!(unused.weight.data.iter().chain(&unused.bias).all(|&g| g == 0.0));
    }
}

fn random_mask(dims: [usize; 3], rng: &mut Prng) -> OrganMask {
    // sparse blobs of a few labels so that most tokens are off
    let n: usize = dims.iter().product();
    let mut labels = vec![0u8; n];
    for _ in 0..rng.next_below(6) {
        let label = 1 + rng.next_below(3) as u8;
        let at = rng.next_below(n as u64) as usize;
        let len = 1 + rng.next_below(40) as usize;
        for v in labels.iter_mut().skip(at).take(len) {
            *v = label;
        }
    }
    OrganMask::new(dims, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unshuffle_round_trips(m in 1usize..5, n in 1usize..3, br in 1usize..4, bc in 1usize..4, d in 1usize..5, seed in any::<u64>()) {
        let g = positioned(n, br * m, bc * m, d, seed);
        let u = unshuffle(&g, m).unwrap();
        prop_assert_eq!(u.dims(), (n, br, bc, d * m * m));
        let back = reshuffle(&u, m).unwrap();
        prop_assert_eq!(back.tensor(), g.tensor());
    }

    #[test]
    fn token_mask_matches_voxel_scan(seed in any::<u64>(), slice in any::<bool>()) {
        let mut rng = Prng::new(seed);
        let (modality, m, per_unit, d) = if slice { (Modality::Slice, 1, 1, 2) } else { (Modality::Volume, 2, 3, 8) };
        let mask = random_mask([d, 16, 24], &mut rng);
        let n_s = d / per_unit;
        let organ = 1 + rng.next_below(3) as u8;
        let geom = TokenGeometry::new(4, m, n_s, modality);
        let tm = project_mask_to_tokens(&mask, organ, &geom).unwrap();
        let expected = brute_force_flags(&mask, organ, 4, m, n_s, per_unit);
        prop_assert_eq!(tm.flags(), expected.as_slice());
    }

    #[test]
    fn pooling_preserves_the_mean(bins in 1usize..8, per in 1usize..6, dim in 1usize..4, seed in any::<u64>()) {
        let l_o = bins * per;
        let mut rng = Prng::new(seed);
        let data = rng.uniform(l_o * dim, -2.0, 2.0).unwrap();
        let out = aggregate(&OrganTokens::from_rows(dim, data.clone()).unwrap(), bins).unwrap();
        for k in 0..dim {
            let mean_in: f64 = (0..l_o).map(|i| f64::from(data[i * dim + k])).sum::<f64>() / l_o as f64;
            let mean_out: f64 = (0..bins).map(|j| f64::from(out.data()[j * dim + k])).sum::<f64>() / bins as f64;
            prop_assert!((mean_in - mean_out).abs() < 1e-6);
        }
    }

    #[test]
    fn pooling_is_identity_or_repetition(l in 1usize..20, dim in 1usize..4, seed in any::<u64>()) {
        let mut rng = Prng::new(seed);
        let data = rng.uniform(l * dim, -2.0, 2.0).unwrap();
        let same = aggregate(&OrganTokens::from_rows(dim, data.clone()).unwrap(), l).unwrap();
        prop_assert_eq!(same.data(), data.as_slice());
        let one = aggregate(&OrganTokens::from_rows(dim, data[..dim].to_vec()).unwrap(), l).unwrap();
        for j in 0..l {
            prop_assert_eq!(&one.data()[j * dim..(j + 1) * dim], &data[..dim]);
        }
    }

    #[test]
    fn pooling_transpose_is_adjoint(l_o in 0usize..12, l_c in 1usize..12, seed in any::<u64>()) {
        // <A x, y> == <x, A^T y>
        let plan = AggPlan::new(l_o, l_c).unwrap();
        let mut rng = Prng::new(seed);
        let x = Mat::from_vec(l_o, 2, rng.uniform(l_o * 2, -1.0, 1.0).unwrap().into_iter().map(f64::from).collect());
        let y = Mat::from_vec(l_c, 2, rng.uniform(l_c * 2, -1.0, 1.0).unwrap().into_iter().map(f64::from).collect());
        let ax = plan.apply(&x);
        let mut aty = Mat::zeros(l_o, 2);
        plan.apply_transpose_acc(&y, &mut aty);
        let lhs: f64 = ax.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&aty.data).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}
