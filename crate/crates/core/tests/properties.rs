use proptest::prelude::*;
use uwstyle_core::datasynth::{degrade_jaffe, degrade_real_proxy, DegradationParams, RealProxyParams};
use uwstyle_core::latentlab::{
    embed_and_score, manipulate_style, silhouette, spearman, EmbedConfig, EmbeddingMethod, LatentCollection,
    LatentRecord, LatentTag,
};
use uwstyle_core::losses::{self, aggregate, LossTerms, LossWeights, PerceptualExtractor, SsimParams};
use uwstyle_core::metrics;
use uwstyle_core::model::{adain_tensor, instance_norm_tensor, Model, ModelConfig, StyleLatent, StyleTag};
use uwstyle_core::{DepthMap, Image};
use uwstyle_tensor::Tensor;

fn image(h: usize, w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..=1.0, 3 * h * w).prop_map(move |d| Image::new(h, w, d).unwrap())
}

fn unit3() -> impl Strategy<Value = [f64; 3]> {
    [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0]
}

fn jaffe_params() -> impl Strategy<Value = DegradationParams> {
    ([0.01f64..3.0, 0.01f64..3.0, 0.01f64..3.0], unit3()).prop_map(|(eta, ambient)| DegradationParams { eta, ambient })
}

fn tiny_model() -> Model {
    let config = ModelConfig {
        base_filters: 4,
        content_channels: 8,
        num_content_resblocks: 1,
        style_channels: 8,
        generator_resblocks: 1,
        adain_param_net_hidden: 8,
        transform_hidden: 4,
        ..ModelConfig::default()
    };
    Model::new(config, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jaffe_is_convex_and_monotone_in_depth(
        clean in image(8, 8),
        depth in prop::collection::vec(0.0f64..3.0, 64),
        extra in prop::collection::vec(0.0f64..2.0, 64),
        params in jaffe_params(),
    ) {
        let d1 = DepthMap::new(8, 8, depth.clone()).unwrap();
        let d2 = DepthMap::new(8, 8, depth.iter().zip(&extra).map(|(a, b)| a + b).collect()).unwrap();
        let near = degrade_jaffe(&clean, &d1, &params).unwrap();
        let far = degrade_jaffe(&clean, &d2, &params).unwrap();
        for c in 0..3 {
            let a = params.ambient[c];
            for i in 0..64 {
                let j = clean.channel(c)[i];
                let v = near.channel(c)[i];
                prop_assert!(v >= j.min(a) - 1e-12 && v <= j.max(a) + 1e-12);
                prop_assert!((far.channel(c)[i] - a).abs() <= (v - a).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn real_proxy_stays_in_range(
        clean in image(8, 12),
        gamma in [0.3f64..=3.0, 0.3f64..=3.0, 0.3f64..=3.0],
        cast in unit3(),
        blend in 0.0f64..=1.0,
        vignette_strength in 0.0f64..=1.0,
    ) {
        let out = degrade_real_proxy(&clean, &RealProxyParams { gamma, cast, blend, vignette_strength }).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn adain_absorbs_instance_norm(
        data in prop::collection::vec(-3.0f64..3.0, 2 * 3 * 5 * 4),
        gamma in prop::collection::vec(0.1f64..3.0, 3),
        beta in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let x = Tensor::new(&[2, 3, 5, 4], data).unwrap();
        // constant channels are excluded: IN of a constant is 0 either way
        let normed = instance_norm_tensor(&x, 1e-5).unwrap();
        let a = adain_tensor(&normed, &gamma, &beta).unwrap();
        let b = adain_tensor(&x, &gamma, &beta).unwrap();
        let (_, _, h, w) = x.dims4();
        for p in 0..6 {
            let plane = &x.data()[p * h * w..(p + 1) * h * w];
            let mean = plane.iter().sum::<f64>() / (h * w) as f64;
            let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (h * w) as f64;
            if var < 1e-2 {
                continue;
            }
            for i in p * h * w..(p + 1) * h * w {
                prop_assert!((a.data()[i] - b.data()[i]).abs() < 1e-5 * (1.0 + gamma[p % 3]));
            }
        }
    }

    #[test]
    fn manipulate_style_is_affine(
        z in prop::collection::vec(-5.0f64..5.0, 8),
        zc in prop::collection::vec(-5.0f64..5.0, 8),
        alpha in -0.5f64..=1.5,
    ) {
        let a = StyleLatent::new(z.clone(), StyleTag::Real).unwrap();
        let b = StyleLatent::new(zc.clone(), StyleTag::Clean).unwrap();
        let m = manipulate_style(&a, &b, alpha).unwrap();
        prop_assert_eq!(m.vector.len(), 8);
        for i in 0..8 {
            prop_assert!((m.vector[i] - ((1.0 - alpha) * z[i] + alpha * zc[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregate_is_linear_in_each_term(
        base in prop::collection::vec(0.0f64..5.0, 9),
        which in 0usize..9,
        delta in 0.0f64..3.0,
        w in prop::collection::vec(0.0f64..20.0, 5),
    ) {
        let weights = LossWeights {
            lambda_self: w[0],
            lambda_latent: w[1],
            lambda_tv: w[2],
            lambda_per: w[3],
            lambda_iq: w[4],
        };
        let terms = |v: &[f64]| LossTerms {
            cyc: v[0], self_rec: v[1], gan_g: v[2], gan_d: v[3], pixel: v[4],
            ssim: v[5], per: v[6], tv: v[7], latent: v[8],
        };
        let mut bumped = base.clone();
        bumped[which] += delta;
        let r0 = aggregate(&terms(&base), &weights);
        let r1 = aggregate(&terms(&bumped), &weights);
        // coefficient of each term in the total
        let coef = [1.0, w[0], 1.0, 0.0, w[4], w[4], w[3], w[2], w[1]][which];
        prop_assert!((r1.total - r0.total - coef * delta).abs() < 1e-9);
        prop_assert!((r0.total - (r0.tran + r0.en)).abs() < 1e-12);
        prop_assert!((r0.iq - (base[4] + base[5])).abs() < 1e-12);
    }

    #[test]
    fn losses_are_non_negative_and_ssim_symmetric(a in image(8, 8), b in image(8, 8), t in image(8, 8)) {
        prop_assert!(losses::loss_pixel(&a, &b, &t).unwrap() >= 0.0);
        prop_assert!(losses::loss_ssim_pair(&a, &b, &t).unwrap() >= 0.0);
        prop_assert!(losses::loss_tv(&a).unwrap() >= 0.0);
        prop_assert!(losses::loss_cycle(&a, &b, &t, &a).unwrap() >= 0.0);
        let net = PerceptualExtractor::default();
        prop_assert!(losses::loss_perceptual(&a, &b, &t, &net).unwrap() >= 0.0);
        let p = SsimParams::default();
        let ab = losses::ssim(&a, &b, p.window, p.c1, p.c2).unwrap();
        let ba = losses::ssim(&b, &a, p.window, p.c1, p.c2).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        let tv = losses::loss_tv(&a).unwrap();
        let inv = Image::from_fn(8, 8, |c, y, x| 1.0 - a.get(c, y, x)).unwrap();
        prop_assert!((tv - losses::loss_tv(&inv).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ssim_map_follows_translation(big_a in image(20, 20), big_b in image(20, 20), dy in 0usize..4, dx in 0usize..4) {
        let p = SsimParams::default();
        let crop = |img: &Image, y, x| img.crop(y, x, 16, 16).unwrap();
        let m0 = losses::ssim_map(&crop(&big_a, 0, 0), &crop(&big_b, 0, 0), p).unwrap();
        let m1 = losses::ssim_map(&crop(&big_a, dy, dx), &crop(&big_b, dy, dx), p).unwrap();
        let side = 16 - p.window + 1;
        for y in 0..side - dy {
            for x in 0..side - dx {
                prop_assert!((m0[(y + dy) * side + x + dx] - m1[y * side + x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn metrics_are_finite_and_flip_invariant(img in image(16, 24)) {
        let flipped = img.flip_horizontal();
        let u = metrics::uiqm(&img).unwrap();
        let c = metrics::uciqe(&img);
        prop_assert!(u.is_finite() && c.is_finite());
        prop_assert!((u - metrics::uiqm(&flipped).unwrap()).abs() < 1e-9);
        prop_assert!((c - metrics::uciqe(&flipped)).abs() < 1e-12);
        prop_assert!(metrics::psnr(&img, &flipped).unwrap().is_finite());
        let s = metrics::ssim(&img, &flipped).unwrap();
        prop_assert!(s.is_finite() && s <= 1.0 + 1e-12);
    }

    #[test]
    fn psnr_falls_as_noise_grows(img in image(8, 8), signs in prop::collection::vec(any::<bool>(), 192)) {
        let noisy = |amp: f64| {
            let mut i = 0;
            Image::from_fn(8, 8, |c, y, x| {
                let v = img.get(c, y, x);
                let s = if signs[i] { 1.0 } else { -1.0 };
                i += 1;
                // reflect instead of clipping so the error is exactly amp
                if (0.0..=1.0).contains(&(v + s * amp)) { v + s * amp } else { v - s * amp }
            })
            .unwrap()
        };
        let scores: Vec<f64> = [0.01, 0.05, 0.2].iter().map(|&a| metrics::psnr(&img, &noisy(a)).unwrap()).collect();
        prop_assert!(scores[0] > scores[1] && scores[1] > scores[2]);
    }

    #[test]
    fn spearman_and_silhouette_are_bounded(
        xs in prop::collection::vec(-10.0f64..10.0, 3..12),
        labels in prop::collection::vec(0usize..3, 12),
    ) {
        let ys: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let rho = spearman(&xs, &ys).unwrap_or(0.0);
        prop_assert!((-1.0..=1.0).contains(&rho));
        let points: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v, v.sin()]).collect();
        if let Some(s) = silhouette(&points, &labels[..xs.len()]) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn decode_preserves_shape_for_any_style(
        img in image(16, 20),
        style in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let model = tiny_model();
        let content = model.content_of(&img).unwrap();
        let out = model.decode_latents(&content, &StyleLatent::new(style, StyleTag::Syn).unwrap()).unwrap();
        prop_assert_eq!((out.height(), out.width()), (16, 20));
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn transform_keeps_length_and_tags_clean(img in image(16, 16), real in any::<bool>()) {
        let model = tiny_model();
        let tag = if real { StyleTag::Real } else { StyleTag::Syn };
        let z = model.style_of(&img, tag).unwrap();
        let t = model.transform_latent(&z).unwrap();
        prop_assert_eq!(t.vector.len(), z.vector.len());
        prop_assert_eq!(t.tag, StyleTag::Clean);
        // inference is deterministic
        prop_assert_eq!(model.style_of(&img, tag).unwrap(), z);
    }

    #[test]
    fn embedding_is_finite(
        vectors in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 8), 12),
        tsne in any::<bool>(),
    ) {
        let tags = [LatentTag::Syn, LatentTag::Real, LatentTag::CleanFromSyn, LatentTag::CleanFromReal];
        let col = LatentCollection {
            records: vectors
                .into_iter()
                .enumerate()
                .map(|(i, vector)| LatentRecord { id: format!("{i}"), tag: tags[i % 4], vector })
                .collect(),
        };
        let config = EmbedConfig {
            method: if tsne { EmbeddingMethod::Tsne } else { EmbeddingMethod::Pca },
            iterations: 50,
            perplexity: 3.0,
            ..EmbedConfig::default()
        };
        let r = embed_and_score(&col, &config).unwrap();
        prop_assert_eq!(r.coords.len(), 12);
        prop_assert!(r.coords.iter().flatten().all(|v| v.is_finite()));
        for s in [r.silhouette_tags, r.silhouette_merged].into_iter().flatten() {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
