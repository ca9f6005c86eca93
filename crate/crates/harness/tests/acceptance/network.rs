//! Predictor network: head equivariance, output ranges, frozen stages and
//! complexity accounting.

use ndarray::{Array2, Array4};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vichan_core::dataset::LocationStats;
use vichan_core::geo::LatLon;
use vichan_net::backbone::Backbone;
use vichan_net::complexity::{conv_flops, linear_flops};
use vichan_net::heads::ApsHead;
use vichan_net::layers::ConvGeometry;
use vichan_net::{
    count_params, estimate_flops, BackboneKind, Batch, ChannelPredictor, Mode, ModelConfig, Module, OptimConfig, Optimizer,
    ParamKind, Target,
};

use crate::Verdict;

const SHIFTS: [usize; 4] = [1, 90, 180, 359];
const FORWARD_PASSES: usize = 1000;
const PASSES_PER_MODEL: usize = 25;
const FROZEN_STEPS: usize = 10;

fn roll(z: &Array2<f32>, k: usize) -> Array2<f32> {
    let n = z.ncols();
    Array2::from_shape_fn(z.dim(), |(r, c)| z[[r, (c + n - k) % n]])
}

pub fn circular_equivariance() -> Verdict {
    let mut rng = StdRng::seed_from_u64(4);
    let mut init = ChaCha8Rng::seed_from_u64(4);
    let mut head = ApsHead::new(64, 360, 0.1, &mut init);
    let z = Array2::from_shape_fn((6, 360), |_| rng.random_range(-4.0f32..4.0));
    let base = head.residual_smooth(&z, Mode::Eval);
    let mut worst = 0.0f32;
    for k in SHIFTS {
        let shifted = head.residual_smooth(&roll(&z, k), Mode::Eval);
        let expected = roll(&base, k);
        worst = shifted.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(worst, f32::max);
    }
    Verdict::new(worst < 1e-6, format!("max deviation {worst:.2e} over shifts {SHIFTS:?}"))
}

fn config(backbone: BackboneKind, target: Target) -> ModelConfig {
    ModelConfig { backbone, target, location_norm: LocationStats { mean_m: 120.0, std_m: 60.0 }, ..ModelConfig::default() }
}

/// Random images in one of three regimes (uniform noise, blank, saturated)
/// and random Tx–Rx pairs up to a few hundred metres apart.
fn random_batch(rng: &mut StdRng, n: usize) -> Batch {
    let image = |rng: &mut StdRng| match rng.random_range(0..3) {
        0 => Array4::from_shape_fn((n, 3, 224, 224), |_| rng.random_range(0.0f32..=1.0)),
        1 => Array4::zeros((n, 3, 224, 224)),
        _ => Array4::ones((n, 3, 224, 224)),
    };
    let semantic = image(rng);
    let depth = image(rng);
    let tx = LatLon { lat: 31.0, lon: 121.0 };
    let locations = (0..n)
        .map(|_| (tx, LatLon { lat: 31.0 + rng.random_range(-3e-3..3e-3), lon: 121.0 + rng.random_range(-3e-3..3e-3) }))
        .collect();
    Batch { semantic: Some(semantic), semantic_features: None, depth: Some(depth), locations: Some(locations) }
}

pub fn output_constraints() -> Verdict {
    let mut rng = StdRng::seed_from_u64(5);
    let targets = [Target::Pl, Target::Ds, Target::Asa, Target::Asd, Target::Aps];
    let (mut scalars, mut bins, mut gates, mut violations) = (0usize, 0usize, 0usize, Vec::new());
    let mut model = None;
    for pass in 0..FORWARD_PASSES {
        if pass % PASSES_PER_MODEL == 0 {
            let target = targets[(pass / PASSES_PER_MODEL) % targets.len()];
            model = Some(ChannelPredictor::new(config(BackboneKind::CompactConv, target), pass as u64).unwrap());
        }
        let m = model.as_mut().unwrap();
        let n = rng.random_range(1..=3);
        let batch = random_batch(&mut rng, n);
        let mut dropout = ChaCha8Rng::seed_from_u64(pass as u64);
        let mode = if pass % 2 == 0 { Mode::Eval } else { Mode::Train(&mut dropout) };
        let out = m.forward(&batch, mode).unwrap();
        let aps = m.config.target.is_aps();
        for &v in &out.output {
            let ok = if aps { v > 0.0 && v < 1.0 } else { v > 0.0 };
            if aps {
                bins += 1;
            } else {
                scalars += 1;
            }
            if !ok && violations.len() < 5 {
                violations.push(format!("pass {pass}: output {v}"));
            }
        }
        for &g in &out.gate {
            gates += 1;
            if !(g > 0.0 && g < 1.0) && violations.len() < 5 {
                violations.push(format!("pass {pass}: gate {g}"));
            }
        }
    }

    let (changed, frozen, frozen_values) = frozen_after_steps();
    let ok = violations.is_empty() && changed == 0 && frozen > 0 && frozen_values > 0;
    Verdict::new(
        ok,
        format!(
            "{FORWARD_PASSES} passes: {scalars} scalar outputs, {bins} APS entries, {gates} gates, violations {violations:?}; \
             {changed} of {frozen} frozen tensors ({frozen_values} values) changed after {FROZEN_STEPS} steps"
        ),
    )
}

/// Trains the default frozen-stage model for a few steps and counts frozen
/// tensors (weights and running statistics) that are not bitwise equal.
fn frozen_after_steps() -> (usize, usize, usize) {
    let mut rng = StdRng::seed_from_u64(6);
    let mut model = ChannelPredictor::new(config(BackboneKind::Residual34, Target::Pl), 6).unwrap();
    let mut snapshot = Vec::new();
    model.visit("", &mut |name, p| {
        if !p.trainable && (p.kind == ParamKind::Weight || name.contains("early")) {
            snapshot.push((name.to_string(), p.value.clone()));
        }
    });
    let mut trainable_before = Vec::new();
    model.visit("", &mut |_, p| {
        if p.trainable {
            trainable_before.push(p.value.clone());
        }
    });
    let mut opt = Optimizer::new(OptimConfig::adam(1e-2, 0.0));
    let mut dropout = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..FROZEN_STEPS {
        let batch = random_batch(&mut rng, 2);
        model.zero_grad();
        let out = model.forward(&batch, Mode::Train(&mut dropout)).unwrap();
        model.backward(&out.output.mapv(|v| v - 0.5));
        opt.step(&mut model, 1.0);
    }
    let mut changed = 0;
    let mut i = 0;
    let mut values = 0;
    model.visit("", &mut |name, p| {
        if let Some((n, v)) = snapshot.get(i).filter(|(n, _)| n == name) {
            debug_assert_eq!(n, name);
            values += v.len();
            if v.iter().zip(p.value.iter()).any(|(a, b)| a.to_bits() != b.to_bits()) {
                changed += 1;
            }
            i += 1;
        }
    });
    let mut moved = 0;
    let mut j = 0;
    model.visit("", &mut |_, p| {
        if p.trainable {
            moved += usize::from(trainable_before[j] != p.value);
            j += 1;
        }
    });
    assert!(moved > 0, "no trainable tensor moved, so the steps were not real updates");
    (changed, snapshot.len(), values)
}

/// Conv without bias followed by batch norm (γ, β per channel).
fn conv_bn(k: usize, cin: usize, cout: usize) -> usize {
    k * k * cin * cout + 2 * cout
}

fn fc(i: usize, o: usize) -> usize {
    i * o + o
}

pub fn complexity_accounting() -> Verdict {
    // Compact backbone: 3×3 stride-2 convs 3→16→32→64→128→256, then 1×1 256→512.
    let early = conv_bn(3, 3, 16) + conv_bn(3, 16, 32) + conv_bn(3, 32, 64);
    let late = conv_bn(3, 64, 128) + conv_bn(3, 128, 256) + conv_bn(1, 256, 512);
    let backbone = early + late;
    let semantic = backbone + fc(512, 256);
    let depth = conv_bn(3, 3, 16) + conv_bn(3, 16, 32) + conv_bn(3, 32, 64) + conv_bn(3, 64, 128) + fc(128, 256);
    let location = fc(1, 64) + fc(64, 256);
    let fusion = fc(768, 48) + fc(48, 1);
    let head = fc(768, 256) + fc(256, 64) + fc(64, 1);
    let total = semantic + depth + location + fusion + head;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (bb_total, bb_trainable) = Backbone::new(BackboneKind::CompactConv, true, &mut rng).param_counts();
    let cfg = config(BackboneKind::CompactConv, Target::Pl);
    let (m_total, m_trainable) = count_params(&cfg).unwrap();

    // Per-sample MACs at 224×224: spatial sizes halve from 112 to 7.
    let hw = [112usize, 56, 28, 14, 7];
    let conv_macs = |k: usize, cin: usize, cout: usize, s: usize| (k * k * cin * cout * s * s) as u64;
    let backbone_macs = conv_macs(3, 3, 16, hw[0])
        + conv_macs(3, 16, 32, hw[1])
        + conv_macs(3, 32, 64, hw[2])
        + conv_macs(3, 64, 128, hw[3])
        + conv_macs(3, 128, 256, hw[4])
        + conv_macs(1, 256, 512, hw[4]);
    let depth_macs = conv_macs(3, 3, 16, hw[0]) + conv_macs(3, 16, 32, hw[1]) + conv_macs(3, 32, 64, hw[2]) + conv_macs(3, 64, 128, hw[3]);
    let dense = [(512, 256), (128, 256), (1, 64), (64, 256), (768, 48), (48, 1), (768, 256), (256, 64), (64, 1)];
    let dense_macs: u64 = dense.iter().map(|&(i, o)| (i * o) as u64).sum();
    let flops_expected = 2 * (backbone_macs + depth_macs + dense_macs);
    let flops = estimate_flops(&cfg, (224, 224)).unwrap();

    let conv_example = conv_flops(&ConvGeometry::new(3, 16, 3, 2, 1), (224, 224));
    let fc_example = linear_flops(768, 256);

    let ok = bb_total == backbone
        && bb_trainable == late
        && m_total == total
        && m_trainable == total - early
        && flops == flops_expected
        && conv_example == 2 * 3 * 3 * 3 * 16 * 112 * 112
        && fc_example == 2 * 768 * 256;
    Verdict::new(
        ok,
        format!(
            "backbone {bb_total}/{backbone} params ({bb_trainable} trainable); model {m_total}/{total} ({m_trainable}/{} trainable); \
             FLOPs {flops}/{flops_expected}; worked examples conv {conv_example}, fc {fc_example}",
            total - early
        ),
    )
}
