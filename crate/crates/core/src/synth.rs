//! Random desk-scale instances for cross-checking the greedy scheduler
//! against the exact solver.

use std::collections::BTreeMap;

use rand::Rng;

use crate::fleet::{DeviceId, DeviceKind, DeviceSpec, Fleet};
use crate::model::{CnnSpec, LayerKind, LayerSpec};
use crate::placement::{Instance, Request};
use crate::privacy::{PrivacyPolicy, SsimCurve};

/// Size envelope for generated instances. The defaults stay inside the exact
/// solver's desk-scale limits.
#[derive(Debug, Clone, Copy)]
pub struct SynthParams {
    pub max_helpers: usize,
    pub max_conv_maps: u64,
    pub max_requests: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { max_helpers: 3, max_conv_maps: 6, max_requests: 2 }
    }
}

fn random_model(rng: &mut impl Rng, params: &SynthParams) -> CnnSpec {
    let ch = rng.gen_range(1..=2u64);
    let mut spatial = *[4u64, 8].get(rng.gen_range(0..2)).unwrap();
    let input_spatial = spatial;
    let mut layers: Vec<LayerSpec> = Vec::new();
    let push = |layers: &mut Vec<LayerSpec>, mut layer: LayerSpec| {
        layer.index = layers.len() + 1;
        layers.push(layer);
    };

    let n_conv = rng.gen_range(1..=2usize);
    let mut width = ch;
    for _ in 0..n_conv {
        let maps = rng.gen_range(2..=params.max_conv_maps);
        let filter = if rng.gen_bool(0.5) { 1 } else { 3 };
        push(
            &mut layers,
            LayerSpec {
                index: 0,
                kind: LayerKind::Conv,
                filter_size: filter,
                out_maps: maps,
                out_spatial: spatial,
                neurons: 0,
                weights_per_segment: filter * filter * width + 1,
            },
        );
        width = maps;
        if rng.gen_bool(0.4) && spatial >= 2 {
            spatial /= 2;
            push(
                &mut layers,
                LayerSpec {
                    index: 0,
                    kind: LayerKind::MaxPool,
                    filter_size: 0,
                    out_maps: width,
                    out_spatial: spatial,
                    neurons: 0,
                    weights_per_segment: 0,
                },
            );
        }
    }
    let flat = width * spatial * spatial;
    let mut prev_neurons = flat;
    if rng.gen_bool(0.5) {
        let neurons = rng.gen_range(3..=8u64);
        push(
            &mut layers,
            LayerSpec {
                index: 0,
                kind: LayerKind::FullyConnected,
                filter_size: 0,
                out_maps: 1,
                out_spatial: 1,
                neurons,
                weights_per_segment: flat * neurons + neurons,
            },
        );
        prev_neurons = neurons;
    }
    let classes = rng.gen_range(2..=4u64);
    push(
        &mut layers,
        LayerSpec {
            index: 0,
            kind: LayerKind::FullyConnected,
            filter_size: 0,
            out_maps: 1,
            out_spatial: 1,
            neurons: classes,
            weights_per_segment: prev_neurons * classes + classes,
        },
    );

    let cnn = CnnSpec {
        name: "Syn".into(),
        dataset: "SYN".into(),
        input_channels: ch,
        input_spatial,
        layers,
    };
    debug_assert!(cnn.validate().is_ok());
    cnn
}

fn random_curve(rng: &mut impl Rng, layer_index: usize, width: u64) -> SsimCurve {
    let mut entries = BTreeMap::new();
    let mut ssim: f64 = rng.gen_range(0.3..1.0);
    let mut count = width;
    loop {
        entries.insert(count, (ssim * 100.0).round() / 100.0);
        if count == 1 {
            break;
        }
        count /= 2;
        ssim *= rng.gen_range(0.45..0.95);
    }
    SsimCurve {
        dataset: "SYN".into(),
        layer_label: format!("L{}", layer_index),
        layer_index,
        entries,
    }
}

fn random_device(rng: &mut impl Rng, name: String, kind: DeviceKind, cnn: Option<String>) -> DeviceSpec {
    let speed = rng.gen_range(10.0..150.0f64).round();
    let rate = rng.gen_range(50.0..400.0f64).round();
    DeviceSpec {
        name,
        kind,
        mem_cap: rng.gen_range(20_000..400_000),
        comp_cap: rng.gen_range(8_000..120_000),
        bw_cap: rng.gen_range(4_000..60_000),
        rate,
        speed,
        cnn,
    }
}

/// One random instance: a small CNN, a source, one to three helpers, one or
/// two requests, and an optional privacy policy over synthetic curves.
pub fn random_instance(rng: &mut impl Rng, params: &SynthParams) -> Instance {
    let model = random_model(rng, params);
    let policy = if rng.gen_bool(0.6) {
        let mut curves = vec![random_curve(rng, 1, model.width(1))];
        if model.layer_count() > 3 && rng.gen_bool(0.3) {
            curves.push(random_curve(rng, 2, model.width(2)));
        }
        let tolerance = *[0.3f64, 0.45, 0.6, 0.8]
            .get(rng.gen_range(0..4))
            .unwrap();
        PrivacyPolicy::derive(&model, &curves, tolerance, 0.01).unwrap()
    } else {
        PrivacyPolicy::unrestricted("SYN")
    };

    let mut fleet = Fleet::new();
    let mut source = random_device(rng, "cam".into(), DeviceKind::Source, Some(model.name.clone()));
    // The source must at least host its pinned layers reliably often.
    source.comp_cap = rng.gen_range(40_000..300_000);
    source.mem_cap = rng.gen_range(100_000..800_000);
    fleet.push(source).unwrap();
    let helpers = rng.gen_range(1..=params.max_helpers);
    for k in 0..helpers {
        let spec = random_device(rng, format!("h{}", k), DeviceKind::Helper, None);
        fleet.push(spec).unwrap();
    }

    let n_requests = rng.gen_range(1..=params.max_requests);
    let requests = (0..n_requests)
        .map(|id| Request { id, source: DeviceId(0), model: 0 })
        .collect();

    Instance::new(vec![model], vec![policy], fleet, requests, 4).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_instances_respect_desk_scale_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = SynthParams::default();
        for _ in 0..200 {
            let instance = random_instance(&mut rng, &params);
            assert!(instance.fleet.len() <= 4);
            assert!(instance.requests.len() <= 2);
            let model = instance.model_of(0);
            assert!(model.layer_count() <= 6);
            for l in 1..=model.layer_count() {
                assert!(instance.segments(0, l) <= 8);
            }
            model.validate().unwrap();
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_instance(&mut rng, &SynthParams::default())
        };
        let a = gen(42);
        let b = gen(42);
        assert_eq!(a.models, b.models);
        assert_eq!(a.fleet, b.fleet);
        assert_eq!(a.policies[0], b.policies[0]);
    }
}
