use kawahara_harness::config::{BlockFamily, InitialData, RoughSpec};
use kawahara_harness::{ExperimentConfig, ScenarioKind};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ScenarioKind> {
    prop::sample::select(ScenarioKind::ALL.to_vec())
}

fn list() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6f64..1e6, 1..5)
}

proptest! {
    #[test]
    fn parse_serialize_identity(k in kind(), seed in 0..=i64::MAX as u64, alpha in -10f64..10.0, beta in -10f64..10.0, xs in list(), ys in list(), amp in 1e-9f64..1e9, cut in 0.1f64..100.0) {
        let mut c = ExperimentConfig::example(k);
        c.seed = seed;
        c.equation.alpha = alpha;
        c.equation.beta = beta;
        c.out = Some(format!("runs/{seed}").into());
        if let Some(s) = c.scan.as_mut() { s.s = xs.clone(); }
        if let Some(p) = c.probe.as_mut() { p.cutoffs = ys.clone(); p.amplitude = amp; }
        if let Some(l) = c.linear.as_mut() { l.delta = ys.clone(); }
        if let Some(b) = c.block_norm.as_mut() {
            b.families.push(BlockFamily::PlusMinus { n_min: xs.clone(), n: ys.clone(), l2: xs.clone(), l3: ys.clone() });
        }
        if let Some(s) = c.solve.as_mut() {
            s.initial = InitialData::Rough(RoughSpec { s: alpha, norm_s: if seed % 2 == 0 { Some(beta) } else { None }, cutoff: cut, amplitude: amp });
        }
        let text = c.to_toml();
        prop_assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }
}

#[test]
fn shipped_configs_match_examples() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for k in ScenarioKind::ALL {
        let c = ExperimentConfig::load(&dir.join(format!("{k}.toml"))).unwrap();
        c.validate().unwrap();
        let mut e = ExperimentConfig::example(k);
        e.out = None;
        assert_eq!(c, e, "{k}");
    }
}
