//! Full-length training run on the synthetic dataset with default settings.

use interdiff::image::extract_patches;
use interdiff::synth::{make_pair, DatasetConfig};
use interdiff::training::train_loop;
use interdiff::{DenoiserSpec, NoisyPair, TrainConfig};

fn patches(n_pairs: usize) -> Vec<NoisyPair> {
    let cfg = DatasetConfig::default();
    let mut out = Vec::new();
    for i in 0..n_pairs {
        let (_, pair) = make_pair(&cfg, i).unwrap();
        let clean = extract_patches(&pair.clean, 32, 32).unwrap();
        let noisy = extract_patches(&pair.noisy, 32, 32).unwrap();
        out.extend(clean.into_iter().zip(noisy).map(|(c, n)| NoisyPair::new(c, n).unwrap()));
    }
    out
}

// Initial loss over the mean of the last 100 iterations, seed 0.
const PINNED_LOSS_DROP: f64 = 13.546;

#[test]
fn default_run_cuts_loss_fivefold() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.iterations, 2000);
    let out = train_loop(&patches(40), &cfg, &DenoiserSpec::default()).unwrap();
    assert_eq!(out.losses.len(), 2000);
    let tail = out.losses[1900..].iter().sum::<f64>() / 100.0;
    let drop = out.losses[0] / tail;
    assert!(drop >= 5.0, "loss fell only {drop}x");
    assert!((drop - PINNED_LOSS_DROP).abs() < 0.01, "drop {drop} vs pinned {PINNED_LOSS_DROP}");
}
