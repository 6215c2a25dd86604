use linatt_core::attention::AttentionVariant;
use linatt_core::clip::{train, ToyTrainConfig};

#[test]
fn trajectory_probe() {
    for (temperature, learning_rate, seq) in [(0.1, 0.01, 32usize), (0.1, 0.02, 32), (0.1, 0.05, 32)] {
        println!("--- T={temperature} lr={learning_rate} L={seq}");
        for seed in 1..=3u64 {
            for variant in [
                AttentionVariant::LinearNormalized,
                AttentionVariant::LinearDenomFree,
                AttentionVariant::SoftmaxReference,
            ] {
                let mut cfg = ToyTrainConfig::default();
                cfg.variant = variant;
                cfg.temperature = temperature;
                cfg.learning_rate = learning_rate;
                cfg.seq_len_image = seq;
                cfg.seq_len_text = seq;
                cfg.seed = seed;
                let r = train(&cfg).unwrap();
                let at = |s: usize| r.losses[s - 1];
                println!(
                    "seed {seed} {}: L100={:.3} L200={:.3} L300={:.3} L400={:.3} L500={:.4} acc={:.3}",
                    match variant {
                        AttentionVariant::LinearNormalized => "LN",
                        AttentionVariant::LinearDenomFree => "DF",
                        AttentionVariant::SoftmaxReference => "SM",
                    },
                    at(100),
                    at(200),
                    at(300),
                    at(400),
                    at(500),
                    r.final_accuracy
                );
            }
        }
    }
}
