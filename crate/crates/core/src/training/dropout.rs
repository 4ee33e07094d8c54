use rand::Rng;

/// Inverted-dropout scale factors: each entry is `0` with probability
/// `rate`, otherwise `1 / (1 - rate)`.
pub fn sample_mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

/// Applies inverted dropout and returns the mask for replay.
pub fn apply_dropout(values: &[f64], rate: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let mask = sample_mask(values.len(), rate, rng);
    let out = values.iter().zip(&mask).map(|(v, m)| v * m).collect();
    (out, mask)
}
