//! Compare the analytic gradient of the reconstruction loss with central
//! finite differences taken on the model's own forward pass.
//!
//! cargo run --example gradient_check -- [seed]

use codecomp::model::{backward, forward, init_params, ParamGroup, SchemeConfig};
use codecomp::rng::{sample_gumbel, Rng};

/// Largest relative disagreement per parameter group.
pub fn run_example(seed: u64) -> codecomp::Result<Vec<(&'static str, f64)>> {
    let cfg = SchemeConfig::new(2, 4, 5)?;
    let mut rng = Rng::new(seed);
    let params = init_params(&cfg, &mut rng);
    let batch = rng.uniform_mat(4, 5, -1.0, 1.0);
    let noise = sample_gumbel(&mut rng, 4, 8);
    let trace = forward(&params, &batch, Some(&noise), &cfg)?;
    let grads = backward(&params, &batch, &cfg, &trace)?;

    // Parameters are f32, so the step has to be coarse.
    let step = 1e-2f32;
    let mut out = Vec::new();
    for group in ParamGroup::ALL {
        let mut worst = 0f64;
        for i in 0..params.group(group).len() {
            let mut probe = params.clone();
            let orig = probe.group(group)[i];
            probe.group_mut(group)[i] = orig + step;
            let up = forward(&probe, &batch, Some(&noise), &cfg)?.loss;
            probe.group_mut(group)[i] = orig - step;
            let down = forward(&probe, &batch, Some(&noise), &cfg)?.loss;
            let numeric = (up - down) / (2.0 * f64::from(step));
            let analytic = f64::from(grads.group(group)[i]);
            let scale = numeric.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max((numeric - analytic).abs() / scale);
        }
        println!("{:<14} {:>4} entries, worst relative error {worst:.2e}", group.name(), params.group(group).len());
        out.push((group.name(), worst));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> codecomp::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    run_example(seed)?;
    Ok(())
}
