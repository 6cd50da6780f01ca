use super::layers::Seq;
use super::loss::Loss;
use super::network::Network;
use super::NnError;
use ndarray::Array2;

/// Largest relative deviation between backprop gradients and central finite
/// differences of `loss` over every parameter.
pub fn gradient_check(net: &Network, x: &Seq, target: &Array2<f64>, loss: Loss, eps: f64) -> Result<f64, NnError> {
    let (pred, tape) = net.forward(x)?;
    let (_, d_out) = loss.value_and_grad(&pred, target);
    let analytic: Vec<f64> = net.backward(&tape, &d_out).0.tensors.concat();
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + eps;
        probe.set_flat_params(&p)?;
        let up = loss.value(&probe.predict(x)?, target);
        p[i] = base[i] - eps;
        probe.set_flat_params(&p)?;
        let down = loss.value(&probe.predict(x)?, target);
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
