//! Finite-difference verification of the backprop gradients.
//!
//! For random small networks this compares every backpropagated partial
//! derivative of the actor loss `-log pi(a|s) * A` and the critic loss
//! `(target - V(s))^2` against central differences. The suite doubles as
//! the `gradcheck` CLI subcommand.

use rand::Rng;

use super::mlp::{actor_gradient, critic_gradient, softmax, Mlp};
use crate::rng::{derive_rng_indexed, RngDomain};

/// Step used by the central-difference oracle.
pub const FD_STEP: f64 = 1e-5;
/// Pass threshold on the max relative error.
pub const REL_ERROR_THRESHOLD: f64 = 1e-4;
const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Number of random networks checked (each once for actor and critic).
    pub cases: usize,
    pub max_rel_error: f64,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.threshold
    }
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

fn actor_loss(actor: &Mlp, obs: &[f64], action: usize, advantage: f64) -> f64 {
    let probs = softmax(&actor.forward(obs).expect("checked shapes"));
    -advantage * probs[action].ln()
}

fn critic_loss(critic: &Mlp, obs: &[f64], td_target: f64) -> f64 {
    let v = critic.forward(obs).expect("checked shapes")[0];
    (td_target - v) * (td_target - v)
}

fn max_rel_error_fd<F>(mlp: &Mlp, analytic: &super::MlpGrads, loss: F) -> f64
where
    F: Fn(&Mlp) -> f64,
{
    let mut probe = mlp.clone();
    let mut worst = 0.0f64;
    for idx in 0..mlp.param_count() {
        let original = probe.get_param(idx);
        probe.set_param(idx, original + FD_STEP);
        let plus = loss(&probe);
        probe.set_param(idx, original - FD_STEP);
        let minus = loss(&probe);
        probe.set_param(idx, original);
        let fd = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(rel_error(analytic.get_param(idx), fd));
    }
    worst
}

/// Sample a random 3-hidden-layer net with at most `max_params` parameters.
fn random_net(max_params: usize, rng: &mut impl Rng) -> Mlp {
    loop {
        let dims = [
            rng.gen_range(2..=8usize),
            rng.gen_range(3..=12usize),
            rng.gen_range(3..=12usize),
            rng.gen_range(2..=6usize),
        ];
        let mut net = Mlp::new(&dims, rng);
        // non-zero biases so their gradients are exercised away from init
        for layer in &mut net.layers {
            for b in &mut layer.biases {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        if net.param_count() <= max_params {
            return net;
        }
    }
}

/// Run the finite-difference suite over `cases` random nets.
pub fn run_suite(max_params: usize, cases: usize, seed: u64) -> GradCheckReport {
    let mut max_err = 0.0f64;
    for case in 0..cases {
        let mut rng = derive_rng_indexed(seed, RngDomain::Init, case as u64);
        let actor = random_net(max_params, &mut rng);
        let obs: Vec<f64> = (0..actor.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let action = rng.gen_range(0..actor.output_dim());
        let advantage = rng.gen_range(-2.0..2.0);
        let analytic = actor_gradient(&actor, &obs, action, advantage).expect("valid shapes");
        max_err = max_err.max(max_rel_error_fd(&actor, &analytic, |net| {
            actor_loss(net, &obs, action, advantage)
        }));

        let mut critic = random_net(max_params, &mut rng);
        let last = critic.layers.len() - 1;
        // collapse the head to one output so it is a value net
        let in_dim = critic.layers[last].in_dim;
        critic.layers[last].out_dim = 1;
        critic.layers[last].weights.truncate(in_dim);
        critic.layers[last].biases.truncate(1);
        let obs: Vec<f64> = (0..critic.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let td_target = rng.gen_range(-2.0..2.0);
        let analytic = critic_gradient(&critic, &obs, td_target).expect("valid shapes");
        max_err = max_err.max(max_rel_error_fd(&critic, &analytic, |net| {
            critic_loss(net, &obs, td_target)
        }));
    }
    GradCheckReport { cases, max_rel_error: max_err, threshold: REL_ERROR_THRESHOLD }
}
