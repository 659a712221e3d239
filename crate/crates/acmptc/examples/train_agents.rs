//! Train one actor-critic agent per stream and checkpoint the result.
//!
//! ```bash
//! cargo run --release --example train_agents
//! ```

use acmptc::checkpoint::Checkpoint;
use acmptc::drl::{observation_dim, ActionSpec};
use acmptc::export::format_real;
use acmptc::sim::{make_scenario, train_agents, ScenarioConfig, ScenarioKind};

fn main() {
    let mut base = ScenarioConfig::default();
    base.agent.episodes = 60;
    base.agent.horizon = 200;
    let cfg = make_scenario(ScenarioKind::Variable, &base);

    println!(
        "training {} agents, {} episodes x {} steps...",
        cfg.streams.len(),
        cfg.agent.episodes,
        cfg.agent.horizon
    );
    let (agents, report) = train_agents(&cfg, 11).expect("valid scenario");

    println!();
    println!("episode  reward  mean_abs_td_error");
    for e in (0..report.episode_rewards.len()).step_by(10) {
        println!(
            "{:>7}  {:>6}  {:>17}",
            e,
            format_real(report.episode_rewards[e]),
            format_real(report.episode_td_errors[e]),
        );
    }
    let first = report.episode_rewards[0];
    let last = *report.episode_rewards.last().unwrap();
    println!();
    println!("first episode reward: {}", format_real(first));
    println!("last episode reward:  {}", format_real(last));

    let checkpoint = Checkpoint::new(
        cfg.agent.clone(),
        observation_dim(cfg.dynamics.n_paths),
        ActionSpec::action_count(cfg.dynamics.n_paths),
        agents,
    );
    let path = std::env::temp_dir().join("acmptc_example_checkpoint.json");
    checkpoint.save(&path).expect("writable temp dir");
    let reloaded = Checkpoint::load(&path).expect("just written");
    assert_eq!(reloaded, checkpoint);
    println!("checkpoint written and reloaded bit-exactly: {}", path.display());
}
