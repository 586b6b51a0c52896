use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use marine_pgo::rl_refine::{single_axis_instance, train_policy, write_policy, Encoder, PolicyMethod, TrainConfig, DEFAULT_DIM};

use crate::files;
use crate::Ctx;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Cem,
    Reinforce,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "cem")]
    method: Method,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Embedding size.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// Steps per training episode.
    #[arg(long, default_value_t = 8)]
    episode_budget: usize,
    #[arg(long)]
    out: PathBuf,
}

pub fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let method = match a.method {
        Method::Cem => PolicyMethod::Cem,
        Method::Reinforce => PolicyMethod::Reinforce,
    };
    let cfg = TrainConfig { method, iters: a.iters, seed: ctx.seed, dim: a.dim, episode_budget: a.episode_budget, ..TrainConfig::default() };
    let out = train_policy(&single_axis_instance, &cfg, &Encoder::for_dim(a.dim));
    files::write(&a.out, write_policy(&out.policy, out.method))?;
    ctx.progress(format!("wrote {}", a.out.display()));
    let mut text = format!("method={:?}\niters={}\nparams={}\n", a.method, a.iters, out.policy.params().len()).to_lowercase();
    for (k, r) in out.history.iter().enumerate() {
        text.push_str(&format!("iter.{k}.mean_return={r:.17e}\n"));
    }
    print!("{text}");
    Ok(())
}
