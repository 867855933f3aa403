use std::fs::File;
use std::io::BufWriter;

use anyhow::Context;
use distsum_core::lexical::VocabConfig;
use distsum_core::training::{train, write_loss_log};
use distsum_core::{EncoderConfig, ModelF32, QueryMode, TrainConfig, TrainError, Vocabulary};

use super::{hierarchy, instances, out_dir};
use crate::args::TrainArgs;
use crate::exit::usage;
use crate::manifest::ManifestBuilder;

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const LOSS_LOG: &str = "loss.tsv";

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let mode: QueryMode = args.query_mode.parse().map_err(|e: distsum_core::ModelError| usage(e.to_string()))?;
    let config = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        downsample_p: args.downsample_p,
        query_mode: mode,
        max_grad_norm: (args.clip > 0.0).then_some(args.clip),
        probability_clamp: args.clamp,
        rebalance: !args.no_rebalance,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;

    let h = hierarchy(&args.hierarchy, args.gem.as_deref())?;
    let data = instances(&args.instances)?;
    if data.is_empty() {
        anyhow::bail!("{} holds no instances", args.instances.display());
    }
    let texts = data
        .iter()
        .flat_map(|i| i.sentences.iter().map(|s| s.text.as_str()))
        .chain(h.nodes().iter().map(|n| n.description.as_str()));
    let vocab = Vocabulary::build(
        texts,
        VocabConfig {
            max_size: args.vocab_size,
            min_frequency: args.min_count,
        },
    );
    let mut enc = EncoderConfig::new(vocab.len());
    enc.d_model = args.d_model;
    enc.n_layers = args.n_layers;
    enc.n_heads = args.n_heads;
    enc.d_ff = args.d_ff;
    enc.d_hidden = args.d_hidden;
    enc.max_tokens_per_sentence = args.max_tokens;
    enc.max_sentences_per_instance = args.max_sentences;
    enc.validate().map_err(|e| usage(e.to_string()))?;
    let model = ModelF32::new(enc, vocab, &h, mode, args.seed)?;

    out_dir(&args.out)?;
    let mut outputs = vec![checkpoint_name(0)];
    model.save(&args.out.join(checkpoint_name(0)))?;
    let out = args.out.clone();
    let outcome = train(model, &data, &h, &config, |epoch, m| {
        m.save(&out.join(checkpoint_name(epoch))).map_err(TrainError::from)?;
        tracing::info!(epoch, "saved checkpoint");
        Ok(())
    })?;
    outputs.extend((1..=args.epochs).map(checkpoint_name));
    outcome.model.save(&args.out.join(FINAL_CHECKPOINT))?;
    let log_path = args.out.join(LOSS_LOG);
    let f = File::create(&log_path).with_context(|| format!("writing {}", log_path.display()))?;
    write_loss_log(BufWriter::new(f), &outcome.log)?;
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        tracing::info!(epoch = e + 1, loss = l, "epoch mean loss");
    }
    outputs.push(FINAL_CHECKPOINT.into());
    outputs.push(LOSS_LOG.into());

    let mut m = ManifestBuilder::new("train", &serde_json::json!({"args": &args, "train": &config}))?;
    m.seed("init", args.seed)
        .seed("train", config.seed)
        .input(&args.instances)?
        .input(&args.hierarchy)?;
    if let Some(g) = &args.gem {
        m.input(g)?;
    }
    m.finish(&args.out, &outputs)?;
    Ok(())
}
