use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde_json::json;
use svcforge::eval::{cosine_similarity, f0_metrics, EmbeddingVector};
use svcforge::{F0Track, Tensor};

use crate::util::{CliError, CliResult};

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Cosine similarity of speaker embeddings (SVCF, one per row).
    Cossim(CossimArgs),
    /// F0 RMSE (cents) and voicing disagreement between two tracks.
    F0(F0Args),
}

#[derive(Debug, Args)]
pub struct CossimArgs {
    /// Embeddings `[d]` or `[N, d]`.
    #[arg(long)]
    a: PathBuf,
    /// Embeddings with the same shape as `--a`.
    #[arg(long)]
    b: PathBuf,
}

#[derive(Debug, Args)]
pub struct F0Args {
    /// F0 track `[T, 2]` (SVCF).
    #[arg(long)]
    a: PathBuf,
    /// F0 track `[T, 2]` (SVCF).
    #[arg(long)]
    b: PathBuf,
}

fn rows(t: &Tensor, name: &str) -> CliResult<Vec<EmbeddingVector>> {
    let data = t.to_f64();
    match t.dims() {
        [_] => Ok(vec![EmbeddingVector::new(data, format!("{name}[0]"))?]),
        [n, d] => (0..*n)
            .map(|i| Ok(EmbeddingVector::new(data[i * d..(i + 1) * d].to_vec(), format!("{name}[{i}]"))?))
            .collect(),
        other => Err(CliError::Data(format!("{name}: expected rank 1 or 2, got {other:?}"))),
    }
}

pub fn run(c: EvalCommand) -> CliResult<serde_json::Value> {
    match c {
        EvalCommand::Cossim(a) => {
            let ta = Tensor::read(&a.a)?;
            let tb = Tensor::read(&a.b)?;
            if ta.dims() != tb.dims() {
                return Err(CliError::Data(format!(
                    "shapes differ: {:?} vs {:?}",
                    ta.dims(),
                    tb.dims()
                )));
            }
            let (ra, rb) = (rows(&ta, "a")?, rows(&tb, "b")?);
            let sims: Vec<f64> = ra
                .iter()
                .zip(&rb)
                .map(|(x, y)| cosine_similarity(x, y))
                .collect::<Result<_, _>>()?;
            let mean = sims.iter().sum::<f64>() / sims.len() as f64;
            Ok(json!({ "command": "eval cossim", "pairs": sims.len(), "mean": mean, "per_pair": sims }))
        }
        EvalCommand::F0(a) => {
            let ta = F0Track::from_tensor(&Tensor::read(&a.a)?)?;
            let tb = F0Track::from_tensor(&Tensor::read(&a.b)?)?;
            let m = f0_metrics(&ta, &tb)?;
            Ok(json!({ "command": "eval f0", "metrics": m }))
        }
    }
}
