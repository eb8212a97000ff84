//! Plain-text checkpoints.
//!
//! ```text
//! nft-checkpoint v1
//! hidden_size 8
//! steps 4
//! attr_size 3
//! num_labels 3
//! baseline false
//! tensor gnn.msg_w1 8 8
//! <64 space-separated values>
//! ...
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::gnn::GnnConfig;

use super::{ModelConfig, ModelParams};

pub const CHECKPOINT_HEADER: &str = "nft-checkpoint v1";

pub fn write_checkpoint(cfg: &ModelConfig, params: &ModelParams) -> String {
    let mut out = format!(
        "{CHECKPOINT_HEADER}\nhidden_size {}\nsteps {}\nattr_size {}\nnum_labels {}\nbaseline {}\n",
        cfg.gnn.hidden_size, cfg.gnn.steps, cfg.gnn.attr_size, cfg.num_labels, cfg.baseline
    );
    for (name, t) in params.fields() {
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        out.push_str(&format!("tensor {name} {}\n", shape.join(" ")));
        let vals: Vec<String> = t.data().iter().map(f64::to_string).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_checkpoint(text: &str) -> Result<(ModelConfig, ModelParams)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::format(0, format!("checkpoint ends before {what}")))
    };
    let (_, header) = next("the header")?;
    if header.trim() != CHECKPOINT_HEADER {
        return Err(Error::format(
            1,
            format!("expected `{CHECKPOINT_HEADER}`, found `{}`", header.trim()),
        ));
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (ln, line) = next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((ln, v.trim().to_string())),
            _ => Err(Error::format(ln, format!("expected `{key} <value>`"))),
        }
    };
    let mut number = |key: &str| -> Result<usize> {
        let (ln, v) = field(key)?;
        v.parse()
            .map_err(|_| Error::format(ln, format!("{key} `{v}` is not a non-negative integer")))
    };
    let hidden = number("hidden_size")?;
    let steps = number("steps")?;
    let attr = number("attr_size")?;
    let num_labels = number("num_labels")?;
    let (ln, baseline) = field("baseline")?;
    let baseline = baseline
        .parse()
        .map_err(|_| Error::format(ln, format!("baseline `{baseline}` is not true/false")))?;
    let cfg = ModelConfig {
        gnn: GnnConfig::new(hidden, steps, attr)?,
        num_labels,
        baseline,
    };
    cfg.validate()?;

    let mut params = ModelParams::zeros(&cfg);
    for (name, slot) in params.fields_mut() {
        let (ln, line) = next(&name)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("tensor") || parts.next() != Some(name.as_str()) {
            return Err(Error::format(ln, format!("expected `tensor {name} ...`")));
        }
        let shape = parts
            .map(|s| s.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Error::format(ln, format!("bad shape for {name}")))?;
        if shape != slot.shape() {
            return Err(Error::format(
                ln,
                format!("{name} has shape {shape:?}, configuration needs {:?}", slot.shape()),
            ));
        }
        let (ln, line) = next(&name)?;
        let vals = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::format(ln, format!("value of {name}: {e}")))?;
        *slot = Tensor::new(shape, vals).map_err(|e| Error::format(ln, format!("{name}: {e}")))?;
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::format(ln, format!("unexpected trailing line `{extra}`")));
    }
    Ok((cfg, params))
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, params: &ModelParams) -> Result<()> {
    fs::write(path, write_checkpoint(cfg, params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&text).map_err(|e| match e {
        Error::Format { line, message } => Error::Format {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            gnn: GnnConfig::new(3, 2, 2).unwrap(),
            num_labels: 3,
            baseline: true,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = ModelParams::init(&cfg(), 4);
        p.heads.node_b.data_mut()[0] = 1.0 / 3.0;
        p.heads.node_b.data_mut()[1] = -1e-300;
        let text = write_checkpoint(&cfg(), &p);
        assert!(text.starts_with(CHECKPOINT_HEADER));
        let (c, q) = read_checkpoint(&text).unwrap();
        assert_eq!(c, cfg());
        assert_eq!(p, q);
    }

    #[test]
    fn malformed_checkpoints_report_lines() {
        let text = write_checkpoint(&cfg(), &ModelParams::zeros(&cfg()));
        assert!(read_checkpoint("nope\n").is_err());
        let truncated: String = text.lines().take(9).map(|l| format!("{l}\n")).collect();
        assert!(read_checkpoint(&truncated).is_err());
        let bad = text.replacen("tensor gnn.msg_w1 3 3", "tensor gnn.msg_w1 3 4", 1);
        match read_checkpoint(&bad) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let extra = format!("{text}junk\n");
        assert!(read_checkpoint(&extra).is_err());
    }
}
