//! Prompt-bank checkpoints: a text header followed by the parameter blocks
//! in fixed order (context blocks, d_src, d_tgt), then the fixed class-token
//! and template rows. Values carry 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::prompt_bank::{PromptBank, PromptConfig, PromptMode};

const MAGIC: &str = "daplkit-checkpoint";
const VERSION: u32 = 1;

fn write_block(out: &mut String, name: &str, block: &Array2<f64>) {
    let _ = writeln!(out, "block {name} {} {}", block.nrows(), block.ncols());
    for row in block.outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
}

pub fn render_checkpoint(bank: &PromptBank) -> String {
    let cfg = bank.config();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "mode {}", cfg.mode);
    let _ = writeln!(out, "classes {}", cfg.num_classes);
    let _ = writeln!(out, "m1 {}", cfg.m1);
    let _ = writeln!(out, "m2 {}", cfg.m2);
    let _ = writeln!(out, "embed_dim {}", cfg.embed_dim);
    let _ = writeln!(out, "init_std {:.16e}", cfg.init_std);
    for block in bank.context() {
        write_block(&mut out, "context", block);
    }
    write_block(
        &mut out,
        "d_src",
        bank.domain_context(crate::prompt_bank::DomainId::Source),
    );
    write_block(
        &mut out,
        "d_tgt",
        bank.domain_context(crate::prompt_bank::DomainId::Target),
    );
    write_block(&mut out, "class_tokens", bank.class_tokens());
    write_block(&mut out, "template", bank.template());
    out
}

pub fn save_checkpoint(bank: &PromptBank, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_checkpoint(bank))?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            if !line.trim().is_empty() {
                return Ok((i + 1, line.trim()));
            }
        }
        Err(Error::Checkpoint("unexpected end of checkpoint".into()))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let (n, line) = self.next()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(Error::Checkpoint(format!("line {n}: expected `{key} <value>`"))),
        }
    }

    fn block(&mut self, name: &str, want: (usize, usize)) -> Result<Array2<f64>> {
        let (n, line) = self.next()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "block" || fields[1] != name {
            return Err(Error::Checkpoint(format!("line {n}: expected block `{name}`")));
        }
        let rows: usize = fields[2]
            .parse()
            .map_err(|_| Error::Checkpoint(format!("line {n}: bad row count")))?;
        let cols: usize = fields[3]
            .parse()
            .map_err(|_| Error::Checkpoint(format!("line {n}: bad column count")))?;
        if (rows, cols) != want {
            return Err(Error::Checkpoint(format!(
                "block `{name}` has shape ({rows}, {cols}) but the header implies {want:?}"
            )));
        }
        let mut block = Array2::zeros((rows, cols));
        for r in 0..rows {
            let (n, line) = self.next()?;
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != cols {
                return Err(Error::Checkpoint(format!(
                    "line {n}: expected {cols} values, found {}",
                    cells.len()
                )));
            }
            for (c, cell) in cells.iter().enumerate() {
                block[[r, c]] = cell
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("line {n}: bad value `{cell}`")))?;
            }
        }
        Ok(block)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Checkpoint(format!("bad value for `{key}`: `{v}`")))
}

pub fn parse_checkpoint(text: &str) -> Result<(PromptBank, PromptConfig)> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, magic) = lines.next()?;
    match magic.split_once(' ') {
        Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
        Some((MAGIC, v)) => {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version `{v}`")));
        }
        _ => return Err(Error::Checkpoint("not a daplkit checkpoint".into())),
    }
    let mode: PromptMode = lines
        .keyed("mode")?
        .parse()
        .map_err(|e: Error| Error::Checkpoint(e.to_string()))?;
    let num_classes = parse_num("classes", lines.keyed("classes")?)?;
    let m1 = parse_num("m1", lines.keyed("m1")?)?;
    let m2 = parse_num("m2", lines.keyed("m2")?)?;
    let embed_dim = parse_num("embed_dim", lines.keyed("embed_dim")?)?;
    let init_std = parse_num("init_std", lines.keyed("init_std")?)?;
    let cfg = PromptConfig {
        mode,
        m1,
        m2,
        num_classes,
        embed_dim,
        init_std,
    };
    cfg.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

    let n_context = match mode {
        PromptMode::Manual => 0,
        m if m.is_class_specific() => num_classes,
        _ => 1,
    };
    let context = (0..n_context)
        .map(|_| lines.block("context", (m1, embed_dim)))
        .collect::<Result<Vec<_>>>()?;
    let d_src = lines.block("d_src", (m2, embed_dim))?;
    let d_tgt = lines.block("d_tgt", (m2, embed_dim))?;
    let class_tokens = lines.block("class_tokens", (num_classes, embed_dim))?;
    let template_rows = if mode == PromptMode::Manual {
        crate::encoders::MANUAL_TEMPLATE.len()
    } else {
        0
    };
    let template = lines.block("template", (template_rows, embed_dim))?;
    if let Ok((n, _)) = lines.next() {
        return Err(Error::Checkpoint(format!("line {n}: trailing content")));
    }
    let bank = PromptBank::from_parts(cfg.clone(), context, d_src, d_tgt, class_tokens, template)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((bank, cfg))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(PromptBank, PromptConfig)> {
    parse_checkpoint(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{class_name, TokenTable};

    fn bank(mode: PromptMode, m1: usize, m2: usize) -> PromptBank {
        let tokens = TokenTable::for_classes(3, 6, 2).unwrap();
        let names: Vec<String> = (0..3).map(class_name).collect();
        let mut cfg = PromptConfig::new(mode, m1, m2, 3, 6);
        cfg.init_std = 0.7;
        PromptBank::init(&cfg, &tokens, &names, 5).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for b in [
            bank(PromptMode::ClassSpecificDsc, 4, 2),
            bank(PromptMode::Unified, 3, 0),
            bank(PromptMode::Manual, 0, 0),
        ] {
            let (back, cfg) = parse_checkpoint(&render_checkpoint(&b)).unwrap();
            assert_eq!(&cfg, b.config());
            assert_eq!(back, b);
        }
    }

    #[test]
    fn manual_checkpoint_has_no_learnable_blocks() {
        let text = render_checkpoint(&bank(PromptMode::Manual, 0, 0));
        assert!(!text.contains("block context"));
        assert!(text.contains("block d_src 0 6"));
        let (b, _) = parse_checkpoint(&text).unwrap();
        assert_eq!(b.learnable_param_count(), 0);
    }

    #[test]
    fn header_shape_mismatch() {
        let text = render_checkpoint(&bank(PromptMode::UnifiedDsc, 4, 2)).replace("m1 4", "m1 5");
        assert!(matches!(parse_checkpoint(&text), Err(Error::Checkpoint(_))));
        let text = render_checkpoint(&bank(PromptMode::UnifiedDsc, 4, 2))
            .replace("daplkit-checkpoint 1", "daplkit-checkpoint 9");
        assert!(matches!(parse_checkpoint(&text), Err(Error::Checkpoint(_))));
    }
}
