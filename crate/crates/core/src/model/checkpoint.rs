//! Versioned binary checkpoint: header (magic, version, schema, hyperparams)
//! followed by every parameter block as little-endian f64 in block order.
//! A human-readable `<path>.schema.txt` sidecar is written next to it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{AttnScale, Parameterized};
use crate::model::{CriteriaEncoding, FieldDef, FieldKind, FieldSchema, Hyperparams, Model};

const MAGIC: &[u8; 8] = b"GRPRECKP";
const VERSION: u32 = 1;

impl Model {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_hyperparams(&mut w, &self.hp)?;
        write_schema(&mut w, &self.schema)?;
        w.write_all(&(self.param_count() as u64).to_le_bytes())?;
        for b in 0..self.block_count() {
            for i in 0..self.block_len(b) {
                w.write_all(&self.param(b, i).to_le_bytes())?;
            }
        }
        w.flush()?;
        write_sidecar(path, self)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Model> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{}: bad magic bytes (not a model checkpoint)",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (this build reads {})",
                version, VERSION
            )));
        }
        let hp = read_hyperparams(&mut r)?;
        let schema = read_schema(&mut r)?;
        let expected = read_u64(&mut r)? as usize;
        let mut model = Model::build(schema, hp)?;
        if model.param_count() != expected {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match header ({})",
                model.param_count(),
                expected
            )));
        }
        for b in 0..model.block_count() {
            for i in 0..model.block_len(b) {
                model.set_param(b, i, read_f64(&mut r)?);
            }
        }
        Ok(model)
    }
}

fn write_hyperparams(w: &mut impl Write, hp: &Hyperparams) -> Result<()> {
    for v in [hp.d, hp.heads, hp.d_h, hp.dense_width] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&hp.layernorm_eps.to_le_bytes())?;
    w.write_all(&hp.seed.to_le_bytes())?;
    w.write_all(&[
        match hp.attn_scale {
            AttnScale::PerHead => 0u8,
            AttnScale::ModelDim => 1,
        },
        match hp.criteria_encoding {
            CriteriaEncoding::Categorical => 0u8,
            CriteriaEncoding::Ordinal => 1,
        },
    ])?;
    Ok(())
}

fn read_hyperparams(r: &mut impl Read) -> Result<Hyperparams> {
    let d = read_u64(r)? as usize;
    let heads = read_u64(r)? as usize;
    let d_h = read_u64(r)? as usize;
    let dense_width = read_u64(r)? as usize;
    let layernorm_eps = read_f64(r)?;
    let seed = read_u64(r)?;
    let mut tags = [0u8; 2];
    read_exact(r, &mut tags)?;
    let attn_scale = match tags[0] {
        0 => AttnScale::PerHead,
        1 => AttnScale::ModelDim,
        t => return Err(Error::Checkpoint(format!("unknown attention scale tag {}", t))),
    };
    let criteria_encoding = match tags[1] {
        0 => CriteriaEncoding::Categorical,
        1 => CriteriaEncoding::Ordinal,
        t => return Err(Error::Checkpoint(format!("unknown criteria encoding tag {}", t))),
    };
    Ok(Hyperparams {
        d,
        heads,
        d_h,
        dense_width,
        layernorm_eps,
        seed,
        attn_scale,
        criteria_encoding,
    })
}

fn write_schema(w: &mut impl Write, schema: &FieldSchema) -> Result<()> {
    w.write_all(&(schema.len() as u32).to_le_bytes())?;
    for f in schema.fields() {
        let name = f.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[match f.kind {
            FieldKind::Group => 0u8,
            FieldKind::Item => 1,
            FieldKind::Context => 2,
            FieldKind::Criterion => 3,
        }])?;
        w.write_all(&(f.vocab_size as u64).to_le_bytes())?;
    }
    Ok(())
}

fn read_schema(r: &mut impl Read) -> Result<FieldSchema> {
    let n = read_u32(r)? as usize;
    if n > 4096 {
        return Err(Error::Checkpoint(format!("implausible field count {}", n)));
    }
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        let len = read_u32(r)? as usize;
        if len > 4096 {
            return Err(Error::Checkpoint(format!("implausible name length {}", len)));
        }
        let mut buf = vec![0u8; len];
        read_exact(r, &mut buf)?;
        let name = String::from_utf8(buf)
            .map_err(|_| Error::Checkpoint("field name is not UTF-8".into()))?;
        let mut kind = [0u8; 1];
        read_exact(r, &mut kind)?;
        let kind = match kind[0] {
            0 => FieldKind::Group,
            1 => FieldKind::Item,
            2 => FieldKind::Context,
            3 => FieldKind::Criterion,
            t => return Err(Error::Checkpoint(format!("unknown field kind tag {}", t))),
        };
        let vocab_size = read_u64(r)? as usize;
        fields.push(FieldDef { name, kind, vocab_size });
    }
    FieldSchema::new(fields)
}

fn write_sidecar(ckpt_path: &Path, model: &Model) -> Result<()> {
    let mut side = ckpt_path.as_os_str().to_owned();
    side.push(".schema.txt");
    let mut w = BufWriter::new(File::create(Path::new(&side))?);
    writeln!(w, "checkpoint schema (version {})", VERSION)?;
    writeln!(
        w,
        "d={} heads={} d_h={} dense_width={} layernorm_eps={} seed={}",
        model.hp.d,
        model.hp.heads,
        model.hp.d_h,
        model.hp.dense_width,
        model.hp.layernorm_eps,
        model.hp.seed
    )?;
    writeln!(
        w,
        "attn_scale={} criteria_encoding={}",
        match model.hp.attn_scale {
            AttnScale::PerHead => "d_h",
            AttnScale::ModelDim => "d",
        },
        match model.hp.criteria_encoding {
            CriteriaEncoding::Categorical => "categorical",
            CriteriaEncoding::Ordinal => "ordinal",
        }
    )?;
    for f in model.schema.fields() {
        writeln!(w, "field {} kind={} vocab_size={}", f.name, f.kind.label(), f.vocab_size)?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {}", e)))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
