//! Flat binary weight files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "TCAW"                                  magic, 4 bytes
//! version                                 u32 (currently 1)
//! height width window channels blocks heads   6 x u32
//! per block, f64 arrays in field order:
//!   qkv_weight qkv_bias proj_weight proj_bias
//!   norm1_gamma norm1_beta norm2_gamma norm2_beta
//!   mlp_fc1_weight mlp_fc1_bias mlp_fc2_weight mlp_fc2_bias
//! ```
//!
//! Save followed by load round-trips bit-exactly. Malformed files fail with
//! the byte offset of the problem.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BlockWeights, GridSpec, StageModel, MLP_RATIO};
use crate::error::{Result, TcaError};
use crate::numerics::DenseMatrix;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"TCAW";
pub const WEIGHTS_VERSION: u32 = 1;

struct Reader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(TcaError::Format {
                offset: self.offset,
                msg: "unexpected end of file".into(),
            }),
            Err(e) => Err(TcaError::Format {
                offset: self.offset,
                msg: format!("read failed: {e}"),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.fill(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 8];
        self.fill(&mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DenseMatrix> {
        let data = self.f64_vec(rows * cols)?;
        DenseMatrix::from_vec(rows, cols, data)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TcaError {
    TcaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write a model to `path`; the result reloads bit-exactly.
pub fn save_weights(model: &StageModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
        w.write_all(bytes).map_err(|e| io_err(path, e))
    };

    write(&mut w, &WEIGHTS_MAGIC)?;
    write(&mut w, &WEIGHTS_VERSION.to_le_bytes())?;
    let spec = &model.spec;
    let heads = model.blocks.first().map_or(1, |b| b.head_count);
    for v in [
        spec.height_tokens,
        spec.width_tokens,
        spec.window_side,
        spec.channels,
        model.blocks.len(),
        heads,
    ] {
        write(&mut w, &(v as u32).to_le_bytes())?;
    }
    for block in &model.blocks {
        if block.head_count != heads {
            return Err(TcaError::Config(
                "all blocks must share one head count".into(),
            ));
        }
        for slice in block_field_order(block) {
            for v in slice {
                write(&mut w, &v.to_le_bytes())?;
            }
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn block_field_order(b: &BlockWeights) -> [&[f64]; 12] {
    [
        b.qkv_weight.data(),
        &b.qkv_bias,
        b.proj_weight.data(),
        &b.proj_bias,
        &b.norm1_gamma,
        &b.norm1_beta,
        &b.norm2_gamma,
        &b.norm2_beta,
        b.mlp_fc1_weight.data(),
        &b.mlp_fc1_bias,
        b.mlp_fc2_weight.data(),
        &b.mlp_fc2_bias,
    ]
}

/// Load a model saved by [`save_weights`].
pub fn load_weights(path: &Path) -> Result<StageModel> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
        offset: 0,
    };

    let mut magic = [0u8; 4];
    r.fill(&mut magic)?;
    if magic != WEIGHTS_MAGIC {
        return Err(TcaError::Format {
            offset: 0,
            msg: format!("bad magic {magic:02x?}, expected \"TCAW\""),
        });
    }
    let version_at = r.offset;
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(TcaError::Format {
            offset: version_at,
            msg: format!("unsupported version {version}"),
        });
    }

    let mut header = [0usize; 6];
    let mut header_offsets = [0u64; 6];
    for i in 0..6 {
        header_offsets[i] = r.offset;
        header[i] = r.u32()? as usize;
    }
    let [height, width, window, channels, blocks, heads] = header;
    let field_err = |i: usize, msg: String| TcaError::Format {
        offset: header_offsets[i],
        msg,
    };
    if window == 0 || height == 0 || width == 0 || channels == 0 {
        return Err(field_err(0, "zero dimension in header".into()));
    }
    if height % window != 0 || width % window != 0 {
        return Err(field_err(
            2,
            format!("grid {height}x{width} not divisible by window {window}"),
        ));
    }
    if blocks == 0 {
        return Err(field_err(4, "zero block count".into()));
    }
    if heads == 0 || channels % heads != 0 {
        return Err(field_err(
            5,
            format!("channels {channels} not divisible by {heads} heads"),
        ));
    }
    let spec = GridSpec::new(height, width, window, channels)?;

    let l = channels;
    let mut model_blocks = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        model_blocks.push(BlockWeights {
            qkv_weight: r.matrix(l, 3 * l)?,
            qkv_bias: r.f64_vec(3 * l)?,
            proj_weight: r.matrix(l, l)?,
            proj_bias: r.f64_vec(l)?,
            norm1_gamma: r.f64_vec(l)?,
            norm1_beta: r.f64_vec(l)?,
            norm2_gamma: r.f64_vec(l)?,
            norm2_beta: r.f64_vec(l)?,
            mlp_fc1_weight: r.matrix(l, MLP_RATIO * l)?,
            mlp_fc1_bias: r.f64_vec(MLP_RATIO * l)?,
            mlp_fc2_weight: r.matrix(MLP_RATIO * l, l)?,
            mlp_fc2_bias: r.f64_vec(l)?,
            head_count: heads,
        });
    }

    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe).map_err(|e| TcaError::Format {
        offset: r.offset,
        msg: format!("read failed: {e}"),
    })? != 0
    {
        return Err(TcaError::Format {
            offset: r.offset,
            msg: "trailing data after last block".into(),
        });
    }

    Ok(StageModel {
        spec,
        blocks: model_blocks,
    })
}
