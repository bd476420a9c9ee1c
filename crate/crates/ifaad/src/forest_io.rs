//! Versioned little-endian binary format for forests.
//!
//! ```text
//! magic "IFAF" | version u16 | scheme u8 | seed u64 | subsample u64
//! | num_features u64 | num_trees u64
//! per tree:  node_count u64, then per node in pre-order:
//!   global_index u64 | kind u8 (0 leaf, 1 internal) | depth u32
//!   | train_count u64 | score f64
//!   internal only: feature u64 | threshold f64 | left u64 | right u64
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ifaad_core::{Forest, Node, NodeKind, Tree, WeightScheme};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IFAF";
pub const VERSION: u16 = 1;

const LEAF_BYTES: usize = 8 + 1 + 4 + 8 + 8;

pub fn serialize_forest(forest: &Forest) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + forest.num_nodes() * (LEAF_BYTES + 32));
    out.extend_from_slice(MAGIC);
    // Writes into a Vec cannot fail.
    let w = &mut out;
    w.write_u16::<LittleEndian>(VERSION).unwrap();
    w.write_u8(forest.scheme().tag()).unwrap();
    w.write_u64::<LittleEndian>(forest.seed()).unwrap();
    w.write_u64::<LittleEndian>(forest.subsample_size() as u64).unwrap();
    w.write_u64::<LittleEndian>(forest.num_features() as u64).unwrap();
    w.write_u64::<LittleEndian>(forest.trees().len() as u64).unwrap();
    for tree in forest.trees() {
        w.write_u64::<LittleEndian>(tree.len() as u64).unwrap();
        for node in tree.nodes() {
            w.write_u64::<LittleEndian>(node.global_index as u64).unwrap();
            w.write_u8(u8::from(!node.is_leaf())).unwrap();
            w.write_u32::<LittleEndian>(node.depth).unwrap();
            w.write_u64::<LittleEndian>(node.train_count as u64).unwrap();
            w.write_u64::<LittleEndian>(node.score.to_bits()).unwrap();
            if let NodeKind::Internal {
                feature,
                threshold,
                left,
                right,
            } = node.kind
            {
                w.write_u64::<LittleEndian>(feature as u64).unwrap();
                w.write_u64::<LittleEndian>(threshold.to_bits()).unwrap();
                w.write_u64::<LittleEndian>(left as u64).unwrap();
                w.write_u64::<LittleEndian>(right as u64).unwrap();
            }
        }
    }
    out
}

fn eof(e: std::io::Error) -> Error {
    Error::Format(format!("truncated forest stream: {e}"))
}

fn read_usize(r: &mut Cursor<&[u8]>) -> Result<usize> {
    let v = r.read_u64::<LittleEndian>().map_err(eof)?;
    usize::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit in usize")))
}

fn read_f64(r: &mut Cursor<&[u8]>) -> Result<f64> {
    Ok(f64::from_bits(r.read_u64::<LittleEndian>().map_err(eof)?))
}

pub fn deserialize_forest(bytes: &[u8]) -> Result<Forest> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a forest file (bad magic)".into()));
    }
    let version = r.read_u16::<LittleEndian>().map_err(eof)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported forest format version {version}")));
    }
    let tag = r.read_u8().map_err(eof)?;
    let scheme =
        WeightScheme::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown weight scheme tag {tag}")))?;
    let seed = r.read_u64::<LittleEndian>().map_err(eof)?;
    let subsample = read_usize(&mut r)?;
    let num_features = read_usize(&mut r)?;
    let num_trees = read_usize(&mut r)?;

    let remaining = |r: &Cursor<&[u8]>| bytes.len() - r.position() as usize;
    if num_trees > remaining(&r) / 8 {
        return Err(Error::Format(format!("tree count {num_trees} exceeds stream size")));
    }
    let mut trees = Vec::with_capacity(num_trees);
    let mut offset = 0;
    for _ in 0..num_trees {
        let count = read_usize(&mut r)?;
        if count > remaining(&r) / LEAF_BYTES {
            return Err(Error::Format(format!("node count {count} exceeds stream size")));
        }
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let global_index = read_usize(&mut r)?;
            let kind_tag = r.read_u8().map_err(eof)?;
            let depth = r.read_u32::<LittleEndian>().map_err(eof)?;
            let train_count = read_usize(&mut r)?;
            let score = read_f64(&mut r)?;
            let kind = match kind_tag {
                0 => NodeKind::Leaf,
                1 => NodeKind::Internal {
                    feature: read_usize(&mut r)?,
                    threshold: read_f64(&mut r)?,
                    left: read_usize(&mut r)?,
                    right: read_usize(&mut r)?,
                },
                other => return Err(Error::Format(format!("unknown node kind {other}"))),
            };
            nodes.push(Node {
                global_index,
                depth,
                train_count,
                score,
                kind,
            });
        }
        trees.push(Tree::from_nodes(offset, nodes));
        offset += count;
    }
    if remaining(&r) != 0 {
        return Err(Error::Format(format!("{} trailing bytes", remaining(&r))));
    }
    Forest::from_trees(trees, num_features, subsample, scheme, seed)
        .map_err(|e| Error::Format(format!("inconsistent forest: {e}")))
}
