//! Binary index file.
//!
//! ```text
//! "SYLR" | version u16 | dim u32 | min_degree u32
//! n_statutes u32 | { id str | text str | dim × f32 }*
//! n_cases u32    | { id str | text str | dim × f32 }*
//! n_links u32    | { statute ordinal u32 | case ordinal u32 | supplemented u8 }*
//! ```
//!
//! All integers and floats little-endian; `str` is a u32 byte length followed
//! by UTF-8. Links are listed statute by statute in link order, so reading
//! them back in file order reproduces each list exactly.

use std::fs;
use std::path::Path;

use super::{KnowledgeTree, Link, Node, TreeError};
use crate::binio::{Reader, Writer};

pub const INDEX_MAGIC: &[u8; 4] = b"SYLR";
pub const INDEX_VERSION: u16 = 1;

impl KnowledgeTree {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(INDEX_MAGIC);
        w.u16(INDEX_VERSION);
        w.u32(self.dim as u32);
        w.u32(self.min_degree as u32);
        for nodes in [&self.statutes, &self.cases] {
            w.u32(nodes.len() as u32);
            for n in nodes.iter() {
                w.str(&n.id);
                w.str(&n.text);
                w.f32s(n.embedding.iter().copied());
            }
        }
        w.u32(self.links.iter().map(Vec::len).sum::<usize>() as u32);
        for (s, list) in self.links.iter().enumerate() {
            for l in list {
                w.u32(s as u32);
                w.u32(l.case as u32);
                w.u8(l.supplemented as u8);
            }
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, TreeError> {
        let corrupt = TreeError::CorruptIndex;
        let mut r = Reader::new(data);
        if r.take(4).map_err(corrupt)? != INDEX_MAGIC {
            return Err(TreeError::CorruptIndex("bad magic".into()));
        }
        let version = r.u16().map_err(corrupt)?;
        if version != INDEX_VERSION {
            return Err(TreeError::VersionMismatch {
                found: version,
                expected: INDEX_VERSION,
            });
        }
        let dim = r.u32().map_err(corrupt)? as usize;
        let min_degree = r.u32().map_err(corrupt)? as usize;
        if dim == 0 {
            return Err(TreeError::CorruptIndex("zero dimension".into()));
        }
        let read_nodes = |r: &mut Reader| -> Result<Vec<Node>, String> {
            let n = r.u32()? as usize;
            r.expect_at_least(n, 8 + 4 * dim)?;
            (0..n)
                .map(|_| {
                    Ok(Node {
                        id: r.str()?,
                        text: r.str()?,
                        embedding: r.f32s(dim)?,
                    })
                })
                .collect()
        };
        let statutes = read_nodes(&mut r).map_err(corrupt)?;
        let cases = read_nodes(&mut r).map_err(corrupt)?;

        let n_links = r.u32().map_err(corrupt)? as usize;
        r.expect_at_least(n_links, 9).map_err(corrupt)?;
        let mut links = vec![Vec::new(); statutes.len()];
        for _ in 0..n_links {
            let s = r.u32().map_err(corrupt)? as usize;
            let case = r.u32().map_err(corrupt)? as usize;
            let supplemented = match r.u8().map_err(corrupt)? {
                0 => false,
                1 => true,
                f => return Err(TreeError::CorruptIndex(format!("bad link flag {f}"))),
            };
            links
                .get_mut(s)
                .ok_or_else(|| {
                    TreeError::CorruptIndex(format!("statute ordinal {s} out of range"))
                })?
                .push(Link { case, supplemented });
        }
        r.finish().map_err(corrupt)?;

        let tree = KnowledgeTree::from_parts(dim, min_degree, statutes, cases, links);
        tree.validate().map_err(corrupt)?;
        Ok(tree)
    }

    pub fn save(&self, path: &Path) -> Result<(), TreeError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TreeError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_synthetic;
    use crate::HashEmbedder;

    fn tree() -> KnowledgeTree {
        let w = gen_synthetic(3, 4, 3, 2).unwrap();
        KnowledgeTree::build(&w.statutes, &w.cases, &HashEmbedder::new(64).unwrap(), 5).unwrap()
    }

    #[test]
    fn save_load_round_trip_and_determinism() {
        let t = tree();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.idx"), dir.path().join("b.idx"));
        t.save(&a).unwrap();
        t.save(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let loaded = KnowledgeTree::load(&a).unwrap();
        assert_eq!(loaded, t);
        loaded.validate().unwrap();
        assert!(t.supplemented_count() > 0);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("missing-dir").join("x.idx");
        assert!(matches!(tree().save(&p), Err(TreeError::Io(_))));
        assert!(matches!(KnowledgeTree::load(&p), Err(TreeError::Io(_))));
    }

    #[test]
    fn truncation_is_corrupt_at_every_length() {
        let bytes = tree().to_bytes();
        for len in 0..bytes.len() {
            match KnowledgeTree::from_bytes(&bytes[..len]) {
                Err(TreeError::CorruptIndex(_)) => {}
                other => panic!("len {len}: {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_version() {
        let mut bytes = tree().to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            KnowledgeTree::from_bytes(&bytes),
            Err(TreeError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn invariant_violations_rejected() {
        let t = tree();
        // drop all links of statute 0 -> degree invariant fails
        let mut broken = t.clone();
        broken.links[0].clear();
        assert!(matches!(
            KnowledgeTree::from_bytes(&broken.to_bytes()),
            Err(TreeError::CorruptIndex(_))
        ));
        // duplicate link
        let mut dup = t.clone();
        let first = dup.links[0][0];
        dup.links[0].push(first);
        assert!(KnowledgeTree::from_bytes(&dup.to_bytes()).is_err());
        // non-unit embedding
        let mut scaled = t;
        scaled.cases[0].embedding[0] += 0.5;
        assert!(KnowledgeTree::from_bytes(&scaled.to_bytes()).is_err());
        // trailing garbage
        let mut extra = tree().to_bytes();
        extra.push(0);
        assert!(KnowledgeTree::from_bytes(&extra).is_err());
    }
}
