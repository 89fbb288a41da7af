//! Embedding files.
//!
//! Text layout: a header `count dim` (plus the iteration counter for
//! checkpoints), then one `namespace:key v1 ... vd` line per node. Values are
//! written as the shortest decimal that parses back to the same `f64`, so a
//! text round trip is exact. The binary layout stores the same content.

use std::fmt::Write as _;

use crate::corpus::{Dataset, TimeBinning};
use crate::graphs::{Cardinalities, Namespace, NodeRef};
use crate::mobility::{RouteSet, StayPoints};
use crate::trainer::EmbeddingStore;
use crate::{Error, Result};

/// Printable key of every node, per namespace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeNames {
    names: [Vec<String>; 5],
}

impl NodeNames {
    /// Users and POIs by key, routes by id, periods by bin index, stay points
    /// by their POI key.
    pub fn new(dataset: &Dataset, binning: &TimeBinning, routes: &RouteSet, stays: &StayPoints) -> Self {
        NodeNames {
            names: [
                dataset.users.keys().to_vec(),
                dataset.poi_keys.keys().to_vec(),
                (0..routes.route_count()).map(|r| r.to_string()).collect(),
                (0..binning.bin_count).map(|b| b.to_string()).collect(),
                stays.pois.iter().map(|&p| dataset.poi_keys.key(p).to_string()).collect(),
            ],
        }
    }

    pub fn from_lists(names: [Vec<String>; 5]) -> Self {
        NodeNames { names }
    }

    pub fn name(&self, node: NodeRef) -> &str {
        &self.names[node.ns.index()][node.index as usize]
    }

    pub fn cardinalities(&self) -> Cardinalities {
        Cardinalities(std::array::from_fn(|i| self.names[i].len()))
    }

    fn lookup(&self) -> [std::collections::HashMap<&str, u32>; 5] {
        std::array::from_fn(|i| {
            self.names[i]
                .iter()
                .enumerate()
                .map(|(j, k)| (k.as_str(), j as u32))
                .collect()
        })
    }
}

fn check_shape(store: &EmbeddingStore, names: &NodeNames) -> Result<()> {
    if store.cardinalities() != names.cardinalities() {
        return Err(Error::InvalidArgument(format!(
            "store shape {:?} does not match node names {:?}",
            store.cardinalities().0,
            names.cardinalities().0
        )));
    }
    Ok(())
}

pub fn write_text(store: &EmbeddingStore, names: &NodeNames, iteration: Option<u64>) -> Result<String> {
    check_shape(store, names)?;
    let count: usize = store.cardinalities().0.iter().sum();
    let mut out = format!("{count} {}", store.dim());
    if let Some(it) = iteration {
        let _ = write!(out, " {it}");
    }
    out.push('\n');
    for ns in Namespace::ALL {
        for i in 0..store.rows(ns) {
            let node = NodeRef::new(ns, i as u32);
            let _ = write!(out, "{}:{}", ns, names.name(node));
            for v in store.row(node) {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Parses a text embedding file whose nodes must match `names` exactly.
/// Returns the store and the iteration counter, if present.
pub fn read_text(text: &str, names: &NodeNames) -> Result<(EmbeddingStore, Option<u64>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Empty("embedding file is empty".into()))?;
    let err = |line: usize, m: String| Error::Parse { line, message: m };
    let h: Vec<&str> = header.split_whitespace().collect();
    if !(2..=3).contains(&h.len()) {
        return Err(err(1, "header must be `count dim [iteration]`".into()));
    }
    let count: usize = h[0].parse().map_err(|_| err(1, format!("bad count {:?}", h[0])))?;
    let dim: usize = h[1].parse().map_err(|_| err(1, format!("bad dim {:?}", h[1])))?;
    let iteration = match h.get(2) {
        Some(s) => Some(s.parse::<u64>().map_err(|_| err(1, format!("bad iteration {s:?}")))?),
        None => None,
    };
    let cards = names.cardinalities();
    if count != cards.0.iter().sum::<usize>() {
        return Err(err(1, format!("count {count} does not match the expected node total")));
    }
    if dim == 0 {
        return Err(err(1, "dim must be positive".into()));
    }
    let lookup = names.lookup();
    let mut store = EmbeddingStore::zeros(cards, dim);
    let mut seen: [Vec<bool>; 5] = std::array::from_fn(|i| vec![false; cards.0[i]]);
    let mut rows = 0;
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label = parts.next().unwrap();
        let (ns, key) = label
            .split_once(':')
            .ok_or_else(|| err(n + 1, format!("expected namespace:key, got {label:?}")))?;
        let ns: Namespace = ns.parse().map_err(|_| err(n + 1, format!("unknown namespace {ns:?}")))?;
        let idx = *lookup[ns.index()]
            .get(key)
            .ok_or_else(|| err(n + 1, format!("unknown {ns} key {key:?}")))?;
        if std::mem::replace(&mut seen[ns.index()][idx as usize], true) {
            return Err(err(n + 1, format!("duplicate row {label}")));
        }
        let row = store.row_mut(NodeRef::new(ns, idx));
        let mut k = 0;
        for v in parts {
            if k == dim {
                return Err(err(n + 1, format!("more than {dim} values")));
            }
            row[k] = v.parse().map_err(|_| err(n + 1, format!("bad value {v:?}")))?;
            k += 1;
        }
        if k != dim {
            return Err(err(n + 1, format!("expected {dim} values, got {k}")));
        }
        rows += 1;
    }
    if rows != count {
        return Err(err(1, format!("header declares {count} rows, file has {rows}")));
    }
    Ok((store, iteration))
}

const MAGIC: &[u8; 4] = b"PEB1";

/// Binary form of [`write_text`]: magic, `count dim iteration` as u64 LE
/// (`u64::MAX` for none), then per row the namespace byte, key length (u32),
/// key bytes and `dim` f64 LE values.
pub fn write_binary(store: &EmbeddingStore, names: &NodeNames, iteration: Option<u64>) -> Result<Vec<u8>> {
    check_shape(store, names)?;
    let count: usize = store.cardinalities().0.iter().sum();
    let mut out = Vec::with_capacity(28 + count * (store.dim() * 8 + 16));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    out.extend_from_slice(&(store.dim() as u64).to_le_bytes());
    out.extend_from_slice(&iteration.unwrap_or(u64::MAX).to_le_bytes());
    for ns in Namespace::ALL {
        for i in 0..store.rows(ns) {
            let node = NodeRef::new(ns, i as u32);
            let key = names.name(node).as_bytes();
            out.push(ns.index() as u8);
            out.extend_from_slice(&(key.len() as u32).to_le_bytes());
            out.extend_from_slice(key);
            for v in store.row(node) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_binary(bytes: &[u8], names: &NodeNames) -> Result<(EmbeddingStore, Option<u64>)> {
    let err = |m: &str| Error::Parse {
        line: 0,
        message: m.to_string(),
    };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| err("truncated binary embedding file"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(err("not a binary embedding file"));
    }
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
    let count = u64_at(take(8)?) as usize;
    let dim = u64_at(take(8)?) as usize;
    let iteration = Some(u64_at(take(8)?)).filter(|&i| i != u64::MAX);
    let cards = names.cardinalities();
    if count != cards.0.iter().sum::<usize>() || dim == 0 {
        return Err(err("binary header does not match the expected nodes"));
    }
    let lookup = names.lookup();
    let mut store = EmbeddingStore::zeros(cards, dim);
    for _ in 0..count {
        let ns = *Namespace::ALL
            .get(take(1)?[0] as usize)
            .ok_or_else(|| err("bad namespace byte"))?;
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let key = std::str::from_utf8(take(len)?).map_err(|_| err("key is not UTF-8"))?;
        let idx = *lookup[ns.index()].get(key).ok_or_else(|| err("unknown key"))?;
        let raw = take(dim * 8)?;
        for (v, c) in store.row_mut(NodeRef::new(ns, idx)).iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(c.try_into().unwrap());
        }
    }
    if pos != bytes.len() {
        return Err(err("trailing bytes"));
    }
    Ok((store, iteration))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> NodeNames {
        NodeNames::from_lists([
            vec!["alice".into(), "bob".into()],
            vec!["cafe".into()],
            vec!["0".into()],
            vec!["0".into(), "1".into()],
            vec![],
        ])
    }

    fn store() -> EmbeddingStore {
        EmbeddingStore::init(names().cardinalities(), 3, 5).unwrap()
    }

    #[test]
    fn text_round_trip_exact() {
        let s = store();
        let text = write_text(&s, &names(), Some(42)).unwrap();
        assert!(text.starts_with("6 3 42\nuser:alice "));
        let (back, it) = read_text(&text, &names()).unwrap();
        assert_eq!(back, s);
        assert_eq!(it, Some(42));
    }

    #[test]
    fn binary_round_trip_exact() {
        let s = store();
        let bytes = write_binary(&s, &names(), None).unwrap();
        let (back, it) = read_binary(&bytes, &names()).unwrap();
        assert_eq!(back, s);
        assert_eq!(it, None);
        assert!(read_binary(&bytes[..bytes.len() - 1], &names()).is_err());
    }

    #[test]
    fn malformed_text_rejected() {
        let text = write_text(&store(), &names(), None).unwrap();
        let short: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(read_text(&short, &names()).is_err());
        let bad = text.replace("user:bob", "user:carol");
        assert!(read_text(&bad, &names()).is_err());
        let dup = text.replace("user:bob", "user:alice");
        assert!(read_text(&dup, &names()).is_err());
    }
}
