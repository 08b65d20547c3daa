//! Reward cache persistence: one `plan;speedup;seconds` record per line,
//! with a fourth `timeout` field on evaluations that hit the cap.

use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, Context};
use bitweave_core::env::{RewardCache, RewardCacheEntry};

pub fn write_cache<W: Write>(cache: &RewardCache, mut out: W) -> std::io::Result<()> {
    for (plan, e) in cache.iter() {
        // `{:?}` prints the shortest string that parses back to the same f64
        write!(out, "{plan};{:?};{:?}", e.speedup, e.seconds)?;
        if e.timed_out {
            write!(out, ";timeout")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn read_cache<R: BufRead>(reader: R) -> anyhow::Result<RewardCache> {
    let mut cache = RewardCache::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(';').collect();
        let timed_out = match fields.get(3) {
            None => false,
            Some(&"timeout") => true,
            Some(other) => bail!("line {}: unknown flag {other:?}", i + 1),
        };
        if !(3..=4).contains(&fields.len()) {
            bail!("line {}: expected plan;speedup;seconds", i + 1);
        }
        let speedup: f64 = fields[1].parse().with_context(|| format!("line {}: speedup", i + 1))?;
        let seconds: f64 = fields[2].parse().with_context(|| format!("line {}: seconds", i + 1))?;
        cache.insert_key(fields[0].to_string(), RewardCacheEntry { speedup, seconds, timed_out });
    }
    Ok(cache)
}

pub fn save_cache(cache: &RewardCache, path: &Path) -> anyhow::Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("{}", path.display()))?;
    write_cache(cache, std::io::BufWriter::new(file))?;
    Ok(())
}

/// A missing file is an empty cache.
pub fn load_cache(path: &Path) -> anyhow::Result<RewardCache> {
    match std::fs::File::open(path) {
        Ok(f) => read_cache(std::io::BufReader::new(f)).with_context(|| format!("{}", path.display())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(RewardCache::new()),
        Err(e) => Err(e).with_context(|| format!("{}", path.display())),
    }
}
