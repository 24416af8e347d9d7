//! On-disk layout of a ledger data directory.
//!
//! Two files live in the directory:
//! - `ledger.chain`   — sealed blocks, one canonical block line per height.
//! - `pending.txlog`  — accepted-but-unsealed transactions, one per line.
//!
//! Every command reloads both files, replays them (which re-verifies digests
//! and guard acceptance), and mutating commands append/rewrite them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use truledger_core::{Block, Chain, Transaction};

pub struct Store {
    dir: PathBuf,
}

/// Path of the sealed-block file inside a data directory.
pub fn chain_file(dir: &Path) -> PathBuf {
    dir.join("ledger.chain")
}

impl Store {
    pub fn chain_path(&self) -> PathBuf {
        chain_file(&self.dir)
    }

    pub fn pending_path(&self) -> PathBuf {
        self.dir.join("pending.txlog")
    }

    /// Create a fresh data directory. The directory must be absent or empty.
    pub fn init(dir: &Path) -> Result<Store> {
        if dir.exists() {
            let occupied = fs::read_dir(dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .next()
                .is_some();
            if occupied {
                bail!("already initialized: {} is not empty", dir.display());
            }
        } else {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let store = Store { dir: dir.to_path_buf() };
        fs::write(store.chain_path(), "")?;
        fs::write(store.pending_path(), "")?;
        Ok(store)
    }

    /// Open an initialized directory and rebuild the chain: sealed blocks
    /// first, then the pending transactions, each re-validated.
    pub fn open(dir: &Path) -> Result<(Store, Chain)> {
        let store = Store { dir: dir.to_path_buf() };
        if !store.chain_path().exists() {
            bail!("{} is not an initialized data directory (run init first)", dir.display());
        }
        let chain_bytes = fs::read(store.chain_path())
            .with_context(|| format!("reading {}", store.chain_path().display()))?;
        let mut chain = Chain::load_chain(&chain_bytes)
            .map_err(|e| anyhow!("corrupt chain file: {e}"))?;

        let pending_bytes = fs::read(store.pending_path())
            .with_context(|| format!("reading {}", store.pending_path().display()))?;
        let pending = truledger_core::parse_txlog(&pending_bytes)
            .map_err(|e| anyhow!("corrupt pending log: {e}"))?;
        for tx in pending {
            let accepted = chain
                .submit(tx.payload.clone(), tx.timestamp)
                .map_err(|r| anyhow!("corrupt pending log: rejected transaction: {r}"))?;
            if accepted.seq != tx.seq {
                bail!(
                    "corrupt pending log: expected seq {}, found {}",
                    accepted.seq,
                    tx.seq
                );
            }
        }
        Ok((store, chain))
    }

    /// Record one newly accepted transaction.
    pub fn append_pending(&self, tx: &Transaction) -> Result<()> {
        let mut line = tx.canon_string();
        line.push('\n');
        append(&self.pending_path(), &line)
    }

    /// Record a seal: the block goes onto the chain file and the pending
    /// log is emptied.
    pub fn append_block(&self, block: &Block) -> Result<()> {
        let mut line = block.canon_line();
        line.push('\n');
        append(&self.chain_path(), &line)?;
        fs::write(self.pending_path(), "")?;
        Ok(())
    }
}

fn append(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut file = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    file.write_all(text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
