//! On-disk block log and state snapshot.
//!
//! Both files start with an 8-byte header: a 6-byte magic and a big-endian
//! u16 format version. The body is a sequence of records, each a big-endian
//! u32 length followed by that many bytes of canonical JSON. The block log
//! holds one record per sealed block, appended as blocks seal; the snapshot
//! holds a single record with the chain state at some height.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::chain::ChainState;
use super::types::Block;

pub const FORMAT_VERSION: u16 = 1;
const BLOCK_LOG_MAGIC: &[u8; 6] = b"LOBLKS";
const SNAPSHOT_MAGIC: &[u8; 6] = b"LOSNAP";

pub const BLOCK_LOG_FILE: &str = "blocks.log";
pub const SNAPSHOT_FILE: &str = "snapshot.bin";

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn write_header(w: &mut impl Write, magic: &[u8; 6]) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_be_bytes())
}

fn read_header(r: &mut impl Read, magic: &[u8; 6]) -> io::Result<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf[..6] != magic {
        return Err(invalid("bad file magic"));
    }
    let version = u16::from_be_bytes([buf[6], buf[7]]);
    if version != FORMAT_VERSION {
        return Err(invalid(format!("unsupported format version {version}")));
    }
    Ok(())
}

fn write_record<T: Serialize>(w: &mut impl Write, value: &T) -> io::Result<()> {
    let body = serde_json::to_vec(value).map_err(|e| invalid(e.to_string()))?;
    let len = u32::try_from(body.len()).map_err(|_| invalid("record too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&body)
}

/// `Ok(None)` at a clean end of file.
fn read_record<T: DeserializeOwned>(r: &mut impl Read) -> io::Result<Option<T>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut body = vec![0u8; u32::from_be_bytes(len) as usize];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| invalid(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Store { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn log_path(&self) -> PathBuf {
        self.dir.join(BLOCK_LOG_FILE)
    }

    fn snapshot_path(&self) -> PathBuf {
        self.dir.join(SNAPSHOT_FILE)
    }

    pub fn append_block(&self, block: &Block) -> io::Result<()> {
        let path = self.log_path();
        let fresh = !path.exists();
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut buf = Vec::new();
        if fresh {
            write_header(&mut buf, BLOCK_LOG_MAGIC)?;
        }
        write_record(&mut buf, block)?;
        file.write_all(&buf)?;
        file.sync_data()
    }

    pub fn read_blocks(&self) -> io::Result<Vec<Block>> {
        let path = self.log_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut r = BufReader::new(File::open(path)?);
        read_header(&mut r, BLOCK_LOG_MAGIC)?;
        let mut blocks = Vec::new();
        while let Some(block) = read_record::<Block>(&mut r)? {
            blocks.push(block);
        }
        Ok(blocks)
    }

    pub fn write_snapshot(&self, state: &ChainState) -> io::Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            write_header(&mut w, SNAPSHOT_MAGIC)?;
            write_record(&mut w, state)?;
            w.flush()?;
            w.get_ref().sync_data()?;
        }
        fs::rename(tmp, self.snapshot_path())
    }

    pub fn read_snapshot(&self) -> io::Result<Option<ChainState>> {
        let path = self.snapshot_path();
        if !path.exists() {
            return Ok(None);
        }
        let mut r = BufReader::new(File::open(path)?);
        read_header(&mut r, SNAPSHOT_MAGIC)?;
        read_record(&mut r)?
            .map(Some)
            .ok_or_else(|| invalid("snapshot has no state record"))
    }
}
