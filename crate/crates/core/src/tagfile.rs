//! Binary tag files.
//!
//! One file per channel, all integers little-endian:
//!
//! ```text
//! "QTTF"            4 bytes magic
//! version           u8   (currently 1)
//! channel           u8   (1..=4)
//! block_count       u32
//! block_count times:
//!     epoch         u64  whole seconds
//!     count         u32
//!     count times:
//!         tag       i64  femtoseconds since the block epoch
//! ```
//!
//! [`TagWriter`] and [`TagReader`] stream one block at a time;
//! [`write_stream`] and [`read_stream`] handle a whole [`TagStream`].

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::simulator::{Channel, TagBlock, TagStream};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QTTF";
pub const VERSION: u8 = 1;

/// Conventional file name of a channel inside a directory.
pub fn file_name(channel: Channel) -> String {
    format!("{channel}.qttf")
}

/// Why a read failed, before a path is attached.
#[derive(Debug)]
pub enum ReadError {
    Io(io::Error),
    Format(String),
}

impl ReadError {
    fn at(self, path: &Path) -> Error {
        match self {
            ReadError::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            ReadError::Format(reason) => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
        }
    }
}

impl std::fmt::Display for ReadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReadError::Io(e) => e.fmt(f),
            ReadError::Format(reason) => f.write_str(reason),
        }
    }
}

fn read_exact<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    what: impl FnOnce() -> String,
) -> std::result::Result<(), ReadError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ReadError::Format(what())
        } else {
            ReadError::Io(e)
        }
    })
}

pub struct TagWriter<W: Write> {
    inner: W,
    block_count: u32,
    written: u32,
}

impl<W: Write> TagWriter<W> {
    /// Writes the header for `block_count` blocks.
    pub fn new(mut inner: W, channel: Channel, block_count: u32) -> io::Result<Self> {
        inner.write_all(MAGIC)?;
        inner.write_all(&[VERSION, channel.number()])?;
        inner.write_all(&block_count.to_le_bytes())?;
        Ok(TagWriter {
            inner,
            block_count,
            written: 0,
        })
    }

    pub fn write_block(&mut self, epoch: u64, tags: &[i64]) -> io::Result<()> {
        if self.written == self.block_count {
            return Err(io::Error::other("more blocks than announced in the header"));
        }
        let count = u32::try_from(tags.len())
            .map_err(|_| io::Error::other("block holds more than u32::MAX tags"))?;
        self.inner.write_all(&epoch.to_le_bytes())?;
        self.inner.write_all(&count.to_le_bytes())?;
        for tag in tags {
            self.inner.write_all(&tag.to_le_bytes())?;
        }
        self.written += 1;
        Ok(())
    }

    /// Flushes, failing if fewer blocks were written than announced.
    pub fn finish(mut self) -> io::Result<W> {
        if self.written != self.block_count {
            return Err(io::Error::other(format!(
                "header announces {} blocks but {} were written",
                self.block_count, self.written
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct TagReader<R: Read> {
    inner: R,
    channel: Channel,
    block_count: u32,
    read: u32,
}

impl<R: Read> TagReader<R> {
    pub fn new(mut inner: R) -> std::result::Result<Self, ReadError> {
        let mut head = [0u8; 10];
        read_exact(&mut inner, &mut head, || "truncated header".into())?;
        if &head[..4] != MAGIC {
            return Err(ReadError::Format("bad magic".into()));
        }
        if head[4] != VERSION {
            return Err(ReadError::Format(format!(
                "unsupported version {}",
                head[4]
            )));
        }
        let channel = Channel::from_number(head[5])
            .ok_or_else(|| ReadError::Format(format!("invalid channel {}", head[5])))?;
        Ok(TagReader {
            inner,
            channel,
            block_count: u32::from_le_bytes(head[6..10].try_into().unwrap()),
            read: 0,
        })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn block_count(&self) -> u32 {
        self.block_count
    }

    /// Next block, or `None` after the last one. Trailing bytes after the
    /// announced blocks are an error.
    pub fn next_block(&mut self) -> std::result::Result<Option<TagBlock>, ReadError> {
        let b = self.read;
        if b == self.block_count {
            let mut rest = [0u8; 1];
            return match self.inner.read(&mut rest) {
                Ok(0) => Ok(None),
                Ok(_) => Err(ReadError::Format("trailing bytes after last block".into())),
                Err(e) => Err(ReadError::Io(e)),
            };
        }
        let mut bh = [0u8; 12];
        read_exact(&mut self.inner, &mut bh, || {
            format!("truncated at block {b}")
        })?;
        let epoch = u64::from_le_bytes(bh[..8].try_into().unwrap());
        let count = u32::from_le_bytes(bh[8..].try_into().unwrap()) as usize;
        let mut raw = vec![0u8; count * 8];
        read_exact(&mut self.inner, &mut raw, || {
            format!("truncated tags in block {b}")
        })?;
        let tags = raw
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.read += 1;
        Ok(Some(TagBlock { epoch, tags }))
    }
}

pub fn write_stream<W: Write>(w: W, stream: &TagStream) -> io::Result<()> {
    let count =
        u32::try_from(stream.blocks.len()).map_err(|_| io::Error::other("too many blocks"))?;
    let mut writer = TagWriter::new(w, stream.channel, count)?;
    for block in &stream.blocks {
        writer.write_block(block.epoch, &block.tags)?;
    }
    writer.finish().map(|_| ())
}

pub fn read_stream<R: Read>(r: R) -> std::result::Result<TagStream, ReadError> {
    let mut reader = TagReader::new(r)?;
    let mut blocks = Vec::with_capacity(reader.block_count() as usize);
    while let Some(block) = reader.next_block()? {
        blocks.push(block);
    }
    Ok(TagStream {
        channel: reader.channel(),
        blocks,
    })
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_file(path: &Path, stream: &TagStream) -> Result<()> {
    let file = File::create(path).map_err(io_at(path))?;
    write_stream(BufWriter::new(file), stream).map_err(io_at(path))
}

pub fn read_file(path: &Path) -> Result<TagStream> {
    let file = File::open(path).map_err(io_at(path))?;
    read_stream(BufReader::new(file)).map_err(|e| e.at(path))
}

/// Writes `D1.qttf` .. `D4.qttf` into `dir` and returns their paths.
pub fn write_dir(dir: &Path, streams: &[TagStream; 4]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    streams
        .iter()
        .map(|s| {
            let path = dir.join(file_name(s.channel));
            write_file(&path, s).map(|_| path)
        })
        .collect()
}

/// Reads the four channel files from `dir`, checking each file's channel.
pub fn read_dir(dir: &Path) -> Result<[TagStream; 4]> {
    let mut out = Vec::with_capacity(4);
    for channel in Channel::ALL {
        let path = dir.join(file_name(channel));
        let stream = read_file(&path)?;
        check_channel(&path, stream.channel, channel)?;
        out.push(stream);
    }
    Ok(out.try_into().expect("four channels"))
}

fn check_channel(path: &Path, found: Channel, expected: Channel) -> Result<()> {
    if found != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("holds channel {found} instead of {expected}"),
        });
    }
    Ok(())
}

/// Writes the four channel files of a directory block by block.
pub struct DirWriter {
    paths: Vec<PathBuf>,
    writers: Vec<TagWriter<BufWriter<File>>>,
}

impl DirWriter {
    pub fn create(dir: &Path, block_count: u32) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
        let mut paths = Vec::new();
        let mut writers = Vec::new();
        for channel in Channel::ALL {
            let path = dir.join(file_name(channel));
            let file = File::create(&path).map_err(io_at(&path))?;
            writers.push(
                TagWriter::new(BufWriter::new(file), channel, block_count).map_err(io_at(&path))?,
            );
            paths.push(path);
        }
        Ok(DirWriter { paths, writers })
    }

    /// `tags` is indexed by [`Channel::index`].
    pub fn write_block(&mut self, epoch: u64, tags: [&[i64]; 4]) -> Result<()> {
        for ((w, path), t) in self.writers.iter_mut().zip(&self.paths).zip(tags) {
            w.write_block(epoch, t).map_err(io_at(path))?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<PathBuf>> {
        for (w, path) in self.writers.into_iter().zip(&self.paths) {
            w.finish().map_err(io_at(path))?;
        }
        Ok(self.paths)
    }
}

/// Reads the four channel files of a directory block by block.
pub struct DirReader {
    paths: Vec<PathBuf>,
    readers: Vec<TagReader<BufReader<File>>>,
}

impl DirReader {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut paths = Vec::new();
        let mut readers = Vec::new();
        for channel in Channel::ALL {
            let path = dir.join(file_name(channel));
            let file = File::open(&path).map_err(io_at(&path))?;
            let reader = TagReader::new(BufReader::new(file)).map_err(|e| e.at(&path))?;
            check_channel(&path, reader.channel(), channel)?;
            readers.push(reader);
            paths.push(path);
        }
        let n = readers[0].block_count();
        if let Some(k) = readers.iter().position(|r| r.block_count() != n) {
            return Err(Error::Format {
                path: paths[k].clone(),
                reason: format!(
                    "holds {} blocks but {} holds {n}",
                    readers[k].block_count(),
                    paths[0].display()
                ),
            });
        }
        Ok(DirReader { paths, readers })
    }

    pub fn block_count(&self) -> u32 {
        self.readers[0].block_count()
    }

    /// Next block of all four channels, checking that their epochs agree.
    pub fn next_block(&mut self) -> Result<Option<(u64, [Vec<i64>; 4])>> {
        let mut blocks = Vec::with_capacity(4);
        for (r, path) in self.readers.iter_mut().zip(&self.paths) {
            blocks.push(r.next_block().map_err(|e| e.at(path))?);
        }
        if blocks.iter().all(Option::is_none) {
            return Ok(None);
        }
        let blocks: Vec<TagBlock> = blocks
            .into_iter()
            .map(|b| b.expect("equal block counts"))
            .collect();
        let epoch = blocks[0].epoch;
        if let Some(k) = blocks.iter().position(|b| b.epoch != epoch) {
            return Err(Error::Format {
                path: self.paths[k].clone(),
                reason: format!(
                    "block epoch {} does not match {epoch} in {}",
                    blocks[k].epoch,
                    self.paths[0].display()
                ),
            });
        }
        let mut it = blocks.into_iter().map(|b| b.tags);
        Ok(Some((epoch, [(); 4].map(|_| it.next().unwrap()))))
    }
}
