//! Stream and dataset I/O.
//!
//! Formats (all UTF-8, `\n` line endings):
//! - events: one `t x y p` per line, `t` in decimal seconds, `p` in {0, 1}
//!   mapped to OFF/ON;
//! - frame index: one `t filename` per line, paths relative to the index
//!   file;
//! - images: binary 8-bit portable graymap (P5).
//!
//! Timestamps are written with Rust's shortest round-trip float formatting,
//! so write-then-read reproduces every `f64` bit-for-bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::event::{Event, Frame, Polarity};
use crate::{Error, Result};

/// Index file name used next to exported or simulated frames.
pub const INDEX_FILE: &str = "index.txt";

/// Canonical name of the `i`-th exported frame.
pub fn frame_file_name(i: usize) -> String {
    format!("frame_{i:08}.pgm")
}

/// A complete input: time-ordered events, optional time-ordered frames, and
/// the sensor geometry everything is validated against.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub events: Vec<Event>,
    pub frames: Vec<Frame>,
    pub width: u32,
    pub height: u32,
}

impl Dataset {
    pub fn new(events: Vec<Event>, frames: Vec<Frame>, width: u32, height: u32) -> Result<Dataset> {
        if width == 0 || height == 0 {
            return Err(Error::Dataset(format!("empty sensor {width}x{height}")));
        }
        for (i, pair) in events.windows(2).enumerate() {
            if pair[1].t < pair[0].t {
                return Err(Error::Dataset(format!(
                    "event timestamps decrease at index {}: {} -> {}",
                    i + 1,
                    pair[0].t,
                    pair[1].t
                )));
            }
        }
        for (i, ev) in events.iter().enumerate() {
            if (ev.x as u32) >= width || (ev.y as u32) >= height {
                return Err(Error::Dataset(format!(
                    "event {} at ({}, {}) outside sensor bounds {width}x{height}",
                    i, ev.x, ev.y
                )));
            }
            if !(ev.t.is_finite() && ev.t >= 0.0) {
                return Err(Error::Dataset(format!(
                    "event {} has invalid timestamp {}",
                    i, ev.t
                )));
            }
        }
        for (i, pair) in frames.windows(2).enumerate() {
            if pair[1].t <= pair[0].t {
                return Err(Error::Dataset(format!(
                    "frame timestamps must strictly increase, got {} -> {} at index {}",
                    pair[0].t,
                    pair[1].t,
                    i + 1
                )));
            }
        }
        for frame in &frames {
            if frame.width != width || frame.height != height {
                return Err(Error::DimensionMismatch {
                    expected_width: width,
                    expected_height: height,
                    width: frame.width,
                    height: frame.height,
                });
            }
        }
        Ok(Dataset {
            events,
            frames,
            width,
            height,
        })
    }

    /// Earliest and latest timestamp over both streams.
    pub fn time_span(&self) -> Option<(f64, f64)> {
        let mut span: Option<(f64, f64)> = None;
        let mut fold = |t: f64| {
            span = Some(match span {
                None => (t, t),
                Some((lo, hi)) => (lo.min(t), hi.max(t)),
            });
        };
        if let (Some(a), Some(b)) = (self.events.first(), self.events.last()) {
            fold(a.t);
            fold(b.t);
        }
        if let (Some(a), Some(b)) = (self.frames.first(), self.frames.last()) {
            fold(a.t);
            fold(b.t);
        }
        span
    }
}

/// Parse an event stream, one `t x y p` per line.
///
/// Events are returned in file order; monotonicity is checked later, at
/// [`Dataset::new`] assembly.
pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading events", e))?;
        let lineno = i + 1;
        let fail = |msg: String| Error::Parse {
            line: lineno,
            msg,
        };
        let mut parts = line.split_ascii_whitespace();
        let mut field = |name: &str| {
            parts
                .next()
                .ok_or_else(|| fail(format!("missing field {name} (expected `t x y p`)")))
        };
        let t: f64 = field("t")?
            .parse()
            .map_err(|_| fail(format!("invalid timestamp in {line:?}")))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(fail(format!("timestamp must be finite and >= 0, got {t}")));
        }
        let x: u16 = field("x")?
            .parse()
            .map_err(|_| fail(format!("invalid x coordinate in {line:?}")))?;
        let y: u16 = field("y")?
            .parse()
            .map_err(|_| fail(format!("invalid y coordinate in {line:?}")))?;
        let p: u64 = field("p")?
            .parse()
            .map_err(|_| fail(format!("invalid polarity in {line:?}")))?;
        let polarity = Polarity::from_flag(p)
            .ok_or_else(|| fail(format!("polarity must be 0 or 1, got {p}")))?;
        if parts.next().is_some() {
            return Err(fail(format!("trailing fields in {line:?}")));
        }
        events.push(Event { t, x, y, polarity });
    }
    Ok(events)
}

/// Exact inverse of [`read_events`].
pub fn write_events<W: Write>(mut writer: W, events: &[Event]) -> Result<()> {
    for ev in events {
        writeln!(writer, "{} {} {} {}", ev.t, ev.x, ev.y, ev.polarity.flag())
            .map_err(|e| Error::io("writing events", e))?;
    }
    Ok(())
}

pub fn read_events_file(path: &Path) -> Result<Vec<Event>> {
    let file =
        File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_events(BufReader::new(file))
}

pub fn write_events_file(path: &Path, events: &[Event]) -> Result<()> {
    let file =
        File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut writer = BufWriter::new(file);
    write_events(&mut writer, events)?;
    writer
        .flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

// One whitespace-delimited PGM header token, honoring `#` comments.
fn pgm_token<R: Read>(reader: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut in_comment = false;
    let mut byte = [0u8; 1];
    loop {
        let n = reader
            .read(&mut byte)
            .map_err(|e| Error::io("reading image header", e))?;
        if n == 0 {
            if token.is_empty() {
                return Err(Error::Image("truncated header".into()));
            }
            return Ok(token);
        }
        let c = byte[0];
        if in_comment {
            in_comment = c != b'\n';
            continue;
        }
        match c {
            b'#' => in_comment = true,
            b' ' | b'\t' | b'\r' | b'\n' => {
                if !token.is_empty() {
                    return Ok(token);
                }
            }
            _ => token.push(c as char),
        }
    }
}

/// Read a binary 8-bit PGM (P5).
pub fn read_pgm<R: BufRead>(mut reader: R) -> Result<(u32, u32, Vec<u8>)> {
    let magic = pgm_token(&mut reader)?;
    if magic != "P5" {
        return Err(Error::Image(format!(
            "unsupported image format {magic:?}; expected binary 8-bit grayscale PGM (P5)"
        )));
    }
    let mut dim = |name: &str| -> Result<u32> {
        pgm_token(&mut reader)?
            .parse::<u32>()
            .map_err(|_| Error::Image(format!("invalid {name} in header")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let maxval = dim("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Image(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Image(format!(
            "maxval {maxval} is not 8-bit grayscale"
        )));
    }
    let mut pixels = vec![0u8; (width as usize) * (height as usize)];
    reader
        .read_exact(&mut pixels)
        .map_err(|e| Error::io("reading image data", e))?;
    Ok((width, height, pixels))
}

/// Write a binary 8-bit PGM (P5).
pub fn write_pgm<W: Write>(mut writer: W, width: u32, height: u32, pixels: &[u8]) -> Result<()> {
    debug_assert_eq!(pixels.len(), (width as usize) * (height as usize));
    write!(writer, "P5\n{width} {height}\n255\n").map_err(|e| Error::io("writing image", e))?;
    writer
        .write_all(pixels)
        .map_err(|e| Error::io("writing image", e))
}

/// Write one frame's pixels as PGM; exact inverse of loading it back.
pub fn write_image<W: Write>(writer: W, frame: &Frame) -> Result<()> {
    write_pgm(writer, frame.width, frame.height, &frame.pixels)
}

/// Parse a frame index: one `t filename` per line.
pub fn read_frames_index<R: BufRead>(reader: R) -> Result<Vec<(f64, String)>> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading frame index", e))?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (t_str, name) = trimmed.split_once(char::is_whitespace).ok_or_else(|| {
            Error::Parse {
                line: lineno,
                msg: format!("expected `t filename`, got {trimmed:?}"),
            }
        })?;
        let t: f64 = t_str.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid timestamp {t_str:?}"),
        })?;
        entries.push((t, name.trim().to_owned()));
    }
    Ok(entries)
}

/// Load frames through a caller-supplied image loader, enforcing strictly
/// increasing timestamps and uniform dimensions.
pub fn read_frames_with<R, F>(index: R, mut load: F) -> Result<Vec<Frame>>
where
    R: BufRead,
    F: FnMut(&str) -> Result<(u32, u32, Vec<u8>)>,
{
    let entries = read_frames_index(index)?;
    let mut frames: Vec<Frame> = Vec::with_capacity(entries.len());
    for (t, name) in entries {
        if let Some(prev) = frames.last() {
            if t <= prev.t {
                return Err(Error::Dataset(format!(
                    "frame index timestamps must strictly increase, got {} after {} ({name})",
                    t, prev.t
                )));
            }
        }
        let (width, height, pixels) = load(&name)?;
        if let Some(first) = frames.first() {
            if width != first.width || height != first.height {
                return Err(Error::DimensionMismatch {
                    expected_width: first.width,
                    expected_height: first.height,
                    width,
                    height,
                });
            }
        }
        frames.push(Frame::new(t, width, height, pixels)?);
    }
    Ok(frames)
}

/// Load a frame sequence from an index file on disk; image paths are resolved
/// relative to the index location.
pub fn read_frames(index_path: &Path) -> Result<Vec<Frame>> {
    let file = File::open(index_path)
        .map_err(|e| Error::io(format!("opening {}", index_path.display()), e))?;
    let dir = index_path.parent().unwrap_or(Path::new("")).to_path_buf();
    read_frames_with(BufReader::new(file), |name| {
        let path = dir.join(name);
        let file =
            File::open(&path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        read_pgm(BufReader::new(file))
    })
}

/// Write frames as `frame_%08d.pgm` plus an index file into `dir`; returns
/// the index path. The output is itself a valid frame-sequence input.
pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut index = String::new();
    for (i, frame) in frames.iter().enumerate() {
        let name = frame_file_name(i);
        let path = dir.join(&name);
        let file = File::create(&path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut writer = BufWriter::new(file);
        write_image(&mut writer, frame)?;
        writer
            .flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        index.push_str(&format!("{} {}\n", frame.t, name));
    }
    let index_path = dir.join(INDEX_FILE);
    std::fs::write(&index_path, index)
        .map_err(|e| Error::io(format!("writing {}", index_path.display()), e))?;
    Ok(index_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    #[test]
    fn parse_single_events() {
        let evs = read_events(Cursor::new("0.123000 42 17 1\n")).unwrap();
        assert_eq!(evs, vec![Event::new(0.123, 42, 17, Polarity::On)]);
        let evs = read_events(Cursor::new("0.5 3 4 0\n")).unwrap();
        assert_eq!(evs, vec![Event::new(0.5, 3, 4, Polarity::Off)]);
    }

    #[test]
    fn parse_rejects_bad_polarity() {
        let err = read_events(Cursor::new("0.5 3 4 7\n")).unwrap_err();
        match err {
            Error::Parse { line: 1, msg } => assert!(msg.contains("polarity")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = read_events(Cursor::new("0.1 0 0 1\n0.2 zero 0 1\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_events(Cursor::new("0.1 0 0\n")).is_err());
        assert!(read_events(Cursor::new("0.1 0 0 1 9\n")).is_err());
        assert!(read_events(Cursor::new("-0.1 0 0 1\n")).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let pixels: Vec<u8> = (0..12).map(|i| (i * 21) as u8).collect();
        let mut buf = Vec::new();
        write_pgm(&mut buf, 4, 3, &pixels).unwrap();
        let (w, h, back) = read_pgm(Cursor::new(buf)).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, pixels);
    }

    #[test]
    fn pgm_header_comments() {
        let mut buf = Vec::from(&b"P5 # binary graymap\n# another comment\n2 1\n255\n"[..]);
        buf.extend_from_slice(&[7, 9]);
        let (w, h, px) = read_pgm(Cursor::new(buf)).unwrap();
        assert_eq!((w, h, px), (2, 1, vec![7, 9]));
    }

    #[test]
    fn pgm_rejects_other_formats() {
        assert!(matches!(
            read_pgm(Cursor::new(&b"P6\n1 1\n255\n\x00\x00\x00"[..])),
            Err(Error::Image(_))
        ));
        assert!(matches!(
            read_pgm(Cursor::new(&b"P5\n1 1\n65535\n\x00\x00"[..])),
            Err(Error::Image(_))
        ));
    }

    #[test]
    fn frames_index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f0 = Frame::new(0.0, 4, 4, vec![1; 16]).unwrap();
        let f1 = Frame::new(0.05, 4, 4, vec![2; 16]).unwrap();
        let index = write_frames(dir.path(), &[f0.clone(), f1.clone()]).unwrap();
        let frames = read_frames(&index).unwrap();
        assert_eq!(frames, vec![f0, f1]);
    }

    #[test]
    fn frames_index_edge_cases() {
        let empty = read_frames_with(Cursor::new(""), |_| unreachable!("no entries")).unwrap();
        assert!(empty.is_empty());

        let loader = |_: &str| Ok((4u32, 4u32, vec![0u8; 16]));
        let err = read_frames_with(Cursor::new("0.05 a.pgm\n0.05 b.pgm\n"), loader).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));
        let err = read_frames_with(Cursor::new("0.05 a.pgm\n0.01 b.pgm\n"), loader).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));

        let mut sizes = vec![(4u32, 4u32), (5u32, 4u32)].into_iter();
        let err = read_frames_with(Cursor::new("0.0 a.pgm\n0.1 b.pgm\n"), |_| {
            let (w, h) = sizes.next().unwrap();
            Ok((w, h, vec![0u8; (w * h) as usize]))
        })
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));

        let err = read_frames(Path::new("/nonexistent/index.txt")).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn write_to_unwritable_sink_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        // A directory path is not a writable file.
        let err = write_events_file(dir.path(), &[]).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn dataset_validation() {
        let ok = Dataset::new(
            vec![
                Event::new(0.0, 0, 0, Polarity::On),
                Event::new(0.0, 1, 0, Polarity::Off),
                Event::new(0.5, 0, 0, Polarity::On),
            ],
            vec![],
            2,
            1,
        );
        assert!(ok.is_ok());

        let err = Dataset::new(
            vec![
                Event::new(0.5, 0, 0, Polarity::On),
                Event::new(0.1, 0, 0, Polarity::On),
            ],
            vec![],
            2,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));

        let err = Dataset::new(vec![Event::new(0.0, 5, 0, Polarity::On)], vec![], 2, 1).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));

        let frame = Frame::new(0.0, 3, 1, vec![0; 3]).unwrap();
        let err = Dataset::new(vec![], vec![frame], 2, 1).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    fn event_strategy() -> impl Strategy<Value = Event> {
        (0.0f64..1e6, any::<u16>(), any::<u16>(), any::<bool>()).prop_map(|(t, x, y, on)| {
            Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off })
        })
    }

    proptest! {
        #[test]
        fn events_round_trip(events in proptest::collection::vec(event_strategy(), 0..1000)) {
            let mut buf = Vec::new();
            write_events(&mut buf, &events).unwrap();
            let back = read_events(Cursor::new(buf)).unwrap();
            prop_assert_eq!(back, events);
        }

        #[test]
        fn pgm_round_trip_any_frame(
            w in 1u32..32,
            h in 1u32..32,
            seed in any::<u64>(),
        ) {
            let n = (w * h) as usize;
            let pixels: Vec<u8> = (0..n).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 32) as u8).collect();
            let mut buf = Vec::new();
            write_pgm(&mut buf, w, h, &pixels).unwrap();
            let (rw, rh, back) = read_pgm(Cursor::new(buf)).unwrap();
            prop_assert_eq!((rw, rh), (w, h));
            prop_assert_eq!(back, pixels);
        }
    }
}
