//! On-disk sequence containers and image files.
//!
//! Depth container layout (all little-endian):
//!
//! ```text
//! [u32 frame_count][u32 width][u32 height]
//! [frame_count * height * width * u32 depth_mm]   row-major, top-left origin
//! ```
//!
//! Colour frames and rendered templates use binary PPM (`P6`, maxval 255).
//! Scalar grids use 16-bit binary PGM (`P5`, maxval 65535, big-endian samples).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, RgbImage};

const DEPTH_HEADER_BYTES: usize = 12;

/// One depth image in millimetres. Zero means the sensor had no reading.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame {
    pub depth: Grid<u32>,
    pub index: usize,
}

impl DepthFrame {
    pub fn new(depth: Grid<u32>, index: usize) -> Self {
        Self { depth, index }
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn nonzero_count(&self) -> usize {
        self.depth.as_slice().iter().filter(|&&d| d > 0).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgbFrame {
    pub image: RgbImage,
    pub index: usize,
}

impl RgbFrame {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthSequence {
    frames: Vec<DepthFrame>,
}

impl DepthSequence {
    /// Builds a sequence, assigning frame indices `0..n` in order.
    pub fn from_grids(grids: Vec<Grid<u32>>) -> Result<Self> {
        check_uniform(grids.iter().map(|g| g.dims()))?;
        Ok(Self {
            frames: grids
                .into_iter()
                .enumerate()
                .map(|(i, g)| DepthFrame::new(g, i))
                .collect(),
        })
    }

    pub fn frames(&self) -> &[DepthFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of every frame; `(0, 0)` when empty.
    pub fn dims(&self) -> (usize, usize) {
        self.frames.first().map_or((0, 0), |f| f.depth.dims())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgbSequence {
    frames: Vec<RgbFrame>,
}

impl RgbSequence {
    pub fn from_images(images: Vec<RgbImage>) -> Result<Self> {
        check_uniform(images.iter().map(|g| g.dims()))?;
        Ok(Self {
            frames: images
                .into_iter()
                .enumerate()
                .map(|(index, image)| RgbFrame { image, index })
                .collect(),
        })
    }

    pub fn frames(&self) -> &[RgbFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn check_uniform(mut dims: impl Iterator<Item = (usize, usize)>) -> Result<()> {
    if let Some(first) = dims.next() {
        for (i, d) in dims.enumerate() {
            if d != first {
                return Err(Error::Format(format!(
                    "frame {} is {}x{}, expected {}x{}",
                    i + 1,
                    d.0,
                    d.1,
                    first.0,
                    first.1
                )));
            }
        }
    }
    Ok(())
}

pub fn parse_depth_bin(bytes: &[u8]) -> Result<DepthSequence> {
    if bytes.len() < DEPTH_HEADER_BYTES {
        return Err(Error::Parse(format!(
            "truncated header: expected {} bytes, got {}",
            DEPTH_HEADER_BYTES,
            bytes.len()
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let (count, width, height) = (word(0) as usize, word(1) as usize, word(2) as usize);
    if count == 0 || width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "zero dimension in header (frames={count}, width={width}, height={height})"
        )));
    }
    let pixels = width * height;
    let expected = count
        .checked_mul(pixels)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(DEPTH_HEADER_BYTES))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if bytes.len() < expected {
        return Err(Error::Parse(format!(
            "truncated payload: expected {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let payload = &bytes[DEPTH_HEADER_BYTES..expected];
    let grids = payload
        .chunks_exact(pixels * 4)
        .map(|frame| {
            let values = frame
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Grid::from_vec(width, height, values)
        })
        .collect::<Result<Vec<_>>>()?;
    DepthSequence::from_grids(grids)
}

pub fn read_depth_bin(path: impl AsRef<Path>) -> Result<DepthSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_depth_bin(&bytes)
}

pub fn encode_depth_bin(seq: &DepthSequence) -> Vec<u8> {
    let (w, h) = seq.dims();
    let mut out = Vec::with_capacity(DEPTH_HEADER_BYTES + seq.len() * w * h * 4);
    for v in [seq.len(), w, h] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for f in seq.frames() {
        for &d in f.depth.as_slice() {
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    out
}

pub fn write_depth_bin(seq: &DepthSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_depth_bin(seq)).map_err(|e| Error::io(path, e))
}

/// Reads every `.ppm` file in `dir`, ordered by file name.
pub fn read_rgb_sequence(dir: impl AsRef<Path>) -> Result<RgbSequence> {
    let dir = dir.as_ref();
    let mut paths = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "ppm"))
        .collect::<Vec<_>>();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .ppm frames in {}",
            dir.display()
        )));
    }
    paths.sort();
    let images = paths
        .iter()
        .map(|p| match read_image(p)? {
            Image::Color(img) => Ok(img),
            Image::Scalar(_) => Err(Error::Format(format!("{} is not a P6 image", p.display()))),
        })
        .collect::<Result<Vec<_>>>()?;
    RgbSequence::from_images(images)
}

pub fn write_rgb_sequence(seq: &RgbSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in seq.frames() {
        write_image(
            &Image::Color(f.image.clone()),
            dir.join(format!("f{:04}.ppm", f.index)),
        )?;
    }
    Ok(())
}

/// A colour or 16-bit scalar raster.
#[derive(Clone, Debug, PartialEq)]
pub enum Image {
    Color(RgbImage),
    Scalar(Grid<u16>),
}

pub fn encode_image(image: &Image) -> Vec<u8> {
    match image {
        Image::Color(img) => {
            let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            for px in img.as_slice() {
                out.extend_from_slice(px);
            }
            out
        }
        Image::Scalar(img) => {
            let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
            for v in img.as_slice() {
                out.extend_from_slice(&v.to_be_bytes());
            }
            out
        }
    }
}

pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = match image {
        Image::Color(i) => i.dims(),
        Image::Scalar(i) => i.dims(),
    };
    if w == 0 || h == 0 {
        return Err(Error::EmptyInput("cannot write an empty image".into()));
    }
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_image(image))
        .map_err(|e| Error::io(path, e))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    let width = header_number(bytes, &mut pos)?;
    let height = header_number(bytes, &mut pos)?;
    let maxval = header_number(bytes, &mut pos)?;
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if width == 0 || height == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }
    let body = bytes.get(pos..).unwrap_or(&[]);
    match (magic.as_str(), maxval) {
        ("P6", 255) => {
            let need = width * height * 3;
            check_len(body.len(), need)?;
            let px = body[..need]
                .chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect();
            Ok(Image::Color(Grid::from_vec(width, height, px)?))
        }
        ("P5", 65535) => {
            let need = width * height * 2;
            check_len(body.len(), need)?;
            let vals = body[..need]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect();
            Ok(Image::Scalar(Grid::from_vec(width, height, vals)?))
        }
        (m, v) => Err(Error::Format(format!(
            "unsupported netpbm variant {m} with maxval {v}"
        ))),
    }
}

fn check_len(have: usize, need: usize) -> Result<()> {
    if have < need {
        return Err(Error::Parse(format!(
            "truncated raster: expected {need} bytes, got {have}"
        )));
    }
    Ok(())
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Parse("truncated netpbm header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::Parse(format!("bad netpbm header field {tok:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn container(header: [u32; 3], payload: &[u32]) -> Vec<u8> {
        header
            .iter()
            .chain(payload)
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }

    #[test]
    fn minimal_container() {
        let seq = parse_depth_bin(&container([2, 1, 1], &[7, 9])).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.frames()[0].depth.get(0, 0), 7);
        assert_eq!(seq.frames()[1].depth.get(0, 0), 9);
        assert_eq!(seq.frames()[1].index, 1);
    }

    #[test]
    fn all_zero_frame() {
        let seq = parse_depth_bin(&container([1, 2, 2], &[0, 0, 0, 0])).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.dims(), (2, 2));
        assert_eq!(seq.frames()[0].nonzero_count(), 0);
    }

    #[test]
    fn short_header_is_rejected() {
        let err = parse_depth_bin(&[0u8; 11]).unwrap_err();
        assert!(err.to_string().contains("truncated header"), "{err}");
    }

    #[test]
    fn truncated_payload_names_sizes() {
        let err = parse_depth_bin(&container([2, 2, 2], &[1, 2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 44") && msg.contains("got 24"), "{msg}");
    }

    #[test]
    fn zero_dimension_is_format_error() {
        let err = parse_depth_bin(&container([1, 0, 4], &[])).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn ppm_single_red_pixel() {
        let img = Image::Color(Grid::new(1, 1, [255, 0, 0]));
        let bytes = encode_image(&img);
        let header = b"P6\n1 1\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[255, 0, 0]);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pgm");
        let img = Image::Scalar(Grid::from_vec(2, 2, vec![0, 1, 65535, 258]).unwrap());
        write_image(&img, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn rgb_directory_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = Grid::new(4, 4, [1, 2, 3]);
        let b = Grid::new(4, 4, [4, 5, 6]);
        write_image(&Image::Color(b.clone()), dir.path().join("f001.ppm")).unwrap();
        write_image(&Image::Color(a.clone()), dir.path().join("f000.ppm")).unwrap();
        let seq = read_rgb_sequence(dir.path()).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.frames()[0].image, a);
        assert_eq!(seq.frames()[1].image, b);
        assert_eq!(seq.frames()[1].index, 1);
    }

    #[test]
    fn rgb_directory_mixed_sizes() {
        let dir = tempfile::tempdir().unwrap();
        write_image(&Image::Color(Grid::new(4, 4, [0; 3])), dir.path().join("a.ppm")).unwrap();
        write_image(&Image::Color(Grid::new(8, 8, [0; 3])), dir.path().join("b.ppm")).unwrap();
        assert!(matches!(
            read_rgb_sequence(dir.path()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rgb_directory_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_rgb_sequence(dir.path()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn unwritable_path() {
        let img = Image::Color(Grid::new(1, 1, [0; 3]));
        let err = write_image(&img, "/nonexistent-dir/x/y.ppm").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
