//! PFM, 16-bit PNG disparity, PGM export and RGB image loading.
//!
//! Readers either return a complete value or a structured error; they never
//! hand back partially decoded data.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::regression::{DisparityMap, ValidityMask};
use crate::tensor::Tensor;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits `n` whitespace-separated ASCII tokens off the front of `bytes`.
/// Returns the tokens and the offset just past the single whitespace byte
/// that ends the last token.
fn header_tokens<'a>(bytes: &'a [u8], n: usize, format: &'static str) -> Result<(Vec<&'a str>, usize)> {
    let mut tokens = Vec::with_capacity(n);
    let mut i = 0;
    while tokens.len() < n {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i || i >= bytes.len() {
            return Err(Error::format(format, "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| Error::format(format, "non-ASCII header"))?;
        tokens.push(tok);
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str, format: &'static str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::format(format, format!("bad dimension {tok:?}"))),
    }
}

/// Decodes a PFM file into `[H, W]` (`Pf`) or `[3, H, W]` (`PF`), top row first.
pub fn decode_pfm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let (tok, start) = header_tokens(bytes, 4, "PFM")?;
    let channels = match tok[0] {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::format("PFM", format!("bad magic {other:?}"))),
    };
    let w = parse_dim(tok[1], "PFM")?;
    let h = parse_dim(tok[2], "PFM")?;
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| Error::format("PFM", format!("bad scale {:?}", tok[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("PFM", "scale must be finite and nonzero"));
    }
    let little = scale < 0.0;
    let payload = &bytes[start..];
    let expect = w * h * channels * 4;
    if payload.len() != expect {
        return Err(Error::format(
            "PFM",
            format!("expected {expect} payload bytes, found {}", payload.len()),
        ));
    }
    let mut out = vec![0.0f32; w * h * channels];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        // file order: rows bottom-up, pixels interleaved
        let (row, rest) = (i / (w * channels), i % (w * channels));
        let (x, c) = (rest / channels, rest % channels);
        let y = h - 1 - row;
        out[(c * h + y) * w + x] = v;
    }
    let shape = if channels == 1 { vec![h, w] } else { vec![3, h, w] };
    Tensor::new(&shape, out)
}

/// Encodes an `[H, W]` map as a grayscale PFM.
pub fn encode_pfm(map: &Tensor<f32>, little_endian: bool) -> Result<Vec<u8>> {
    let s = map.shape();
    if s.len() != 2 {
        return Err(Error::InvalidShape {
            op: "encode_pfm",
            detail: format!("expected [H, W], got {s:?}"),
        });
    }
    let (h, w) = (s[0], s[1]);
    let scale = if little_endian { "-1.0" } else { "1.0" };
    let mut out = format!("Pf\n{w} {h}\n{scale}\n").into_bytes();
    out.reserve(h * w * 4);
    for y in (0..h).rev() {
        for &v in &map.data()[y * w..(y + 1) * w] {
            out.extend_from_slice(&if little_endian { v.to_le_bytes() } else { v.to_be_bytes() });
        }
    }
    Ok(out)
}

/// Loads a PFM disparity map; colour files contribute their first channel.
pub fn load_pfm(path: &Path) -> Result<DisparityMap> {
    let t = decode_pfm(&read(path)?)?;
    let t = if t.rank() == 3 { t.index0(0) } else { t };
    DisparityMap::new(t, 1)
}

pub fn write_pfm(path: &Path, map: &Tensor<f32>) -> Result<()> {
    write(path, &encode_pfm(map, true)?)
}

/// Decodes a 16-bit grayscale PNG: disparity = raw / 256, raw 0 is invalid.
pub fn decode_disp_png16(bytes: &[u8]) -> Result<(DisparityMap, ValidityMask)> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Sixteen || info.color_type != png::ColorType::Grayscale {
        return Err(Error::format(
            "16-bit disparity PNG",
            format!("expected 16-bit grayscale, got {:?} {:?}", info.bit_depth, info.color_type),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(w * h * 2)];
    let frame = reader.next_frame(&mut buf)?;
    let raw: Vec<u16> = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    let disp = raw.iter().map(|&r| r as f32 / 256.0).collect();
    let valid = raw.iter().map(|&r| r != 0).collect();
    Ok((
        DisparityMap::new(Tensor::new(&[h, w], disp)?, 1)?,
        ValidityMask::new(h, w, valid)?,
    ))
}

pub fn load_disp_png16(path: &Path) -> Result<(DisparityMap, ValidityMask)> {
    decode_disp_png16(&read(path)?)
}

fn png_writer<'a>(
    file: &'a mut BufWriter<fs::File>,
    w: usize,
    h: usize,
    color: png::ColorType,
    depth: png::BitDepth,
) -> Result<png::Writer<&'a mut BufWriter<fs::File>>> {
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    Ok(enc.write_header()?)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes the 16-bit convention; invalid pixels are stored as 0 and valid
/// ones are kept at least 1.
pub fn write_disp_png16(path: &Path, map: &Tensor<f32>, valid: &ValidityMask) -> Result<()> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut bytes = Vec::with_capacity(h * w * 2);
    for (&d, &ok) in map.data().iter().zip(valid.bits()) {
        let raw = if ok { (d as f64 * 256.0).round().clamp(1.0, 65535.0) as u16 } else { 0 };
        bytes.extend_from_slice(&raw.to_be_bytes());
    }
    let mut file = create(path)?;
    png_writer(&mut file, w, h, png::ColorType::Grayscale, png::BitDepth::Sixteen)?.write_image_data(&bytes)?;
    Ok(())
}

/// Binary 8-bit PGM with `clamp(round(d * scale), 0, 255)`.
pub fn encode_gray(map: &Tensor<f32>, scale: f64) -> Vec<u8> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(map.data().iter().map(|&d| (d as f64 * scale).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn export_gray(map: &DisparityMap, path: &Path, scale: f64) -> Result<()> {
    write(path, &encode_gray(&map.values, scale))
}

/// Decodes binary PGM (`P5`) or PPM (`P6`) with 8-bit samples into
/// `[channels, H, W]` bytes.
pub fn decode_pnm(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let (tok, start) = header_tokens(bytes, 4, "PNM")?;
    let channels = match tok[0] {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::format("PNM", format!("unsupported magic {other:?}"))),
    };
    let w = parse_dim(tok[1], "PNM")?;
    let h = parse_dim(tok[2], "PNM")?;
    if tok[3] != "255" {
        return Err(Error::format("PNM", format!("only maxval 255 is supported, got {}", tok[3])));
    }
    let payload = &bytes[start..];
    if payload.len() != w * h * channels {
        return Err(Error::format(
            "PNM",
            format!("expected {} payload bytes, found {}", w * h * channels, payload.len()),
        ));
    }
    let mut planar = vec![0u8; payload.len()];
    for (i, &v) in payload.iter().enumerate() {
        let (p, c) = (i / channels, i % channels);
        planar[c * w * h + p] = v;
    }
    Ok((channels, h, w, planar))
}

fn planar_rgb(channels: usize, h: usize, w: usize, planar: &[u8], max: f32) -> Result<Tensor<f32>> {
    let plane = h * w;
    Tensor::new(
        &[3, h, w],
        (0..3 * plane)
            .map(|i| {
                let c = if channels == 1 { 0 } else { i / plane };
                planar[c * plane + i % plane] as f32 / max
            })
            .collect(),
    )
}

fn decode_png_rgb(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader.next_frame(&mut buf)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let channels = match frame.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::format("PNG", format!("unsupported colour type {other:?}"))),
    };
    let data = &buf[..frame.buffer_size()];
    let keep = if channels >= 3 { 3 } else { 1 };
    let mut planar = vec![0u8; keep * w * h];
    for p in 0..w * h {
        for c in 0..keep {
            planar[c * w * h + p] = data[p * channels + c];
        }
    }
    planar_rgb(keep, h, w, &planar, 255.0)
}

/// Loads an RGB image (PNG, PPM or PGM) as `[3, H, W]` in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<Tensor<f32>> {
    let bytes = read(path)?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png_rgb(&bytes)
    } else {
        let (c, h, w, planar) = decode_pnm(&bytes)?;
        planar_rgb(c, h, w, &planar, 255.0)
    }
}

/// Writes a `[3, H, W]` image in `[0, 1]` as an 8-bit RGB PNG.
pub fn write_rgb_png(path: &Path, img: &Tensor<f32>) -> Result<()> {
    let s = img.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::InvalidShape {
            op: "write_rgb_png",
            detail: format!("expected [3, H, W], got {s:?}"),
        });
    }
    let (h, w) = (s[1], s[2]);
    let mut bytes = Vec::with_capacity(3 * h * w);
    for p in 0..h * w {
        for c in 0..3 {
            bytes.push((img.data()[c * h * w + p] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut file = create(path)?;
    png_writer(&mut file, w, h, png::ColorType::Rgb, png::BitDepth::Eight)?.write_image_data(&bytes)?;
    Ok(())
}
