//! File formats.
//!
//! The raw field container is the lossless interchange format:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | `MGDFIELD` |
//! | 4     | version, `1` |
//! | 4     | number of axes, 1 or 2 |
//! | 8     | side |
//! | 8·d   | values, little-endian `f64`, row-major |
//!
//! Filter banks use `MGDBANK1`, then `u32` kind code, `u32` axes, `u64`
//! side, `u32` J, `u32` Q, `f64` γ, `u32` band count, `u32` low-pass flag,
//! then per band `u32 j`, `u32 q` and `d` complex values as `(re, im)` `f64`
//! pairs; the low-pass spectrum follows when present.
//!
//! Energy vectors use `MGDENRG1`, `u32` count, then per entry a `u16`
//! label length, the UTF-8 label and the `f64` value.
//!
//! Greyscale images are standardised on load, `(p − mean)/std`, and mapped
//! back with the same constants, rounded and clipped, on save. 16-bit PCM
//! WAV maps sample `s` to `s/32768`, so a round trip through the file is
//! within `2⁻¹⁶` of full scale.
//!
//! Every writer goes through a temporary file in the destination directory
//! and an atomic rename.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::energy::{EnergyVector, Label};
use crate::error::{Error, Result};
use crate::filters::{BandFilter, BankKind, FilterBank};
use crate::grid::{FreqFilter, PeriodicSignal, Shape};

const FIELD_MAGIC: &[u8; 8] = b"MGDFIELD";
const BANK_MAGIC: &[u8; 8] = b"MGDBANK1";
const ENERGY_MAGIC: &[u8; 8] = b"MGDENRG1";

/// Write through a sibling temporary file, then rename over `path`.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

struct Bytes<'a, R: Read> {
    inner: &'a mut R,
}

impl<R: Read> Bytes<'_, R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let got: [u8; 8] = self.array()?;
        if &got != expected {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn shape(&mut self) -> Result<Shape> {
        let ndim = self.u32()?;
        let side = usize::try_from(self.u64()?).map_err(|_| Error::Format("side overflows".into()))?;
        if side > 1 << 24 {
            return Err(Error::Format(format!("implausible side {side}")));
        }
        match ndim {
            1 => Shape::line(side),
            2 => Shape::square(side),
            n => Err(Error::Format(format!("unsupported number of axes {n}"))),
        }
    }

    fn end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format("trailing bytes after container payload".into())),
            Err(e) => Err(Error::Format(e.to_string())),
        }
    }
}

fn put(w: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    w.write_all(bytes).map_err(|e| Error::Format(format!("write failed: {e}")))
}

fn put_shape(w: &mut dyn Write, shape: Shape) -> Result<()> {
    put(w, &(shape.ndim() as u32).to_le_bytes())?;
    put(w, &(shape.side() as u64).to_le_bytes())
}

pub fn encode_raw(w: &mut dyn Write, x: &PeriodicSignal) -> Result<()> {
    put(w, FIELD_MAGIC)?;
    put(w, &1u32.to_le_bytes())?;
    put_shape(w, x.shape())?;
    for v in x.values() {
        put(w, &v.to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_raw<R: Read>(r: &mut R) -> Result<PeriodicSignal> {
    let mut b = Bytes { inner: r };
    b.magic(FIELD_MAGIC)?;
    let version = b.u32()?;
    if version != 1 {
        return Err(Error::Format(format!("unsupported field container version {version}")));
    }
    let shape = b.shape()?;
    let values = (0..shape.len()).map(|_| b.f64()).collect::<Result<Vec<_>>>()?;
    b.end()?;
    PeriodicSignal::new(shape, values)
}

pub fn write_raw(path: &Path, x: &PeriodicSignal) -> Result<()> {
    write_atomic(path, |w| encode_raw(w, x))
}

pub fn read_raw(path: &Path) -> Result<PeriodicSignal> {
    decode_raw(&mut open(path)?)
}

fn put_spectrum(w: &mut dyn Write, filter: &FreqFilter) -> Result<()> {
    for z in filter.values() {
        put(w, &z.re.to_le_bytes())?;
        put(w, &z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn encode_bank(w: &mut dyn Write, bank: &FilterBank) -> Result<()> {
    put(w, BANK_MAGIC)?;
    put(w, &bank.kind().code().to_le_bytes())?;
    put_shape(w, bank.shape())?;
    put(w, &bank.j_max().to_le_bytes())?;
    put(w, &bank.q().to_le_bytes())?;
    put(w, &bank.gamma().to_le_bytes())?;
    put(w, &(bank.band_pass().len() as u32).to_le_bytes())?;
    put(w, &u32::from(bank.low_pass().is_some()).to_le_bytes())?;
    for band in bank.band_pass() {
        put(w, &band.j.to_le_bytes())?;
        put(w, &band.q.to_le_bytes())?;
        put_spectrum(w, &band.filter)?;
    }
    if let Some(low) = bank.low_pass() {
        put_spectrum(w, low)?;
    }
    Ok(())
}

/// Rebuild a bank; γ is recomputed and must agree with the stored value.
pub fn decode_bank<R: Read>(r: &mut R) -> Result<FilterBank> {
    let mut b = Bytes { inner: r };
    b.magic(BANK_MAGIC)?;
    let code = b.u32()?;
    let kind = BankKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown bank kind {code}")))?;
    let shape = b.shape()?;
    let (j_max, q) = (b.u32()?, b.u32()?);
    let gamma = b.f64()?;
    let count = b.u32()? as usize;
    let has_low = b.u32()? != 0;
    if count > 1 << 16 {
        return Err(Error::Format(format!("implausible band count {count}")));
    }
    let spectrum = |b: &mut Bytes<'_, R>| -> Result<FreqFilter> {
        let values = (0..shape.len())
            .map(|_| Ok(Complex64::new(b.f64()?, b.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        FreqFilter::new(shape, values)
    };
    let mut bands = Vec::with_capacity(count);
    for _ in 0..count {
        let (j, q) = (b.u32()?, b.u32()?);
        bands.push(BandFilter { j, q, filter: spectrum(&mut b)? });
    }
    let low = if has_low { Some(spectrum(&mut b)?) } else { None };
    b.end()?;
    let bank = FilterBank::from_parts(kind, shape, j_max, q, bands, low)?;
    if (bank.gamma() - gamma).abs() > 1e-12 {
        return Err(Error::Format(format!(
            "stored γ {gamma} disagrees with the filters' γ {}",
            bank.gamma()
        )));
    }
    Ok(bank)
}

pub fn write_bank(path: &Path, bank: &FilterBank) -> Result<()> {
    write_atomic(path, |w| encode_bank(w, bank))
}

pub fn read_bank(path: &Path) -> Result<FilterBank> {
    decode_bank(&mut open(path)?)
}

/// `label,value` rows; values printed with round-trip precision.
pub fn encode_energy_csv(w: &mut dyn Write, phi: &EnergyVector) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let map = |e: csv::Error| Error::Format(e.to_string());
    out.write_record(["label", "value"]).map_err(map)?;
    for (label, v) in phi.labels().iter().zip(phi.values()) {
        out.write_record([label.to_string(), format!("{v:e}")]).map_err(map)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn decode_energy_csv<R: Read>(r: R) -> Result<EnergyVector> {
    let mut rows = csv::Reader::from_reader(r);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for record in rows.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::Format(format!("expected 2 columns, got {}", record.len())));
        }
        labels.push(record[0].parse::<Label>()?);
        values.push(
            record[1]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad value {:?}: {e}", &record[1])))?,
        );
    }
    EnergyVector::new(labels.into(), values)
}

pub fn encode_energy(w: &mut dyn Write, phi: &EnergyVector) -> Result<()> {
    put(w, ENERGY_MAGIC)?;
    put(w, &(phi.len() as u32).to_le_bytes())?;
    for (label, v) in phi.labels().iter().zip(phi.values()) {
        let text = label.to_string();
        put(w, &(text.len() as u16).to_le_bytes())?;
        put(w, text.as_bytes())?;
        put(w, &v.to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_energy<R: Read>(r: &mut R) -> Result<EnergyVector> {
    let mut b = Bytes { inner: r };
    b.magic(ENERGY_MAGIC)?;
    let count = b.u32()? as usize;
    let mut labels = Vec::with_capacity(count.min(1 << 16));
    let mut values = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let n = b.u16()? as usize;
        let mut text = vec![0u8; n];
        b.inner
            .read_exact(&mut text)
            .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
        let text = String::from_utf8(text).map_err(|e| Error::Format(e.to_string()))?;
        labels.push(text.parse::<Label>()?);
        values.push(b.f64()?);
    }
    b.end()?;
    EnergyVector::new(labels.into(), values)
}

/// Energy vector file chosen by extension: `.csv` or the binary container.
pub fn write_energy(path: &Path, phi: &EnergyVector) -> Result<()> {
    if has_extension(path, &["csv"]) {
        write_atomic(path, |w| encode_energy_csv(w, phi))
    } else {
        write_atomic(path, |w| encode_energy(w, phi))
    }
}

pub fn read_energy(path: &Path) -> Result<EnergyVector> {
    if has_extension(path, &["csv"]) {
        decode_energy_csv(open(path)?)
    } else {
        decode_energy(&mut open(path)?)
    }
}

/// Affine map between stored integers and standardised reals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelScale {
    pub mean: f64,
    pub std: f64,
    /// 255 or 65535.
    pub max: u16,
}

impl PixelScale {
    pub fn to_pixel(&self, v: f64) -> u16 {
        (v * self.std + self.mean).round().clamp(0.0, f64::from(self.max)) as u16
    }
}

pub fn read_image(path: &Path) -> Result<(PeriodicSignal, PixelScale)> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w != h {
        return Err(Error::Format(format!("{}: image is {w}x{h}, only square images are supported", path.display())));
    }
    let (pixels, max): (Vec<f64>, u16) = match img {
        image::DynamicImage::ImageLuma8(buf) => (buf.into_raw().into_iter().map(f64::from).collect(), 255),
        image::DynamicImage::ImageLuma16(buf) => (buf.into_raw().into_iter().map(f64::from).collect(), 65535),
        other => {
            return Err(Error::Format(format!(
                "{}: expected a greyscale image, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let shape = Shape::square(w)?;
    let n = pixels.len() as f64;
    let mean = pixels.iter().sum::<f64>() / n;
    let var = pixels.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let values = pixels.iter().map(|p| (p - mean) / std).collect();
    Ok((PeriodicSignal::new(shape, values)?, PixelScale { mean, std, max }))
}

/// PGM (`.pgm`) or PNG (`.png`) by extension.
pub fn write_image(path: &Path, x: &PeriodicSignal, scale: &PixelScale) -> Result<()> {
    let shape = x.shape();
    if shape.ndim() != 2 {
        return Err(Error::Format("images need a 2-D field".into()));
    }
    let format = if has_extension(path, &["pgm"]) {
        image::ImageOutputFormat::Pnm(image::codecs::pnm::PnmSubtype::Graymap(
            image::codecs::pnm::SampleEncoding::Binary,
        ))
    } else if has_extension(path, &["png"]) {
        image::ImageOutputFormat::Png
    } else {
        return Err(Error::Format(format!("{}: not a .pgm or .png path", path.display())));
    };
    let side = shape.side() as u32;
    let mut encoded = std::io::Cursor::new(Vec::new());
    let result = if scale.max <= 255 {
        let data: Vec<u8> = x.values().iter().map(|&v| scale.to_pixel(v) as u8).collect();
        let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(side, side, data).expect("sized buffer");
        buf.write_to(&mut encoded, format)
    } else {
        let data: Vec<u16> = x.values().iter().map(|&v| scale.to_pixel(v)).collect();
        let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(side, side, data).expect("sized buffer");
        buf.write_to(&mut encoded, format)
    };
    result.map_err(|e| image_error(path, e))?;
    write_atomic(path, |w| put(w, encoded.get_ref()))
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Mono 16-bit PCM as a periodic line, samples scaled to `[−1, 1)`.
/// Returns the sample rate alongside.
pub fn read_wav(path: &Path) -> Result<(PeriodicSignal, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Format(format!(
            "{}: expected mono 16-bit PCM, got {} channel(s) of {}-bit {:?}",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let values = reader
        .into_samples::<i16>()
        .map(|s| s.map(|s| f64::from(s) / 32768.0).map_err(|e| wav_error(path, e)))
        .collect::<Result<Vec<_>>>()?;
    let shape = Shape::line(values.len())?;
    Ok((PeriodicSignal::new(shape, values)?, spec.sample_rate))
}

pub fn write_wav(path: &Path, x: &PeriodicSignal, sample_rate: u32) -> Result<()> {
    if x.shape().ndim() != 1 {
        return Err(Error::Format("audio needs a 1-D signal".into()));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut encoded = std::io::Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut encoded, spec).map_err(|e| wav_error(path, e))?;
        for &v in x.values() {
            let s = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(s).map_err(|e| wav_error(path, e))?;
        }
        w.finalize().map_err(|e| wav_error(path, e))?;
    }
    write_atomic(path, |w| put(w, encoded.get_ref()))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// How a signal was stored, so outputs can be written the same way.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SignalFormat {
    Raw,
    Pgm(PixelScale),
    Png(PixelScale),
    Wav { sample_rate: u32 },
}

impl SignalFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            SignalFormat::Raw => "mgd",
            SignalFormat::Pgm(_) => "pgm",
            SignalFormat::Png(_) => "png",
            SignalFormat::Wav { .. } => "wav",
        }
    }
}

fn has_extension(path: &Path, options: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| options.iter().any(|o| e.eq_ignore_ascii_case(o)))
        .unwrap_or(false)
}

/// Load by extension: `.mgd`/`.raw`, `.pgm`, `.png`, `.wav`.
pub fn read_signal(path: &Path) -> Result<(PeriodicSignal, SignalFormat)> {
    if has_extension(path, &["mgd", "raw"]) {
        Ok((read_raw(path)?, SignalFormat::Raw))
    } else if has_extension(path, &["pgm"]) {
        read_image(path).map(|(x, s)| (x, SignalFormat::Pgm(s)))
    } else if has_extension(path, &["png"]) {
        read_image(path).map(|(x, s)| (x, SignalFormat::Png(s)))
    } else if has_extension(path, &["wav"]) {
        read_wav(path).map(|(x, sample_rate)| (x, SignalFormat::Wav { sample_rate }))
    } else {
        Err(Error::Format(format!(
            "{}: unsupported extension (expected .mgd, .raw, .pgm, .png or .wav)",
            path.display()
        )))
    }
}

pub fn write_signal(path: &Path, x: &PeriodicSignal, format: &SignalFormat) -> Result<()> {
    match format {
        SignalFormat::Raw => write_raw(path, x),
        SignalFormat::Pgm(s) | SignalFormat::Png(s) => write_image(path, x, s),
        SignalFormat::Wav { sample_rate } => write_wav(path, x, *sample_rate),
    }
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path, |w| put(w, text.as_bytes()))
}
