//! RIFF WAVE, NIST SPHERE and headerless PCM16 readers.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::RawSignal;

const SPHERE_MAGIC: &[u8] = b"NIST_1A";

/// Loads a RIFF WAVE or NIST SPHERE file, choosing by magic bytes.
pub fn load_audio(path: &Path) -> Result<RawSignal> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_audio(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads headerless little-endian PCM16 at the given rate.
pub fn load_raw_pcm16(path: &Path, sample_rate: u32) -> Result<RawSignal> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw_pcm16(&bytes, sample_rate)
}

/// Loads `path` as RIFF or SPHERE, or as raw PCM16 when `raw_rate` is set.
pub fn load_audio_with(path: &Path, raw_rate: Option<u32>) -> Result<RawSignal> {
    match raw_rate {
        Some(rate) => load_raw_pcm16(path, rate),
        None => load_audio(path),
    }
}

pub fn decode_audio(bytes: &[u8]) -> Result<RawSignal> {
    if bytes.starts_with(b"RIFF") {
        decode_wav(bytes)
    } else if bytes.starts_with(SPHERE_MAGIC) {
        decode_sphere(bytes)
    } else {
        Err(Error::format(
            "unrecognized audio header (expected RIFF or NIST_1A; raw PCM needs an explicit sample rate)",
        ))
    }
}

pub fn decode_raw_pcm16(bytes: &[u8], sample_rate: u32) -> Result<RawSignal> {
    if !bytes.len().is_multiple_of(2) {
        return Err(Error::format("raw PCM16 data has an odd byte count"));
    }
    let pcm: Vec<i16> = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect();
    RawSignal::from_pcm16(&pcm, sample_rate)
}

fn decode_wav(bytes: &[u8]) -> Result<RawSignal> {
    let mut reader = hound::WavReader::new(Cursor::new(bytes))
        .map_err(|e| Error::format(format!("bad WAVE file: {e}")))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(format!(
            "WAVE has {} channels, only mono is supported",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(format!(
            "WAVE must be 16-bit integer PCM, found {} bits {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let pcm = reader
        .samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(format!("bad WAVE data: {e}")))?;
    RawSignal::from_pcm16(&pcm, spec.sample_rate)
}

/// Parses the ASCII header of a SPHERE file into `(fields, header_len)`.
fn sphere_header(bytes: &[u8]) -> Result<(HashMap<String, String>, usize)> {
    let head = &bytes[..bytes.len().min(64)];
    let text = String::from_utf8_lossy(head);
    let mut lines = text.lines();
    lines.next();
    let header_len: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| Error::format("SPHERE header size line is missing"))?;
    if header_len > bytes.len() || header_len < SPHERE_MAGIC.len() {
        return Err(Error::format(format!(
            "SPHERE header size {header_len} exceeds file size {}",
            bytes.len()
        )));
    }
    let text = String::from_utf8_lossy(&bytes[..header_len]);
    let mut fields = HashMap::new();
    for line in text.lines().skip(2) {
        let line = line.trim();
        if line == "end_head" {
            return Ok((fields, header_len));
        }
        let mut parts = line.splitn(3, char::is_whitespace);
        if let (Some(key), Some(ty), Some(value)) = (parts.next(), parts.next(), parts.next()) {
            if ty.starts_with('-') {
                fields.insert(key.to_owned(), value.trim().to_owned());
            }
        }
    }
    Err(Error::format("SPHERE header lacks `end_head`"))
}

fn decode_sphere(bytes: &[u8]) -> Result<RawSignal> {
    let (fields, header_len) = sphere_header(bytes)?;
    let get = |k: &str| fields.get(k).map(String::as_str);
    let rate: u32 = get("sample_rate")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format("SPHERE header lacks sample_rate"))?;
    if let Some(coding) = get("sample_coding") {
        if coding != "pcm" {
            return Err(Error::format(format!(
                "SPHERE sample_coding `{coding}` is not supported (decompress to pcm first)"
            )));
        }
    }
    if let Some(ch) = get("channel_count") {
        if ch != "1" {
            return Err(Error::format(format!("SPHERE has {ch} channels, only mono is supported")));
        }
    }
    if let Some(n) = get("sample_n_bytes") {
        if n != "2" {
            return Err(Error::format(format!("SPHERE sample_n_bytes {n} is not 2")));
        }
    }
    let big_endian = match get("sample_byte_format") {
        None | Some("01") => false,
        Some("10") => true,
        Some(other) => {
            return Err(Error::format(format!("SPHERE sample_byte_format `{other}` is not supported")))
        }
    };
    let mut data = &bytes[header_len..];
    if let Some(count) = get("sample_count").and_then(|v| v.parse::<usize>().ok()) {
        if count * 2 > data.len() {
            return Err(Error::format(format!(
                "SPHERE declares {count} samples but holds {}",
                data.len() / 2
            )));
        }
        data = &data[..count * 2];
    }
    let pcm: Vec<i16> = data
        .chunks_exact(2)
        .map(|b| {
            if big_endian {
                i16::from_be_bytes([b[0], b[1]])
            } else {
                i16::from_le_bytes([b[0], b[1]])
            }
        })
        .collect();
    RawSignal::from_pcm16(&pcm, rate)
}

/// Writes mono 16-bit PCM as RIFF WAVE, clamping to the PCM16 range.
pub fn write_wav(path: &Path, signal: &RawSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &signal.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(wrap)?;
    }
    w.finalize().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_bytes(fields: &str, pcm: &[i16], big_endian: bool) -> Vec<u8> {
        let mut head = format!("NIST_1A\n   1024\n{fields}end_head\n").into_bytes();
        head.resize(1024, b' ');
        for &s in pcm {
            head.extend(if big_endian { s.to_be_bytes() } else { s.to_le_bytes() });
        }
        head
    }

    #[test]
    fn wav_header_echo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..1024).map(|i| (i as f64 * 0.01).sin() * 0.5).collect();
        write_wav(&path, &RawSignal::new(samples.clone(), 16000).unwrap()).unwrap();
        let back = load_audio(&path).unwrap();
        assert_eq!(back.len(), 1024);
        assert_eq!(back.sample_rate, 16000);
        for (a, b) in back.samples.iter().zip(&samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn pcm_full_scale() {
        let s = decode_raw_pcm16(&32767i16.to_le_bytes(), 8000).unwrap();
        assert_eq!(s.samples, vec![32767.0 / 32768.0]);
        assert!((s.samples[0] - 0.99997).abs() < 1e-5);
        assert!(decode_raw_pcm16(&[1, 2, 3], 8000).is_err());
    }

    #[test]
    fn sphere_rate_and_byte_order() {
        let fields = "sample_rate -i 16000\nsample_n_bytes -i 2\nchannel_count -i 1\n\
                      sample_byte_format -s2 01\nsample_coding -s3 pcm\nsample_count -i 3\n";
        let s = decode_audio(&sphere_bytes(fields, &[1, -2, 32767], false)).unwrap();
        assert_eq!(s.sample_rate, 16000);
        assert_eq!(s.len(), 3);
        assert_eq!(s.samples[1], -2.0 / 32768.0);

        let be = fields.replace("-s2 01", "-s2 10");
        let s = decode_audio(&sphere_bytes(&be, &[1, -2, 32767], true)).unwrap();
        assert_eq!(s.samples[2], 32767.0 / 32768.0);
    }

    #[test]
    fn sphere_rejects_shorten() {
        let fields = "sample_rate -i 16000\nsample_coding -s26 pcm,embedded-shorten-v2.00\n";
        assert!(matches!(
            decode_audio(&sphere_bytes(fields, &[0; 4], false)),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            decode_audio(&sphere_bytes("sample_n_bytes -i 2\n", &[0; 4], false)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn unknown_magic() {
        assert!(matches!(decode_audio(b"OggS...."), Err(Error::Format(_))));
    }
}
