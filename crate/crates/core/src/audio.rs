//! Waveform I/O, clean-up, and the randomized training-time augmentation.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, IndexError, Result, WavError};

/// Mono waveform with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, rate: u32) -> Self {
        AudioClip { samples, rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    fn with(&self, samples: Vec<f32>) -> Self {
        AudioClip {
            samples,
            rate: self.rate,
        }
    }
}

const PCM: u16 = 1;
const EXTENSIBLE: u16 = 0xFFFE;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn need(b: &[u8], offset: usize, expected: usize) -> std::result::Result<(), WavError> {
    let found = b.len().saturating_sub(offset);
    if found < expected {
        Err(WavError::Truncated {
            offset,
            expected,
            found,
        })
    } else {
        Ok(())
    }
}

/// Decodes a RIFF/WAVE PCM16 file, mono or stereo (channels averaged),
/// scaling by `1/32768`. Chunks other than `fmt ` and `data` are skipped.
pub fn decode_wav(b: &[u8]) -> std::result::Result<AudioClip, WavError> {
    need(b, 0, 12)?;
    if &b[0..4] != b"RIFF" {
        return Err(WavError::Malformed {
            offset: 0,
            reason: "missing RIFF tag".into(),
        });
    }
    if &b[8..12] != b"WAVE" {
        return Err(WavError::Malformed {
            offset: 8,
            reason: "missing WAVE tag".into(),
        });
    }
    let mut at = 12;
    let mut format: Option<(u16, u32)> = None;
    loop {
        if at >= b.len() {
            return Err(WavError::Malformed {
                offset: at,
                reason: "no data chunk".into(),
            });
        }
        need(b, at, 8)?;
        let id = &b[at..at + 4];
        let size = u32_at(b, at + 4) as usize;
        let body = at + 8;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(WavError::Malformed {
                        offset: at + 4,
                        reason: format!("fmt chunk of {size} bytes, need 16"),
                    });
                }
                need(b, body, size)?;
                let mut tag = u16_at(b, body);
                let channels = u16_at(b, body + 2);
                let rate = u32_at(b, body + 4);
                let bits = u16_at(b, body + 14);
                if tag == EXTENSIBLE && size >= 40 {
                    tag = u16_at(b, body + 24);
                }
                if tag != PCM {
                    return Err(WavError::Unsupported {
                        offset: body,
                        reason: format!("format tag {tag:#06x}, only PCM is supported"),
                    });
                }
                if bits != 16 {
                    return Err(WavError::Unsupported {
                        offset: body + 14,
                        reason: format!("{bits}-bit samples, only 16-bit is supported"),
                    });
                }
                if !(1..=2).contains(&channels) {
                    return Err(WavError::Unsupported {
                        offset: body + 2,
                        reason: format!("{channels} channels, only mono and stereo are supported"),
                    });
                }
                if rate == 0 {
                    return Err(WavError::Malformed {
                        offset: body + 4,
                        reason: "sample rate is zero".into(),
                    });
                }
                format = Some((channels, rate));
            }
            b"data" => {
                let (channels, rate) = format.ok_or_else(|| WavError::Malformed {
                    offset: at,
                    reason: "data chunk before fmt chunk".into(),
                })?;
                need(b, body, size)?;
                let frame = 2 * channels as usize;
                if size % frame != 0 {
                    return Err(WavError::Malformed {
                        offset: at + 4,
                        reason: format!("data size {size} is not a multiple of the {frame}-byte frame"),
                    });
                }
                let data = &b[body..body + size];
                let samples = data
                    .chunks_exact(frame)
                    .map(|f| {
                        let sum: f32 = f
                            .chunks_exact(2)
                            .map(|s| i16::from_le_bytes([s[0], s[1]]) as f32 / 32768.0)
                            .sum();
                        sum / channels as f32
                    })
                    .collect();
                return Ok(AudioClip { samples, rate });
            }
            _ => {}
        }
        at = body + size + (size & 1);
    }
}

/// Encodes a clip as mono PCM16, rounding and clipping to the 16-bit range.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut b = Vec::with_capacity(44 + data_len);
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&PCM.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&clip.rate.to_le_bytes());
    b.extend_from_slice(&(clip.rate * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_wav(&bytes)?)
}

pub fn save_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip)).map_err(|e| Error::io(path, e))
}

pub const DEFAULT_SILENCE_DB: f64 = -60.0;

/// Removes leading and trailing runs whose magnitude is below
/// `threshold_db` relative to the clip peak.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64) -> Result<AudioClip> {
    let peak = clip.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::Degenerate("clip is empty or entirely silent".into()));
    }
    let thr = peak as f64 * 10f64.powf(threshold_db / 20.0);
    let loud = |v: &f32| v.abs() as f64 >= thr;
    let first = clip.samples.iter().position(loud).expect("peak is loud");
    let last = clip.samples.iter().rposition(loud).expect("peak is loud");
    Ok(clip.with(clip.samples[first..=last].to_vec()))
}

/// Zero mean, unit (population) standard deviation.
pub fn normalize(clip: &AudioClip) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::Degenerate("cannot normalize an empty clip".into()));
    }
    let n = clip.len() as f64;
    let mean = clip.samples.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = clip
        .samples
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::Degenerate(
            "constant waveform has zero standard deviation".into(),
        ));
    }
    Ok(clip.with(
        clip.samples
            .iter()
            .map(|&v| ((v as f64 - mean) / sd) as f32)
            .collect(),
    ))
}

/// Reads the input at positions `i * factor` with linear interpolation
/// while `i * factor <= len - 1`. Factors above 1 shorten the clip and
/// raise its pitch.
pub fn resample_linear(clip: &AudioClip, factor: f64) -> Result<AudioClip> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Config(format!("resample factor must be positive, got {factor}")));
    }
    if clip.is_empty() {
        return Ok(clip.clone());
    }
    let x = &clip.samples;
    let last = (x.len() - 1) as f64;
    let mut out = Vec::with_capacity((last / factor) as usize + 1);
    let mut i = 0usize;
    loop {
        let pos = i as f64 * factor;
        if pos > last {
            break;
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        out.push(if frac == 0.0 {
            x[k]
        } else {
            (x[k] as f64 * (1.0 - frac) + x[k + 1] as f64 * frac) as f32
        });
        i += 1;
    }
    Ok(clip.with(out))
}

/// Repeats the clip end to end until it holds at least `len` samples.
pub fn tile_to(clip: &AudioClip, len: usize) -> AudioClip {
    if clip.len() >= len || clip.is_empty() {
        return clip.clone();
    }
    clip.with(clip.samples.iter().copied().cycle().take(len).collect())
}

pub fn seconds_to_samples(seconds: f64, rate: u32) -> usize {
    (seconds * rate as f64).round() as usize
}

/// Contiguous window of `seconds` at a uniform random offset; shorter clips
/// are tiled first. Returns the window and its offset.
pub fn random_crop_at<R: Rng + ?Sized>(clip: &AudioClip, seconds: f64, rng: &mut R) -> Result<(AudioClip, usize)> {
    if clip.is_empty() {
        return Err(Error::Degenerate("cannot crop an empty clip".into()));
    }
    let n = seconds_to_samples(seconds, clip.rate);
    if n == 0 {
        return Err(Error::Config(format!("crop of {seconds} s is empty")));
    }
    let src = tile_to(clip, n);
    let offset = rng.random_range(0..=src.len() - n);
    Ok((clip.with(src.samples[offset..offset + n].to_vec()), offset))
}

pub fn random_crop<R: Rng + ?Sized>(clip: &AudioClip, seconds: f64, rng: &mut R) -> Result<AudioClip> {
    Ok(random_crop_at(clip, seconds, rng)?.0)
}

pub fn apply_gain(clip: &AudioClip, gain_db: f64) -> AudioClip {
    let k = 10f64.powf(gain_db / 20.0);
    clip.with(clip.samples.iter().map(|&v| (v as f64 * k) as f32).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub crop_seconds: f64,
    pub pre_crop_seconds: f64,
    pub resample_range: (f64, f64),
    pub gain_range_db: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_seconds: 1.5,
            pre_crop_seconds: 2.0,
            resample_range: (0.8, 1.25),
            gain_range_db: (-6.0, 6.0),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.resample_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!(
                "resample range must be positive and ordered, got [{lo}, {hi}]"
            )));
        }
        if self.gain_range_db.0 > self.gain_range_db.1 {
            return Err(Error::Config("gain range must be ordered".into()));
        }
        if !(self.crop_seconds > 0.0) {
            return Err(Error::Config("crop length must be positive".into()));
        }
        // the fastest resample shortens the segment most
        if self.pre_crop_seconds / hi < self.crop_seconds {
            return Err(Error::Config(format!(
                "a {} s segment resampled by {hi} is shorter than the {} s crop",
                self.pre_crop_seconds, self.crop_seconds
            )));
        }
        Ok(())
    }
}

/// Random choices made by one [`augment_example`] call, in draw order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraws {
    pub segment_offset: usize,
    pub factor: f64,
    pub crop_offset: usize,
    pub gain_db: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Random segment, normalization, random resample, exact crop, random
/// gain, with draws taken in that order. Output length is always
/// `crop_seconds * rate` samples.
pub fn augment_example_with_draws<R: Rng + ?Sized>(
    clip: &AudioClip,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<(AudioClip, AugmentDraws)> {
    config.validate()?;
    let (segment, segment_offset) = random_crop_at(clip, config.pre_crop_seconds, rng)?;
    let segment = normalize(&segment)?;
    let factor = uniform(rng, config.resample_range);
    let stretched = resample_linear(&segment, factor)?;
    let (cropped, crop_offset) = random_crop_at(&stretched, config.crop_seconds, rng)?;
    let gain_db = uniform(rng, config.gain_range_db);
    Ok((
        apply_gain(&cropped, gain_db),
        AugmentDraws {
            segment_offset,
            factor,
            crop_offset,
            gain_db,
        },
    ))
}

pub fn augment_example<R: Rng + ?Sized>(clip: &AudioClip, config: &AugmentConfig, rng: &mut R) -> Result<AudioClip> {
    Ok(augment_example_with_draws(clip, config, rng)?.0)
}

pub const NUM_FOLDS: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub filename: String,
    pub fold: u8,
    pub target: usize,
    pub category: String,
}

/// Corpus metadata. Duplicate filenames are kept as separate entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
}

/// Parses an index with columns `filename,fold,target,category` (any order,
/// extra columns ignored). Row numbers in errors count data rows from 1.
pub fn parse_index<R: std::io::Read>(reader: R, num_classes: usize) -> Result<DatasetIndex> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IndexError::Parse(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IndexError::MissingColumn(name.into()))
    };
    let (cf, cd, ct, cc) = (col("filename")?, col("fold")?, col("target")?, col("category")?);
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| IndexError::BadRow {
            row,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| IndexError::BadRow { row, reason };
        let field = |c: usize| rec.get(c).unwrap_or("");
        let fold: u8 = field(cd)
            .parse()
            .map_err(|_| bad(format!("fold `{}` is not an integer", field(cd))))?;
        if !(1..=NUM_FOLDS).contains(&fold) {
            return Err(bad(format!("fold {fold} outside 1..={NUM_FOLDS}")).into());
        }
        let target: usize = field(ct)
            .parse()
            .map_err(|_| bad(format!("target `{}` is not an integer", field(ct))))?;
        if target >= num_classes {
            return Err(bad(format!("target {target} outside 0..{num_classes}")).into());
        }
        if field(cf).is_empty() {
            return Err(bad("empty filename".into()).into());
        }
        entries.push(IndexEntry {
            filename: field(cf).to_string(),
            fold,
            target,
            category: field(cc).to_string(),
        });
    }
    Ok(DatasetIndex { entries })
}

pub fn load_index(path: impl AsRef<Path>, num_classes: usize) -> Result<DatasetIndex> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_index(file, num_classes)
}

/// `(train, test)` where test holds exactly the entries of `test_fold`.
pub fn split_folds(index: &DatasetIndex, test_fold: u8) -> Result<(Vec<IndexEntry>, Vec<IndexEntry>)> {
    if !(1..=NUM_FOLDS).contains(&test_fold) {
        return Err(Error::Config(format!(
            "test fold must be in 1..={NUM_FOLDS}, got {test_fold}"
        )));
    }
    Ok(index
        .entries
        .iter()
        .cloned()
        .partition(|e| e.fold != test_fold))
}

/// Labeled clip ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub path: PathBuf,
    pub clip: AudioClip,
    pub target: usize,
}

/// Loads and silence-trims every entry under `dir`. All clips must be at
/// `rate`.
pub fn load_clips(dir: impl AsRef<Path>, entries: &[IndexEntry], rate: u32, silence_db: f64) -> Result<Vec<LabeledClip>> {
    let dir = dir.as_ref();
    entries
        .iter()
        .map(|e| {
            let path = dir.join(&e.filename);
            let clip = load_wav(&path)?;
            if clip.rate != rate {
                return Err(Error::Config(format!(
                    "{}: sample rate {} Hz, model expects {rate} Hz",
                    path.display(),
                    clip.rate
                )));
            }
            let clip = trim_silence(&clip, silence_db).map_err(|err| match err {
                Error::Degenerate(m) => Error::Degenerate(format!("{}: {m}", path.display())),
                other => other,
            })?;
            Ok(LabeledClip {
                path,
                clip,
                target: e.target,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pcm(channels: u16, rate: u32, samples: &[i16]) -> Vec<u8> {
        let data: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
        let mut b = b"RIFF".to_vec();
        b.extend_from_slice(&(36 + data.len() as u32 + 12).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        b.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        b.extend_from_slice(&(2 * channels).to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        // an unrelated odd-sized chunk that must be skipped with its pad byte
        b.extend_from_slice(b"LIST");
        b.extend_from_slice(&3u32.to_le_bytes());
        b.extend_from_slice(&[1, 2, 3, 0]);
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(&data);
        b
    }

    fn clip(v: &[f32]) -> AudioClip {
        AudioClip::new(v.to_vec(), 16_000)
    }

    fn sine(freq: f64, rate: u32, seconds: f64) -> AudioClip {
        let n = seconds_to_samples(seconds, rate);
        AudioClip::new(
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() as f32)
                .collect(),
            rate,
        )
    }

    fn zero_crossing_hz(c: &AudioClip) -> f64 {
        let z = c
            .samples
            .windows(2)
            .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
            .count();
        z as f64 / 2.0 / c.duration()
    }

    #[test]
    fn decode_scaling_and_stereo() {
        let c = decode_wav(&pcm(1, 16_000, &[0, 16384, -32768])).unwrap();
        assert_eq!(c.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(c.rate, 16_000);
        let c = decode_wav(&pcm(2, 44_100, &[32767, 0, -32768, -32768])).unwrap();
        assert!((c.samples[0] - 0.5).abs() < 1e-4);
        assert_eq!(c.samples[1], -1.0);
    }

    #[test]
    fn five_seconds_at_44k() {
        let c = decode_wav(&pcm(1, 44_100, &vec![0; 220_500])).unwrap();
        assert_eq!(c.len(), 220_500);
        assert!((c.duration() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn decode_errors_name_offsets() {
        let good = pcm(1, 16_000, &[1, 2, 3]);
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode_wav(&b), Err(WavError::Malformed { offset: 0, .. })));

        let mut b = good.clone();
        b[20] = 3; // IEEE float tag
        assert!(matches!(decode_wav(&b), Err(WavError::Unsupported { offset: 20, .. })));

        let mut b = good.clone();
        b[34] = 24;
        assert!(matches!(decode_wav(&b), Err(WavError::Unsupported { offset: 34, .. })));

        let b = &good[..good.len() - 2];
        match decode_wav(b) {
            Err(WavError::Truncated { expected: 6, found: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_wav(&good[..7]), Err(WavError::Truncated { offset: 0, .. })));
    }

    #[test]
    fn wav_round_trip() {
        let c = clip(&[0.0, 0.5, -1.0, 0.25]);
        assert_eq!(decode_wav(&encode_wav(&c)).unwrap(), c);
    }

    #[test]
    fn trim_examples() {
        let c = trim_silence(&clip(&[0., 0., 0.5, 0., 0.]), -60.0).unwrap();
        assert_eq!(c.samples, vec![0.5]);
        let c0 = clip(&[0.3, -0.2, 0.5]);
        assert_eq!(trim_silence(&c0, -60.0).unwrap(), c0);
        assert!(matches!(trim_silence(&clip(&[0.0; 4]), -60.0), Err(Error::Degenerate(_))));

        // low-level noise around a loud burst
        let mut v = vec![0.0f32; 1000];
        for (i, s) in v.iter_mut().enumerate() {
            *s = if i % 2 == 0 { 0.0005 } else { -0.0005 };
        }
        for s in &mut v[400..600] {
            *s = 1.0;
        }
        let c = trim_silence(&clip(&v), -60.0).unwrap();
        assert_eq!(c.len(), 200);
    }

    #[test]
    fn normalize_examples() {
        let c = normalize(&clip(&[1.0, 3.0])).unwrap();
        assert_eq!(c.samples, vec![-1.0, 1.0]);
        assert!(matches!(normalize(&clip(&[5.0; 3])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn resample_examples() {
        let c = clip(&[0., 1., 2., 3., 4.]);
        assert_eq!(resample_linear(&c, 2.0).unwrap().samples, vec![0., 2., 4.]);
        let c = sine(123.0, 16_000, 0.3);
        assert_eq!(resample_linear(&c, 1.0).unwrap(), c);
        let up = resample_linear(&sine(440.0, 16_000, 2.0), 1.25).unwrap();
        assert!((zero_crossing_hz(&up) - 550.0).abs() <= 1.0, "{}", zero_crossing_hz(&up));
    }

    #[test]
    fn gain_examples() {
        let c = clip(&[1.0, -0.5]);
        assert_eq!(apply_gain(&c, 0.0), c);
        let g = apply_gain(&c, -6.0);
        assert!((g.samples[0] - 0.5012).abs() < 1e-4);
    }

    #[test]
    fn crop_offsets_in_range() {
        let c = AudioClip::new(vec![0.1; 32_000], 16_000);
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, off) = random_crop_at(&c, 1.5, &mut rng).unwrap();
            assert_eq!(w.len(), 24_000);
            assert!(off <= 8_000);
        }
    }

    #[test]
    fn short_clips_are_tiled() {
        let c = clip(&[1.0, 2.0, 3.0]);
        assert_eq!(tile_to(&c, 7).samples, vec![1., 2., 3., 1., 2., 3., 1.]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(random_crop(&c, 0.001, &mut rng).unwrap().len(), 16);
    }

    #[test]
    fn augment_is_deterministic_and_fixed_length() {
        let c = sine(300.0, 16_000, 5.0);
        let cfg = AugmentConfig::default();
        let a = augment_example(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = augment_example(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 24_000);

        let slow = AugmentConfig {
            resample_range: (0.8, 0.8),
            ..cfg
        };
        let (out, d) = augment_example_with_draws(&c, &slow, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(d.factor, 0.8);
        assert_eq!(out.len(), 24_000);
        assert!(d.crop_offset <= 40_000 - 24_000);
    }

    #[test]
    fn augment_config_validation() {
        let bad = AugmentConfig {
            resample_range: (0.8, 1.5),
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }

    const INDEX: &str = "filename,fold,target,category,esc10,src_file,take\n\
        a.wav,1,0,dog,True,100,A\n\
        b.wav,2,1,rooster,True,101,A\n\
        a.wav,1,0,dog,True,100,B\n";

    #[test]
    fn index_parsing_and_folds() {
        let idx = parse_index(INDEX.as_bytes(), 50).unwrap();
        assert_eq!(idx.entries.len(), 3);
        let (train, test) = split_folds(&idx, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1, 2));
        assert!(split_folds(&idx, 6).is_err());

        let one = parse_index("filename,fold,target,category\nx.wav,3,4,cat\n".as_bytes(), 50).unwrap();
        let (train, test) = split_folds(&one, 3).unwrap();
        assert!(train.is_empty());
        assert_eq!(test.len(), 1);
    }

    #[test]
    fn esc50_sized_split() {
        let mut s = String::from("filename,fold,target,category\n");
        for i in 0..2000 {
            s.push_str(&format!("{i}.wav,{},{},c\n", i % 5 + 1, i % 50));
        }
        let idx = parse_index(s.as_bytes(), 50).unwrap();
        let (train, test) = split_folds(&idx, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1600, 400));
    }

    #[test]
    fn index_errors() {
        let e = parse_index("filename,fold,category\n".as_bytes(), 50).unwrap_err();
        assert!(matches!(e, Error::Index(IndexError::MissingColumn(ref c)) if c == "target"));
        let e = parse_index("filename,fold,target,category\nx,1,0,a\ny,9,0,a\n".as_bytes(), 50).unwrap_err();
        assert!(matches!(e, Error::Index(IndexError::BadRow { row: 2, .. })));
        let e = parse_index("filename,fold,target,category\nx,1,50,a\n".as_bytes(), 50).unwrap_err();
        assert!(matches!(e, Error::Index(IndexError::BadRow { row: 1, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(-1.0f32..1.0, 2..400)) {
            prop_assume!(v.iter().any(|&x| (x - v[0]).abs() > 1e-3));
            let a = normalize(&clip(&v)).unwrap();
            let b = normalize(&a).unwrap();
            for (x, y) in a.samples.iter().zip(&b.samples) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn augment_length_is_constant(seed in any::<u64>(), secs in 0.05f64..4.0) {
            let c = sine(200.0 + secs * 100.0, 16_000, secs);
            let out = augment_example(&c, &AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(out.len(), 24_000);
        }

        #[test]
        fn resample_length(len in 1usize..500, factor in 0.5f64..2.0) {
            let c = clip(&vec![0.5; len]);
            let out = resample_linear(&c, factor).unwrap();
            let n = out.len();
            prop_assert!((n - 1) as f64 * factor <= (len - 1) as f64);
            prop_assert!(n as f64 * factor > (len - 1) as f64);
        }
    }
}
