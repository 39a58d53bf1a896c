//! Loading, saving and conditioning of univariate signals.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::generator::default_spec;

#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    /// Hz, when known.
    pub sample_rate: Option<f64>,
    /// Where the samples came from, e.g. a path or generator parameters.
    pub source: String,
}

impl Signal {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: Option<f64>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("a signal needs at least one sample"));
        }
        if let Some(rate) = sample_rate {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::invalid(format!(
                    "sample rate must be positive, got {rate}"
                )));
            }
        }
        Ok(Signal {
            samples,
            sample_rate,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Reads a PCM WAV file, averaging channels to mono. Integer samples are
/// divided by `2^(bits − 1)`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let full_scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
    };
    if channels == 0 || interleaved.len() % channels != 0 {
        return Err(Error::format(
            path,
            "sample count is not a whole number of frames",
        ));
    }
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if samples.is_empty() {
        return Err(Error::format(path, "file contains no samples"));
    }
    Signal::new(
        samples,
        Some(spec.sample_rate as f64),
        path.display().to_string(),
    )
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::format(path, other.to_string()),
    }
}

/// Which CSV column to read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Column {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for Column {
    type Err = std::convert::Infallible;

    /// All-digit text selects by position, anything else by header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

/// A CSV column with blank cells. Blank positions hold NaN in `signal`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvColumn {
    pub signal: Signal,
    pub missing: Vec<usize>,
}

/// Reads one column of a headed, comma-separated file.
pub fn load_csv(path: impl AsRef<Path>, column: &Column) -> Result<CsvColumn> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let index = match column {
        Column::Index(i) if *i < headers.len() => *i,
        Column::Name(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(path, format!("no column named `{name}`")))?,
        Column::Index(i) => {
            return Err(Error::format(
                path,
                format!("column {i} requested but the header has {}", headers.len()),
            ))
        }
    };

    let mut samples = Vec::new();
    let mut missing = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = record.get(index).unwrap_or("").trim();
        if cell.is_empty() {
            missing.push(samples.len());
            samples.push(f64::NAN);
            continue;
        }
        let value: f64 = cell.parse().map_err(|_| {
            Error::format(
                path,
                format!("line {line}, column {index}: `{cell}` is not a number"),
            )
        })?;
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    Ok(CsvColumn {
        signal: Signal::new(
            samples,
            None,
            format!("{}:{}", path.display(), headers[index].trim()),
        )?,
        missing,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::io(path, source),
            other => Error::format(path, format!("{other:?}")),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header row then one row per sample. All columns must have the
/// same length.
pub fn save_csv(path: impl AsRef<Path>, columns: &[(&str, &[f64])]) -> Result<()> {
    let path = path.as_ref();
    let rows = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != rows) {
        return Err(Error::shape("CSV columns differ in length"));
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(columns.iter().map(|c| c.0))
        .map_err(|e| csv_error(path, e))?;
    for i in 0..rows {
        writer
            .write_record(columns.iter().map(|c| format_real(c.1[i])))
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// `v = scale·x + offset`, mapping the original range onto `[−1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
    pub min: f64,
    pub max: f64,
}

impl AffineMap {
    pub fn forward(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }

    pub fn inverse(&self, v: f64) -> f64 {
        (v + 1.0) * 0.5 * (self.max - self.min) + self.min
    }
}

/// `x ↦ 2(x − min)/(max − min) − 1`. Non-finite samples (missing cells) are
/// ignored when finding the range and pass through unchanged.
pub fn normalize_unit_range(s: &Signal) -> Result<(Signal, AffineMap)> {
    let finite = s.samples.iter().copied().filter(|v| v.is_finite());
    let (min, max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !(max > min) {
        return Err(Error::invalid("cannot normalize a constant signal"));
    }
    let map = AffineMap {
        scale: 2.0 / (max - min),
        offset: -2.0 * min / (max - min) - 1.0,
        min,
        max,
    };
    let samples = s
        .samples
        .iter()
        .map(|&v| {
            if v.is_finite() {
                map.forward(v).clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    Ok((
        Signal {
            samples,
            sample_rate: s.sample_rate,
            source: s.source.clone(),
        },
        map,
    ))
}

pub fn denormalize(samples: &[f64], map: &AffineMap) -> Vec<f64> {
    samples.iter().map(|&v| map.inverse(v)).collect()
}

/// Hamming-windowed sinc low-pass with `8·factor + 1` taps and cutoff
/// `0.45/factor` of the Nyquist frequency, normalized to unit DC gain.
pub fn anti_alias_taps(factor: usize) -> Vec<f64> {
    let taps = 8 * factor + 1;
    let half = (taps / 2) as f64;
    let cutoff = 0.45 / factor as f64 * 0.5;
    let h: Vec<f64> = (0..taps)
        .map(|i| {
            let k = i as f64 - half;
            let sinc = if k == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * k).sin() / (PI * k)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (taps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let gain: f64 = h.iter().sum();
    h.into_iter().map(|v| v / gain).collect()
}

/// Zero-phase application of [`anti_alias_taps`], mirroring the signal
/// about its end samples to fill the filter support.
pub fn anti_alias_filter(x: &[f64], factor: usize) -> Vec<f64> {
    let h = anti_alias_taps(factor);
    let half = h.len() / 2;
    let n = x.len() as isize;
    let at = |i: isize| -> f64 {
        // whole-sample symmetric reflection, repeated for very short inputs
        let mut i = i;
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * (n - 1) - i;
            } else {
                return x[i as usize];
            }
            if n == 1 {
                return x[0];
            }
        }
    };
    (0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(j, &c)| c * at(i + j as isize - half as isize))
                .sum()
        })
        .collect()
}

/// Low-pass then keep every `factor`-th sample.
pub fn decimate(s: &Signal, factor: usize) -> Result<Signal> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be >= 1"));
    }
    let rate = s
        .sample_rate
        .ok_or_else(|| Error::invalid("decimation needs a known sample rate"))?;
    if factor == 1 {
        return Ok(s.clone());
    }
    let filtered = anti_alias_filter(&s.samples, factor);
    Signal::new(
        filtered.into_iter().step_by(factor).collect(),
        Some(rate / factor as f64),
        s.source.clone(),
    )
}

/// Linear-sweep chirp `sin(2π(f0·t + (f1 − f0)·t²/(2T)))`.
pub fn gen_chirp(f0: f64, f1: f64, n: usize, fs: f64) -> Result<Signal> {
    if n == 0 {
        return Err(Error::invalid("chirp needs n >= 1"));
    }
    if !(fs > 2.0 * f0.max(f1)) || f0 < 0.0 || f1 < 0.0 {
        return Err(Error::invalid(format!(
            "sample rate {fs} Hz aliases a sweep from {f0} to {f1} Hz"
        )));
    }
    let total = n as f64 / fs;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            (2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * total))).sin()
        })
        .collect();
    Signal::new(
        samples,
        Some(fs),
        format!("chirp f0={f0} f1={f1} n={n} fs={fs}"),
    )
}

/// Length the generator can produce for a signal of `len` samples: `len`
/// itself when it already factors, otherwise the next `16·2^k` with `k ≥ 1`.
pub fn valid_length(len: usize) -> usize {
    if default_spec(len, 1).is_ok() {
        return len;
    }
    let mut n = 32;
    while n < len {
        n *= 2;
    }
    n
}

/// Zero-pads at the end to [`valid_length`]; returns the original length.
pub fn pad_to_valid_length(s: &Signal) -> (Signal, usize) {
    let original = s.len();
    let mut padded = s.clone();
    padded.samples.resize(valid_length(original), 0.0);
    (padded, original)
}

pub fn crop(samples: &[f64], original_length: usize) -> Vec<f64> {
    samples[..original_length.min(samples.len())].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn write_wav_i16(path: &Path, channels: u16, samples: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 8192,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn wav_int16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        write_wav_i16(&path, 1, &[0, 16384, -32768]);
        let s = load_wav(&path).unwrap();
        assert_eq!(s.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(s.sample_rate, Some(8192.0));
    }

    #[test]
    fn wav_stereo_float_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..4 {
            w.write_sample(1.0f32).unwrap();
            w.write_sample(0.0f32).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(load_wav(&path).unwrap().samples, vec![0.5; 4]);
    }

    #[test]
    fn wav_24_and_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        for (bits, value, expected) in [(24u16, -(1i32 << 22), -0.5), (8, 64, 0.5)] {
            let path = dir.path().join(format!("c{bits}.wav"));
            let spec = hound::WavSpec {
                channels: 1,
                sample_rate: 1000,
                bits_per_sample: bits,
                sample_format: hound::SampleFormat::Int,
            };
            let mut w = hound::WavWriter::create(&path, spec).unwrap();
            w.write_sample(value).unwrap();
            w.finalize().unwrap();
            assert_eq!(load_wav(&path).unwrap().samples, vec![expected]);
        }
    }

    #[test]
    fn wav_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.wav");
        let mut rng = seeded(4);
        let original: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let quantized: Vec<i16> = original
            .iter()
            .map(|v| (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
            .collect();
        write_wav_i16(&path, 1, &quantized);
        let back = load_wav(&path).unwrap();
        for (a, b) in back.samples.iter().zip(&original) {
            assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn wav_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.wav");
        std::fs::write(&path, b"definitely not RIFF").unwrap();
        let err = load_wav(&path).unwrap_err().to_string();
        assert!(err.contains("junk.wav"), "{err}");
        assert!(load_wav(dir.path().join("absent.wav")).is_err());
    }

    #[test]
    fn csv_basic_and_blank_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "v\n1\n2\n").unwrap();
        let col = load_csv(&path, &Column::Name("v".into())).unwrap();
        assert_eq!(col.signal.samples, vec![1.0, 2.0]);
        assert!(col.missing.is_empty());

        std::fs::write(&path, "t,v\n0,1\n1,\n2,3\n").unwrap();
        let col = load_csv(&path, &Column::Index(1)).unwrap();
        assert_eq!(col.missing, vec![1]);
        assert_eq!(col.signal.samples[0], 1.0);
        assert!(col.signal.samples[1].is_nan());
    }

    #[test]
    fn csv_errors_carry_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n3,x\n").unwrap();
        let err = load_csv(&path, &Column::Name("b".into()))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3") && err.contains("column 1"), "{err}");
        assert!(load_csv(&path, &Column::Name("c".into())).is_err());
        assert!(load_csv(&path, &Column::Index(2)).is_err());
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut rng = seeded(9);
        let values: Vec<f64> = (0..1000)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 10f64.powi(rng.random_range(-30..30)))
            .collect();
        save_csv(&path, &[("x", &values)]).unwrap();
        let back = load_csv(&path, &Column::Name("x".into())).unwrap();
        assert_eq!(back.signal.samples, values);
        assert!(save_csv(&path, &[("a", &[1.0]), ("b", &[])]).is_err());
    }

    #[test]
    fn column_parsing() {
        assert_eq!("3".parse::<Column>().unwrap(), Column::Index(3));
        assert_eq!("co2".parse::<Column>().unwrap(), Column::Name("co2".into()));
    }

    #[test]
    fn normalization_examples() {
        let s = Signal::new(vec![0.0, 5.0, 10.0], None, "t").unwrap();
        let (n, map) = normalize_unit_range(&s).unwrap();
        assert_eq!(n.samples, vec![-1.0, 0.0, 1.0]);
        assert_eq!((map.scale, map.offset), (0.2, -1.0));

        let s = Signal::new(vec![-1.0, 0.5, 1.0, -0.25], None, "t").unwrap();
        assert_eq!(normalize_unit_range(&s).unwrap().0.samples, s.samples);

        let flat = Signal::new(vec![2.0; 4], None, "t").unwrap();
        assert!(normalize_unit_range(&flat).is_err());
    }

    #[test]
    fn normalization_skips_missing_cells() {
        let s = Signal::new(vec![0.0, f64::NAN, 4.0], None, "t").unwrap();
        let (n, _) = normalize_unit_range(&s).unwrap();
        assert_eq!(n.samples[0], -1.0);
        assert!(n.samples[1].is_nan());
        assert_eq!(n.samples[2], 1.0);
    }

    proptest! {
        #[test]
        fn normalization_round_trips(values in prop::collection::vec(-1e3f64..1e3, 2..300)) {
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let s = Signal::new(values.clone(), None, "p").unwrap();
            let (n, map) = normalize_unit_range(&s).unwrap();
            prop_assert!(n.samples.iter().all(|v| (-1.0..=1.0).contains(v)));
            let back = denormalize(&n.samples, &map);
            for (a, b) in back.iter().zip(&values) {
                prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()) * 1e3);
            }
        }

        #[test]
        fn crop_undoes_padding(len in 100usize..2000) {
            let s = Signal::new((0..len).map(|i| i as f64).collect(), None, "p").unwrap();
            let (padded, original) = pad_to_valid_length(&s);
            prop_assert_eq!(original, len);
            prop_assert!(default_spec(padded.len(), 1).is_ok());
            prop_assert!(padded.samples[len..].iter().all(|&v| v == 0.0));
            prop_assert_eq!(crop(&padded.samples, original), s.samples);
        }

        #[test]
        fn chirp_is_bounded(f0 in 0.0f64..1000.0, f1 in 0.0f64..1000.0, n in 1usize..3000) {
            let s = gen_chirp(f0, f1, n, 8192.0).unwrap();
            prop_assert_eq!(s.samples[0], 0.0);
            prop_assert!(s.samples.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn padding_examples() {
        let s = Signal::new(vec![1.0; 1024], None, "t").unwrap();
        assert_eq!(pad_to_valid_length(&s).0.len(), 1024);
        let s = Signal::new(vec![1.0; 1000], None, "t").unwrap();
        let (p, original) = pad_to_valid_length(&s);
        assert_eq!((p.len(), original), (1024, 1000));
        assert_eq!(valid_length(96), 96);
        assert_eq!(valid_length(1), 32);
        assert_eq!(valid_length(16384), 16384);
    }

    #[test]
    fn constant_sweep_is_a_sinusoid() {
        let s = gen_chirp(100.0, 100.0, 8192, 8192.0).unwrap();
        for (i, v) in s.samples.iter().enumerate() {
            let t = i as f64 / 8192.0;
            assert!((v - (2.0 * PI * 100.0 * t).sin()).abs() < 1e-9);
        }
        assert!(gen_chirp(750.0, 250.0, 10, 1500.0).is_err());
    }

    fn power_spectrum(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new()
            .plan_fft_forward(buf.len())
            .process(&mut buf);
        buf[..x.len() / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr() / x.len() as f64)
            .collect()
    }

    #[test]
    fn chirp_instantaneous_frequency() {
        let (fs, n) = (8192.0, 16384);
        let s = gen_chirp(750.0, 250.0, n, fs).unwrap();
        let frame = 1024;
        let fft_len = 16384;
        for center in [2048usize, 8192, 14336] {
            let mut buf = vec![0.0; fft_len];
            for j in 0..frame {
                let w = 0.5 - 0.5 * (2.0 * PI * j as f64 / (frame - 1) as f64).cos();
                buf[j] = w * s.samples[center - frame / 2 + j];
            }
            let p = power_spectrum(&buf);
            let peak = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            let measured = peak as f64 * fs / fft_len as f64;
            let t = center as f64 / fs;
            let expected = 750.0 + (250.0 - 750.0) * t / (n as f64 / fs);
            assert!(
                (measured - expected).abs() < 10.0,
                "{measured} vs {expected}"
            );
        }
    }

    #[test]
    fn decimation_by_one_is_identity() {
        let s = gen_chirp(100.0, 300.0, 500, 8192.0).unwrap();
        assert_eq!(decimate(&s, 1).unwrap(), s);
        let unknown = Signal::new(vec![0.0; 10], None, "t").unwrap();
        assert!(decimate(&unknown, 2).is_err());
        assert!(decimate(&s, 0).is_err());
    }

    #[test]
    fn tone_survives_decimation() {
        let s = gen_chirp(100.0, 100.0, 16384, 16384.0).unwrap();
        let d = decimate(&s, 2).unwrap();
        assert_eq!(d.sample_rate, Some(8192.0));
        assert_eq!(d.len(), 8192);
        for (i, v) in d.samples.iter().enumerate().skip(100).take(8192 - 200) {
            let expected = (2.0 * PI * 100.0 * i as f64 / 8192.0).sin();
            assert!((v - expected).abs() < 0.01, "sample {i}: {v} vs {expected}");
        }
    }

    fn band_power(p: &[f64], lo: f64, hi: f64) -> f64 {
        // lo, hi as fractions of Nyquist
        let bins = p.len() - 1;
        let (a, b) = (
            (lo * bins as f64).ceil() as usize,
            (hi * bins as f64).floor() as usize,
        );
        p[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
    }

    fn averaged_spectrum(frames: &[Vec<f64>]) -> Vec<f64> {
        let spectra: Vec<Vec<f64>> = frames.iter().map(|f| power_spectrum(f)).collect();
        (0..spectra[0].len())
            .map(|k| spectra.iter().map(|s| s[k]).sum::<f64>() / spectra.len() as f64)
            .collect()
    }

    #[test]
    fn anti_alias_filter_rejects_aliasing_band() {
        let factor = 2;
        let mut rng = seeded(21);
        let noise: Vec<f64> = (0..1 << 16).map(|_| rng.sample(StandardNormal)).collect();
        let filtered = anti_alias_filter(&noise, factor);
        let frames: Vec<Vec<f64>> = filtered.chunks_exact(1024).map(<[f64]>::to_vec).collect();
        let p = averaged_spectrum(&frames);
        let pass = band_power(&p, 0.0, 0.2);
        // everything that would fold into the decimated band
        let alias = band_power(&p, 1.0 / factor as f64, 1.0);
        let db = 10.0 * (alias / pass).log10();
        assert!(db <= -30.0, "aliasing band at {db:.1} dB");
    }

    #[test]
    fn decimated_output_carries_little_aliased_power() {
        // noise confined above the new Nyquist frequency folds to at least 30 dB down
        let mut rng = seeded(22);
        let n = 1 << 16;
        let mut spectrum: Vec<Complex<f64>> = (0..n)
            .map(|_| Complex::new(rng.sample(StandardNormal), 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut spectrum);
        for (k, c) in spectrum.iter_mut().enumerate() {
            let f = k.min(n - k) as f64 / n as f64;
            if f < 0.25 {
                *c = Complex::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(n).process(&mut spectrum);
        let high: Vec<f64> = spectrum.iter().map(|c| c.re / n as f64).collect();
        let s = Signal::new(high.clone(), Some(16384.0), "hp").unwrap();
        let d = decimate(&s, 2).unwrap();
        let power_in = high.iter().map(|v| v * v).sum::<f64>() / high.len() as f64;
        let power_out = d.samples.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        let db = 10.0 * (power_out / power_in).log10();
        assert!(db <= -30.0, "aliased power at {db:.1} dB");
    }

    #[test]
    fn taps_are_symmetric_with_unit_gain() {
        for factor in 1..5 {
            let h = anti_alias_taps(factor);
            assert_eq!(h.len(), 8 * factor + 1);
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for i in 0..h.len() {
                assert!((h[i] - h[h.len() - 1 - i]).abs() < 1e-15);
            }
        }
    }
}
