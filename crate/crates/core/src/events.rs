//! Event stream interchange (CSV) and accumulation into event planes.
//!
//! One record per line: `t_us,x,y,polarity`, with `t_us` an integer
//! timestamp in microseconds, `x` the column, `y` the row and polarity
//! `1`/`0` or `1`/`-1`. Lines starting with `#` are comments; a leading
//! header line `t,x,y,p` is skipped.

use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sensor::{EventPlane, EventRecord, Polarity};

/// Records that arrive out of order by less than this are re-sorted
/// instead of rejected.
pub const REORDER_TOLERANCE_US: i64 = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    records: Vec<EventRecord>,
    resolution: (usize, usize),
    /// Translation time `2T`, seconds, when known.
    pub duration_hint: Option<f64>,
}

impl EventStream {
    /// Sorts `records` by time (stable) and checks coordinates.
    pub fn new(mut records: Vec<EventRecord>, resolution: (usize, usize)) -> Result<Self> {
        let (rows, cols) = resolution;
        for (k, r) in records.iter().enumerate() {
            if !r.t.is_finite() {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!("timestamp {} is not finite", r.t),
                });
            }
            if r.x as usize >= cols || r.y as usize >= rows {
                return Err(Error::OutOfBounds {
                    line: k + 1,
                    x: r.x.into(),
                    y: r.y.into(),
                    rows,
                    cols,
                });
            }
        }
        records.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self {
            records,
            resolution,
            duration_hint: None,
        })
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration_hint = Some(duration);
        self
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn parse_field<V: std::str::FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<V> {
    let raw = field
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("missing {name} field"),
        })?
        .trim();
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} {raw:?}"),
    })
}

/// Parses a CSV event export for a sensor of `resolution` `(rows, cols)`.
pub fn parse_event_csv<R: BufRead>(reader: R, resolution: (usize, usize)) -> Result<EventStream> {
    let (rows, cols) = resolution;
    let mut records = Vec::new();
    let mut latest: Option<i64> = None;
    let mut seen_data = false;
    for (k, line) in reader.lines().enumerate() {
        let number = k + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if !seen_data && text.replace(' ', "").eq_ignore_ascii_case("t,x,y,p") {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let mut fields = text.split(',');
        let t_us: i64 = parse_field(fields.next(), number, "timestamp")?;
        let x: i64 = parse_field(fields.next(), number, "x")?;
        let y: i64 = parse_field(fields.next(), number, "y")?;
        let p: i64 = parse_field(fields.next(), number, "polarity")?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: number,
                message: "expected 4 fields".into(),
            });
        }
        let polarity = match p {
            1 => Polarity::On,
            0 | -1 => Polarity::Off,
            other => {
                return Err(Error::Parse {
                    line: number,
                    message: format!("invalid polarity {other}"),
                })
            }
        };
        if x < 0 || y < 0 || x as usize >= cols || y as usize >= rows {
            return Err(Error::OutOfBounds {
                line: number,
                x,
                y,
                rows,
                cols,
            });
        }
        if let Some(prev) = latest {
            if t_us < prev - REORDER_TOLERANCE_US {
                return Err(Error::TimestampRegression {
                    line: number,
                    t_us,
                    previous_us: prev,
                });
            }
        }
        latest = Some(latest.map_or(t_us, |p| p.max(t_us)));
        records.push(EventRecord {
            t: t_us as f64 / 1e6,
            x: x as u32,
            y: y as u32,
            polarity,
        });
    }
    EventStream::new(records, resolution)
}

/// Writes `t_us,x,y,p` lines with a header; timestamps are rounded to the
/// nearest microsecond and polarity is written as `1`/`0`.
pub fn write_event_csv<W: Write>(mut writer: W, records: &[EventRecord]) -> Result<()> {
    writeln!(writer, "t,x,y,p")?;
    for r in records {
        let p = match r.polarity {
            Polarity::On => 1,
            Polarity::Off => 0,
        };
        writeln!(
            writer,
            "{},{},{},{}",
            (r.t * 1e6).round() as i64,
            r.x,
            r.y,
            p
        )?;
    }
    writer.flush()?;
    Ok(())
}

/// Signed event count per pixel over the half-open window
/// `[t_start, t_end)`. `t_end` may be infinite. The plane's duration is the
/// stream's hint when set, otherwise the window width.
pub fn accumulate<T: Scalar>(
    stream: &EventStream,
    window: (f64, f64),
    mu: T,
    delta: T,
) -> Result<EventPlane<T>> {
    let (t_start, t_end) = window;
    if !(t_start < t_end) {
        return Err(Error::domain(
            "accumulation window",
            format!("[{t_start}, {t_end}) is empty"),
        ));
    }
    let mut counts = Array2::<i32>::zeros(stream.resolution);
    for r in &stream.records {
        if r.t >= t_start && r.t < t_end {
            counts[[r.y as usize, r.x as usize]] += r.polarity.sign();
        }
    }
    let duration = stream
        .duration_hint
        .or_else(|| (t_end - t_start).is_finite().then_some(t_end - t_start))
        .unwrap_or(0.0);
    Ok(EventPlane {
        counts,
        mu,
        delta,
        duration: T::lit(duration),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, resolution: (usize, usize)) -> Result<EventStream> {
        parse_event_csv(text.as_bytes(), resolution)
    }

    #[test]
    fn empty_input() {
        assert!(parse("", (4, 4)).unwrap().is_empty());
    }

    #[test]
    fn two_records() {
        let s = parse("0,5,7,1\n1000,5,7,0", (10, 10)).unwrap();
        let r = s.records();
        assert_eq!(r.len(), 2);
        assert_eq!(
            (r[0].t, r[0].x, r[0].y, r[0].polarity),
            (0.0, 5, 7, Polarity::On)
        );
        assert_eq!(
            (r[1].t, r[1].x, r[1].y, r[1].polarity),
            (0.001, 5, 7, Polarity::Off)
        );
    }

    #[test]
    fn header_comments_and_signed_polarity() {
        let s = parse("# exported\nt,x,y,p\n10,0,0,-1\n\n20,1,0,+1\n", (1, 2)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.records()[0].polarity, Polarity::Off);
        assert_eq!(s.records()[1].polarity, Polarity::On);
    }

    #[test]
    fn malformed_line_names_line() {
        let err = parse("abc,1,2,1", (4, 4)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse("0,1,1,1\n5,1,1,2", (4, 4)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse("0,1,1", (4, 4)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn out_of_bounds() {
        let err = parse("0,4,0,1", (4, 4)).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { line: 1, x: 4, .. }));
        assert!(matches!(
            parse("0,-1,0,1", (4, 4)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn small_regression_is_reordered() {
        let s = parse("1500,0,0,1\n600,1,0,1\n2000,0,0,0", (1, 2)).unwrap();
        let t: Vec<f64> = s.records().iter().map(|r| r.t).collect();
        assert_eq!(t, vec![0.0006, 0.0015, 0.002]);
    }

    #[test]
    fn large_regression_is_rejected() {
        let err = parse("5000,0,0,1\n3999,0,0,1", (1, 1)).unwrap_err();
        assert!(matches!(
            err,
            Error::TimestampRegression {
                line: 2,
                t_us: 3999,
                previous_us: 5000
            }
        ));
    }

    #[test]
    fn accumulate_signed_sum_and_window() {
        let s = parse("0,1,0,1\n10,1,0,1\n20,1,0,0\n30,1,0,1\n40,0,0,1", (1, 2)).unwrap();
        let full = accumulate(&s, (0.0, f64::INFINITY), 0.1, 0.02).unwrap();
        assert_eq!(full.counts, ndarray::array![[1, 2]]);
        let head = accumulate(&s, (0.0, 30e-6), 0.1, 0.02).unwrap();
        assert_eq!(head.counts, ndarray::array![[0, 1]]);
        assert_eq!(head.mu, 0.1);
        assert!(accumulate::<f64>(&s, (1.0, 1.0), 0.1, 0.02).is_err());
    }

    #[test]
    fn empty_stream_accumulates_to_zero() {
        let s = EventStream::new(Vec::new(), (3, 3)).unwrap();
        let plane = accumulate(&s, (0.0, 1.0), 0.1, 0.02).unwrap();
        assert!(plane.counts.iter().all(|c| *c == 0));
    }

    #[test]
    fn write_then_parse() {
        let records = vec![
            EventRecord {
                t: 0.25,
                x: 2,
                y: 1,
                polarity: Polarity::On,
            },
            EventRecord {
                t: 0.5000004,
                x: 0,
                y: 0,
                polarity: Polarity::Off,
            },
        ];
        let mut buf = Vec::new();
        write_event_csv(&mut buf, &records).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "t,x,y,p\n250000,2,1,1\n500000,0,0,0\n"
        );
        let s = parse_event_csv(buf.as_slice(), (2, 3)).unwrap();
        assert_eq!(s.records()[1].polarity, Polarity::Off);
    }
}
