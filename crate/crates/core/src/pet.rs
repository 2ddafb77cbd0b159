//! Per-pixel post-encroachment time over the region of interest.
//!
//! Every ROI pixel carries a stopwatch that runs while the pixel is vacant and
//! resets when a rectangle covers it. When a pixel that has been occupied
//! before is covered again after at least the minimum interval, the stopwatch
//! value is logged as one PET interval. Time is kept in integer milliseconds,
//! so sums are exact.

use std::fmt::Write as _;

use thiserror::Error;

use crate::config::Roi;
use crate::fusion::FittedRectangle;
use crate::geometry::{fill_spans, RotatedRect, Window};
use crate::matrix::Matrix;

pub const MIN_INTERVAL_MS: u64 = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PetError {
    #[error("roi {roi:?} does not fit in a {grid_width}x{grid_height} grid")]
    RoiOutOfBounds { roi: Roi, grid_width: usize, grid_height: usize },
    #[error("timestamp {got} ms is not after previous update at {previous} ms")]
    NonMonotonicTimestamp { previous: i64, got: i64 },
    #[error("malformed matrix export: {0}")]
    Export(String),
}

/// One logged interval at ROI pixel `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PetEvent {
    pub col: usize,
    pub row: usize,
    pub interval_ms: u64,
    pub end_timestamp_ms: i64,
}

impl PetEvent {
    pub fn interval_s(&self) -> f64 {
        self.interval_ms as f64 / 1000.0
    }
}

#[derive(Debug, Clone)]
pub struct PetGrid {
    roi: Roi,
    min_interval_ms: u64,
    stopwatch_ms: Vec<u64>,
    sum_ms: Vec<u64>,
    count: Vec<u32>,
    ever_occupied: Vec<bool>,
    last_update_ms: Option<i64>,
    occupied: Vec<bool>,
}

impl PetGrid {
    pub fn new(roi: Roi, grid_width: usize, grid_height: usize) -> Result<Self, PetError> {
        if !roi.fits_in(grid_width, grid_height) {
            return Err(PetError::RoiOutOfBounds { roi, grid_width, grid_height });
        }
        let n = roi.pixel_count();
        Ok(Self {
            roi,
            min_interval_ms: MIN_INTERVAL_MS,
            stopwatch_ms: vec![0; n],
            sum_ms: vec![0; n],
            count: vec![0; n],
            ever_occupied: vec![false; n],
            last_update_ms: None,
            occupied: vec![false; n],
        })
    }

    pub fn with_min_interval_ms(mut self, ms: u64) -> Self {
        self.min_interval_ms = ms;
        self
    }

    pub fn roi(&self) -> Roi {
        self.roi
    }

    pub fn last_update_ms(&self) -> Option<i64> {
        self.last_update_ms
    }

    fn idx(&self, col: usize, row: usize) -> usize {
        row * self.roi.width + col
    }

    pub fn stopwatch_s(&self, col: usize, row: usize) -> f64 {
        self.stopwatch_ms[self.idx(col, row)] as f64 / 1000.0
    }

    pub fn sum_ms(&self, col: usize, row: usize) -> u64 {
        self.sum_ms[self.idx(col, row)]
    }

    pub fn sum_s(&self, col: usize, row: usize) -> f64 {
        self.sum_ms(col, row) as f64 / 1000.0
    }

    pub fn count(&self, col: usize, row: usize) -> u32 {
        self.count[self.idx(col, row)]
    }

    pub fn ever_occupied(&self, col: usize, row: usize) -> bool {
        self.ever_occupied[self.idx(col, row)]
    }

    pub fn update(&mut self, rects: &[FittedRectangle], timestamp_ms: i64) -> Result<Vec<PetEvent>, PetError> {
        let rects: Vec<RotatedRect> = rects.iter().map(|r| r.rect).collect();
        self.update_occupancy(&rects, timestamp_ms)
    }

    /// Advances every stopwatch to `timestamp_ms` with the given rectangles as
    /// the current occupancy.
    pub fn update_occupancy(&mut self, rects: &[RotatedRect], timestamp_ms: i64) -> Result<Vec<PetEvent>, PetError> {
        let dt = match self.last_update_ms {
            Some(prev) if timestamp_ms <= prev => {
                return Err(PetError::NonMonotonicTimestamp { previous: prev, got: timestamp_ms })
            }
            Some(prev) => (timestamp_ms - prev) as u64,
            None => 0,
        };
        self.occupied.fill(false);
        let win = Window { x: self.roi.x as i64, y: self.roi.y as i64, width: self.roi.width, height: self.roi.height };
        let width = self.roi.width;
        for rect in rects {
            fill_spans(&rect.corners(), win, |row, c0, c1| {
                self.occupied[row * width + c0..row * width + c1].fill(true);
            });
        }

        let mut events = Vec::new();
        for (i, &occ) in self.occupied.iter().enumerate() {
            let sw = &mut self.stopwatch_ms[i];
            if !occ {
                *sw += dt;
                continue;
            }
            if self.ever_occupied[i] && *sw > 0 && *sw >= self.min_interval_ms {
                self.sum_ms[i] += *sw;
                self.count[i] += 1;
                events.push(PetEvent { col: i % width, row: i / width, interval_ms: *sw, end_timestamp_ms: timestamp_ms });
            }
            *sw = 0;
            self.ever_occupied[i] = true;
        }
        self.last_update_ms = Some(timestamp_ms);
        Ok(events)
    }

    /// Mean interval in seconds per pixel; `None` where nothing was logged.
    pub fn mean_pet(&self) -> Matrix<Option<f64>> {
        let data = self
            .sum_ms
            .iter()
            .zip(&self.count)
            .map(|(&s, &n)| (n > 0).then(|| s as f64 / 1000.0 / n as f64))
            .collect();
        Matrix::from_vec(self.roi.width, self.roi.height, data).expect("dimensions match")
    }

    pub fn update_counts(&self) -> Matrix<u32> {
        Matrix::from_vec(self.roi.width, self.roi.height, self.count.clone()).expect("dimensions match")
    }
}

/// Text matrix: a `<kind> <width> <height>` header line, then one line per
/// row of space-separated values with `NaN` for absent cells.
pub fn export_text<T: std::fmt::Display>(kind: &str, m: &Matrix<Option<T>>) -> String {
    let mut out = String::with_capacity(m.width() * m.height() * 4 + 32);
    let _ = writeln!(out, "{kind} {} {}", m.width(), m.height());
    for row in 0..m.height() {
        for col in 0..m.width() {
            if col > 0 {
                out.push(' ');
            }
            match m.get(col, row) {
                Some(v) => {
                    let _ = write!(out, "{v}");
                }
                None => out.push_str("NaN"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn export_mean(grid: &PetGrid) -> String {
    export_text("pet-mean", &grid.mean_pet())
}

pub fn export_counts(grid: &PetGrid) -> String {
    export_text("pet-count", &grid.update_counts().map(|&c| Some(c)))
}

/// Parses [`export_text`] output back into its kind and values.
pub fn parse_export(text: &str) -> Result<(String, Matrix<Option<f64>>), PetError> {
    let bad = |m: &str| PetError::Export(m.to_string());
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty input"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let [kind, w, h] = parts[..] else {
        return Err(bad("header must be '<kind> <width> <height>'"));
    };
    let width: usize = w.parse().map_err(|_| bad("bad width"))?;
    let height: usize = h.parse().map_err(|_| bad("bad height"))?;
    let mut data = Vec::with_capacity(width * height);
    for (r, line) in lines.take(height).enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| PetError::Export(format!("row {r}: bad value {tok:?}")))?;
            data.push((!v.is_nan()).then_some(v));
        }
        if data.len() - before != width {
            return Err(PetError::Export(format!("row {r}: expected {width} values")));
        }
    }
    let m = Matrix::from_vec(width, height, data).ok_or_else(|| bad("too few rows"))?;
    Ok((kind.to_string(), m))
}
