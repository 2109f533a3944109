//! Digital-pheromone medium.
//!
//! The map stores one non-negative amount per cell. Agents standing on a
//! labeled cell leave a fixed deposit, a fraction of which spreads evenly to
//! the eight surrounding cells; agents acting on an unlabeled cell discount
//! whatever trace is there. Occupied cells lose a fixed fraction per step.

use crate::grid::{Cell, MOORE_OFFSETS};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MediumError {
    #[error("cell {cell} outside {width}x{height} pheromone map")]
    OutOfRange {
        cell: Cell,
        width: usize,
        height: usize,
    },
    #[error("invalid medium configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumConfig {
    /// Amount left on a labeled cell per action.
    pub deposit_amount: f64,
    /// Multiplier applied to the trace on an unlabeled cell an agent acts on.
    pub discount: f64,
    /// Fraction of a fresh deposit spread over the Moore neighbours.
    pub diffusion_rate: f64,
    /// Fraction removed from every occupied cell per step.
    pub decay_rate: f64,
    /// Chebyshev sensing radius in cells.
    pub sense_radius: usize,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig {
            deposit_amount: 1.0,
            discount: 0.9,
            diffusion_rate: 0.2,
            decay_rate: 0.1,
            sense_radius: 3,
        }
    }
}

impl MediumConfig {
    pub fn validate(&self) -> Result<(), MediumError> {
        if !(self.deposit_amount.is_finite() && self.deposit_amount > 0.0) {
            return Err(MediumError::Config(format!(
                "deposit_amount must be finite and positive, got {}",
                self.deposit_amount
            )));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(MediumError::Config(format!(
                "discount must lie in (0, 1), got {}",
                self.discount
            )));
        }
        for (name, v) in [
            ("diffusion_rate", self.diffusion_rate),
            ("decay_rate", self.decay_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MediumError::Config(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if self.sense_radius == 0 {
            return Err(MediumError::Config("sense_radius must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneMap {
    width: usize,
    height: usize,
    amount: Vec<f64>,
    cfg: MediumConfig,
}

impl PheromoneMap {
    pub fn new(width: usize, height: usize, cfg: MediumConfig) -> Result<Self, MediumError> {
        cfg.validate()?;
        if width == 0 || height == 0 {
            return Err(MediumError::Config(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(PheromoneMap {
            width,
            height,
            amount: vec![0.0; width * height],
            cfg,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn config(&self) -> &MediumConfig {
        &self.cfg
    }

    fn index(&self, cell: Cell) -> Result<usize, MediumError> {
        if cell.x < self.width && cell.y < self.height {
            Ok(cell.y * self.width + cell.x)
        } else {
            Err(MediumError::OutOfRange {
                cell,
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn amount(&self, cell: Cell) -> Result<f64, MediumError> {
        Ok(self.amount[self.index(cell)?])
    }

    /// Overwrites one cell. Negative or non-finite values are clamped to 0.
    pub fn set_amount(&mut self, cell: Cell, value: f64) -> Result<(), MediumError> {
        let i = self.index(cell)?;
        self.amount[i] = if value.is_finite() { value.max(0.0) } else { 0.0 };
        Ok(())
    }

    pub fn amounts(&self) -> &[f64] {
        &self.amount
    }

    pub fn total(&self) -> f64 {
        self.amount.iter().sum()
    }

    pub fn clear(&mut self) {
        self.amount.iter_mut().for_each(|a| *a = 0.0);
    }

    /// Trace update for an agent that has just acted at `pos`.
    ///
    /// Labeled: `deposit_amount` is added, of which `diffusion_rate` is
    /// shared equally by the eight Moore neighbours (shares falling off the
    /// grid are lost). Unlabeled: the amount at `pos` is multiplied by
    /// `discount` and nothing spreads.
    pub fn deposit(&mut self, pos: Cell, labeled: bool) -> Result<(), MediumError> {
        let i = self.index(pos)?;
        if !labeled {
            self.amount[i] *= self.cfg.discount;
            return Ok(());
        }
        let a = self.cfg.deposit_amount;
        let spread = a * self.cfg.diffusion_rate;
        self.amount[i] += a - spread;
        if spread > 0.0 {
            let share = spread / 8.0;
            for (dx, dy) in MOORE_OFFSETS {
                if let Some(n) = pos.offset(dx, dy, self.width, self.height) {
                    self.amount[n.y * self.width + n.x] += share;
                }
            }
        }
        Ok(())
    }

    /// Multiplies every occupied cell by `1 - decay_rate`.
    pub fn decay_occupied<I>(&mut self, occupied: I) -> Result<(), MediumError>
    where
        I: IntoIterator<Item = Cell>,
    {
        let keep = 1.0 - self.cfg.decay_rate;
        for cell in occupied {
            let i = self.index(cell)?;
            self.amount[i] *= keep;
        }
        Ok(())
    }

    /// Positive cells within the sensing window of `pos`, excluding `pos`,
    /// in row-major order.
    pub fn sense(&self, pos: Cell) -> Result<Vec<(Cell, f64)>, MediumError> {
        self.index(pos)?;
        let r = self.cfg.sense_radius;
        let x0 = pos.x.saturating_sub(r);
        let y0 = pos.y.saturating_sub(r);
        let x1 = (pos.x + r).min(self.width - 1);
        let y1 = (pos.y + r).min(self.height - 1);
        let mut out = Vec::new();
        for y in y0..=y1 {
            let row = &self.amount[y * self.width..(y + 1) * self.width];
            for (x, &a) in row.iter().enumerate().take(x1 + 1).skip(x0) {
                if a > 0.0 && !(x == pos.x && y == pos.y) {
                    out.push((Cell::new(x, y), a));
                }
            }
        }
        Ok(out)
    }

    /// Writes the field as an ASCII graymap, linearly scaled so the
    /// largest amount maps to 255.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let max = self.amount.iter().cloned().fold(0.0_f64, f64::max);
        writeln!(out, "P2")?;
        writeln!(out, "{} {}", self.width, self.height)?;
        writeln!(out, "255")?;
        for row in self.amount.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|&a| {
                    let v = if max > 0.0 { (a / max * 255.0).round() } else { 0.0 };
                    (v as u8).to_string()
                })
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(w: usize, h: usize, cfg: MediumConfig) -> PheromoneMap {
        PheromoneMap::new(w, h, cfg).unwrap()
    }

    #[test]
    fn deposit_without_diffusion() {
        let cfg = MediumConfig {
            diffusion_rate: 0.0,
            ..Default::default()
        };
        let mut m = map(5, 5, cfg);
        m.deposit(Cell::new(2, 2), true).unwrap();
        assert_eq!(m.amount(Cell::new(2, 2)).unwrap(), 1.0);
        assert_eq!(m.total(), 1.0);
    }

    #[test]
    fn unlabeled_discounts() {
        let cfg = MediumConfig {
            discount: 0.5,
            ..Default::default()
        };
        let mut m = map(5, 5, cfg);
        m.set_amount(Cell::new(1, 1), 4.0).unwrap();
        m.deposit(Cell::new(1, 1), false).unwrap();
        assert_eq!(m.amount(Cell::new(1, 1)).unwrap(), 2.0);
        assert_eq!(m.total(), 2.0);
    }

    #[test]
    fn interior_deposit_spreads_to_moore_ring() {
        // hand sum: 0.2 of the unit deposit split over 8 neighbours
        let mut m = map(5, 5, MediumConfig::default());
        m.deposit(Cell::new(2, 2), true).unwrap();
        assert!((m.amount(Cell::new(2, 2)).unwrap() - 0.8).abs() < 1e-15);
        for (dx, dy) in MOORE_OFFSETS {
            let n = Cell::new((2 + dx) as usize, (2 + dy) as usize);
            assert!((m.amount(n).unwrap() - 0.025).abs() < 1e-15);
        }
        assert!((m.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_deposit_loses_off_grid_share() {
        let mut m = map(4, 4, MediumConfig::default());
        m.deposit(Cell::new(0, 0), true).unwrap();
        // three in-grid neighbours
        assert!((m.total() - (0.8 + 3.0 * 0.025)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_deposit_rejected() {
        let mut m = map(3, 3, MediumConfig::default());
        assert!(matches!(
            m.deposit(Cell::new(3, 0), true),
            Err(MediumError::OutOfRange { .. })
        ));
    }

    #[test]
    fn decay_cases() {
        let mut m = map(3, 3, MediumConfig::default());
        m.set_amount(Cell::new(1, 1), 10.0).unwrap();
        m.set_amount(Cell::new(0, 0), 5.0).unwrap();
        let before = m.clone();
        m.decay_occupied(std::iter::empty()).unwrap();
        assert_eq!(m, before);
        m.decay_occupied([Cell::new(1, 1)]).unwrap();
        assert!((m.amount(Cell::new(1, 1)).unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(m.amount(Cell::new(0, 0)).unwrap(), 5.0);

        let mut z = map(
            3,
            3,
            MediumConfig {
                decay_rate: 0.0,
                ..Default::default()
            },
        );
        z.set_amount(Cell::new(1, 1), 3.0).unwrap();
        let zb = z.clone();
        z.decay_occupied([Cell::new(1, 1)]).unwrap();
        assert_eq!(z, zb);
    }

    #[test]
    fn sense_boundary_is_inclusive() {
        let mut m = map(10, 10, MediumConfig::default());
        assert!(m.sense(Cell::new(5, 5)).unwrap().is_empty());
        m.set_amount(Cell::new(8, 5), 1.0).unwrap();
        assert_eq!(m.sense(Cell::new(5, 5)).unwrap(), vec![(Cell::new(8, 5), 1.0)]);
        let mut far = map(10, 10, MediumConfig::default());
        far.set_amount(Cell::new(9, 5), 1.0).unwrap();
        assert!(far.sense(Cell::new(5, 5)).unwrap().is_empty());
    }

    #[test]
    fn sense_excludes_own_cell_and_is_row_major() {
        let mut m = map(6, 6, MediumConfig::default());
        m.set_amount(Cell::new(2, 2), 1.0).unwrap();
        m.set_amount(Cell::new(3, 1), 2.0).unwrap();
        m.set_amount(Cell::new(1, 3), 3.0).unwrap();
        let got: Vec<Cell> = m.sense(Cell::new(2, 2)).unwrap().into_iter().map(|c| c.0).collect();
        assert_eq!(got, vec![Cell::new(3, 1), Cell::new(1, 3)]);
    }

    #[test]
    fn pgm_dimensions() {
        let mut m = map(4, 3, MediumConfig::default());
        m.set_amount(Cell::new(1, 1), 2.0).unwrap();
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "4 3");
        assert_eq!(lines.len(), 3 + 3);
        assert_eq!(lines[4], "0 255 0 0");
    }

    #[test]
    fn config_validation() {
        assert!(MediumConfig::default().validate().is_ok());
        let bad = MediumConfig {
            decay_rate: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MediumConfig {
            deposit_amount: f64::INFINITY,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Deposit(usize, usize, bool),
        Decay(usize, usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0..8usize, 0..8usize, any::<bool>()).prop_map(|(x, y, l)| Op::Deposit(x, y, l)),
            (0..8usize, 0..8usize).prop_map(|(x, y)| Op::Decay(x, y)),
        ]
    }

    proptest! {
        #[test]
        fn amounts_stay_non_negative(ops in prop::collection::vec(op(), 0..60),
                                     diff in 0.0..=1.0f64, decay in 0.0..=1.0f64) {
            let cfg = MediumConfig { diffusion_rate: diff, decay_rate: decay, ..Default::default() };
            let mut m = map(8, 8, cfg);
            for o in ops {
                match o {
                    Op::Deposit(x, y, l) => m.deposit(Cell::new(x, y), l).unwrap(),
                    Op::Decay(x, y) => m.decay_occupied([Cell::new(x, y)]).unwrap(),
                }
            }
            prop_assert!(m.amounts().iter().all(|&a| a >= 0.0));
        }

        #[test]
        fn interior_deposit_conserves_mass(x in 1..7usize, y in 1..7usize, diff in 0.0..=1.0f64,
                                           base in prop::collection::vec(0.0..5.0f64, 64)) {
            let cfg = MediumConfig { diffusion_rate: diff, ..Default::default() };
            let mut m = map(8, 8, cfg);
            for (i, b) in base.iter().enumerate() {
                m.set_amount(Cell::new(i % 8, i / 8), *b).unwrap();
            }
            let before = m.total();
            m.deposit(Cell::new(x, y), true).unwrap();
            prop_assert!((m.total() - before - 1.0).abs() < 1e-9);
        }

        #[test]
        fn disjoint_deposits_commute(px in 1..4usize, py in 1..7usize, qx in 6..9usize, qy in 1..7usize) {
            let cfg = MediumConfig::default();
            let (p, q) = (Cell::new(px, py), Cell::new(qx + 1, qy));
            let mut a = map(11, 8, cfg.clone());
            let mut b = map(11, 8, cfg);
            a.deposit(p, true).unwrap();
            a.deposit(q, true).unwrap();
            b.deposit(q, true).unwrap();
            b.deposit(p, true).unwrap();
            prop_assert_eq!(a.amounts(), b.amounts());
        }

        #[test]
        fn decay_never_increases(v in 0.0..100.0f64, decay in 0.0..=1.0f64) {
            let cfg = MediumConfig { decay_rate: decay, ..Default::default() };
            let mut m = map(3, 3, cfg);
            m.set_amount(Cell::new(1, 1), v).unwrap();
            m.decay_occupied([Cell::new(1, 1)]).unwrap();
            prop_assert!(m.amount(Cell::new(1, 1)).unwrap() <= v);
        }
    }
}
