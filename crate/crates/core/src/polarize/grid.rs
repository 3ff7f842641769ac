//! Transforms that merge straight onto an LLR grid.
//!
//! Equivalent to forming every product letter and then calling
//! [`ChannelPair::quantize`], but each product is accumulated into its cell
//! as it is formed. Letters are sign-folded as in `quantize`.
//!
//! Should a grid overflow `max_symbols`, the step is doubled and the
//! products are accumulated again, so quantized synthesis never fails on
//! budget; it gets coarser instead.

use std::collections::HashMap;

use super::{PolarizeError, SynthesisBudget};
use crate::mismatch::{canonical_order, llr_cell, merge_class, ChannelPair, PairSymbol};
use crate::numeric::MeanLlr;

type Key = (u8, i64, i64);

/// Running merge of one cell, as in [`ChannelPair::quantize`]; exact values
/// survive when every letter agrees.
#[derive(Clone, Copy)]
struct Cell {
    q: f64,
    lw: MeanLlr,
    lv: MeanLlr,
    first: PairSymbol,
    same_lw: bool,
    same_lv: bool,
}

impl Cell {
    fn new(s: PairSymbol) -> Self {
        let mut c = Cell {
            q: 0.0,
            lw: MeanLlr::EMPTY,
            lv: MeanLlr::EMPTY,
            first: s,
            same_lw: true,
            same_lv: true,
        };
        c.add(&s);
        c
    }

    #[inline]
    fn add(&mut self, s: &PairSymbol) {
        self.q += s.q;
        self.lw.add(s.q, s.lw);
        self.lv.add(s.q, s.lv_or_tie());
        self.same_lw &= s.lw == self.first.lw;
        self.same_lv &= s.lv == self.first.lv;
    }

    fn finish(&self) -> PairSymbol {
        PairSymbol {
            q: self.q,
            lw: if self.same_lw { self.first.lw } else { self.lw.value() },
            lv: self
                .first
                .lv
                .map(|first| if self.same_lv { first } else { self.lv.value() }),
        }
    }
}

struct Grid {
    step: f64,
    max: usize,
    cells: HashMap<Key, Cell>,
}

impl Grid {
    fn new(budget: &SynthesisBudget, step: f64) -> Self {
        Self {
            step,
            max: budget.max_symbols,
            cells: HashMap::new(),
        }
    }

    #[inline]
    fn add(&mut self, s: PairSymbol) -> Result<(), PolarizeError> {
        let s = if s.folds() { s.flipped() } else { s };
        let key = (
            merge_class(&s),
            llr_cell(s.lw, self.step),
            s.lv.map_or(0, |lv| llr_cell(lv, self.step)),
        );
        match self.cells.get_mut(&key) {
            Some(c) => c.add(&s),
            None => {
                if self.cells.len() >= self.max {
                    return Err(PolarizeError::BudgetExceeded {
                        depth: 1,
                        symbols: self.cells.len() + 1,
                        max: self.max,
                    });
                }
                self.cells.insert(key, Cell::new(s));
            }
        }
        Ok(())
    }

    fn finish(self) -> ChannelPair {
        let mut out: Vec<PairSymbol> = self.cells.values().map(Cell::finish).collect();
        out.sort_by(canonical_order);
        ChannelPair::from_symbols(out)
    }
}

/// Runs `fill` on grids of growing width until the result fits in
/// `max_symbols` cells. The first try uses `step`; each retry doubles it.
fn fit(
    budget: &SynthesisBudget,
    step: f64,
    fill: impl Fn(&mut Grid) -> Result<(), PolarizeError>,
) -> ChannelPair {
    let mut step = step;
    loop {
        let mut grid = Grid::new(budget, step);
        if fill(&mut grid).is_ok() {
            return grid.finish();
        }
        step *= 2.0;
    }
}

pub(super) fn minus(p: &ChannelPair, budget: &SynthesisBudget, step: f64) -> ChannelPair {
    let s: Vec<PairSymbol> = p.symbols().iter().copied().filter(|s| s.q > 0.0).collect();
    fit(budget, step, |grid| {
        for (i, a) in s.iter().enumerate() {
            for (j, b) in s.iter().enumerate().skip(i) {
                let mult = if i == j { 1.0 } else { 2.0 };
                grid.add(super::minus_letter(a, b, mult))?;
            }
        }
        Ok(())
    })
}

pub(super) fn plus(p: &ChannelPair, budget: &SynthesisBudget, step: f64) -> ChannelPair {
    let s = super::prepare(p);
    fit(budget, step, |grid| {
        for a in &s {
            for b in &s {
                for sign in [1.0, -1.0] {
                    if let Some(letter) = super::plus_letter(a, b, sign) {
                        grid.add(letter)?;
                    }
                }
            }
        }
        Ok(())
    })
}
