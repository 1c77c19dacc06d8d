use std::collections::VecDeque;

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::solver::policy::PiecewiseLinearPolicy;
use crate::utility::UtilityGrid;

/// Default cap on `utility cells * price points`.
pub const DEFAULT_MAX_CELLS: usize = 10_000_000;
const BRUTE_FORCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpConfig {
    /// Lower bound on the number of price points. When the coarse grid of
    /// step `delta0 * eps` has fewer points, the step is divided by an integer
    /// factor `m` and neighbouring cells may move up to `m` price steps, which
    /// keeps the Lipschitz budget unchanged.
    pub min_price_points: usize,
    pub max_cells: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            min_price_points: 0,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

impl DpConfig {
    pub fn with_price_points(min_price_points: usize) -> Self {
        DpConfig {
            min_price_points,
            ..DpConfig::default()
        }
    }
}

/// Row-major `V(k, j)` table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ValueTable {
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.cols + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    /// Chosen price index per utility cell (0-based).
    pub j_star: Vec<usize>,
    pub value_table: Option<ValueTable>,
    pub objective: f64,
    pub price_grid: Vec<f64>,
    /// Largest index move allowed between neighbouring utility cells.
    pub band: usize,
    pub delta0: f64,
    pub eps: f64,
}

impl DpSolution {
    pub fn prices(&self) -> Vec<f64> {
        self.j_star.iter().map(|&j| self.price_grid[j]).collect()
    }
}

fn ceil_ratio(num: f64, den: f64) -> f64 {
    ((num / den) * (1.0 - 1e-12)).ceil().max(1.0)
}

/// Index-move factor that gives at least `min_points` price points.
pub fn refinement_factor(model: &DemandModel, delta0: f64, eps: f64, min_points: usize) -> usize {
    let range = model.price_max - model.price_min;
    if min_points <= 1 {
        return 1;
    }
    let coarse = ceil_ratio(range, delta0 * eps);
    if coarse >= min_points as f64 {
        return 1;
    }
    ceil_ratio(min_points as f64 * delta0 * eps, range).min(u32::MAX as f64) as usize
}

/// Cell-centred price grid of step `delta0 * eps / refinement` on the price
/// interval; the last point is clamped to the upper price bound.
pub fn fair_price_grid(
    model: &DemandModel,
    delta0: f64,
    eps: f64,
    refinement: usize,
) -> Result<Vec<f64>> {
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::invalid(format!(
            "delta0 must be positive and finite, got {delta0}"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let step = delta0 * eps / refinement.max(1) as f64;
    let range = model.price_max - model.price_min;
    let n = ceil_ratio(range, step);
    if n > 1e9 {
        return Err(Error::Resource(format!("{n} price points; increase eps")));
    }
    Ok((0..n as usize)
        .map(|j| (model.price_min + (j as f64 + 0.5) * step).min(model.price_max))
        .collect())
}

/// Optimal fair price chain on the grid with price step `delta0 * eps`.
pub fn solve_dp(
    model: &DemandModel,
    grid: &UtilityGrid,
    delta0: f64,
    eps: f64,
) -> Result<DpSolution> {
    solve_dp_with(model, grid, delta0, eps, &DpConfig::default())
}

pub fn solve_dp_with(
    model: &DemandModel,
    grid: &UtilityGrid,
    delta0: f64,
    eps: f64,
    config: &DpConfig,
) -> Result<DpSolution> {
    if (eps - grid.eps).abs() > 1e-12 * eps.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "eps {eps} does not match the utility grid step {}",
            grid.eps
        )));
    }
    let m = refinement_factor(model, delta0, eps, config.min_price_points);
    let prices = fair_price_grid(model, delta0, eps, m)?;
    let mut sol = solve_on_price_grid(model, grid, &prices, m, config.max_cells)?;
    sol.delta0 = delta0;
    sol.eps = eps;
    Ok(sol)
}

fn revenue_row(
    model: &DemandModel,
    u: f64,
    gamma: f64,
    prices: &[f64],
    out: &mut [f64],
) -> Result<()> {
    for (o, &p) in out.iter_mut().zip(prices) {
        *o = gamma * model.expected_revenue(u, p)?;
    }
    Ok(())
}

/// Sliding maximum of `prev` over windows `[j - band, j + band]`, reporting
/// the smallest maximizing index.
fn window_max(prev: &[f64], band: usize, out_val: &mut [f64]) {
    let n = prev.len();
    if band == 1 {
        for j in 0..n {
            let mut best = prev[j.saturating_sub(1)];
            for &v in &prev[j.saturating_sub(1) + 1..(j + 2).min(n)] {
                if v > best {
                    best = v;
                }
            }
            out_val[j] = best;
        }
        return;
    }
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for j in 0..n {
        let hi = (j + band).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&b| prev[b] < prev[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        let lo = j.saturating_sub(band);
        while dq.front().is_some_and(|&f| f < lo) {
            dq.pop_front();
        }
        out_val[j] = prev[dq[0]];
    }
}

fn argmax_in(row: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for j in lo + 1..=hi {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

/// Forward Bellman recursion `V(k, j) = gamma_k r_{u_k}(p_j) + max V(k-1, j')`
/// over `|j' - j| <= band`, with backtracking toward smaller price indices.
pub fn solve_on_price_grid(
    model: &DemandModel,
    grid: &UtilityGrid,
    prices: &[f64],
    band: usize,
    max_cells: usize,
) -> Result<DpSolution> {
    let (mu, mp) = (grid.len(), prices.len());
    if mu == 0 || mp == 0 {
        return Err(Error::invalid("empty utility or price grid"));
    }
    if mu.saturating_mul(mp) > max_cells {
        return Err(Error::Resource(format!(
            "{mu} utility cells x {mp} prices exceeds {max_cells} cells; use a larger eps"
        )));
    }
    let band = band.max(1);
    let mut data = vec![0.0; mu * mp];
    let mut rev = vec![0.0; mp];
    let mut best_prev = vec![0.0; mp];
    for k in 0..mu {
        let gamma = grid.weights[k];
        let has_mass = gamma > 0.0;
        if has_mass {
            revenue_row(model, grid.points[k], gamma, prices, &mut rev)?;
        }
        let (done, rest) = data.split_at_mut(k * mp);
        let row = &mut rest[..mp];
        if k == 0 {
            if has_mass {
                row.copy_from_slice(&rev);
            }
            continue;
        }
        window_max(&done[(k - 1) * mp..], band, &mut best_prev);
        for j in 0..mp {
            row[j] = if has_mass {
                rev[j] + best_prev[j]
            } else {
                best_prev[j]
            };
        }
    }
    let table = ValueTable {
        rows: mu,
        cols: mp,
        data,
    };
    let mut j_star = vec![0; mu];
    j_star[mu - 1] = argmax_in(table.row(mu - 1), 0, mp - 1);
    for k in (0..mu - 1).rev() {
        let next = j_star[k + 1];
        j_star[k] = argmax_in(
            table.row(k),
            next.saturating_sub(band),
            (next + band).min(mp - 1),
        );
    }
    let objective = table.get(mu - 1, j_star[mu - 1]);
    Ok(DpSolution {
        j_star,
        value_table: Some(table),
        objective,
        price_grid: prices.to_vec(),
        band,
        delta0: f64::NAN,
        eps: grid.eps,
    })
}

/// Exhaustive search over all index chains with `|j_{k+1} - j_k| <= 1`.
/// Ties go to the chain that is smallest when compared from the last cell
/// backwards, which is the order the recursion's backtracking produces.
pub fn brute_force_solve(
    model: &DemandModel,
    grid: &UtilityGrid,
    price_grid: &[f64],
) -> Result<DpSolution> {
    let (mu, mp) = (grid.len(), price_grid.len());
    if mu == 0 || mp == 0 {
        return Err(Error::invalid("empty utility or price grid"));
    }
    let count = mp as f64 * 3f64.powi(mu as i32 - 1);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::Resource(format!(
            "{count} chains exceed the enumeration limit"
        )));
    }
    let mut rev = vec![vec![0.0; mp]; mu];
    for k in 0..mu {
        if grid.weights[k] > 0.0 {
            revenue_row(
                model,
                grid.points[k],
                grid.weights[k],
                price_grid,
                &mut rev[k],
            )?;
        }
    }
    let mut search = Search {
        rev: &rev,
        weights: &grid.weights,
        mp,
        chain: vec![0; mu],
        best: None,
    };
    for j in 0..mp {
        search.visit(0, j, 0.0);
    }
    let (objective, j_star) = search.best.expect("at least one chain");
    Ok(DpSolution {
        j_star,
        value_table: None,
        objective,
        price_grid: price_grid.to_vec(),
        band: 1,
        delta0: f64::NAN,
        eps: grid.eps,
    })
}

struct Search<'a> {
    rev: &'a [Vec<f64>],
    weights: &'a [f64],
    mp: usize,
    chain: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn visit(&mut self, k: usize, j: usize, acc: f64) {
        self.chain[k] = j;
        let value = match (k, self.weights[k] > 0.0) {
            (0, true) => self.rev[0][j],
            (0, false) => 0.0,
            (_, true) => self.rev[k][j] + acc,
            (_, false) => acc,
        };
        if k + 1 == self.chain.len() {
            let better = match &self.best {
                None => true,
                Some((v, c)) => {
                    value > *v || (value == *v && self.chain.iter().rev().lt(c.iter().rev()))
                }
            };
            if better {
                self.best = Some((value, self.chain.clone()));
            }
            return;
        }
        for next in j.saturating_sub(1)..=(j + 1).min(self.mp - 1) {
            self.visit(k + 1, next, value);
        }
    }
}

/// Interpolating policy through the solved utility-price points.
pub fn build_policy(
    solution: &DpSolution,
    grid: &UtilityGrid,
    delta0: f64,
) -> Result<PiecewiseLinearPolicy> {
    PiecewiseLinearPolicy::interpolated(grid.points.clone(), solution.prices(), delta0)
}
