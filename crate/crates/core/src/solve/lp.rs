//! Dense bounded-variable simplex on the rows `lower <= a.x <= upper` of an
//! [`IlpModel`], with every structural variable in `[0, 1]`.
//!
//! Row `i` reads `a_i . x - s_i = 0` with the slack `s_i` bounded by the
//! row bounds, so the slack basis is always available. Rows violated at the
//! starting point get an artificial column and a phase 1 removes them.
//! The tableau keeps `B^-1 [A | -I | art | rhs]`; columns that can never
//! move again (nonbasic equality slacks, artificials after phase 1) are
//! folded into the right-hand side and skipped by later pivots.

use std::time::Instant;

use crate::ilpmodel::IlpModel;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pos {
    Basic,
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum LpFailure {
    Timeout,
    Numerical(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
}

/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 50;

/// Pivots smaller than this fraction of the largest eligible one are refused.
const RELATIVE_PIVOT: f64 = 0.01;

/// Pivots between rebuilds of the tableau from the original rows.
const REINVERT_PERIOD: usize = 100;

pub(crate) struct Tableau<T> {
    m: usize,
    n: usize,
    width: usize,
    stride: usize,
    t: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    pos: Vec<Pos>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    x: Vec<T>,
    cost: Vec<T>,
    d: Vec<T>,
    dead: Vec<bool>,
    live: Vec<usize>,
    permanent: Vec<bool>,
    /// Sparse rows of the starting tableau, kept for reinversion.
    orig: Vec<Vec<(usize, T)>>,
    since_reinvert: usize,
    pub iterations: u64,
    deadline: Option<Instant>,
    zero: T,
}

impl<T: Scalar> Tableau<T> {
    /// Builds the tableau with structural variables bounded by `lo`/`hi`
    /// and sitting at `start` (each entry must equal one of its bounds).
    pub fn new(model: &IlpModel<T>, lo: &[T], hi: &[T], start: &[T], deadline: Option<Instant>) -> Self {
        let n = model.num_vars();
        let m = model.constraints.len();
        let mut activity = vec![T::zero(); m];
        for (i, c) in model.constraints.iter().enumerate() {
            activity[i] = c.terms.iter().map(|&(v, k)| T::lit(k as f64) * start[v]).sum();
        }
        let tol = T::feasibility_tol();
        // (row, sign) of each artificial
        let mut arts = Vec::new();
        for (i, c) in model.constraints.iter().enumerate() {
            let l = T::lit(c.lower as f64);
            let u = c.upper.map(|u| T::lit(u as f64));
            if activity[i] < l - tol {
                arts.push((i, T::one(), l));
            } else if u.is_some_and(|u| activity[i] > u + tol) {
                arts.push((i, -T::one(), u.expect("checked")));
            }
        }
        let width = n + m + arts.len();
        let stride = width + 1;
        let mut t = vec![T::zero(); m * stride];
        let mut tl = vec![T::zero(); width];
        let mut th = vec![T::zero(); width];
        let mut pos = vec![Pos::Lower; width];
        let mut x = vec![T::zero(); width];
        let mut basis = vec![0usize; m];
        let mut permanent = vec![false; width];
        tl[..n].copy_from_slice(lo);
        th[..n].copy_from_slice(hi);
        for j in 0..n {
            x[j] = start[j];
            pos[j] = if start[j] == hi[j] && hi[j] != lo[j] { Pos::Upper } else { Pos::Lower };
        }
        for (i, c) in model.constraints.iter().enumerate() {
            let s = n + i;
            tl[s] = T::lit(c.lower as f64);
            th[s] = c.upper.map(|u| T::lit(u as f64)).unwrap_or_else(T::infinity);
            permanent[s] = c.is_equality();
        }
        let mut art_of_row = vec![None; m];
        for (k, &(i, sign, bound)) in arts.iter().enumerate() {
            art_of_row[i] = Some((n + m + k, sign, bound));
        }
        for (i, c) in model.constraints.iter().enumerate() {
            let row = &mut t[i * stride..(i + 1) * stride];
            let s = n + i;
            match art_of_row[i] {
                None => {
                    // basic slack: row = [-a | +1]
                    for &(v, k) in &c.terms {
                        row[v] = row[v] - T::lit(k as f64);
                    }
                    row[s] = T::one();
                    basis[i] = s;
                    pos[s] = Pos::Basic;
                    x[s] = activity[i];
                }
                Some((a, sign, bound)) => {
                    // slack at the violated bound, artificial basic
                    for &(v, k) in &c.terms {
                        row[v] = row[v] + sign * T::lit(k as f64);
                    }
                    row[s] = -sign;
                    row[a] = T::one();
                    basis[i] = a;
                    pos[a] = Pos::Basic;
                    x[s] = bound;
                    pos[s] = if bound == th[s] && th[s] != tl[s] { Pos::Upper } else { Pos::Lower };
                    x[a] = sign * (bound - activity[i]);
                    tl[a] = T::zero();
                    th[a] = T::infinity();
                }
            }
        }
        let mut row_of = vec![usize::MAX; width];
        for (i, &b) in basis.iter().enumerate() {
            row_of[b] = i;
        }
        let orig = (0..m)
            .map(|i| {
                let row = &t[i * stride..i * stride + width];
                row.iter().enumerate().filter(|(_, v)| **v != T::zero()).map(|(j, &v)| (j, v)).collect()
            })
            .collect();
        let mut tab = Self {
            m,
            n,
            width,
            stride,
            t,
            lo: tl,
            hi: th,
            pos,
            basis,
            row_of,
            x,
            cost: vec![T::zero(); width],
            d: vec![T::zero(); width],
            dead: vec![false; width],
            live: (0..width).collect(),
            permanent,
            orig,
            since_reinvert: 0,
            iterations: 0,
            deadline,
            zero: T::pivot_tol() * T::lit(1e-3),
        };
        for j in n..n + m {
            tab.maybe_kill(j);
        }
        tab
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lo[j] == self.hi[j]
    }

    /// Folds a permanently fixed nonbasic column into the right-hand side.
    fn maybe_kill(&mut self, j: usize) {
        if self.dead[j] || !self.permanent[j] || self.pos[j] == Pos::Basic {
            return;
        }
        let v = self.x[j];
        if v != T::zero() {
            for r in 0..self.m {
                let a = self.t[r * self.stride + j];
                if a != T::zero() {
                    let rhs = r * self.stride + self.width;
                    self.t[rhs] = self.t[rhs] - a * v;
                }
            }
        }
        self.dead[j] = true;
        self.live.retain(|&c| c != j);
    }

    /// Recomputes basic values and reduced costs from the tableau.
    pub fn refresh(&mut self) {
        let moved: Vec<usize> = self
            .live
            .iter()
            .copied()
            .filter(|&j| self.pos[j] != Pos::Basic && self.x[j] != T::zero())
            .collect();
        for r in 0..self.m {
            let row = &self.t[r * self.stride..(r + 1) * self.stride];
            let mut v = row[self.width];
            for &j in &moved {
                let a = row[j];
                if a != T::zero() {
                    v = v - a * self.x[j];
                }
            }
            self.x[self.basis[r]] = v;
        }
        self.recompute_duals();
    }

    /// Moves nonbasic `j` by `delta` and updates the basic values.
    fn shift_nonbasic(&mut self, j: usize, delta: T) {
        if delta == T::zero() {
            return;
        }
        for r in 0..self.m {
            let a = self.t[r * self.stride + j];
            if a != T::zero() {
                let b = self.basis[r];
                self.x[b] = self.x[b] - a * delta;
            }
        }
        self.x[j] = self.x[j] + delta;
    }

    fn recompute_duals(&mut self) {
        for &j in &self.live {
            self.d[j] = self.cost[j];
        }
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]];
            if cb == T::zero() {
                continue;
            }
            let row = &self.t[r * self.stride..(r + 1) * self.stride];
            for &j in &self.live {
                let a = row[j];
                if a != T::zero() {
                    self.d[j] = self.d[j] - cb * a;
                }
            }
        }
        for r in 0..self.m {
            self.d[self.basis[r]] = T::zero();
        }
    }

    fn check_clock(&self) -> Result<(), LpFailure> {
        if self.iterations % 32 == 0 {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(LpFailure::Timeout);
                }
            }
        }
        Ok(())
    }

    fn iteration_cap(&self) -> u64 {
        50 * (self.m + self.width) as u64 + 1000
    }

    /// Rebuilds `B^-1 [A | -I | art | rhs]` for the current basis from the
    /// original rows, discarding accumulated round-off.
    fn reinvert(&mut self) -> Result<(), LpFailure> {
        let s = self.stride;
        self.t.iter_mut().for_each(|v| *v = T::zero());
        for (r, row) in self.orig.iter().enumerate() {
            let mut rhs = T::zero();
            for &(j, v) in row {
                if self.dead[j] {
                    rhs = rhs - v * self.x[j];
                } else {
                    self.t[r * s + j] = v;
                }
            }
            self.t[r * s + self.width] = rhs;
        }
        let mut nnz = vec![0usize; self.width];
        for row in &self.orig {
            for &(j, _) in row {
                nnz[j] += 1;
            }
        }
        let mut cols = self.basis.clone();
        cols.sort_by_key(|&c| (nnz[c], c));
        let mut assigned = vec![false; self.m];
        let mut basis = vec![usize::MAX; self.m];
        for &c in &cols {
            let mut p = usize::MAX;
            let mut best = T::zero();
            for r in 0..self.m {
                let a = self.t[r * s + c].abs();
                if !assigned[r] && a > best {
                    best = a;
                    p = r;
                }
            }
            if p == usize::MAX || best <= T::pivot_tol() {
                return Err(LpFailure::Numerical("singular basis on reinversion".into()));
            }
            self.eliminate(p, c);
            assigned[p] = true;
            basis[p] = c;
        }
        self.basis = basis;
        self.row_of.iter_mut().for_each(|r| *r = usize::MAX);
        for (r, &b) in self.basis.iter().enumerate() {
            self.row_of[b] = r;
        }
        self.since_reinvert = 0;
        self.refresh();
        Ok(())
    }

    fn reinvert_if_due(&mut self) -> Result<(), LpFailure> {
        if self.since_reinvert >= REINVERT_PERIOD {
            self.reinvert()?;
        }
        Ok(())
    }

    /// Row operations making column `q` the unit vector of row `p`; returns
    /// the nonzeros of the scaled pivot row.
    fn eliminate(&mut self, p: usize, q: usize) -> Vec<(usize, T)> {
        let s = self.stride;
        let piv = self.t[p * s + q];
        let inv = T::one() / piv;
        let mut nz: Vec<(usize, T)> = Vec::new();
        {
            let row = &mut self.t[p * s..(p + 1) * s];
            for &j in &self.live {
                let v = row[j];
                if v != T::zero() {
                    let w = v * inv;
                    row[j] = w;
                    nz.push((j, w));
                }
            }
            row[q] = T::one();
            let rhs = row[self.width] * inv;
            row[self.width] = rhs;
            if rhs != T::zero() {
                nz.push((self.width, rhs));
            }
        }
        let zero = self.zero;
        for r in 0..self.m {
            if r == p {
                continue;
            }
            let f = self.t[r * s + q];
            if f == T::zero() {
                continue;
            }
            let (head, tail) = self.t.split_at_mut(p.max(r) * s);
            let (row_r, row_p) = if r < p {
                (&mut head[r * s..(r + 1) * s], &tail[..s])
            } else {
                (&mut tail[..s], &head[p * s..(p + 1) * s])
            };
            for &(j, _) in &nz {
                let v = row_r[j] - f * row_p[j];
                row_r[j] = if v.abs() < zero { T::zero() } else { v };
            }
            row_r[q] = T::zero();
        }
        nz
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let nz = self.eliminate(p, q);
        self.since_reinvert += 1;
        let dq = self.d[q];
        if dq != T::zero() {
            for &(j, w) in &nz {
                if j < self.width {
                    self.d[j] = self.d[j] - dq * w;
                }
            }
        }
        self.d[q] = T::zero();
        let leaving = self.basis[p];
        self.basis[p] = q;
        self.row_of[q] = p;
        self.row_of[leaving] = usize::MAX;
        self.pos[q] = Pos::Basic;
        self.iterations += 1;
    }

    fn set_nonbasic_at(&mut self, j: usize, upper: bool) {
        self.pos[j] = if upper && !self.is_fixed(j) { Pos::Upper } else { Pos::Lower };
        self.x[j] = if upper { self.hi[j] } else { self.lo[j] };
    }

    /// Primal simplex on the current cost vector.
    fn primal(&mut self) -> Result<(), LpFailure> {
        let tol = T::feasibility_tol();
        let dtol = T::feasibility_tol();
        let ptol = T::pivot_tol();
        let mut degenerate = 0usize;
        let cap = self.iterations + self.iteration_cap();
        loop {
            self.check_clock()?;
            if self.iterations > cap {
                return Err(LpFailure::Numerical("primal simplex iteration limit".into()));
            }
            self.reinvert_if_due()?;
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut q = usize::MAX;
            let mut best = T::zero();
            for &j in &self.live {
                if self.pos[j] == Pos::Basic || self.is_fixed(j) {
                    continue;
                }
                let dj = self.d[j];
                let gain = match self.pos[j] {
                    Pos::Lower if dj < -dtol => -dj,
                    Pos::Upper if dj > dtol => dj,
                    _ => continue,
                };
                if bland {
                    q = j;
                    break;
                }
                if gain > best {
                    best = gain;
                    q = j;
                }
            }
            if q == usize::MAX {
                return Ok(());
            }
            let dir = if self.pos[q] == Pos::Lower { T::one() } else { -T::one() };
            // Harris ratio test: bound the step with relaxed bounds, then take
            // the largest pivot among the rows that block within it
            let flip = self.hi[q] - self.lo[q];
            let room_of = |r: usize, slack: T| -> Option<(T, bool, T)> {
                let a = self.t[r * self.stride + q];
                if a.abs() <= ptol {
                    return None;
                }
                let b = self.basis[r];
                let rate = -a * dir;
                if rate < T::zero() {
                    Some(((self.x[b] - self.lo[b] + slack) / -rate, false, a))
                } else if self.hi[b].is_infinite() {
                    None
                } else {
                    Some(((self.hi[b] - self.x[b] + slack) / rate, true, a))
                }
            };
            let mut limit = flip;
            for r in 0..self.m {
                if let Some((room, _, _)) = room_of(r, tol) {
                    limit = limit.min(room);
                }
            }
            if limit.is_infinite() {
                return Err(LpFailure::Numerical("unbounded relaxation".into()));
            }
            let mut biggest = T::zero();
            for r in 0..self.m {
                if let Some((room, _, a)) = room_of(r, T::zero()) {
                    if room <= limit {
                        biggest = biggest.max(a.abs());
                    }
                }
            }
            let floor = biggest * T::lit(RELATIVE_PIVOT);
            let mut step = flip;
            let mut leave = usize::MAX;
            let mut leave_upper = false;
            let mut leave_alpha = T::zero();
            for r in 0..self.m {
                let Some((room, to_upper, a)) = room_of(r, T::zero()) else {
                    continue;
                };
                if room > limit || a.abs() < floor {
                    continue;
                }
                let better = leave == usize::MAX
                    || if bland {
                        self.basis[r] < self.basis[leave]
                    } else {
                        a.abs() > leave_alpha.abs()
                    };
                if better {
                    step = room.max(T::zero());
                    leave = r;
                    leave_upper = to_upper;
                    leave_alpha = a;
                }
            }
            if leave != usize::MAX && flip <= limit && flip < step {
                leave = usize::MAX;
                step = flip;
            }
            degenerate = if step <= tol { degenerate + 1 } else { 0 };
            let delta = dir * step;
            if delta != T::zero() {
                for r in 0..self.m {
                    let a = self.t[r * self.stride + q];
                    if a != T::zero() {
                        let b = self.basis[r];
                        self.x[b] = self.x[b] - a * delta;
                    }
                }
                self.x[q] = self.x[q] + delta;
            }
            if leave == usize::MAX {
                // bound flip
                let up = self.pos[q] == Pos::Lower;
                self.set_nonbasic_at(q, up);
                self.iterations += 1;
                continue;
            }
            let out = self.basis[leave];
            self.pivot(leave, q);
            self.set_nonbasic_at(out, leave_upper);
            self.maybe_kill(out);
        }
    }

    /// Dual simplex; assumes the reduced costs are dual feasible.
    fn dual(&mut self) -> Result<LpStatus, LpFailure> {
        let tol = T::feasibility_tol();
        let ptol = T::pivot_tol();
        let cap = self.iterations + self.iteration_cap();
        let mut stalls = 0usize;
        loop {
            self.check_clock()?;
            if self.iterations > cap {
                return Err(LpFailure::Numerical("dual simplex iteration limit".into()));
            }
            self.reinvert_if_due()?;
            let bland = stalls >= DEGENERATE_STREAK;
            let mut p = usize::MAX;
            let mut worst = T::zero();
            for r in 0..self.m {
                let b = self.basis[r];
                let v = self.x[b];
                let gap = if v < self.lo[b] - tol {
                    self.lo[b] - v
                } else if v > self.hi[b] + tol {
                    v - self.hi[b]
                } else {
                    continue;
                };
                if bland {
                    if p == usize::MAX || b < self.basis[p] {
                        p = r;
                    }
                } else if gap > worst {
                    worst = gap;
                    p = r;
                }
            }
            if p == usize::MAX {
                return Ok(LpStatus::Optimal);
            }
            let b = self.basis[p];
            let below = self.x[b] < self.lo[b];
            let target = if below { self.lo[b] } else { self.hi[b] };
            let row = p * self.stride;
            let dtol = T::feasibility_tol();
            // eligible columns with their sign-corrected reduced cost
            let mut cand: Vec<(usize, T, T)> = Vec::new();
            for &j in &self.live {
                if self.pos[j] == Pos::Basic || self.is_fixed(j) {
                    continue;
                }
                let a = self.t[row + j];
                if a.abs() <= ptol {
                    continue;
                }
                let at_lower = self.pos[j] == Pos::Lower;
                // x_b changes by -a * dx_j; dx_j >= 0 at lower, <= 0 at upper
                let ok = if below { (a < T::zero()) == at_lower } else { (a > T::zero()) == at_lower };
                if ok {
                    let dj = if at_lower { self.d[j] } else { -self.d[j] };
                    cand.push((j, dj, a));
                }
            }
            if cand.is_empty() {
                return Ok(LpStatus::Infeasible);
            }
            // Harris: relaxed step bound, then the largest pivot within it
            let limit = cand
                .iter()
                .map(|&(_, dj, a)| (dj.max(T::zero()) + dtol) / a.abs())
                .fold(T::infinity(), T::min);
            let biggest = cand
                .iter()
                .filter(|&&(_, dj, a)| dj.max(T::zero()) / a.abs() <= limit)
                .map(|&(_, _, a)| a.abs())
                .fold(T::zero(), T::max);
            let floor = biggest * T::lit(RELATIVE_PIVOT);
            let mut q = usize::MAX;
            let mut best = T::zero();
            let mut best_alpha = T::zero();
            for &(j, dj, a) in &cand {
                let ratio = dj.max(T::zero()) / a.abs();
                if ratio > limit || a.abs() < floor {
                    continue;
                }
                let better = q == usize::MAX || if bland { j < q } else { a.abs() > best_alpha.abs() };
                if better {
                    q = j;
                    best = ratio;
                    best_alpha = a;
                }
            }
            stalls = if best <= ptol { stalls + 1 } else { 0 };
            let a = self.t[row + q];
            let dxq = -(target - self.x[b]) / a;
            for r in 0..self.m {
                let ar = self.t[r * self.stride + q];
                if ar != T::zero() {
                    let br = self.basis[r];
                    self.x[br] = self.x[br] - ar * dxq;
                }
            }
            self.x[q] = self.x[q] + dxq;
            self.pivot(p, q);
            self.set_nonbasic_at(b, !below);
            self.maybe_kill(b);
        }
    }

    fn artificial_range(&self) -> std::ops::Range<usize> {
        self.n + self.m..self.width
    }

    /// Two-phase primal solve from the construction point.
    pub fn solve(&mut self, cost: &[T]) -> Result<LpStatus, LpFailure> {
        let arts = self.artificial_range();
        if !arts.is_empty() {
            self.cost.iter_mut().for_each(|c| *c = T::zero());
            for j in arts.clone() {
                self.cost[j] = T::one();
            }
            self.recompute_duals();
            self.primal()?;
            let infeas: T = arts.clone().map(|j| self.x[j]).sum();
            if infeas > T::feasibility_tol() * T::lit(10.0) {
                return Ok(LpStatus::Infeasible);
            }
            for j in arts {
                self.hi[j] = T::zero();
                self.permanent[j] = true;
                if self.pos[j] != Pos::Basic {
                    self.x[j] = T::zero();
                    self.maybe_kill(j);
                }
            }
        }
        self.cost.iter_mut().for_each(|c| *c = T::zero());
        self.cost[..self.n].copy_from_slice(cost);
        self.refresh();
        self.primal()?;
        Ok(LpStatus::Optimal)
    }

    /// Changes structural bounds and re-optimises from the current basis
    /// (dual simplex, then a primal clean-up pass).
    pub fn resolve_with_bounds(&mut self, lo: &[T], hi: &[T]) -> Result<LpStatus, LpFailure> {
        for j in 0..self.n {
            if self.lo[j] == lo[j] && self.hi[j] == hi[j] {
                continue;
            }
            self.lo[j] = lo[j];
            self.hi[j] = hi[j];
            if self.pos[j] != Pos::Basic {
                let up = if lo[j] == hi[j] { false } else { self.d[j] < T::zero() };
                let old = self.x[j];
                self.set_nonbasic_at(j, up);
                let new = self.x[j];
                self.x[j] = old;
                self.shift_nonbasic(j, new - old);
            }
        }
        match self.dual()? {
            LpStatus::Infeasible => return Ok(LpStatus::Infeasible),
            LpStatus::Optimal => {}
        }
        self.primal()?;
        Ok(LpStatus::Optimal)
    }

    pub fn structural(&self) -> Vec<T> {
        self.x[..self.n].to_vec()
    }

    pub fn objective(&self) -> T {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    /// Largest bound or row violation of the current structural point.
    pub fn residual(&self, model: &IlpModel<T>) -> T {
        let mut worst = T::zero();
        for j in 0..self.n {
            worst = worst.max(self.lo[j] - self.x[j]).max(self.x[j] - self.hi[j]);
        }
        for c in &model.constraints {
            let a: T = c.terms.iter().map(|&(v, k)| T::lit(k as f64) * self.x[v]).sum();
            worst = worst.max(T::lit(c.lower as f64) - a);
            if let Some(u) = c.upper {
                worst = worst.max(a - T::lit(u as f64));
            }
        }
        worst
    }
}
