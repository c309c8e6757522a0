//! Dense bounded-variable simplex.
//!
//! Solves `min cᵀx  s.t.  rows (≤ | = | ≥) rhs,  0 ≤ x ≤ upper` with a full
//! tableau and a two-phase method. Entering variables follow Dantzig's rule;
//! after a run of degenerate pivots the solver switches to Bland's rule
//! (lowest eligible index, lowest leaving index on ties) until progress
//! resumes, which rules out cycling.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint row: the sensitivity of the optimal
    /// objective to that row's right-hand side.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

/// A linear program over variables `0 ≤ x_j ≤ upper_j`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    upper: Vec<f64>,
    start_upper: Vec<bool>,
    rows: Vec<Row>,
}

const DEGENERATE_STREAK: usize = 30;

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            upper: vec![f64::INFINITY; n],
            start_upper: vec![false; n],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_upper(&mut self, var: usize, bound: f64) {
        self.upper[var] = bound;
    }

    /// Starts the variable at its (finite) upper bound instead of zero.
    /// Only the starting point changes, not the optimum.
    pub fn start_at_upper(&mut self, var: usize) {
        if self.upper[var].is_finite() {
            self.start_upper[var] = true;
        }
    }

    pub fn add_dense(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars(), "constraint width");
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, v) in terms {
            coeffs[j] += v;
        }
        self.add_dense(coeffs, relation, rhs);
    }

    pub fn solve(&self) -> LpSolution {
        Tableau::build(self).run(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    width: usize,
    n_struct: usize,
    art_start: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    b: Vec<f64>,
    upper: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Row multiplier applied when building (sign flip times equilibration).
    row_factor: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n_struct = lp.num_vars();
        let n_slack = lp
            .rows
            .iter()
            .filter(|r| r.relation != Relation::Eq)
            .count();
        let art_start = n_struct + n_slack;
        let width = art_start + m;
        let mut t = vec![0.0; m * width];
        let mut b = vec![0.0; m];
        let mut beta = vec![0.0; m];
        let mut row_factor = vec![1.0; m];
        let mut slack = n_struct;
        let starts: Vec<usize> = (0..n_struct).filter(|&j| lp.start_upper[j]).collect();
        for (i, row) in lp.rows.iter().enumerate() {
            let line = &mut t[i * width..(i + 1) * width];
            line[..n_struct].copy_from_slice(&row.coeffs);
            match row.relation {
                Relation::Le => {
                    line[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    line[slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            let shifted = row.rhs - starts.iter().map(|&j| row.coeffs[j] * lp.upper[j]).sum::<f64>();
            let scale = line[..art_start]
                .iter()
                .fold(row.rhs.abs().max(shifted.abs()), |acc, v| acc.max(v.abs()));
            let mut factor = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            if shifted < 0.0 {
                factor = -factor;
            }
            for v in line[..art_start].iter_mut() {
                *v *= factor;
            }
            line[art_start + i] = 1.0;
            b[i] = row.rhs * factor;
            beta[i] = shifted * factor;
            row_factor[i] = factor;
        }
        let mut upper = lp.upper.clone();
        upper.resize(width, f64::INFINITY);
        let mut state = vec![VarState::AtLower; width];
        for &j in &starts {
            state[j] = VarState::AtUpper;
        }
        let basis: Vec<usize> = (0..m).map(|i| art_start + i).collect();
        for &j in &basis {
            state[j] = VarState::Basic;
        }
        Tableau {
            m,
            width,
            n_struct,
            art_start,
            t,
            beta,
            b,
            upper,
            state,
            basis,
            row_factor,
            iterations: 0,
            max_iterations: 50 * (m + width) + 1000,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtUpper => self.upper[j],
            _ => 0.0,
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb == 0.0 {
                continue;
            }
            let line = &self.t[i * self.width..(i + 1) * self.width];
            for (dj, &a) in d.iter_mut().zip(line) {
                *dj -= cb * a;
            }
        }
        d
    }

    /// Recomputes basic values from B⁻¹ (held in the artificial columns).
    fn refresh_beta(&mut self) {
        let mut rhs = self.b.clone();
        // b − N x_N in original row space is awkward without the original
        // matrix; instead use B⁻¹b − Σ_{j at upper} (B⁻¹A_j) u_j.
        for i in 0..self.m {
            let mut v = 0.0;
            for (l, r) in rhs.iter().enumerate() {
                v += self.at(i, self.art_start + l) * r;
            }
            for j in 0..self.art_start {
                if self.state[j] == VarState::AtUpper {
                    v -= self.at(i, j) * self.upper[j];
                }
            }
            self.beta[i] = v;
        }
        rhs.clear();
    }

    fn pivot(&mut self, r: usize, j: usize, d: &mut [f64]) {
        let w = self.width;
        let piv = self.t[r * w + j];
        for v in self.t[r * w..(r + 1) * w].iter_mut() {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + j];
            if f == 0.0 {
                continue;
            }
            for (v, &pr) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.t[i * w + j] = 0.0;
        }
        let f = d[j];
        if f != 0.0 {
            for (dv, &pr) in d.iter_mut().zip(&pivot_row) {
                *dv -= f * pr;
            }
            d[j] = 0.0;
        }
        let leaving = self.basis[r];
        self.basis[r] = j;
        self.state[j] = VarState::Basic;
        let _ = leaving;
    }

    /// Runs simplex iterations on cost vector `cost`. `allowed` limits the
    /// entering candidates.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> LpStatus {
        let mut d = self.reduced_costs(cost);
        let cmax = cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let dtol = 1e-9 * cmax.max(1.0);
        let ptol = 1e-10;
        let mut degenerate = 0usize;
        let mut since_refresh = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..allowed {
                let sigma = match self.state[j] {
                    VarState::Basic => continue,
                    VarState::AtLower if d[j] < -dtol => 1.0,
                    VarState::AtUpper if d[j] > dtol => -1.0,
                    _ => continue,
                };
                if self.upper[j] == 0.0 {
                    continue;
                }
                if bland {
                    entering = Some((j, sigma));
                    break;
                }
                if entering.is_none_or(|(e, _)| d[j].abs() > d[e].abs()) {
                    entering = Some((j, sigma));
                }
            }
            let Some((j, sigma)) = entering else {
                return LpStatus::Optimal;
            };

            let mut step = self.upper[j];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let alpha = sigma * self.at(i, j);
                let limit = if alpha > ptol {
                    self.beta[i].max(0.0) / alpha
                } else if alpha < -ptol {
                    let ub = self.upper[self.basis[i]];
                    if ub.is_infinite() {
                        continue;
                    }
                    (ub - self.beta[i]).max(0.0) / -alpha
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < step,
                    Some((li, _)) => {
                        if limit < step - 1e-12 {
                            true
                        } else if limit <= step + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[li]
                            } else {
                                alpha.abs() > (sigma * self.at(li, j)).abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = step.min(limit);
                    leave = Some((i, alpha));
                }
            }
            if step.is_infinite() {
                return LpStatus::Unbounded;
            }
            self.iterations += 1;
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            for i in 0..self.m {
                let alpha = sigma * self.at(i, j);
                self.beta[i] -= alpha * step;
            }
            match leave {
                None => {
                    self.state[j] = if sigma > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                }
                Some((r, alpha)) => {
                    let entering_value = self.nonbasic_value(j) + sigma * step;
                    let leaving = self.basis[r];
                    self.state[leaving] = if alpha > 0.0 {
                        VarState::AtLower
                    } else {
                        VarState::AtUpper
                    };
                    self.pivot(r, j, &mut d);
                    self.beta[r] = entering_value;
                    since_refresh += 1;
                    if since_refresh >= 50 {
                        self.refresh_beta();
                        since_refresh = 0;
                    }
                }
            }
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpSolution {
        let n = self.n_struct;
        let fail = |status, iterations| LpSolution {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
            duals: vec![0.0; lp.rows.len()],
            iterations,
        };

        let mut phase1 = vec![0.0; self.width];
        for c in phase1[self.art_start..].iter_mut() {
            *c = 1.0;
        }
        let status = self.optimize(&phase1, self.art_start);
        if status == LpStatus::IterationLimit {
            return fail(status, self.iterations);
        }
        self.refresh_beta();
        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(&self.beta)
            .filter(|(&bj, _)| bj >= self.art_start)
            .map(|(_, &v)| v.abs())
            .sum();
        if infeasibility > 1e-8 * (self.m as f64).max(1.0) {
            return fail(LpStatus::Infeasible, self.iterations);
        }

        // Drive remaining artificials out of the basis where possible.
        let mut dummy = vec![0.0; self.width];
        for r in 0..self.m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let candidate = (0..self.art_start)
                .filter(|&j| self.state[j] != VarState::Basic)
                .max_by(|&a, &b| self.at(r, a).abs().total_cmp(&self.at(r, b).abs()));
            if let Some(j) = candidate {
                if self.at(r, j).abs() > 1e-9 {
                    let value = self.nonbasic_value(j);
                    let leaving = self.basis[r];
                    self.state[leaving] = VarState::AtLower;
                    self.pivot(r, j, &mut dummy);
                    self.beta[r] = value;
                }
            }
        }
        for j in self.art_start..self.width {
            self.upper[j] = 0.0;
        }
        self.refresh_beta();

        let mut phase2 = vec![0.0; self.width];
        phase2[..n].copy_from_slice(&lp.objective);
        let status = self.optimize(&phase2, self.art_start);
        if status != LpStatus::Optimal {
            return fail(status, self.iterations);
        }
        self.refresh_beta();

        let mut x = vec![0.0; self.width];
        for j in 0..self.width {
            x[j] = self.nonbasic_value(j);
        }
        for (i, &bj) in self.basis.iter().enumerate() {
            x[bj] = self.beta[i];
        }
        x.truncate(n);
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.max(0.0).min(self.upper[j]);
        }
        let objective = x.iter().zip(&lp.objective).map(|(a, c)| a * c).sum();
        let d = self.reduced_costs(&phase2);
        let duals = (0..self.m)
            .map(|i| -d[self.art_start + i] * self.row_factor[i])
            .collect();
        LpSolution {
            status: LpStatus::Optimal,
            x,
            objective,
            duals,
            iterations: self.iterations,
        }
    }
}
