//! Dense two-phase simplex for the small LPs left over once the exhaustive
//! backend has fixed every binary. Bland's rule keeps it cycle-free; it is
//! meant for a few dozen rows, not for production use.

use super::Sense;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DenseLpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// How an original variable is expressed through non-negative columns.
#[derive(Clone, Copy)]
enum Map {
    Fixed(f64),
    /// x = offset + y
    Shift { col: usize, offset: f64 },
    /// x = offset − y
    Mirror { col: usize, offset: f64 },
    /// x = y⁺ − y⁻
    Free { pos: usize, neg: usize },
}

/// Minimises `c·x` subject to `rows` (dense coefficients, sense, rhs) and
/// `lower <= x <= upper`.
pub fn solve_dense_lp(
    c: &[f64],
    rows: &[(Vec<f64>, Sense, f64)],
    lower: &[f64],
    upper: &[f64],
) -> DenseLpOutcome {
    let n = c.len();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    // rows over the y columns: (coefficients, sense, rhs)
    let mut std_rows: Vec<(Vec<(usize, f64)>, Sense, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lower[j], upper[j]);
        if l > u + EPS {
            return DenseLpOutcome::Infeasible;
        }
        let m = if l.is_finite() && u.is_finite() && (u - l).abs() <= EPS {
            Map::Fixed(l)
        } else if l.is_finite() {
            let col = ncols;
            ncols += 1;
            if u.is_finite() {
                std_rows.push((vec![(col, 1.0)], Sense::Le, u - l));
            }
            Map::Shift { col, offset: l }
        } else if u.is_finite() {
            let col = ncols;
            ncols += 1;
            Map::Mirror { col, offset: u }
        } else {
            let pos = ncols;
            ncols += 2;
            Map::Free { pos, neg: pos + 1 }
        };
        maps.push(m);
    }

    let mut cost = vec![0.0; ncols];
    let mut obj_offset = 0.0;
    for (j, m) in maps.iter().enumerate() {
        match *m {
            Map::Fixed(v) => obj_offset += c[j] * v,
            Map::Shift { col, offset } => {
                cost[col] += c[j];
                obj_offset += c[j] * offset;
            }
            Map::Mirror { col, offset } => {
                cost[col] -= c[j];
                obj_offset += c[j] * offset;
            }
            Map::Free { pos, neg } => {
                cost[pos] += c[j];
                cost[neg] -= c[j];
            }
        }
    }
    for (a, sense, b) in rows {
        let mut rhs = *b;
        let mut terms = Vec::new();
        for (j, &aj) in a.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            match maps[j] {
                Map::Fixed(v) => rhs -= aj * v,
                Map::Shift { col, offset } => {
                    terms.push((col, aj));
                    rhs -= aj * offset;
                }
                Map::Mirror { col, offset } => {
                    terms.push((col, -aj));
                    rhs -= aj * offset;
                }
                Map::Free { pos, neg } => {
                    terms.push((pos, aj));
                    terms.push((neg, -aj));
                }
            }
        }
        if terms.is_empty() {
            let ok = match sense {
                Sense::Le => rhs >= -EPS,
                Sense::Ge => rhs <= EPS,
                Sense::Eq => rhs.abs() <= EPS,
            };
            if !ok {
                return DenseLpOutcome::Infeasible;
            }
            continue;
        }
        std_rows.push((terms, *sense, rhs));
    }

    let y = match simplex(&cost, &std_rows, ncols) {
        Ok(y) => y,
        Err(o) => return o,
    };
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            Map::Fixed(v) => v,
            Map::Shift { col, offset } => offset + y[col],
            Map::Mirror { col, offset } => offset - y[col],
            Map::Free { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    debug_assert!((objective - (obj_offset + cost.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>())).abs() < 1e-6);
    DenseLpOutcome::Optimal { x, objective }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.width]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    for (a, b) in row.iter_mut().zip(&pivot_row) {
                        *a -= f * b;
                    }
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (a, b) in self.obj.iter_mut().zip(&pivot_row) {
                *a -= f * b;
            }
        }
        self.basis[r] = col;
    }

    /// Runs Bland's rule on columns `0..allowed`. Returns false if unbounded.
    fn optimise(&mut self, allowed: usize) -> bool {
        loop {
            let Some(col) = (0..allowed).find(|&j| self.obj[j] < -EPS) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - EPS || (ratio <= bv + EPS && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, col),
                None => return false,
            }
        }
    }
}

fn simplex(
    cost: &[f64],
    rows: &[(Vec<(usize, f64)>, Sense, f64)],
    ncols: usize,
) -> Result<Vec<f64>, DenseLpOutcome> {
    let m = rows.len();
    if m == 0 {
        // every column only has y >= 0
        if cost.iter().any(|&c| c < -EPS) {
            return Err(DenseLpOutcome::Unbounded);
        }
        return Ok(vec![0.0; ncols]);
    }
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le || r.2 < 0.0).count();
    let width = ncols + n_slack + n_art;
    let art_start = ncols + n_slack;
    let mut t = Tableau { rows: Vec::with_capacity(m), obj: vec![0.0; width + 1], basis: vec![0; m], width };
    let (mut s, mut a) = (ncols, art_start);
    for (r, (terms, sense, rhs)) in rows.iter().enumerate() {
        let mut row = vec![0.0; width + 1];
        for &(j, v) in terms {
            row[j] += v;
        }
        row[width] = *rhs;
        let mut sense = *sense;
        if *rhs < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            sense = match sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        match sense {
            Sense::Le => {
                row[s] = 1.0;
                t.basis[r] = s;
                s += 1;
            }
            Sense::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                t.basis[r] = a;
                a += 1;
            }
            Sense::Eq => {
                row[a] = 1.0;
                t.basis[r] = a;
                a += 1;
            }
        }
        t.rows.push(row);
    }

    // phase 1: minimise the sum of artificials
    for j in art_start..a {
        t.obj[j] = 1.0;
    }
    for r in 0..m {
        if t.basis[r] >= art_start {
            let row = t.rows[r].clone();
            for (o, v) in t.obj.iter_mut().zip(&row) {
                *o -= v;
            }
        }
    }
    t.optimise(a);
    if -t.obj[width] > 1e-7 {
        return Err(DenseLpOutcome::Infeasible);
    }
    // drive remaining artificials out of the basis; drop redundant rows
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= art_start {
            match (0..art_start).find(|&j| t.rows[r][j].abs() > EPS) {
                Some(col) => t.pivot(r, col),
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }

    // phase 2
    t.obj = vec![0.0; width + 1];
    t.obj[..ncols].copy_from_slice(cost);
    for r in 0..t.rows.len() {
        let cb = t.obj[t.basis[r]];
        if cb != 0.0 {
            let row = t.rows[r].clone();
            for (o, v) in t.obj.iter_mut().zip(&row) {
                *o -= cb * v;
            }
        }
    }
    if !t.optimise(art_start) {
        return Err(DenseLpOutcome::Unbounded);
    }
    let mut y = vec![0.0; ncols];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < ncols {
            y[b] = t.rhs(r).max(0.0);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(o: DenseLpOutcome) -> (Vec<f64>, f64) {
        match o {
            DenseLpOutcome::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 → (2, 6), 36
        let rows = vec![
            (vec![1.0, 0.0], Sense::Le, 4.0),
            (vec![0.0, 2.0], Sense::Le, 12.0),
            (vec![3.0, 2.0], Sense::Le, 18.0),
        ];
        let (x, obj) = opt(solve_dense_lp(&[-3.0, -5.0], &rows, &[0.0; 2], &[f64::INFINITY; 2]));
        assert!((obj + 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn free_and_negative_bounds() {
        // min |t| style: t >= 2 - x, t >= x - 2, x in [-5, -1] → x = -1, t = 3
        let rows = vec![(vec![1.0, 1.0], Sense::Ge, 2.0), (vec![-1.0, 1.0], Sense::Ge, -2.0)];
        let (x, obj) = opt(solve_dense_lp(
            &[0.0, 1.0],
            &rows,
            &[-5.0, f64::NEG_INFINITY],
            &[-1.0, f64::INFINITY],
        ));
        assert!((obj - 3.0).abs() < 1e-9);
        assert!((x[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_infeasibility() {
        let rows = vec![(vec![1.0, 1.0], Sense::Eq, 1.0), (vec![1.0, 0.0], Sense::Ge, 2.0)];
        assert_eq!(solve_dense_lp(&[1.0, 1.0], &rows, &[0.0; 2], &[1.0; 2]), DenseLpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let rows = vec![(vec![1.0], Sense::Ge, 1.0)];
        assert_eq!(
            solve_dense_lp(&[-1.0], &rows, &[0.0], &[f64::INFINITY]),
            DenseLpOutcome::Unbounded
        );
    }
}
