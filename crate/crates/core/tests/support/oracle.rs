//! Brute-force reference evaluations, written independently of the library.
#![allow(dead_code)]

/// Dense tensor `y[a][b][c][d][r]`.
pub type Dense = Vec<Vec<Vec<Vec<Vec<f64>>>>>;

fn avg(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    s / xs.len() as f64
}

fn pvar(xs: &[f64]) -> f64 {
    let m = avg(xs);
    let mut s = 0.0;
    for x in xs {
        s += (x - m) * (x - m);
    }
    s / xs.len() as f64
}

fn dims(y: &Dense) -> (usize, usize, usize, usize, usize) {
    (y.len(), y[0].len(), y[0][0].len(), y[0][0][0].len(), y[0][0][0][0].len())
}

/// Var over every value.
pub fn iv(y: &Dense) -> f64 {
    let mut all = Vec::new();
    for pa in y {
        for pb in pa {
            for pc in pb {
                for pd in pc {
                    all.extend_from_slice(pd);
                }
            }
        }
    }
    pvar(&all)
}

/// Mean_{b,c} Var_a Mean_d Mean_r y.
pub fn ci(y: &Dense) -> f64 {
    let (na, nb, nc, nd, _) = dims(y);
    let mut outer = Vec::new();
    for b in 0..nb {
        for c in 0..nc {
            let mut per_lang = Vec::new();
            for a in 0..na {
                let rounds: Vec<f64> = (0..nd).map(|d| avg(&y[a][b][c][d])).collect();
                per_lang.push(avg(&rounds));
            }
            outer.push(pvar(&per_lang));
        }
    }
    avg(&outer)
}

/// Mean_{a,b,c} Var_d Mean_r y.
pub fn vr(y: &Dense) -> f64 {
    let (na, nb, nc, nd, _) = dims(y);
    let mut outer = Vec::new();
    for a in 0..na {
        for b in 0..nb {
            for c in 0..nc {
                let series: Vec<f64> = (0..nd).map(|d| avg(&y[a][b][c][d])).collect();
                outer.push(pvar(&series));
            }
        }
    }
    avg(&outer)
}

/// Payoff to `player` (0 or 1) at (row, col) in utility terms.
fn util(cells: &[[(f64, f64); 2]; 2], minimize: bool, player: usize, row: usize, col: usize) -> f64 {
    let (x, y) = cells[row][col];
    let v = if player == 0 { x } else { y };
    if minimize {
        -v
    } else {
        v
    }
}

/// Pure Nash equilibria by scanning unilateral deviations.
pub fn pure_nash(cells: &[[(f64, f64); 2]; 2], minimize: bool, tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..2 {
        for c in 0..2 {
            let p1_ok = util(cells, minimize, 0, r, c) + tol >= util(cells, minimize, 0, 1 - r, c);
            let p2_ok = util(cells, minimize, 1, r, c) + tol >= util(cells, minimize, 1, r, 1 - c);
            if p1_ok && p2_ok {
                out.push((r, c));
            }
        }
    }
    out
}

/// Strictly dominant strategy of each player, if any.
pub fn dominant(cells: &[[(f64, f64); 2]; 2], minimize: bool, tol: f64) -> [Option<usize>; 2] {
    let mut out = [None, None];
    for s in 0..2 {
        let o = 1 - s;
        if (0..2).all(|c| util(cells, minimize, 0, s, c) > util(cells, minimize, 0, o, c) + tol) {
            out[0] = Some(s);
        }
        if (0..2).all(|r| util(cells, minimize, 1, r, s) > util(cells, minimize, 1, r, o) + tol) {
            out[1] = Some(s);
        }
    }
    out
}
