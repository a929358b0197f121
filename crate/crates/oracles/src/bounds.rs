//! Trimming bounds on a finite population given as weighted cells.

/// `count` identical units with covariate cell `x`, treatment `d`, selection `s`, outcome `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub x: u32,
    pub d: u8,
    pub s: u8,
    pub y: f64,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Sorted `(value, count)` pairs of selected outcomes in one arm of one cell.
fn arm(atoms: &[Atom], x: Option<u32>, d: u8) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = atoms
        .iter()
        .filter(|a| x.is_none_or(|x| a.x == x) && a.d == d && a.s == 1)
        .map(|a| (a.y, a.count as f64))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn total(v: &[(f64, f64)]) -> f64 {
    v.iter().map(|p| p.1).sum()
}

fn mean(v: &[(f64, f64)]) -> f64 {
    v.iter().map(|p| p.0 * p.1).sum::<f64>() / total(v)
}

/// Mean of the lowest `level` share, scaled by `level`: `E[Y 1(Y <= q)]` with the units
/// tied at the boundary value `q` counted fractionally so exactly that share is kept.
fn lower_trimmed(v: &[(f64, f64)], level: f64) -> f64 {
    let n = total(v);
    let mut room = level * n;
    let mut sum = 0.0;
    for &(y, c) in v {
        let take = c.min(room.max(0.0));
        sum += y * take;
        room -= take;
    }
    sum / n
}

/// Mirror image of [`lower_trimmed`]: keeps the top `level` share.
fn upper_trimmed(v: &[(f64, f64)], level: f64) -> f64 {
    let mirrored: Vec<(f64, f64)> = v.iter().rev().map(|&(y, c)| (-y, c)).collect();
    -lower_trimmed(&mirrored, level)
}

/// Population trimming bounds. Cells with `P(S=1|D=0,x) <= P(S=1|D=1,x)` trim the treated
/// arm; otherwise, when `conditional` is set, the control arm is trimmed, else nothing is.
/// With `pooled`, all cells are merged first (no covariates).
pub fn trimming_bounds(atoms: &[Atom], conditional: bool, pooled: bool) -> Interval {
    let mut xs: Vec<u32> = atoms.iter().map(|a| a.x).collect();
    xs.sort_unstable();
    xs.dedup();
    let cells: Vec<Option<u32>> = if pooled { vec![None] } else { xs.into_iter().map(Some).collect() };
    let n_all: f64 = atoms.iter().map(|a| a.count as f64).sum();
    let (mut lo, mut hi, mut norm) = (0.0, 0.0, 0.0);
    for x in cells {
        let in_cell = |a: &&Atom| x.is_none_or(|x| a.x == x);
        let n_x: f64 = atoms.iter().filter(in_cell).map(|a| a.count as f64).sum();
        let n_d = |d: u8| atoms.iter().filter(in_cell).filter(|a| a.d == d).map(|a| a.count as f64).sum::<f64>();
        let (t, c) = (arm(atoms, x, 1), arm(atoms, x, 0));
        let pi1 = total(&t) / n_d(1);
        let pi0 = total(&c) / n_d(0);
        let p0 = pi0 / pi1;
        let px = n_x / n_all;
        if p0 <= 1.0 || !conditional {
            let r = p0.min(1.0);
            lo += px * (pi1 * lower_trimmed(&t, r) - pi0 * mean(&c));
            hi += px * (pi1 * upper_trimmed(&t, r) - pi0 * mean(&c));
            norm += px * pi0;
        } else {
            let r = 1.0 / p0;
            lo += px * (pi1 * mean(&t) - pi0 * upper_trimmed(&c, r));
            hi += px * (pi1 * mean(&t) - pi0 * lower_trimmed(&c, r));
            norm += px * pi1;
        }
    }
    Interval { lower: lo / norm, upper: hi / norm }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(x: u32, d: u8, s: u8, y: f64, count: u32) -> Atom {
        Atom { x, d, s, y, count }
    }

    #[test]
    fn trimmed_means() {
        let v = vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0)];
        assert_eq!(lower_trimmed(&v, 0.5), (1.0 + 2.0) / 4.0);
        assert_eq!(upper_trimmed(&v, 0.5), (3.0 + 4.0) / 4.0);
        assert_eq!(lower_trimmed(&v, 1.0), 2.5);
        // Two tied units at the boundary, one of them kept.
        let tied = vec![(1.0, 1.0), (2.0, 2.0), (3.0, 1.0)];
        assert_eq!(lower_trimmed(&tied, 0.5), (1.0 + 2.0) / 4.0);
    }

    #[test]
    fn no_selection_gives_point() {
        let atoms = vec![atom(0, 1, 1, 2.0, 3), atom(0, 1, 1, 4.0, 1), atom(0, 0, 1, 1.0, 4)];
        let b = trimming_bounds(&atoms, true, false);
        assert!((b.lower - 1.5).abs() < 1e-12 && (b.upper - 1.5).abs() < 1e-12);
    }

    #[test]
    fn textbook_lee_case() {
        // treated: 4 selected of 4 with outcomes 1..4; control: 2 of 4 selected, mean 0.
        let mut atoms: Vec<Atom> = (1..=4).map(|y| atom(0, 1, 1, y as f64, 1)).collect();
        atoms.push(atom(0, 0, 1, 0.0, 2));
        atoms.push(atom(0, 0, 0, 0.0, 2));
        let b = trimming_bounds(&atoms, false, true);
        assert!((b.lower - 1.5).abs() < 1e-12);
        assert!((b.upper - 3.5).abs() < 1e-12);
    }
}
