use std::path::Path;

use ndarray::Axis;

use crate::data::write_pgm;
use crate::error::{Error, Result};
use crate::models::Decoder;
use crate::numerics::{Matrix, Real};

/// Dictionary elements as the columns of a `d x l` matrix. For an MLP decoder
/// atom `i` is `W2 W1 e_i`, leaving out the hidden bias and nonlinearity.
pub fn atoms<T: Real>(dec: &Decoder<T>) -> Matrix<T> {
    match dec {
        Decoder::Linear(lin) => lin.w.clone(),
        Decoder::Mlp(mlp) => mlp.w2.dot(&mlp.w1),
    }
}

/// 8-bit tile grid: each atom min-max scaled on its own, `rows x cols` tiles
/// separated by one black pixel. Unused tiles stay black.
pub fn atom_grid_pixels<T: Real>(atoms: &Matrix<T>, rows: usize, cols: usize) -> Result<(usize, usize, Vec<u8>)> {
    let d = atoms.nrows();
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::Data(format!("atom length {d} is not a perfect square")));
    }
    if rows * cols < atoms.ncols() {
        return Err(Error::Config(format!(
            "{rows}x{cols} grid cannot hold {} atoms",
            atoms.ncols()
        )));
    }
    let width = cols * side + cols.saturating_sub(1);
    let height = rows * side + rows.saturating_sub(1);
    let mut px = vec![0u8; width * height];
    for (k, atom) in atoms.axis_iter(Axis(1)).enumerate() {
        let (lo, hi) = atom
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.as_f64()), hi.max(v.as_f64()))
            });
        let range = hi - lo;
        let (tr, tc) = (k / cols, k % cols);
        let (y0, x0) = (tr * (side + 1), tc * (side + 1));
        for (p, v) in atom.iter().enumerate() {
            let level = if range > 0.0 {
                ((v.as_f64() - lo) / range * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            px[(y0 + p / side) * width + x0 + p % side] = level;
        }
    }
    Ok((width, height, px))
}

pub fn export_atom_grid<T: Real>(atoms: &Matrix<T>, rows: usize, cols: usize, path: &Path) -> Result<()> {
    let (w, h, px) = atom_grid_pixels(atoms, rows, cols)?;
    write_pgm(path, w, h, &px)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomMatch {
    /// fraction of planted atoms matched at `|cos| >= 0.9`
    pub fraction: f64,
    /// mean matched `|cos|` over planted atoms
    pub mean_cosine: f64,
    /// `(planted, learned, |cos|)` for each match
    pub pairs: Vec<(usize, usize, f64)>,
}

pub const RECOVERY_COSINE: f64 = 0.9;

/// Greedy matching: repeatedly pair the planted and learned atoms with the
/// largest remaining absolute cosine.
pub fn match_atoms<T: Real>(learned: &Matrix<T>, planted: &Matrix<T>) -> Result<AtomMatch> {
    if learned.nrows() != planted.nrows() {
        return Err(Error::shape("match_atoms", learned.shape(), planted.shape()));
    }
    let unit = |m: &Matrix<T>| -> Vec<Vec<f64>> {
        m.axis_iter(Axis(1))
            .map(|c| {
                let v: Vec<f64> = c.iter().map(|x| x.as_f64()).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    v.iter().map(|x| x / n).collect()
                } else {
                    v
                }
            })
            .collect()
    };
    let (lu, pu) = (unit(learned), unit(planted));
    let mut cands = Vec::with_capacity(lu.len() * pu.len());
    for (i, p) in pu.iter().enumerate() {
        for (j, l) in lu.iter().enumerate() {
            let c = p.iter().zip(l).map(|(a, b)| a * b).sum::<f64>().abs();
            cands.push((c, i, j));
        }
    }
    // ties fall back to index order so the result is deterministic
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pu.len()];
    let mut used_l = vec![false; lu.len()];
    let mut pairs = Vec::new();
    for (c, i, j) in cands {
        if !used_p[i] && !used_l[j] {
            used_p[i] = true;
            used_l[j] = true;
            pairs.push((i, j, c));
        }
    }
    let np = pu.len().max(1) as f64;
    Ok(AtomMatch {
        fraction: pairs.iter().filter(|p| p.2 >= RECOVERY_COSINE - 1e-12).count() as f64 / np,
        mean_cosine: pairs.iter().map(|p| p.2).sum::<f64>() / np,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MlpDecoder;
    use crate::numerics::{randn, SeededRng};
    use ndarray::{array, Array1};

    #[test]
    fn linear_atoms_are_columns() {
        let w = array![[1.0, 2.0], [3.0, 4.0]];
        let dec = Decoder::Linear(crate::models::LinearDecoder { w: w.clone() });
        assert_eq!(atoms(&dec), w);
    }

    #[test]
    fn mlp_atoms() {
        let mut rng = SeededRng::new(4);
        let w1: Matrix<f64> = randn(&mut rng, 6, 3, 0.0, 1.0);
        let w2: Matrix<f64> = randn(&mut rng, 4, 6, 0.0, 1.0);
        let dec = Decoder::Mlp(MlpDecoder {
            w1: w1.clone(),
            b1: Array1::zeros(6),
            w2: w2.clone(),
        });
        let a = atoms(&dec);
        for i in 0..3 {
            let want = w2.dot(&w1.column(i));
            for (x, y) in a.column(i).iter().zip(want.iter()) {
                assert!((x - y).abs() < 1e-7);
            }
        }

        // nonnegative first layer keeps every hidden unit active
        let dec = Decoder::Mlp(MlpDecoder {
            w1: w1.mapv(f64::abs),
            b1: Array1::zeros(6),
            w2,
        });
        let a = atoms(&dec);
        let decoded = dec.decode(&Matrix::eye(3)).unwrap();
        for (x, y) in a.iter().zip(decoded.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_dimensions_and_constant_tile() {
        let a = Matrix::<f64>::from_elem((784, 4), 0.3);
        let (w, h, px) = atom_grid_pixels(&a, 2, 2).unwrap();
        assert_eq!((w, h), (57, 57));
        assert!(px.iter().all(|&v| v == 0));
        assert!(atom_grid_pixels(&Matrix::<f64>::zeros((10, 1)), 1, 1).is_err());
    }

    #[test]
    fn scaling_extremes() {
        let a = array![[0.0], [1.0], [2.0], [4.0]];
        let (_, _, px) = atom_grid_pixels(&a, 1, 1).unwrap();
        assert_eq!(px, vec![0, 64, 128, 255]);
    }

    #[test]
    fn matching_examples() {
        let mut rng = SeededRng::new(6);
        let planted: Matrix<f64> = randn(&mut rng, 20, 8, 0.0, 1.0);
        let mut learned = planted.select(Axis(1), &[3, 1, 7, 0, 2, 6, 5, 4]);
        learned.column_mut(2).mapv_inplace(|v| -v);
        let m = match_atoms(&learned, &planted).unwrap();
        assert_eq!(m.fraction, 1.0);
        assert!((m.mean_cosine - 1.0).abs() < 1e-12);

        let e = Matrix::<f64>::eye(4);
        let m = match_atoms(&e.slice(ndarray::s![.., 0..2]).to_owned(), &e.slice(ndarray::s![.., 2..4]).to_owned()).unwrap();
        assert_eq!(m.fraction, 0.0);
    }
}
