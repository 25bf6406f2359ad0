//! Moment system of the factor-augmented model: stacked instrument
//! moments, their analytic Jacobian in the free parameters, and the
//! embedding of the constrained weight matrix.

use crate::error::{Error, Result};
use crate::inference::instrument_moment_rows;
use crate::iv::Dataset;
use crate::numerics::RealMatrix;

type Matrix = RealMatrix<f64>;

/// Free-parameter layout, in order:
///   per outcome j: β_j (R entries) then λ_j (L entries);
///   free weight rows k = L..K: L-1 entries each;
///   γ_x (R entries);
///   γ (K entries).
///
/// The moment vector stacks, per outcome, the (K+R) means of
/// Z*_i (Y_ij - X_i β_j - Z_i γ Θ λ_j), followed by the first-stage
/// block Z*_i (D_i - X_i γ_x - Z_i γ), with Z*_i = [Z_i X_i].
pub struct FateModel<'a> {
    data: &'a Dataset,
    l: usize,
    /// Z* = [Z X], kept for per-observation moment rows.
    s: Matrix,
    /// Cross-products divided by N: S'X, S'Z, S'Y, S'D.
    sx: Matrix,
    sz: Matrix,
    sy: Matrix,
    sd: Matrix,
}

impl<'a> FateModel<'a> {
    pub fn new(data: &'a Dataset, l: usize) -> Result<Self> {
        let k = data.n_instruments();
        if l < 1 || l > k {
            return Err(Error::InvalidConfig(format!(
                "component count L={l} outside 1..=K={k}"
            )));
        }
        let s = data.instrument_block();
        let inv_n = 1.0 / data.n() as f64;
        Ok(Self {
            sx: s.t_dot(data.x()).scale(inv_n),
            sz: s.t_dot(data.z()).scale(inv_n),
            sy: s.t_dot(data.y()).scale(inv_n),
            sd: s.t_dot(data.d()).scale(inv_n),
            s,
            data,
            l,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.data.n_outcomes(),
            self.data.n_instruments(),
            self.data.n_controls(),
            self.l,
        )
    }

    pub fn n_params(&self) -> usize {
        let (j, k, r, l) = self.dims();
        j * (r + l) + (k - l) * (l - 1) + r + k
    }

    pub fn n_moments(&self) -> usize {
        let (j, k, r, _) = self.dims();
        (j + 1) * (k + r)
    }

    fn offset_theta(&self) -> usize {
        let (j, _, r, l) = self.dims();
        j * (r + l)
    }

    fn offset_gamma_x(&self) -> usize {
        let (_, k, _, l) = self.dims();
        self.offset_theta() + (k - l) * (l - 1)
    }

    fn offset_gamma(&self) -> usize {
        let (_, _, r, _) = self.dims();
        self.offset_gamma_x() + r
    }

    pub fn beta_index(&self, j: usize, b: usize) -> usize {
        let (_, _, r, l) = self.dims();
        j * (r + l) + b
    }

    pub fn lambda_index(&self, j: usize, m: usize) -> usize {
        let (_, _, r, l) = self.dims();
        j * (r + l) + r + m
    }

    /// Column of the free entry (k, m) of the weight matrix, k >= L.
    pub fn theta_index(&self, k: usize, m: usize) -> usize {
        let (_, _, _, l) = self.dims();
        self.offset_theta() + (k - l) * (l - 1) + m
    }

    pub fn gamma_x_index(&self, b: usize) -> usize {
        self.offset_gamma_x() + b
    }

    pub fn gamma_index(&self, k: usize) -> usize {
        self.offset_gamma() + k
    }

    /// Embeds the full K×L weight matrix: identity block on the first L
    /// rows, free rows below with the last entry reconstructed as one
    /// minus the sum of the row's free entries.
    pub fn theta(&self, p: &[f64]) -> Matrix {
        let (_, k, _, l) = self.dims();
        let mut theta = Matrix::zeros(k, l);
        for d in 0..l {
            theta.set(d, d, 1.0);
        }
        for ki in l..k {
            let mut acc = 0.0;
            for m in 0..l - 1 {
                let v = p[self.theta_index(ki, m)];
                theta.set(ki, m, v);
                acc += v;
            }
            theta.set(ki, l - 1, 1.0 - acc);
        }
        theta
    }

    pub fn lambda(&self, p: &[f64]) -> Matrix {
        let (j, _, _, l) = self.dims();
        Matrix::from_fn(l, j, |m, jj| p[self.lambda_index(jj, m)])
    }

    pub fn beta(&self, p: &[f64]) -> Matrix {
        let (j, _, r, _) = self.dims();
        Matrix::from_fn(r, j, |b, jj| p[self.beta_index(jj, b)])
    }

    pub fn gamma(&self, p: &[f64]) -> Vec<f64> {
        let (_, k, _, _) = self.dims();
        (0..k).map(|ki| p[self.gamma_index(ki)]).collect()
    }

    pub fn gamma_x(&self, p: &[f64]) -> Vec<f64> {
        let (_, _, r, _) = self.dims();
        (0..r).map(|b| p[self.gamma_x_index(b)]).collect()
    }

    /// Moment means and their analytic Jacobian at the given parameters.
    /// Everything is assembled from N-free cross-products.
    pub fn moments(&self, p: &[f64]) -> (Vec<f64>, Matrix) {
        let (j, k, r, l) = self.dims();
        let m_block = k + r;
        let n_mom = self.n_moments();
        let n_par = self.n_params();
        let theta = self.theta(p);
        let gamma = self.gamma(p);
        let gamma_x = self.gamma_x(p);

        // szg[a][ki] = (S'z_k / N)_a * γ_k ; v = szg · Θ.
        let szg = Matrix::from_fn(m_block, k, |a, ki| self.sz.get(a, ki) * gamma[ki]);
        let v = szg.dot(&theta); // m_block × L

        let mut gbar = vec![0.0; n_mom];
        let mut jac = Matrix::zeros(n_mom, n_par);

        for jj in 0..j {
            let base = jj * m_block;
            let lam_j: Vec<f64> = (0..l).map(|m| p[self.lambda_index(jj, m)]).collect();
            let theta_lam = theta.dot_vec(&lam_j); // K entries: (Θ λ_j)_k
            for a in 0..m_block {
                let mut val = self.sy.get(a, jj);
                for b in 0..r {
                    val -= self.sx.get(a, b) * p[self.beta_index(jj, b)];
                }
                for m in 0..l {
                    val -= v.get(a, m) * lam_j[m];
                }
                gbar[base + a] = val;

                let row = jac.row_mut(base + a);
                for b in 0..r {
                    row[self.beta_index(jj, b)] = -self.sx.get(a, b);
                }
                for m in 0..l {
                    row[self.lambda_index(jj, m)] = -v.get(a, m);
                }
                for ki in l..k {
                    for m in 0..l - 1 {
                        // Last row entry is 1 - Σ free, so shifting one free
                        // entry moves weight between effects m and L-1.
                        row[self.theta_index(ki, m)] =
                            -szg.get(a, ki) * (lam_j[m] - lam_j[l - 1]);
                    }
                }
                for ki in 0..k {
                    row[self.gamma_index(ki)] = -self.sz.get(a, ki) * theta_lam[ki];
                }
            }
        }

        // First-stage block.
        let base = j * m_block;
        for a in 0..m_block {
            let mut val = self.sd.get(a, 0);
            for b in 0..r {
                val -= self.sx.get(a, b) * gamma_x[b];
            }
            for ki in 0..k {
                val -= self.sz.get(a, ki) * gamma[ki];
            }
            gbar[base + a] = val;
            let row = jac.row_mut(base + a);
            for b in 0..r {
                row[self.gamma_x_index(b)] = -self.sx.get(a, b);
            }
            for ki in 0..k {
                row[self.gamma_index(ki)] = -self.sz.get(a, ki);
            }
        }

        (gbar, jac)
    }

    /// Per-observation moment rows (N × M) at the given parameters, for
    /// the weighting covariance.
    pub fn per_obs_moments(&self, p: &[f64]) -> Matrix {
        let (j, _, r, l) = self.dims();
        let n = self.data.n();
        let theta = self.theta(p);
        let gamma = self.gamma(p);
        let gamma_x = self.gamma_x(p);

        // Per outcome: Z c_j with c_jk = γ_k (Θ λ_j)_k.
        let mut resid = Matrix::zeros(n, j + 1);
        for jj in 0..j {
            let lam_j: Vec<f64> = (0..l).map(|m| p[self.lambda_index(jj, m)]).collect();
            let theta_lam = theta.dot_vec(&lam_j);
            let c: Vec<f64> = gamma.iter().zip(&theta_lam).map(|(&g, &t)| g * t).collect();
            for i in 0..n {
                let mut val = self.data.y().get(i, jj);
                let xi = self.data.x().row(i);
                for b in 0..r {
                    val -= xi[b] * p[self.beta_index(jj, b)];
                }
                let zi = self.data.z().row(i);
                for (ki, &ck) in c.iter().enumerate() {
                    val -= zi[ki] * ck;
                }
                resid.set(i, jj, val);
            }
        }
        for i in 0..n {
            let mut val = self.data.d().get(i, 0);
            let xi = self.data.x().row(i);
            for (b, &g) in gamma_x.iter().enumerate() {
                val -= xi[b] * g;
            }
            let zi = self.data.z().row(i);
            for (ki, &g) in gamma.iter().enumerate() {
                val -= zi[ki] * g;
            }
            resid.set(i, j, val);
        }
        instrument_moment_rows(&self.s, &resid)
    }

    pub(crate) fn instrument_gram(&self) -> Matrix {
        self.s.t_dot(&self.s).scale(1.0 / self.data.n() as f64)
    }

    pub(crate) fn data(&self) -> &Dataset {
        self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iv::ColumnNames;
    use crate::numerics::RngSeed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small_dataset(seed: u64) -> Dataset {
        let mut rng = RngSeed::new(seed, 0).rng();
        let n = 120;
        let z = Matrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let x = Matrix::from_fn(n, 2, |_, c| {
            if c == 0 {
                1.0
            } else {
                StandardNormal.sample(&mut rng)
            }
        });
        let noise = Matrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        let d = Matrix::from_fn(n, 1, |i, _| {
            0.6 * z.get(i, 0) + 0.5 * z.get(i, 1) + 0.4 * z.get(i, 2) + noise.get(i, 0)
        });
        let y = Matrix::from_fn(n, 2, |i, jj| {
            let e: f64 = StandardNormal.sample(&mut rng);
            1.1 * d.get(i, 0) + 0.3 * x.get(i, 1) + 0.1 * (jj as f64) + e
        });
        Dataset::new(y, d, z, x, ColumnNames::generic(2, 3, 2)).unwrap()
    }

    #[test]
    fn theta_embedding_enforces_constraints() {
        let data = small_dataset(1);
        let model = FateModel::new(&data, 2).unwrap();
        let mut p = vec![0.0; model.n_params()];
        p[model.theta_index(2, 0)] = -2.5;
        let theta = model.theta(&p);
        assert_eq!(theta.get(0, 0), 1.0);
        assert_eq!(theta.get(0, 1), 0.0);
        assert_eq!(theta.get(1, 1), 1.0);
        assert_eq!(theta.get(2, 0), -2.5);
        assert_eq!(theta.get(2, 1), 3.5);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let data = small_dataset(2);
        for l in 1..=3 {
            let model = FateModel::new(&data, l).unwrap();
            let mut rng = RngSeed::new(77, l as u64).rng();
            for _ in 0..20 {
                let p: Vec<f64> = (0..model.n_params())
                    .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                    .collect();
                let (_, jac) = model.moments(&p);
                let step = 1e-6;
                for col in 0..model.n_params() {
                    let mut hi = p.clone();
                    let mut lo = p.clone();
                    hi[col] += step;
                    lo[col] -= step;
                    let (g_hi, _) = model.moments(&hi);
                    let (g_lo, _) = model.moments(&lo);
                    for row in 0..model.n_moments() {
                        let fd = (g_hi[row] - g_lo[row]) / (2.0 * step);
                        let diff = (jac.get(row, col) - fd).abs();
                        assert!(diff < 1e-5, "L={l} entry ({row},{col}): {diff}");
                    }
                }
            }
        }
    }

    #[test]
    fn per_obs_rows_average_to_moment_means() {
        let data = small_dataset(3);
        let model = FateModel::new(&data, 2).unwrap();
        let mut rng = RngSeed::new(5, 0).rng();
        let p: Vec<f64> = (0..model.n_params())
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        let (gbar, _) = model.moments(&p);
        let rows = model.per_obs_moments(&p);
        let n = data.n() as f64;
        for (a, &g) in gbar.iter().enumerate() {
            let mean: f64 = (0..data.n()).map(|i| rows.get(i, a)).sum::<f64>() / n;
            assert!((mean - g).abs() < 1e-12, "moment {a}");
        }
    }

    #[test]
    fn zero_residual_data_zeroes_moments_at_truth() {
        // Noiseless construction: Y = X β + Z γ Θ λ exactly.
        let mut rng = RngSeed::new(4, 0).rng();
        let n = 80;
        let z = Matrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let x = Matrix::from_fn(n, 2, |_, c| {
            if c == 0 {
                1.0
            } else {
                StandardNormal.sample(&mut rng)
            }
        });
        let gamma = [0.7, 0.5, 0.4];
        let theta_true =
            Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.3, 0.7]).unwrap();
        let lambda_true = Matrix::from_vec(2, 2, vec![1.0, 0.8, -0.4, 0.2]).unwrap();
        let beta_true = Matrix::from_vec(2, 2, vec![0.5, -0.1, 0.2, 0.3]).unwrap();
        let gx = [0.9, -0.2];
        let d = Matrix::from_fn(n, 1, |i, _| {
            gx[0] * x.get(i, 0)
                + gx[1] * x.get(i, 1)
                + (0..3).map(|ki| z.get(i, ki) * gamma[ki]).sum::<f64>()
        });
        let tl = theta_true.dot(&lambda_true);
        let y = Matrix::from_fn(n, 2, |i, jj| {
            (0..2).map(|b| x.get(i, b) * beta_true.get(b, jj)).sum::<f64>()
                + (0..3)
                    .map(|ki| z.get(i, ki) * gamma[ki] * tl.get(ki, jj))
                    .sum::<f64>()
        });
        let data = Dataset::new(y, d, z, x, ColumnNames::generic(2, 3, 2)).unwrap();
        let model = FateModel::new(&data, 2).unwrap();
        let mut p = vec![0.0; model.n_params()];
        for jj in 0..2 {
            for b in 0..2 {
                p[model.beta_index(jj, b)] = beta_true.get(b, jj);
            }
            for m in 0..2 {
                p[model.lambda_index(jj, m)] = lambda_true.get(m, jj);
            }
        }
        p[model.theta_index(2, 0)] = 0.3;
        for b in 0..2 {
            p[model.gamma_x_index(b)] = gx[b];
        }
        for ki in 0..3 {
            p[model.gamma_index(ki)] = gamma[ki];
        }
        let (gbar, _) = model.moments(&p);
        assert!(gbar.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn single_component_collapses_to_pooled_moments() {
        // With L = 1 there are no free weight entries and the outcome
        // moments carry Zγ times a scalar effect.
        let data = small_dataset(6);
        let model = FateModel::new(&data, 1).unwrap();
        assert_eq!(
            model.n_params(),
            2 * (2 + 1) + 0 + 2 + 3
        );
        let theta = model.theta(&vec![0.25; model.n_params()]);
        for ki in 0..3 {
            assert_eq!(theta.get(ki, 0), 1.0);
        }
    }
}
