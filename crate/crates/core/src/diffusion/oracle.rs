//! Exhaustive-enumeration oracles for the diffusion closed forms.

use serde::Serialize;

use super::{check_wor, WorCoefficients, WorMoments};
use crate::error::{invalid, Error, Result};
use crate::linalg::{CompensatedMatrix, Mat, Vector};

const MAX_SUBSETS: u128 = 100_000;
const MAX_WOR_ITEMS: usize = 7;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, j| acc * (n - j) as u128 / (j + 1) as u128)
}

/// `⟨ξξᵀ⟩/2` over every m-subset with equal weight, `ξ = η(∇L − (M/m) Σ_{i∈B} V_i)`.
pub fn oracle_wr(v: &Mat, grad_l: &Vector, eta: f64, m: usize, m_total: usize) -> Result<Mat> {
    if m == 0 || m > m_total || v.ncols() != m_total {
        return Err(invalid("oracle needs 1 <= m <= M and V with M columns"));
    }
    let count = binomial(m_total, m);
    if count > MAX_SUBSETS {
        return Err(Error::OracleLimit(format!("C({m_total}, {m}) = {count} subsets exceeds {MAX_SUBSETS}")));
    }
    let n = v.nrows();
    let scale = m_total as f64 / m as f64;
    let mut acc = CompensatedMatrix::zeros(n, n);
    let mut idx: Vec<usize> = (0..m).collect();
    let mut xi = vec![0.0; n];
    loop {
        for a in 0..n {
            let s: f64 = idx.iter().map(|&i| v[(a, i)]).sum();
            xi[a] = eta * (grad_l[a] - scale * s);
        }
        for a in 0..n {
            for b in 0..n {
                acc.add(a, b, xi[a] * xi[b]);
            }
        }
        // Next combination in lexicographic order.
        let mut k = m;
        while k > 0 && idx[k - 1] == m_total - m + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for j in k..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(acc.value() / (2.0 * count as f64))
}

/// One symmetry class of epoch-statistic moments.
#[derive(Debug, Clone, Serialize)]
pub struct MomentClass {
    pub name: &'static str,
    pub members: usize,
    /// Enumerated value (mean over members).
    pub enumerated: f64,
    /// max − min over members; zero when the class is a genuine symmetry class.
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorMomentReport {
    pub m_total: usize,
    pub m: usize,
    pub permutations: u64,
    /// max |⟨ζ_i⟩|, |⟨χ_ij⟩|.
    pub first_moment_max: f64,
    pub classes: Vec<MomentClass>,
    pub printed: WorCoefficients,
    pub exact: WorMoments,
}

#[derive(Debug, Clone, Serialize)]
pub struct Mismatch {
    pub class: &'static str,
    pub expected: f64,
    pub enumerated: f64,
}

fn class_value(k: &WorMoments, name: &str) -> f64 {
    match name {
        "a0" => k.a0,
        "b0" => k.b0,
        "a1" => k.a1,
        "-a1" => -k.a1,
        "a2[i=k]" | "a2[j=l]" => k.a2,
        "a3" => k.a3,
        "a4" => k.a4,
        "a5[i=l]" | "a5[j=k]" => k.a5,
        "a6" => k.a6,
        _ => 0.0,
    }
}

impl WorMomentReport {
    /// Classes whose enumerated value differs from `table` by more than `tol`
    /// (absolute), plus any class that is not constant over its members.
    pub fn mismatches(&self, table: &WorMoments, tol: f64) -> Vec<Mismatch> {
        self.classes
            .iter()
            .filter(|c| c.members > 0)
            .filter(|c| (c.enumerated - class_value(table, c.name)).abs() > tol || c.spread > tol)
            .map(|c| Mismatch { class: c.name, expected: class_value(table, c.name), enumerated: c.enumerated })
            .collect()
    }

    pub fn class(&self, name: &str) -> Option<&MomentClass> {
        self.classes.iter().find(|c| c.name == name)
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

struct ClassAcc {
    name: &'static str,
    values: Vec<f64>,
}

/// Second moments of ζ and χ by enumerating every permutation of the data.
///
/// All sums are carried in integers (`2ζ` and `2(M−1)χ` are integers), so the
/// enumerated moments are exact up to the final division.
pub fn oracle_wor_moments(m_total: usize, m: usize) -> Result<WorMomentReport> {
    check_wor(m, m_total)?;
    if m_total > MAX_WOR_ITEMS {
        return Err(Error::OracleLimit(format!("{m_total}! permutations; limit is M <= {MAX_WOR_ITEMS}")));
    }
    let mt = m_total;
    let n = (mt / m) as i64;
    let off = (mt - m) as i64;
    let two_m1 = 2 * (mt as i64 - 1);
    let mut zs = vec![0i64; mt];
    let mut cs = vec![0i64; mt * mt];
    let mut zz = vec![0i64; mt * mt];
    let mut zc = vec![0i64; mt * mt * mt];
    let mut cc = vec![0i64; mt * mt * mt * mt];
    let mut perm: Vec<usize> = (0..mt).collect();
    let mut batch_of = vec![0i64; mt];
    let mut z2 = vec![0i64; mt];
    let mut c2 = vec![0i64; mt * mt];
    let mut count: u64 = 0;
    loop {
        for (pos, &item) in perm.iter().enumerate() {
            batch_of[item] = (pos / m) as i64;
        }
        for i in 0..mt {
            z2[i] = -(n - 1) + 2 * (n - 1 - batch_of[i]);
            for j in 0..mt {
                c2[i * mt + j] = if i == j { 0 } else { two_m1 * i64::from(batch_of[i] > batch_of[j]) - off };
            }
        }
        for i in 0..mt {
            zs[i] += z2[i];
            for j in 0..mt {
                zz[i * mt + j] += z2[i] * z2[j];
            }
            for jk in 0..mt * mt {
                zc[i * mt * mt + jk] += z2[i] * c2[jk];
            }
        }
        for ij in 0..mt * mt {
            cs[ij] += c2[ij];
            if c2[ij] == 0 {
                continue;
            }
            let base = ij * mt * mt;
            for kl in 0..mt * mt {
                cc[base + kl] += c2[ij] * c2[kl];
            }
        }
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }

    let cnt = count as f64;
    let tm = two_m1 as f64;
    let first_moment_max = zs
        .iter()
        .map(|&s| (s as f64 / (2.0 * cnt)).abs())
        .chain(cs.iter().map(|&s| (s as f64 / (tm * cnt)).abs()))
        .fold(0.0, f64::max);

    let names = [
        "a0", "b0", "a1", "-a1", "zeta_chi_distinct", "zeta_chi_diag", "a3", "a4", "a2[i=k]", "a2[j=l]", "a5[i=l]",
        "a5[j=k]", "a6", "chi_chi_diag",
    ];
    let mut classes: Vec<ClassAcc> = names.iter().map(|&name| ClassAcc { name, values: Vec::new() }).collect();
    let mut push = |name: &str, v: f64| {
        classes.iter_mut().find(|c| c.name == name).expect("known class").values.push(v);
    };
    for i in 0..mt {
        for j in 0..mt {
            let v = zz[i * mt + j] as f64 / (4.0 * cnt);
            push(if i == j { "a0" } else { "b0" }, v);
        }
    }
    for i in 0..mt {
        for j in 0..mt {
            for k in 0..mt {
                let v = zc[(i * mt + j) * mt + k] as f64 / (2.0 * tm * cnt);
                let name = if j == k {
                    "zeta_chi_diag"
                } else if i == k {
                    "a1"
                } else if i == j {
                    "-a1"
                } else {
                    "zeta_chi_distinct"
                };
                push(name, v);
            }
        }
    }
    for i in 0..mt {
        for j in 0..mt {
            for k in 0..mt {
                for l in 0..mt {
                    let v = cc[((i * mt + j) * mt + k) * mt + l] as f64 / (tm * tm * cnt);
                    let name = if i == j || k == l {
                        "chi_chi_diag"
                    } else if i == k && j == l {
                        "a3"
                    } else if i == l && j == k {
                        "a4"
                    } else if i == k {
                        "a2[i=k]"
                    } else if j == l {
                        "a2[j=l]"
                    } else if i == l {
                        "a5[i=l]"
                    } else if j == k {
                        "a5[j=k]"
                    } else {
                        "a6"
                    };
                    push(name, v);
                }
            }
        }
    }
    let classes = classes
        .into_iter()
        .map(|c| {
            let members = c.values.len();
            let (lo, hi) = c.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            MomentClass {
                name: c.name,
                members,
                enumerated: if members > 0 { c.values.iter().sum::<f64>() / members as f64 } else { 0.0 },
                spread: if members > 0 { hi - lo } else { 0.0 },
            }
        })
        .collect();
    Ok(WorMomentReport {
        m_total,
        m,
        permutations: count,
        first_moment_max,
        classes,
        printed: super::wor_coefficients(m, m_total)?,
        exact: WorMoments::exact(m, m_total)?,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{diffusion_wr, WrVariant};
    use super::*;
    use crate::linalg::rel_diff;

    #[test]
    fn wr_oracle_matches_closed_form_on_all_small_instances() {
        for mt in 2..=6 {
            let v = Mat::from_fn(3, mt, |a, i| ((a * 5 + i * 3) as f64 * 0.7).sin());
            let g = v.column_sum();
            for m in 1..=mt {
                let d = diffusion_wr(&v, &g, 0.1, m, mt, WrVariant::Exact).unwrap();
                let o = oracle_wr(&v, &g, 0.1, m, mt).unwrap();
                if m == mt {
                    assert!(o.norm() < 1e-15);
                    assert_eq!(d.norm(), 0.0);
                } else {
                    assert!(rel_diff(&d, &o) <= 1e-12, "M={mt} m={m}: {}", rel_diff(&d, &o));
                }
            }
        }
    }

    #[test]
    fn wr_oracle_scalar_example() {
        let v = Mat::from_row_slice(1, 2, &[0.5, 1.5]);
        let d = oracle_wr(&v, &v.column_sum(), 0.1, 1, 2).unwrap();
        assert!((d[(0, 0)] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn wr_oracle_limit() {
        let v = Mat::zeros(1, 40);
        assert!(matches!(oracle_wr(&v, &Vector::zeros(1), 0.1, 20, 40), Err(Error::OracleLimit(_))));
    }

    #[test]
    fn four_two_first_and_zeta_moments() {
        let r = oracle_wor_moments(4, 2).unwrap();
        assert_eq!(r.permutations, 24);
        assert_eq!(r.first_moment_max, 0.0);
        assert!((r.class("a0").unwrap().enumerated - 0.25).abs() < 1e-15);
        assert!(r.mismatches(&r.exact, 1e-12).is_empty());
    }

    #[test]
    fn exact_table_matches_enumeration_everywhere() {
        for (mt, m) in [(2, 1), (3, 1), (4, 1), (4, 2), (6, 1), (6, 2), (6, 3), (5, 1)] {
            let r = oracle_wor_moments(mt, m).unwrap();
            let bad = r.mismatches(&r.exact, 1e-12);
            assert!(bad.is_empty(), "M={mt} m={m}: {bad:?}");
        }
    }

    #[test]
    fn printed_table_misses_three_structures_beyond_two_batches() {
        let r = oracle_wor_moments(6, 2).unwrap();
        let printed = WorMoments::printed(2, 6).unwrap();
        let names: Vec<&str> = r.mismatches(&printed, 1e-12).iter().map(|m| m.class).collect();
        assert_eq!(names, vec!["b0", "a5[i=l]", "a5[j=k]", "a6"]);
    }

    #[test]
    fn perturbed_coefficient_is_named() {
        let r = oracle_wor_moments(6, 2).unwrap();
        let mut k = r.exact;
        k.a2 *= 1.0 + 1e-6;
        let names: Vec<&str> = r.mismatches(&k, 1e-12).iter().map(|m| m.class).collect();
        assert_eq!(names, vec!["a2[i=k]", "a2[j=l]"]);
    }

    #[test]
    fn wor_oracle_limit() {
        assert!(matches!(oracle_wor_moments(8, 2), Err(Error::OracleLimit(_))));
    }
}
