use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extra state a baseline keeps beyond the shared backbone and prototypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub name: String,
    pub description: String,
    /// Additional stored values (matrix entries plus parameters).
    pub additional_entries: u64,
    /// `1 - gram_entries / additional_entries`.
    pub memory_reduction: f64,
    /// Operations for the baseline's inference-time inversion, if any.
    pub solve_ops: Option<u128>,
    /// `1 - solve_ops / baseline solve_ops`.
    pub ops_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub k: usize,
    pub num_classes: usize,
    pub concat_dim: u64,
    pub gram_entries: u64,
    pub prototype_entries: u64,
    /// Cubic cost estimate of inverting the `D x D` system.
    pub solve_ops: u128,
    pub baselines: Vec<BaselineComparison>,
}

impl MemoryReport {
    pub fn baseline(&self, name: &str) -> Option<&BaselineComparison> {
        self.baselines.iter().find(|b| b.name == name)
    }
}

/// RanPAC: 10⁴-dimensional random-projection Gram plus ~11M projection and
/// adapter parameters.
const RANPAC_DIM: u64 = 10_000;
const RANPAC_EXTRA_PARAMS: u64 = 11_000_000;
/// ADAM: a second copy of the ViT-B/16 feature extractor.
const ADAM_PARAMS: u64 = 84_000_000;

/// Memory and inversion-cost accounting for the last-`k` configuration.
///
/// Reductions compare the Gram matrix alone against each baseline's extra
/// state, with parameters and matrix entries weighted equally.
pub fn memory_report(k: usize, layer_dims: &[usize], num_classes: usize) -> Result<MemoryReport> {
    let layers = layer_dims.len();
    if k == 0 || k > layers {
        return Err(Error::range("k", k, format!("1..={layers} (L = {layers})")));
    }
    if layer_dims.contains(&0) || num_classes == 0 {
        return Err(Error::Config("layer dims and class count must be positive".into()));
    }
    let d: u64 = layer_dims[layers - k..].iter().map(|&d| d as u64).sum();
    let last = *layer_dims.last().unwrap() as u64;
    let c = num_classes as u64;
    let gram_entries = d * d;
    let solve_ops = u128::from(d).pow(3);
    let reduction = |other: u64| 1.0 - gram_entries as f64 / other as f64;

    let ranpac_entries = RANPAC_DIM * RANPAC_DIM + RANPAC_EXTRA_PARAMS;
    let ranpac_ops = u128::from(RANPAC_DIM).pow(3);
    let slca_entries = c * last * last;
    let baselines = vec![
        BaselineComparison {
            name: "RanPAC".into(),
            description: "10^4-dim random-projection Gram + 11M parameters".into(),
            additional_entries: ranpac_entries,
            memory_reduction: reduction(ranpac_entries),
            solve_ops: Some(ranpac_ops),
            ops_reduction: Some(1.0 - solve_ops as f64 / ranpac_ops as f64),
        },
        BaselineComparison {
            name: "SLCA".into(),
            description: "one d_L x d_L covariance per class".into(),
            additional_entries: slca_entries,
            memory_reduction: reduction(slca_entries),
            solve_ops: None,
            ops_reduction: None,
        },
        BaselineComparison {
            name: "ADAM".into(),
            description: "second copy of the feature extractor".into(),
            additional_entries: ADAM_PARAMS,
            memory_reduction: reduction(ADAM_PARAMS),
            solve_ops: None,
            ops_reduction: None,
        },
    ];
    Ok(MemoryReport {
        k,
        num_classes,
        concat_dim: d,
        gram_entries,
        prototype_entries: c * d,
        solve_ops,
        baselines,
    })
}

/// Formats an integer with comma thousands separators.
pub fn group_thousands(n: u128) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for MemoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k                  {}", self.k)?;
        writeln!(f, "concat dim D_k     {}", group_thousands(self.concat_dim.into()))?;
        writeln!(f, "gram entries       {}", group_thousands(self.gram_entries.into()))?;
        writeln!(f, "prototype entries  {}", group_thousands(self.prototype_entries.into()))?;
        writeln!(f, "solve ops (D^3)    {} ({:.3e})", group_thousands(self.solve_ops), self.solve_ops as f64)?;
        writeln!(f, "{:<8} {:>14} {:>10} {:>10}", "baseline", "extra entries", "mem red.", "ops red.")?;
        for b in &self.baselines {
            let ops = b.ops_reduction.map_or("-".to_string(), |r| format!("{:.1}%", 100.0 * r));
            writeln!(
                f,
                "{:<8} {:>14} {:>9.1}% {:>10}",
                b.name,
                group_thousands(b.additional_entries.into()),
                100.0 * b.memory_reduction,
                ops
            )?;
        }
        Ok(())
    }
}
