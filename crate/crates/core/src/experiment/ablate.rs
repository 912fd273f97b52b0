use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;

use super::report::write_records;
use super::train::run_train_eval;
use super::{run_extract, ExperimentError, ExperimentPlan, ResultRecord};
use crate::backbone::LayerId;
use crate::features::{AggregationMethod, Stream};

/// Stream subsets compared by the combination ablation, all concatenated.
pub const COMBINATIONS: [&[Stream]; 4] = [
    &[Stream::Foreground, Stream::Background],
    &[Stream::Foreground, Stream::Hybrid],
    &[Stream::Background, Stream::Hybrid],
    &[Stream::Foreground, Stream::Background, Stream::Hybrid],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// Each pooling layer with the base streams and aggregation.
    Layers,
    /// Each stream on its own.
    Streams,
    /// Each aggregation method over all three streams.
    Aggregation,
    /// Each entry of [`COMBINATIONS`].
    Combinations,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Layers,
        Ablation::Streams,
        Ablation::Aggregation,
        Ablation::Combinations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Layers => "layers",
            Ablation::Streams => "streams",
            Ablation::Aggregation => "aggregation",
            Ablation::Combinations => "combinations",
        }
    }

    /// The plans this ablation compares, derived from `base`.
    pub fn variants(self, base: &ExperimentPlan) -> Vec<ExperimentPlan> {
        let variant = |suffix: String, f: &dyn Fn(&mut ExperimentPlan)| {
            let mut p = base.clone();
            p.label = format!("{}/{suffix}", self.name());
            f(&mut p);
            p
        };
        let tags = |streams: &[Stream]| streams.iter().map(|s| s.tag()).collect::<String>();
        match self {
            Ablation::Layers => LayerId::ALL
                .iter()
                .map(|&l| variant(l.short_name().into(), &|p| p.layer = l))
                .collect(),
            Ablation::Streams => Stream::ALL
                .iter()
                .map(|&s| variant(tags(&[s]), &|p| p.streams = vec![s]))
                .collect(),
            Ablation::Aggregation => AggregationMethod::ALL
                .iter()
                .map(|&m| {
                    variant(m.name().into(), &|p| {
                        p.streams = Stream::ALL.to_vec();
                        p.aggregation = m;
                    })
                })
                .collect(),
            Ablation::Combinations => COMBINATIONS
                .iter()
                .map(|&c| {
                    variant(tags(c), &|p| {
                        p.streams = c.to_vec();
                        p.aggregation = AggregationMethod::Concat;
                    })
                })
                .collect(),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "layers" => Ok(Ablation::Layers),
            "streams" | "individual" => Ok(Ablation::Streams),
            "aggregation" => Ok(Ablation::Aggregation),
            "combinations" => Ok(Ablation::Combinations),
            other => Err(format!(
                "unknown ablation '{other}' (expected layers, streams, aggregation or combinations)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AblationOptions {
    /// Re-extract stores even when they are up to date.
    pub force: bool,
    /// Train variants concurrently. Results are identical either way.
    pub parallel: bool,
}

/// Extracts every store the variants need, trains and scores each variant,
/// and writes the records to `out/ablation_<name>.jsonl`.
pub fn run_ablation(
    base: &ExperimentPlan,
    ablation: Ablation,
    opts: AblationOptions,
) -> Result<Vec<ResultRecord>, ExperimentError> {
    base.validate()?;
    let variants = ablation.variants(base);

    let mut needed: BTreeMap<LayerId, Vec<Stream>> = BTreeMap::new();
    for v in &variants {
        let streams = needed.entry(v.layer).or_default();
        for s in &v.streams {
            if !streams.contains(s) {
                streams.push(*s);
            }
        }
    }
    for (layer, streams) in needed {
        let mut plan = base.clone();
        plan.layer = layer;
        plan.streams = streams;
        let summary = run_extract(&plan, opts.force)?;
        info!(
            "{layer}: {} inference calls in {:.1}s",
            summary.inference_calls, summary.seconds
        );
    }

    let records: Vec<ResultRecord> = if opts.parallel {
        variants.par_iter().map(run_train_eval).collect::<Result<_, _>>()?
    } else {
        variants.iter().map(run_train_eval).collect::<Result<_, _>>()?
    };
    write_records(
        &base.out_dir.join(format!("ablation_{}.jsonl", ablation.name())),
        &records,
    )?;
    Ok(records)
}

pub fn ablate_layers(
    base: &ExperimentPlan,
    opts: AblationOptions,
) -> Result<Vec<ResultRecord>, ExperimentError> {
    run_ablation(base, Ablation::Layers, opts)
}

pub fn ablate_individual(
    base: &ExperimentPlan,
    opts: AblationOptions,
) -> Result<Vec<ResultRecord>, ExperimentError> {
    run_ablation(base, Ablation::Streams, opts)
}

pub fn ablate_aggregation(
    base: &ExperimentPlan,
    opts: AblationOptions,
) -> Result<Vec<ResultRecord>, ExperimentError> {
    run_ablation(base, Ablation::Aggregation, opts)
}

pub fn ablate_combinations(
    base: &ExperimentPlan,
    opts: AblationOptions,
) -> Result<Vec<ResultRecord>, ExperimentError> {
    run_ablation(base, Ablation::Combinations, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_labels_and_settings() {
        let base = ExperimentPlan::new("m.tsv", "out");
        let layers = Ablation::Layers.variants(&base);
        assert_eq!(layers.len(), 5);
        assert_eq!(layers[2].label, "layers/p3");
        assert_eq!(layers[2].layer, LayerId::P3);

        let streams = Ablation::Streams.variants(&base);
        assert_eq!(streams[1].label, "streams/b");
        assert_eq!(streams[1].streams, vec![Stream::Background]);

        let agg = Ablation::Aggregation.variants(&base);
        assert_eq!(agg.len(), 4);
        assert!(agg.iter().all(|p| p.streams.len() == 3));

        let combos = Ablation::Combinations.variants(&base);
        assert_eq!(combos[3].label, "combinations/fbh");
        assert_eq!(combos[3].streams, base.streams);
        assert_eq!(combos[3].aggregation, AggregationMethod::Concat);
    }

    #[test]
    fn names_parse() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
        assert_eq!("individual".parse::<Ablation>().unwrap(), Ablation::Streams);
    }
}
