//! The versioned list of features extracted from every stack, and the
//! extraction driver that evaluates it.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iqm::intensity::{PairCache, VoxelRegion};
use crate::iqm::{
    bias_level, centroid_features, closing_mask, image_entropy, mask_sharpness, mask_volume,
    rank_error, sharpness_filters, summary_stats, Aggregate, Filter, MaskCombine, PairMetric,
    Region, SliceLossParams, SummaryStats, DEFAULT_CLOSING_RADIUS, DEFAULT_RANK_THRESHOLD,
    DEFAULT_WINDOW, ENTROPY_BINS,
};
use crate::volume::{BrainMask, Stack};

pub const CATALOG_ID: &str = "fetqc-iqm";
pub const CATALOG_VERSION: u32 = 1;

/// Features previously used for fetal stack QA, kept as a reference subset.
pub const BASE_FEATURES: [&str; 7] = [
    "rank_error",
    "rank_error_full",
    "mask_volume",
    "centroid",
    "centroid_full",
    "centroid_max",
    "centroid_max_full",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Mean,
    Median,
    Std,
    P5,
    P95,
    Cov,
    Kurtosis,
}

impl Stat {
    pub const ALL: [Stat; 7] = [
        Stat::Mean,
        Stat::Median,
        Stat::Std,
        Stat::P5,
        Stat::P95,
        Stat::Cov,
        Stat::Kurtosis,
    ];

    fn name(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Median => "median",
            Stat::Std => "std",
            Stat::P5 => "p05",
            Stat::P95 => "p95",
            Stat::Cov => "cov",
            Stat::Kurtosis => "kurtosis",
        }
    }

    fn pick(self, s: &SummaryStats) -> f64 {
        match self {
            Stat::Mean => s.mean,
            Stat::Median => s.median,
            Stat::Std => s.std,
            Stat::P5 => s.p5,
            Stat::P95 => s.p95,
            Stat::Cov => s.cov,
            Stat::Kurtosis => s.kurtosis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidStatistic {
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    SliceLoss(SliceLossParams),
    SummaryStat {
        stat: Stat,
    },
    Entropy {
        region: VoxelRegion,
    },
    Bias,
    FilterImage {
        filter: Filter,
        region: VoxelRegion,
    },
    MaskVolume,
    Centroid {
        region: Region,
        statistic: CentroidStatistic,
    },
    ClosingMask {
        region: Region,
        radius: usize,
    },
    FilterMask {
        filter: Filter,
    },
    RankError {
        region: Region,
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub catalog_id: String,
    pub version: u32,
    pub features: Vec<FeatureDef>,
}

fn region_suffix(region: Region) -> &'static str {
    match region {
        Region::CenterThird => "",
        Region::Full => "_full",
    }
}

fn filter_name(f: Filter) -> &'static str {
    match f {
        Filter::Laplace => "laplace",
        Filter::Sobel => "sobel",
    }
}

fn slice_loss_name(p: &SliceLossParams) -> String {
    let mut name = p.metric.name().to_owned();
    if p.window.is_some() {
        name.push_str("_window");
    }
    if p.aggregate == Aggregate::Median {
        name.push_str("_median");
    }
    if p.combine == MaskCombine::Union {
        name.push_str("_union");
    }
    name.push_str(region_suffix(p.region));
    name
}

impl FeatureCatalog {
    /// The built-in catalog: every slice-loss metric over the centre and
    /// full regions in pairwise and windowed modes, median aggregates,
    /// union-mask information metrics, and the scalar metrics.
    pub fn canonical() -> Self {
        let mut features = Vec::new();
        let mut push = |name: String, kind: FeatureKind| features.push(FeatureDef { name, kind });

        for metric in PairMetric::ALL {
            for window in [None, Some(DEFAULT_WINDOW)] {
                for region in [Region::CenterThird, Region::Full] {
                    let p = SliceLossParams {
                        metric,
                        window,
                        region,
                        aggregate: Aggregate::Mean,
                        combine: MaskCombine::Intersection,
                    };
                    push(slice_loss_name(&p), FeatureKind::SliceLoss(p));
                }
            }
        }
        for metric in PairMetric::ALL {
            let mut p = SliceLossParams::new(metric);
            p.aggregate = Aggregate::Median;
            push(slice_loss_name(&p), FeatureKind::SliceLoss(p));
        }
        for metric in PairMetric::ALL
            .into_iter()
            .filter(|m| m.is_information_theoretic())
        {
            let mut p = SliceLossParams::new(metric);
            p.combine = MaskCombine::Union;
            push(slice_loss_name(&p), FeatureKind::SliceLoss(p));
        }
        for stat in Stat::ALL {
            push(
                format!("sstats_{}", stat.name()),
                FeatureKind::SummaryStat { stat },
            );
        }
        push(
            "entropy".into(),
            FeatureKind::Entropy {
                region: VoxelRegion::Mask,
            },
        );
        push(
            "entropy_whole".into(),
            FeatureKind::Entropy {
                region: VoxelRegion::Whole,
            },
        );
        push("bias".into(), FeatureKind::Bias);
        for filter in [Filter::Laplace, Filter::Sobel] {
            push(
                format!("{}_image", filter_name(filter)),
                FeatureKind::FilterImage {
                    filter,
                    region: VoxelRegion::Mask,
                },
            );
            push(
                format!("{}_image_whole", filter_name(filter)),
                FeatureKind::FilterImage {
                    filter,
                    region: VoxelRegion::Whole,
                },
            );
        }
        push("mask_volume".into(), FeatureKind::MaskVolume);
        for region in [Region::CenterThird, Region::Full] {
            push(
                format!("centroid{}", region_suffix(region)),
                FeatureKind::Centroid {
                    region,
                    statistic: CentroidStatistic::Mean,
                },
            );
            push(
                format!("centroid_max{}", region_suffix(region)),
                FeatureKind::Centroid {
                    region,
                    statistic: CentroidStatistic::Max,
                },
            );
        }
        for region in [Region::CenterThird, Region::Full] {
            push(
                format!("closing_mask{}", region_suffix(region)),
                FeatureKind::ClosingMask {
                    region,
                    radius: DEFAULT_CLOSING_RADIUS,
                },
            );
        }
        for filter in [Filter::Laplace, Filter::Sobel] {
            push(
                format!("{}_mask", filter_name(filter)),
                FeatureKind::FilterMask { filter },
            );
        }
        for region in [Region::CenterThird, Region::Full] {
            push(
                format!("rank_error{}", region_suffix(region)),
                FeatureKind::RankError {
                    region,
                    threshold: DEFAULT_RANK_THRESHOLD,
                },
            );
        }

        FeatureCatalog {
            catalog_id: CATALOG_ID.into(),
            version: CATALOG_VERSION,
            features,
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {}", f.name)));
            }
        }
        if self.features.is_empty() {
            return Err(Error::Schema("catalog has no features".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: FeatureCatalog =
            serde_json::from_str(text).map_err(|e| Error::parse(e.column(), e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Catalog identity used to tag tables and model bundles.
    pub fn tag(&self) -> String {
        format!("{}@{}", self.catalog_id, self.version)
    }
}

/// Feature values of one stack in catalog order. A feature whose
/// preconditions fail is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct IqmVector {
    pub names: Vec<String>,
    pub values: Vec<Option<f64>>,
}

impl IqmVector {
    /// True when every feature could be computed.
    pub fn is_valid(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.values[i]
    }

    pub fn missing(&self) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

struct Extractor<'a> {
    stack: &'a Stack,
    mask: &'a BrainMask,
    pairs: Option<Result<PairCache<'a>>>,
    sstats: Option<Result<SummaryStats>>,
    centroids: HashMap<Region, Result<(f64, f64)>>,
}

fn cloned<T: Clone>(r: &Result<T>) -> Result<T> {
    match r {
        Ok(v) => Ok(v.clone()),
        Err(e) => Err(Error::Evaluation(e.to_string())),
    }
}

impl<'a> Extractor<'a> {
    fn eval(&mut self, kind: &FeatureKind) -> Result<f64> {
        match kind {
            FeatureKind::SliceLoss(p) => {
                let (stack, mask) = (self.stack, self.mask);
                match self
                    .pairs
                    .get_or_insert_with(|| PairCache::new(stack, mask))
                {
                    Ok(cache) => cache.loss(p),
                    Err(e) => Err(Error::Evaluation(e.to_string())),
                }
            }
            FeatureKind::SummaryStat { stat } => {
                let (stack, mask) = (self.stack, self.mask);
                let s = self
                    .sstats
                    .get_or_insert_with(|| summary_stats(stack, mask));
                cloned(s).map(|s| stat.pick(&s))
            }
            FeatureKind::Entropy { region } => {
                image_entropy(self.stack, self.mask, *region, ENTROPY_BINS)
            }
            FeatureKind::Bias => bias_level(self.stack, self.mask),
            FeatureKind::FilterImage { filter, region } => {
                sharpness_filters(self.stack, self.mask, *filter, *region)
            }
            FeatureKind::MaskVolume => mask_volume(self.mask),
            FeatureKind::Centroid { region, statistic } => {
                let mask = self.mask;
                let c = self
                    .centroids
                    .entry(*region)
                    .or_insert_with(|| centroid_features(mask, *region));
                cloned(c).map(|(mean, max)| match statistic {
                    CentroidStatistic::Mean => mean,
                    CentroidStatistic::Max => max,
                })
            }
            FeatureKind::ClosingMask { region, radius } => {
                closing_mask(self.mask, *region, *radius)
            }
            FeatureKind::FilterMask { filter } => mask_sharpness(self.mask, *filter),
            FeatureKind::RankError { region, threshold } => {
                rank_error(self.stack, self.mask, *region, *threshold)
            }
        }
    }
}

/// Evaluates every catalog feature on one stack. Never fails: features
/// that cannot be computed (or are not finite) are recorded as missing.
pub fn extract_all_iqms(stack: &Stack, mask: &BrainMask, catalog: &FeatureCatalog) -> IqmVector {
    let mut ex = Extractor {
        stack,
        mask,
        pairs: None,
        sstats: None,
        centroids: HashMap::new(),
    };
    let paired = mask.check_pair(stack).is_ok();
    let values = catalog
        .features
        .iter()
        .map(|f| {
            if !paired {
                return None;
            }
            ex.eval(&f.kind).ok().filter(|v| v.is_finite())
        })
        .collect();
    IqmVector {
        names: catalog.names(),
        values,
    }
}
