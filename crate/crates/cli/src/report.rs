//! Plain-text report blocks. Every number is printed with a fixed width so
//! identical runs give identical bytes.

use std::fmt::Write;

use entlink::analysis::{AblationReport, DriftStep, Pca2d, RsaResult};
use entlink::corpus::EntityCatalog;
use entlink::evaluation::{BucketRow, GroupingMode, MetricReport, TypeRow};
use entlink::probing::{AttributeMrr, LinkReport, RelationMrr, SpeakerMode};

pub fn metric_block(r: &MetricReport, groupings: &[GroupingMode]) -> String {
    let mut s = String::new();
    writeln!(s, "mentions\t{}", r.mentions).unwrap();
    writeln!(s, "grouping\tmacro_f1\taccuracy").unwrap();
    for g in groupings {
        let (f1, acc) = match g {
            GroupingMode::All => (r.f1_all, r.acc_all),
            GroupingMode::Main => (r.f1_main, r.acc_main),
        };
        writeln!(s, "{g}\t{f1:.6}\t{acc:.6}").unwrap();
    }
    s
}

pub fn bucket_block(rows: &[BucketRow]) -> String {
    let mut s = String::from("bucket\tmentions\taccuracy\n");
    for r in rows {
        writeln!(s, "{}\t{}\t{:.6}", r.bucket.label(), r.mentions, r.accuracy).unwrap();
    }
    s
}

pub fn type_block(rows: &[TypeRow], grouping: GroupingMode) -> String {
    let mut s = format!("mention_type\tmentions\tf1_{grouping}\taccuracy_{grouping}\n");
    for r in rows {
        writeln!(s, "{}\t{}\t{:.6}\t{:.6}", r.mention_type, r.mentions, r.f1, r.accuracy).unwrap();
    }
    s
}

pub fn rsa_line(label: &str, r: &RsaResult) -> String {
    format!("{label}\t{:.6}\t{}\t{}\n", r.rho, r.entities, r.pairs)
}

pub fn drift_block(steps: &[DriftStep]) -> String {
    let mut s = String::from("token\tmax_abs\tfrobenius\n");
    for (i, d) in steps.iter().enumerate() {
        writeln!(s, "{i}\t{:.6e}\t{:.6e}", d.max_abs, d.frobenius).unwrap();
    }
    let max = steps.iter().map(|d| d.max_abs).fold(0.0, f64::max);
    writeln!(s, "overall_max_abs\t{max:.6e}").unwrap();
    s
}

pub fn ablation_block(r: &AblationReport) -> String {
    let mut s = String::new();
    let f = &r.flags;
    writeln!(
        s,
        "override\ttie_speaker_referent={}\tgate_similarity={}\tupdates_enabled={}",
        f.tie_speaker_referent, f.gate_similarity, f.updates_enabled
    )
    .unwrap();
    writeln!(s, "mismatched\t{}", r.mismatched).unwrap();
    writeln!(s, "condition\tf1_all\tacc_all\tf1_main\tacc_main").unwrap();
    for (label, m) in [("trained", &r.trained), ("overridden", &r.overridden)] {
        writeln!(s, "{label}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", m.f1_all, m.acc_all, m.f1_main, m.acc_main).unwrap();
    }
    s
}

pub fn pca_block(p: &Pca2d, ids: &[usize], catalog: &EntityCatalog) -> String {
    let mut s = String::new();
    writeln!(s, "# variance\t{:.6}\t{:.6}", p.variances[0], p.variances[1]).unwrap();
    writeln!(s, "entity\tname\tpc1\tpc2").unwrap();
    for (&e, c) in ids.iter().zip(&p.coords) {
        writeln!(s, "{e}\t{}\t{:.6}\t{:.6}", catalog.name(e).unwrap_or("?"), c[0], c[1]).unwrap();
    }
    s
}

pub fn link_block(reports: &[(String, LinkReport)], descriptions: usize, entities: usize) -> String {
    let mut s = String::new();
    writeln!(s, "descriptions\t{descriptions}").unwrap();
    writeln!(s, "speakers\taccuracy").unwrap();
    for (mode, r) in reports {
        writeln!(s, "{mode}\t{:.6}", r.accuracy).unwrap();
    }
    writeln!(s, "chance\t{:.6}", 1.0 / entities as f64).unwrap();
    s
}

pub fn attribute_block(rows: &[AttributeMrr]) -> String {
    let mut s = String::from("attribute\tcandidates\tentities");
    for m in SpeakerMode::PROBE_MODES {
        write!(s, "\tspeakers_{m}").unwrap();
    }
    s.push_str("\tbest\tchance\n");
    for r in rows {
        write!(s, "{}\t{}\t{}", r.attribute, r.candidates, r.entities).unwrap();
        for (_, v) in &r.per_mode {
            write!(s, "\t{v:.6}").unwrap();
        }
        writeln!(s, "\t{}:{:.6}\t{:.6}", r.best.0, r.best.1, r.random_baseline).unwrap();
    }
    s
}

pub fn relation_block(r: &RelationMrr) -> String {
    format!(
        "candidates\t{}\ntargets\t{}\nmrr\t{:.6}\nchance\t{:.6}\n",
        r.candidates, r.targets, r.mrr, r.random_baseline
    )
}
