//! Conversion of completed datasets back into ARFF relations.

use crate::arff::{ArffRelation, ArffValue, AttributeDecl};
use crate::dataset::{LabelCell, MultiTargetDataset, SourceLayout, TaskKind, TaskSchema};

fn task_attribute(task: &TaskSchema) -> AttributeDecl {
    match &task.kind {
        TaskKind::Regression => AttributeDecl::numeric(&task.name),
        kind => AttributeDecl::nominal(&task.name, kind.class_names().expect("classification").iter().cloned()),
    }
}

fn label_value(cell: LabelCell) -> ArffValue {
    match cell {
        LabelCell::ClassIndex(c) => ArffValue::Nom(c),
        LabelCell::Real(v) => ArffValue::Num(v),
        LabelCell::Undefined => ArffValue::Missing,
    }
}

/// One relation holding every feature followed by every task.
pub fn merged_relation(name: &str, ds: &MultiTargetDataset) -> ArffRelation {
    let mut attributes: Vec<AttributeDecl> = ds.feature_names.iter().map(AttributeDecl::numeric).collect();
    attributes.extend(ds.tasks.iter().map(task_attribute));
    let mut rel = ArffRelation::new(name, attributes);
    rel.rows = (0..ds.len())
        .map(|i| {
            ds.features(i)
                .iter()
                .map(|&x| ArffValue::Num(x))
                .chain(ds.labels(i).iter().map(|&c| label_value(c)))
                .collect()
        })
        .collect();
    rel
}

/// The original relation of one input file with its target columns replaced
/// by completed labels and the tasks it lacked appended as new columns.
/// `first_row` is the index of the file's first instance in `ds`.
pub fn source_relation(
    source: &ArffRelation,
    layout: &SourceLayout,
    ds: &MultiTargetDataset,
    first_row: usize,
) -> ArffRelation {
    let own: Vec<usize> = layout.target_columns.iter().map(|&(_, t)| t).collect();
    let extra: Vec<usize> = (0..ds.num_tasks()).filter(|t| !own.contains(t)).collect();
    let mut attributes = source.attributes.clone();
    attributes.extend(extra.iter().map(|&t| task_attribute(&ds.tasks[t])));
    let mut rel = ArffRelation::new(format!("{}_completed", source.relation_name), attributes);
    for (r, original) in source.rows.iter().enumerate() {
        let i = first_row + r;
        let mut row = original.clone();
        for &(col, t) in &layout.target_columns {
            row[col] = match ds.label(i, t) {
                LabelCell::ClassIndex(c) => {
                    let name = &ds.tasks[t].kind.class_names().expect("classification")[c];
                    let local = source.attributes[col].categories().expect("nominal column");
                    ArffValue::Nom(local.iter().position(|n| n == name).expect("same category set"))
                }
                other => label_value(other),
            };
        }
        row.extend(extra.iter().map(|&t| label_value(ds.label(i, t))));
        rel.rows.push(row);
    }
    rel
}
