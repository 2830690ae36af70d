"""CSV metric reports and per-stage map dumps."""
import csv
import io
import os

import numpy as np

from .io import atomic_write_text, write_labelmap, write_pgm, write_saliency
from .metrics import format_metric

CSV_HEADER = ("stage", "split", "precision", "recall", "miou")
SPLIT_ORDER = {"pgt": 0, "seg": 1}


def format_rows(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in sorted(rows, key=lambda r: (r["stage"], SPLIT_ORDER.get(r["split"], 9))):
        writer.writerow([row["stage"], row["split"], format_metric(row["precision"]),
                         format_metric(row["recall"]), format_metric(row["miou"])])
    return buf.getvalue()


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def dump_name(stage, kind, sample_id):
    return f"stage{stage}_{kind}_{sample_id}.pgm"


def emit_report(rows, out_dir, stages=(), sample_ids=(), dump_limit=8, label_sets=()):
    """Write ``metrics.csv`` atomically plus PGM dumps of pseudo labels and CAMs.

    Dumps cover the first ``dump_limit`` samples of every stage record: the
    segmentation pseudo label, the saliency pseudo label and one CAM per
    present class.
    """
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "metrics.csv"), format_rows(rows))
    provenance = [f"{rec.stage} {rec.provenance}" for rec in stages]
    if provenance:
        atomic_write_text(os.path.join(out_dir, "provenance.txt"), "\n".join(provenance) + "\n")
    written = []
    for rec in stages:
        for i, sid in enumerate(list(sample_ids)[:dump_limit]):
            path = os.path.join(out_dir, dump_name(rec.stage, "pgtseg", sid))
            write_labelmap(path, rec.pgt_seg[i])
            written.append(path)
            path = os.path.join(out_dir, dump_name(rec.stage, "pgtsal", sid))
            write_saliency(path, rec.pgt_sal[i])
            written.append(path)
            present = sorted(label_sets[i]) if label_sets else range(1, rec.cams[i].n_classes + 1)
            for c in present:
                path = os.path.join(out_dir, dump_name(rec.stage, f"cam{c}", sid))
                write_pgm(path, np.rint(np.clip(rec.cams[i].maps[c - 1], 0, 1) * 255).astype(np.uint8))
                written.append(path)
    return written
