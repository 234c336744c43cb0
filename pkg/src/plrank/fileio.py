"""Reading and writing datasets, chains, fits, and report tables.

Dataset CSVs are plain integer matrices, one unit per row, zero-coded
missing entries, with an optional header row. Preference profiles follow
the line-oriented format with '#'-prefixed metadata and aggregated
"count: item,item,..." preference lines. Chain traces are CSVs with
columns p_1_1 ... p_G_K (component-major), w_1 ... w_G, log_lik,
deviance. Fits and report tables are JSON; floats are written with full
round-trip precision everywhere, so equal inputs and seeds give byte
identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re

import numpy as np

from .data import (
    Dataset,
    ORDERING,
    RANKING,
    ord_rank_switch,
    unit_to_freq,
    validate_ordering_matrix,
    validate_ranking_matrix,
)
from .em import Hyperparams, MapFit
from .errors import ValidationError
from .gibbs import GibbsChain

PREFLIB = "preflib"

_NUM_ALTERNATIVES = re.compile(r"#\s*NUMBER\s+ALTERNATIVES\s*:\s*(\d+)", re.I)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- datasets


def read_sequence_csv(path) -> np.ndarray:
    """Integer sequence matrix from CSV; a non-numeric first row is
    treated as a header and skipped."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for i, rec in enumerate(reader):
            rec = [c.strip() for c in rec if c.strip() != ""]
            if not rec:
                continue
            try:
                rows.append([int(c) for c in rec])
            except ValueError:
                if i == 0:
                    continue
                raise ValidationError(
                    f"{path}: line {i + 1}: non-integer entry"
                ) from None
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError(f"{path}: ragged rows")
    return np.asarray(rows, dtype=np.int64)


def write_sequence_csv(path, matrix: np.ndarray) -> None:
    arr = np.asarray(matrix, dtype=np.int64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows(arr.tolist())


def parse_preflib(path) -> Dataset:
    """Parse a strict/incomplete-order preference profile into a Dataset.

    Metadata lines start with '#'; "# NUMBER ALTERNATIVES: K" fixes the
    item count (otherwise the largest item id seen is used). Preference
    lines read "count: i1,i2,..." with 1-based item ids. Rows ranking all
    but one item are completed at ingestion like any other top-(K-1)
    sequence.
    """
    with open(path) as fh:
        text = fh.read()
    return parse_preflib_text(text, source=str(path))


def parse_preflib_text(text: str, source: str = "<preflib>") -> Dataset:
    K = None
    prefs: list[tuple[int, list[int]]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _NUM_ALTERNATIVES.match(line)
            if m:
                K = int(m.group(1))
            continue
        head, sep, tail = line.partition(":")
        if not sep:
            raise ValidationError(f"{source}: line {ln}: expected 'count: items'")
        try:
            count = int(head.strip())
        except ValueError:
            raise ValidationError(f"{source}: line {ln}: bad count") from None
        if count < 1:
            raise ValidationError(f"{source}: line {ln}: count must be >= 1")
        try:
            items = [int(tok.strip()) for tok in tail.split(",") if tok.strip()]
        except ValueError:
            raise ValidationError(f"{source}: line {ln}: bad item id") from None
        if not items:
            raise ValidationError(f"{source}: line {ln}: empty preference")
        if len(set(items)) != len(items):
            raise ValidationError(f"{source}: line {ln}: duplicate item")
        if min(items) < 1:
            raise ValidationError(f"{source}: line {ln}: item ids are 1-based")
        prefs.append((count, items))
    if not prefs:
        raise ValidationError(f"{source}: no preference lines")
    max_seen = max(max(items) for _, items in prefs)
    if K is None:
        K = max_seen
    elif max_seen > K:
        raise ValidationError(f"{source}: item id {max_seen} exceeds K={K}")
    matrix = np.zeros((sum(c for c, _ in prefs), K), dtype=np.int64)
    row = 0
    for count, items in prefs:
        matrix[row : row + count, : len(items)] = items
        row += count
    return Dataset.from_orderings(matrix)


def format_preflib(data, title: str = "rankings") -> str:
    """Serialize a dataset as an aggregated preference profile; distinct
    rows are emitted in lexicographic order."""
    if isinstance(data, Dataset):
        matrix = data.orderings
    else:
        matrix = validate_ordering_matrix(data)
    freq = unit_to_freq(matrix)
    K = matrix.shape[1]
    out = io.StringIO()
    out.write(f"# TITLE: {title}\n")
    out.write(f"# NUMBER ALTERNATIVES: {K}\n")
    out.write(f"# NUMBER VOTERS: {int(freq.counts.sum())}\n")
    for seq, cnt in zip(freq.sequences, freq.counts):
        ranked = [str(int(v)) for v in seq if v != 0]
        out.write(f"{int(cnt)}: {','.join(ranked)}\n")
    return out.getvalue()


def write_preflib(path, data, title: str | None = None) -> None:
    if title is None:
        title = os.path.splitext(os.path.basename(str(path)))[0]
    with open(path, "w") as fh:
        fh.write(format_preflib(data, title=title))


def read_dataset(path, format: str, K: int | None = None) -> Dataset:
    """Load a dataset in any supported format, validating K if given."""
    if format == PREFLIB:
        data = parse_preflib(path)
    elif format in (ORDERING, RANKING):
        matrix = read_sequence_csv(path)
        if format == ORDERING:
            data = Dataset.from_orderings(matrix)
        else:
            data = Dataset.from_rankings(matrix)
    else:
        raise ValidationError(f"unknown format {format!r}")
    if K is not None and data.n_items != K:
        raise ValidationError(f"{path}: expected K={K}, found {data.n_items}")
    return data


def write_dataset(path, data: Dataset, format: str = ORDERING) -> None:
    if format == ORDERING:
        write_sequence_csv(path, data.orderings)
    elif format == RANKING:
        write_sequence_csv(path, ord_rank_switch(data.orderings, ORDERING))
    elif format == PREFLIB:
        write_preflib(path, data)
    else:
        raise ValidationError(f"unknown format {format!r}")


# ------------------------------------------------------------------ chains


def chain_header(G: int, K: int) -> list[str]:
    cols = [f"p_{g + 1}_{i + 1}" for g in range(G) for i in range(K)]
    cols += [f"w_{g + 1}" for g in range(G)]
    return cols + ["log_lik", "deviance"]


def write_chain_csv(path, chain) -> None:
    """Trace CSV: p columns component-major, then weights, log_lik,
    deviance; works for raw and relabeled chains."""
    G, K = chain.n_components, chain.n_items
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(chain_header(G, K))
        for l in range(chain.n_kept):
            row = [_fmt(v) for v in chain.P[l]]
            row += [_fmt(v) for v in chain.W[l]]
            row += [_fmt(chain.log_lik[l]), _fmt(chain.deviance[l])]
            writer.writerow(row)


def read_chain_csv(path) -> GibbsChain:
    """Load a trace CSV back into a GibbsChain.

    Sweep counts are reconstructed as n_iter = kept rows, n_burn = 0; the
    original run's bookkeeping is not stored in the CSV.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty chain file") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    w_cols = [h for h in header if re.fullmatch(r"w_\d+", h)]
    p_cols = [h for h in header if re.fullmatch(r"p_\d+_\d+", h)]
    G = len(w_cols)
    if G == 0 or not p_cols or len(p_cols) % G != 0:
        raise ValidationError(f"{path}: not a chain trace header")
    K = len(p_cols) // G
    expect = chain_header(G, K)
    if header != expect:
        raise ValidationError(f"{path}: unexpected column layout")
    if not rows:
        raise ValidationError(f"{path}: chain has no sweeps")
    try:
        arr = np.asarray([[float(c) for c in r] for r in rows])
    except ValueError:
        raise ValidationError(f"{path}: non-numeric trace entry") from None
    if arr.shape[1] != len(expect):
        raise ValidationError(f"{path}: ragged trace rows")
    L = arr.shape[0]
    return GibbsChain(
        P=arr[:, : G * K],
        W=arr[:, G * K : G * K + G],
        log_lik=arr[:, -2],
        deviance=arr[:, -1],
        n_iter=L,
        n_burn=0,
        seed=None,
    )


def write_permutations_csv(path, relabeled) -> None:
    """Per-sweep relabeling log, 1-based component indices."""
    G = relabeled.n_components
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep"] + [f"sigma_{g + 1}" for g in range(G)])
        for l in range(relabeled.n_kept):
            writer.writerow([l + 1] + [int(v) + 1 for v in relabeled.permutations[l]])


# ------------------------------------------------------------------- fits


def map_fit_to_dict(fit: MapFit) -> dict:
    return {
        "n_components": int(fit.n_components),
        "n_items": int(fit.supports.shape[1]),
        "supports": fit.supports.tolist(),
        "weights": fit.weights.tolist(),
        "supports_raw": fit.supports_raw.tolist(),
        "labels": fit.labels.tolist(),
        "log_post_trace": fit.log_post_trace.tolist(),
        "log_lik": float(fit.log_lik),
        "converged": bool(fit.converged),
        "n_iter_used": int(fit.n_iter_used),
        "bic": None if fit.bic is None else float(fit.bic),
        "hyper": {
            "shape": fit.hyper.shape.tolist(),
            "rate": fit.hyper.rate.tolist(),
            "alpha": fit.hyper.alpha.tolist(),
        },
        "final_log_posts": (
            None
            if fit.final_log_posts is None
            else fit.final_log_posts.tolist()
        ),
        "best_start": None if fit.best_start is None else int(fit.best_start),
    }


def write_map_json(path, fit: MapFit) -> None:
    with open(path, "w") as fh:
        json.dump(map_fit_to_dict(fit), fh, indent=1)
        fh.write("\n")


def read_map_json(path) -> MapFit:
    """Load a fit written by write_map_json.

    Soft responsibilities are not serialized; they are reconstructed as
    the one-hot encoding of the stored classification.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON: {e}") from None
    try:
        G = int(doc["n_components"])
        supports = np.asarray(doc["supports"], dtype=np.float64)
        weights = np.asarray(doc["weights"], dtype=np.float64)
        raw = np.asarray(doc["supports_raw"], dtype=np.float64)
        labels = np.asarray(doc["labels"], dtype=np.int64)
        hyper = Hyperparams(
            np.asarray(doc["hyper"]["shape"], dtype=np.float64),
            np.asarray(doc["hyper"]["rate"], dtype=np.float64),
            np.asarray(doc["hyper"]["alpha"], dtype=np.float64),
        )
    except (KeyError, TypeError) as e:
        raise ValidationError(f"{path}: not a fit file ({e})") from None
    if supports.ndim != 2 or supports.shape[0] != G:
        raise ValidationError(f"{path}: malformed supports")
    onehot = np.zeros((labels.shape[0], G), dtype=np.float64)
    onehot[np.arange(labels.shape[0]), labels - 1] = 1.0
    fin = doc.get("final_log_posts")
    return MapFit(
        supports=supports,
        weights=weights,
        supports_raw=raw,
        responsibilities=onehot,
        labels=labels,
        log_post_trace=np.asarray(doc["log_post_trace"], dtype=np.float64),
        log_lik=float(doc["log_lik"]),
        converged=bool(doc["converged"]),
        n_iter_used=int(doc["n_iter_used"]),
        bic=None if doc.get("bic") is None else float(doc["bic"]),
        hyper=hyper,
        final_log_posts=None if fin is None else np.asarray(fin, dtype=np.float64),
        best_start=doc.get("best_start"),
    )


# ----------------------------------------------------------------- reports


def write_selection_csv(path, report) -> None:
    rows = report.to_rows()
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in rows:
            writer.writerow(
                [
                    _fmt(r[c]) if isinstance(r[c], float) else r[c]
                    for c in cols
                ]
            )


def write_selection_json(path, report) -> None:
    doc = {"point_estimate": report.point_estimate, "criteria": report.to_rows()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def ppcheck_rows(plain, cond=None) -> list[dict]:
    rows = []
    for i, g in enumerate(plain.g_values):
        row = {
            "G": int(g),
            "post_pred_pvalue_top1": float(plain.p_top1[i]),
            "post_pred_pvalue_paired": float(plain.p_paired[i]),
        }
        if cond is not None:
            row["post_pred_pvalue_top1_cond"] = float(cond.p_top1[i])
            row["post_pred_pvalue_paired_cond"] = float(cond.p_paired[i])
        rows.append(row)
    return rows


def write_ppcheck_csv(path, plain, cond=None) -> None:
    rows = ppcheck_rows(plain, cond)
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in rows:
            writer.writerow(
                [_fmt(r[c]) if isinstance(r[c], float) else r[c] for c in cols]
            )


def write_ppcheck_json(path, plain, cond=None) -> None:
    with open(path, "w") as fh:
        json.dump({"checks": ppcheck_rows(plain, cond)}, fh, indent=1)
        fh.write("\n")
