"""Span-level scoring: per-class precision/recall/F1 from exact (start, end,
label) matches, micro-averaged pooled counts, and comparison tables across
model families and corpora.

The overall score is micro-averaged span F1 and is always labelled
micro_f1; this artifact never reports an undefined "accuracy".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import Sentence, Span

ROW_ORDER = ("FUND", "GRNB", "IND", "UNI", "COR", "MISC")
OVERALL = "overall"


class EvalError(Exception):
    pass


@dataclass
class ClassScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "p": self.precision, "r": self.recall, "f1": self.f1}


@dataclass
class EvalReport:
    classes: dict[str, ClassScore] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def micro(self) -> ClassScore:
        return ClassScore(
            tp=sum(c.tp for c in self.classes.values()),
            fp=sum(c.fp for c in self.classes.values()),
            fn=sum(c.fn for c in self.classes.values()),
        )

    @property
    def micro_f1(self) -> float:
        return self.micro.f1

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "classes": {label: score.to_dict() for label, score in sorted(self.classes.items())},
            "micro": self.micro.to_dict(),
            "micro_f1": self.micro_f1,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        classes = {label: ClassScore(entry["tp"], entry["fp"], entry["fn"])
                   for label, entry in d.get("classes", {}).items()}
        return cls(classes, d.get("meta", {}))

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def score_spans(gold_sentences: list[Sentence], predictions: dict[str, list[Span]],
                labels=None, meta: dict | None = None) -> EvalReport:
    """Exact-match span scoring: a prediction is a true positive iff its
    (start, end, label) triple matches a gold span; unmatched predictions
    are false positives, unmatched gold spans false negatives."""
    by_id: dict[str, Sentence] = {}
    for i, sent in enumerate(gold_sentences):
        sid = sent.sent_id or f"__idx-{i}"
        if sid in by_id:
            raise EvalError(f"duplicate sentence id {sid!r} in gold")
        by_id[sid] = sent
    unknown = sorted(set(predictions) - set(by_id))
    if unknown:
        raise EvalError(f"predictions reference unknown sentence ids: {unknown}")
    classes: dict[str, ClassScore] = {label: ClassScore() for label in (labels or [])}

    def bucket(label: str) -> ClassScore:
        if label not in classes:
            classes[label] = ClassScore()
        return classes[label]

    for sid, sent in by_id.items():
        gold = set(sent.spans)
        pred = set(predictions.get(sid, []))
        for span in pred & gold:
            bucket(span.label).tp += 1
        for span in pred - gold:
            bucket(span.label).fp += 1
        for span in gold - pred:
            bucket(span.label).fn += 1
    return EvalReport(classes, dict(meta or {}))


def align_predictions(gold_sentences: list[Sentence],
                      pred_sentences: list[Sentence]) -> dict[str, list[Span]]:
    """Map a prediction file's sentences (aligned by order) onto gold ids."""
    if len(gold_sentences) != len(pred_sentences):
        raise EvalError(f"prediction file has {len(pred_sentences)} sentences, "
                        f"gold has {len(gold_sentences)}")
    out = {}
    for i, (gold, pred) in enumerate(zip(gold_sentences, pred_sentences)):
        if gold.words != pred.words:
            raise EvalError(f"sentence {i}: prediction tokens do not match gold tokens")
        out[gold.sent_id or f"__idx-{i}"] = list(pred.spans)
    return out


def evaluate_model(predictor, sentences: list[Sentence], labels=None,
                   meta: dict | None = None, context_map=None) -> EvalReport:
    """Score a model (anything with .predict(sentence, context)) or a ready
    predictions dict against a gold split."""
    if not sentences:
        raise EvalError("evaluation split is empty")
    gold = []
    for i, sent in enumerate(sentences):
        if sent.sent_id:
            gold.append(sent)
        else:
            clone = Sentence(sent.tokens, sent.spans, dict(sent.meta))
            clone.meta["sent_id"] = f"__idx-{i}"
            gold.append(clone)
    if isinstance(predictor, dict):
        predictions = predictor
    else:
        predictions = {}
        for sent in gold:
            ctx = (context_map or {}).get(sent.sent_id)
            result = predictor.predict(sent, ctx) if ctx is not None else predictor.predict(sent)
            predictions[sent.sent_id] = result.spans if hasattr(result, "spans") else list(result)
    return score_spans(gold, predictions, labels=labels, meta=meta)


# ---------------------------------------------------------------------------
# Comparisons


@dataclass
class Comparison:
    rows: list[str]
    columns: list[str]
    values: list[list[float | None]]  # rows x columns, None = class absent

    def to_dict(self) -> dict:
        return {"rows": self.rows, "columns": self.columns, "values": self.values}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_text(self) -> str:
        width = max([len(r) for r in self.rows] + [7])
        col_widths = [max(len(c), 6) for c in self.columns]
        lines = [" ".join([" " * width] + [c.rjust(w) for c, w in zip(self.columns, col_widths)])]
        for row, vals in zip(self.rows, self.values):
            cells = ["-".rjust(w) if v is None else f"{v:.3f}".rjust(w)
                     for v, w in zip(vals, col_widths)]
            lines.append(" ".join([row.ljust(width)] + cells))
        return "\n".join(lines) + "\n"

    def plot_data(self) -> dict:
        """Grouped-bar plot data: one group per row, one bar per column."""
        return {
            "kind": "grouped-bars",
            "groups": self.rows,
            "series": [
                {"name": col, "values": [self.values[r][c] for r in range(len(self.rows))]}
                for c, col in enumerate(self.columns)
            ],
        }


def _column_name(meta: dict) -> str:
    name = meta.get("run")
    if name:
        return name
    parts = [meta.get("family", "?"), meta.get("corpus", "?")]
    if meta.get("ablation") and meta["ablation"] != "none":
        parts.append(meta["ablation"])
    return "/".join(str(p) for p in parts)


def compare(reports: list[EvalReport]) -> Comparison:
    """Side-by-side per-class F1 and overall micro-F1: rows are entity types
    in the fixed order FUND, GRNB, IND, UNI, COR, MISC (extra labels sorted
    after), columns are one report each."""
    if len(reports) < 2:
        raise EvalError("compare needs at least 2 reports")
    seen = set()
    for report in reports:
        key = json.dumps(report.meta, sort_keys=True)
        if key in seen:
            raise EvalError(f"duplicate run metadata: {report.meta}")
        seen.add(key)
    present = {label for report in reports for label in report.classes}
    rows = [label for label in ROW_ORDER if label in present]
    rows += sorted(present - set(ROW_ORDER))
    rows.append(OVERALL)
    columns = [_column_name(r.meta) for r in reports]
    values: list[list[float | None]] = []
    for row in rows:
        line: list[float | None] = []
        for report in reports:
            if row == OVERALL:
                line.append(report.micro_f1)
            elif row in report.classes:
                line.append(report.classes[row].f1)
            else:
                line.append(None)
        values.append(line)
    return Comparison(rows, columns, values)
