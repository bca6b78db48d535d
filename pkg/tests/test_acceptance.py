"""Acceptance suite: every criterion runs at its stated tolerance and prints
one PASS/FAIL line (run with `pytest tests/test_acceptance.py -s`).

The heavyweight shared artifacts (synthetic corpora, char LMs, the six
corpus-size runs) are session fixtures so each is built exactly once.
"""

import time
from importlib import resources

import numpy as np
import pytest

from acklab import crf, synth
from acklab import tensor as T
from acklab.corpus import (
    Span,
    build_corpus,
    decode_bioes,
    encode_bioes,
    make_sentence,
    parse_conll,
    save_corpus,
    write_conll,
)
from acklab.embeddings import (
    CharLM,
    CharLMConfig,
    ContextualEmbedder,
    EmbeddingStack,
    StaticEmbedder,
    random_static_table,
    train_char_lm,
)
from acklab.evaluation import evaluate_model, score_spans
from acklab.experiment import parse_manifest, run_experiment
from acklab.tagger import TaggerConfig, TaggerModel, build_context_map, train
from acklab.tars import TarsConfig, default_verbalizations, tars_predict, train_tars

PROPS = {"IND": .3, "FUND": .25, "GRNB": .2, "UNI": .15, "MISC": .07, "COR": .03}
ALL_TAGS = ["O"] + [f"{p}-{l}" for l in ("FUND", "COR", "UNI", "IND", "MISC", "GRNB")
                    for p in "BIES"]


def _report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\n{criterion} {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
    assert ok, f"{criterion}: {detail}"


def _random_span_sentence(rng) -> list[Span]:
    n = int(rng.integers(1, 15))
    spans = []
    cursor = 0
    while cursor < n:
        if rng.uniform() < 0.5:
            end = min(n, cursor + int(rng.integers(1, 5)))
            label = ("FUND", "COR", "UNI", "IND", "MISC", "GRNB")[int(rng.integers(6))]
            spans.append(Span(cursor, end, label))
            cursor = end
        else:
            cursor += 1
    return spans, n


# ---------------------------------------------------------------------------
# Shared heavyweight fixtures


def _build_stack(corpus, seed=13):
    text = "\n".join(s.text for s in corpus.train)
    cfg = CharLMConfig(hidden_size=32, embed_dim=12, epochs=8, learning_rate=1e-2, seed=seed)
    fwd, _ = train_char_lm(text, "forward", cfg)
    bwd, _ = train_char_lm(text, "backward", cfg)
    words = {w for s in corpus.all_sentences() for w in s.words}
    return EmbeddingStack([StaticEmbedder(random_static_table(words, 24, seed)),
                           ContextualEmbedder(fwd, bwd)])


@pytest.fixture(scope="session")
def scale_corpora():
    """A 339-sentence train split and its first 29 sentences, sharing one
    held-out dev/test set (sizes from the two training corpora)."""
    big = synth.generate_synthetic(synth.default_templates(), synth.default_vocab(),
                                   (339, 60, 60), seed=11, proportions=PROPS)
    small = build_corpus(big.train[:29], big.dev, big.test, scheme=big.scheme)
    return small, big


@pytest.fixture(scope="session")
def scale_results(scale_corpora):
    """Held-out micro-F1 for the three families on both train sizes, same
    seed and held-out set; models kept for the TARS criteria."""
    small, big = scale_corpora
    results = {}
    models = {}

    for name, corpus, epochs in (("small", small, 40), ("big", big, 18)):
        stack = _build_stack(corpus)
        opt = T.OptimizerConfig(algorithm="sgd", learning_rate=0.1, patience=8, clip_norm=5.0)
        model, _ = train(TaggerConfig(family="flair-stack", hidden_size=32), corpus, opt,
                         seed=42, epochs=epochs, stack=stack)
        results[("flair-stack", name)] = evaluate_model(
            model, corpus.test, labels=corpus.labels).micro_f1

    for name, corpus, epochs in (("small", small, 30), ("big", big, 12)):
        cfg = TaggerConfig(family="finetune", model_dim=64, n_layers=2, n_heads=4,
                           ffn_dim=128, context_window=32)
        opt = T.OptimizerConfig(algorithm="adaptive-moments", learning_rate=1e-3,
                                patience=8, clip_norm=5.0)
        model, _ = train(cfg, corpus, opt, seed=42, epochs=epochs)
        ctx = build_context_map(corpus.test, cfg.context_window)
        results[("mini-transformer-finetune", name)] = evaluate_model(
            model, corpus.test, labels=corpus.labels, context_map=ctx).micro_f1

    verb = default_verbalizations()
    for name, corpus, epochs in (("small", small, 20), ("big", big, 6)):
        cfg = TarsConfig(model_dim=48, n_layers=2, n_heads=4, ffn_dim=96)
        opt = T.OptimizerConfig(algorithm="adaptive-moments", learning_rate=1e-3,
                                patience=8, clip_norm=5.0)
        model, log = train_tars(corpus, verb, cfg, opt, seed=42, epochs=epochs)
        models[("tars", name)] = (model, log)

        class _Predictor:
            def __init__(self, m, cands):
                self.m, self.cands = m, cands

            def predict(self, sentence, context=None):
                return tars_predict(self.m, sentence, self.cands)

        cands = [(label, verb[label]) for label in corpus.labels]
        results[("tars", name)] = evaluate_model(
            _Predictor(model, cands), corpus.test, labels=corpus.labels).micro_f1

    return results, models


def test_a1_crf_oracle_equivalence():
    rng = np.random.default_rng(101)
    started = time.perf_counter()
    worst_z = 0.0
    paths_checked = 0
    for _ in range(200):
        n = int(rng.integers(1, 6))
        k = int(rng.integers(1, 5))
        e = rng.uniform(-2, 2, (n, k))
        t = rng.uniform(-2, 2, (k + 2, k + 2))
        worst_z = max(worst_z, abs(crf.crf_log_partition(e, t) - crf.brute_force_partition(e, t)))
        v_path, v_score = crf.viterbi(e, t)
        b_path, b_score = crf.brute_force_best(e, t)
        assert abs(v_score - b_score) < 1e-9
        runner_up = max((s for p, s in crf._enumerate_scores(e, t) if p != b_path),
                        default=-np.inf)
        if b_score - runner_up > 1e-9:
            assert v_path == b_path
            paths_checked += 1
    elapsed = time.perf_counter() - started
    _report("A1", worst_z < 1e-8 and elapsed < 10.0,
            f"200 instances, worst |logZ - brute| = {worst_z:.2e}, "
            f"{paths_checked} unique-max paths equal, {elapsed:.1f}s")


def test_a2_gradient_checks(ack_sentences):
    started = time.perf_counter()
    labels = ["FUND", "GRNB", "IND", "UNI"]

    cfg = CharLMConfig(hidden_size=4, embed_dim=4, seed=3)
    stack = EmbeddingStack([
        StaticEmbedder(random_static_table({w for s in ack_sentences for w in s.words}, 3, 5)),
        ContextualEmbedder(CharLM.init("forward", cfg), CharLM.init("backward", cfg)),
    ])
    model = TaggerModel.build(TaggerConfig(family="flair-stack", hidden_size=4), labels,
                              seed=9, stack=stack)

    def bilstm_crf_batch_loss():
        total = None
        for s in ack_sentences:
            loss = model.loss(s)
            total = loss if total is None else T.add(total, loss)
        return total

    err_crf = T.grad_check(bilstm_crf_batch_loss, model.parameters(), eps=1e-4)

    from acklab.tagger import build_vocab
    from acklab.tars import SEP, TarsModel, reformulate_sentences

    verb = {"FUND": "Funding Agency", "IND": "Person", "GRNB": "Grant Number",
            "UNI": "University"}
    instances = reformulate_sentences(ack_sentences, labels, verb)[:4]
    vocab = build_vocab(ack_sentences,
                        extra=[SEP] + sorted({w for p in verb.values() for w in p.split()}))
    tars_model = TarsModel.build(TarsConfig(model_dim=8, n_layers=1, n_heads=2, ffn_dim=12,
                                            max_positions=32), vocab, verb, seed=4)

    def tars_batch_loss():
        total = None
        for inst in instances:
            loss = tars_model.loss(inst)
            total = loss if total is None else T.add(total, loss)
        return total

    err_tars = T.grad_check(tars_batch_loss, tars_model.parameters(), eps=1e-4)
    elapsed = time.perf_counter() - started
    _report("A2", err_crf < 1e-4 and err_tars < 1e-4 and elapsed < 60.0,
            f"BiLSTM-CRF max rel err {err_crf:.2e}, TARS {err_tars:.2e}, {elapsed:.1f}s")


def test_a3_codec_properties(tmp_path):
    rng = np.random.default_rng(303)
    for _ in range(1000):
        spans, n = _random_span_sentence(rng)
        sent = make_sentence([f"w{i}" for i in range(n)], spans)
        decoded, repairs = decode_bioes(encode_bioes(sent))
        assert sorted(decoded) == sorted(spans) and repairs == 0
    for _ in range(1000):
        tags = [ALL_TAGS[int(i)] for i in rng.integers(0, len(ALL_TAGS), int(rng.integers(1, 15)))]
        decoded, _ = decode_bioes(tags)
        ordered = sorted(decoded)
        assert all(0 <= s.start < s.end <= len(tags) for s in ordered)
        assert all(a.end <= b.start for a, b in zip(ordered, ordered[1:]))
    corpus = synth.generate_synthetic(synth.default_templates(), synth.default_vocab(),
                                      (25, 5, 5), seed=17)
    text = write_conll(corpus.train)
    assert write_conll(parse_conll(text)) == text
    path = tmp_path / "roundtrip.conll"
    path.write_text(text, encoding="utf-8")
    assert write_conll(parse_conll(path.read_text(encoding="utf-8"))) == text
    _report("A3", True, "1000 span sets round-trip, decode total/non-overlapping on 1000 "
                        "raw sequences, CoNLL byte-identical")


def test_a4_scorer_oracle():
    gold = [make_sentence([f"w{i}" for i in range(8)],
                          [Span(0, 2, "FUND"), Span(5, 6, "IND")], {"sent_id": "a"})]
    report = score_spans(gold, {"a": [Span(0, 2, "FUND"), Span(5, 7, "IND")]})
    hand = (report.classes["FUND"].f1 == 1.0 and report.classes["IND"].f1 == 0.0
            and report.micro.precision == 0.5 and report.micro.recall == 0.5
            and report.micro_f1 == 0.5)
    perfect = score_spans(gold, {"a": [Span(0, 2, "FUND"), Span(5, 6, "IND")]})
    nothing = score_spans(gold, {"a": []})
    _report("A4", hand and perfect.micro_f1 == 1.0 and nothing.micro_f1 == 0.0
            and nothing.micro.precision == 0.0,
            "hand count tp=1 fp=1 fn=1 -> micro 0.5; perfect -> 1.0; empty -> 0.0")


def test_a5_overfit_sanity():
    started = time.perf_counter()
    corpus = synth.generate_synthetic(synth.default_templates(), synth.default_vocab(),
                                      (60, 20, 20), seed=3)
    stack = _build_stack(corpus)
    opt = T.OptimizerConfig(algorithm="sgd", learning_rate=0.1, patience=8, clip_norm=5.0)
    model, log = train(TaggerConfig(family="flair-stack", hidden_size=32), corpus, opt,
                       seed=1, epochs=200, stack=stack, stop_at_train_f1=0.95)
    elapsed = time.perf_counter() - started
    train_f1 = log[-1]["train_f1"]
    thanked = next(s for s in corpus.train
                   if s.words[:2] == ["We", "thank"] and len(s.spans) == 1
                   and s.spans[0].label == "IND")
    pred = model.predict(thanked)
    _report("A5", train_f1 >= 0.95 and len(log) <= 200 and elapsed < 600.0
            and pred.spans == sorted(thanked.spans),
            f"train micro-F1 {train_f1:.3f} after {len(log)} epochs in {elapsed:.0f}s; "
            f"training sentence {thanked.sent_id} predicted exactly")


def test_a6_corpus_size_monotonicity(scale_results):
    results, _ = scale_results
    families = ("flair-stack", "mini-transformer-finetune", "tars")
    details = []
    all_non_decreasing = True
    strict_improvements = 0
    for family in families:
        small_f1 = results[(family, "small")]
        big_f1 = results[(family, "big")]
        details.append(f"{family}: {small_f1:.3f} -> {big_f1:.3f}")
        if big_f1 + 1e-9 < small_f1:
            all_non_decreasing = False
        if big_f1 - small_f1 >= 0.05:
            strict_improvements += 1
    _report("A6", all_non_decreasing and strict_improvements >= 2,
            "; ".join(details) + f" ({strict_improvements}/3 improved by >= 0.05)")


def test_a7_tars_mechanism(scale_corpora, scale_results):
    small, _ = scale_corpora
    _, models = scale_results
    model, log = models[("tars", "small")]
    completed = len(log) == 20 and all("dev_f1" in entry for entry in log)

    unseen = [("AWARD", "Prize Name"), ("VESSEL", "Research Vessel"),
              ("SOFT", "Software Tool")]
    valid = True
    for sent in small.test[:20]:
        spans = tars_predict(model, sent, unseen)
        ordered = sorted(spans)
        valid &= all(0 <= s.start < s.end <= len(sent) for s in ordered)
        valid &= all(a.end <= b.start for a, b in zip(ordered, ordered[1:]))

    identity = True
    for sent in small.test:
        base = tars_predict(model, sent, [("IND", "Person")])
        alias = tars_predict(model, sent, [("SOMEBODY", "Person")])
        identity &= ([(s.start, s.end) for s in base] == [(s.start, s.end) for s in alias])

    _report("A7", completed and valid and identity,
            f"few-shot training completed ({len(log)} epochs logged); zero-shot spans valid "
            f"on a disjoint label set; verbalization-identity invariant holds")


def test_a8_ablation_plumbing(tmp_path):
    corpora = tmp_path / "corpora"
    save_corpus(synth.generate_synthetic(synth.default_templates(), synth.default_vocab(),
                                         (29, 10, 10), seed=11, proportions=PROPS),
                corpora / "no1")
    save_corpus(synth.generate_synthetic(synth.default_templates(), synth.default_vocab(),
                                         (339, 150, 165), seed=11, proportions=PROPS),
                corpora / "no2")

    grid_text = resources.files("acklab").joinpath("data/default_grid.manifest").read_text("utf-8")
    grid = parse_manifest(grid_text)
    grid_result = run_experiment(grid, tmp_path / "grid-out", base_dir=tmp_path,
                                 epochs_override=1)
    six_columns = grid_result.ok and grid_result.comparison is not None \
        and len(grid_result.comparison.columns) == 6

    ablation_text = (
        "run.org-merge.family = flair-stack\n"
        "run.org-merge.corpus = corpora/no1\n"
        "run.org-merge.ablation = org-merge\n"
        "run.org-merge.epochs = 1\n"
        "run.org-merge.charlm.epochs = 1\n"
        "run.no-misc.family = flair-stack\n"
        "run.no-misc.corpus = corpora/no1\n"
        "run.no-misc.ablation = no-misc\n"
        "run.no-misc.epochs = 1\n"
        "run.no-misc.charlm.epochs = 1\n"
    )
    ablations = run_experiment(parse_manifest(ablation_text), tmp_path / "abl-out",
                               base_dir=tmp_path, epochs_override=1)
    by_run = {r.meta["run"]: r for r in ablations.reports}
    org_ok = set(by_run["org-merge"].classes) == {"IND", "GRNB", "ORG"}
    misc_ok = set(by_run["no-misc"].classes) == {"FUND", "COR", "UNI", "IND", "GRNB"}

    _report("A8", six_columns and ablations.ok and org_ok and misc_ok,
            f"default-grid comparison has {len(grid_result.comparison.columns)} columns; "
            f"org-merge report labels {sorted(by_run['org-merge'].classes)}; "
            f"no-misc report labels {sorted(by_run['no-misc'].classes)}")
