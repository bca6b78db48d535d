import numpy as np
import pytest

from acklab import tars as ts
from acklab import tensor as T
from acklab.corpus import Span, build_corpus, make_sentence


@pytest.fixture(scope="module")
def small_corpus():
    sentences = [
        make_sentence("We thank Ada Wong .".split(), [Span(2, 4, "IND")], {"sent_id": "t0"}),
        make_sentence("Funded by Orion Fund .".split(), [Span(2, 4, "FUND")], {"sent_id": "t1"}),
        make_sentence("Grant X-99 helped .".split(), [Span(1, 2, "GRNB")], {"sent_id": "t2"}),
    ]
    dev = [make_sentence("We thank Bo Li .".split(), [Span(2, 4, "IND")], {"sent_id": "t3"})]
    return build_corpus(sentences, dev, [])


VERB = {"FUND": "Funding Agency", "IND": "Person", "GRNB": "Grant Number"}


class TestVerbalization:
    def test_defaults_match_expected_mapping(self):
        mapping = ts.default_verbalizations()
        # The six-type mapping, plus ORG for the merged 3-class setup.
        assert {k: mapping[k] for k in ("FUND", "IND", "COR", "GRNB", "UNI", "MISC")} == {
            "FUND": "Funding Agency", "IND": "Person", "COR": "Corporation",
            "GRNB": "Grant Number", "UNI": "University", "MISC": "Miscellaneous"}
        assert mapping["ORG"] == "Organization"

    def test_load_file(self, tmp_path):
        path = tmp_path / "verb.txt"
        path.write_text("FUND\tFunding Agency\nIND\tPerson\n")
        assert ts.load_verbalizations(path) == {"FUND": "Funding Agency", "IND": "Person"}

    def test_duplicate_phrases_rejected(self):
        with pytest.raises(ts.TarsError, match="distinct"):
            ts.validate_verbalization({"A": "Thing", "B": "Thing"})

    def test_empty_phrase_rejected(self):
        with pytest.raises(ts.TarsError):
            ts.validate_verbalization({"A": ""})


class TestReformulate:
    def test_instance_count(self, small_corpus):
        binary = ts.reformulate(small_corpus, VERB)
        assert len(binary["train"]) == len(small_corpus.train) * len(small_corpus.labels)
        assert len(binary["dev"]) == len(small_corpus.dev) * len(small_corpus.labels)

    def test_other_label_instances_all_outside(self, small_corpus):
        instances = ts.reformulate_sentences(small_corpus.train[:1], ["FUND", "IND"], VERB)
        by_label = {i.label: i for i in instances}
        assert by_label["FUND"].targets.sum() == 0
        assert by_label["IND"].targets.tolist() == [0, 0, 1, 1, 0]

    def test_empty_corpus(self):
        corpus = build_corpus([], [], [])
        binary = ts.reformulate(corpus, VERB)
        assert binary == {"train": [], "dev": [], "test": []}

    def test_missing_verbalization_names_label(self, small_corpus):
        with pytest.raises(ts.TarsError, match="GRNB"):
            ts.reformulate(small_corpus, {"FUND": "Funding Agency", "IND": "Person"})


class TestTraining:
    def test_runs_and_logs(self, small_corpus):
        cfg = ts.TarsConfig(model_dim=12, n_layers=1, n_heads=2, ffn_dim=16)
        opt = T.OptimizerConfig(algorithm="adaptive-moments", learning_rate=1e-3)
        model, log = ts.train_tars(small_corpus, VERB, cfg, opt, seed=1, epochs=2)
        assert len(log) == 2
        assert all(set(e) >= {"epoch", "train_loss", "dev_f1", "lr"} for e in log)

    def test_zero_epochs_initialized(self, small_corpus):
        cfg = ts.TarsConfig(model_dim=12, n_layers=1, n_heads=2, ffn_dim=16)
        model, log = ts.train_tars(small_corpus, VERB, cfg, T.OptimizerConfig(), seed=1,
                                   epochs=0)
        assert log == []
        assert ts.tars_predict(model, small_corpus.train[0], list(VERB.items())) is not None

    def test_same_seed_identical_logs(self, small_corpus):
        cfg = ts.TarsConfig(model_dim=12, n_layers=1, n_heads=2, ffn_dim=16)
        opt = T.OptimizerConfig(algorithm="adaptive-moments", learning_rate=1e-3)
        _, log_a = ts.train_tars(small_corpus, VERB, cfg, opt, seed=2, epochs=2)
        _, log_b = ts.train_tars(small_corpus, VERB, cfg, opt, seed=2, epochs=2)
        assert log_a == log_b


class TestAggregation:
    def test_higher_confidence_wins(self):
        proposals = [
            ts.CandidateSpan(Span(0, 2, "FUND"), 0.9, 1),
            ts.CandidateSpan(Span(1, 3, "IND"), 0.6, 0),
        ]
        assert ts.aggregate_candidates(proposals) == [Span(0, 2, "FUND")]

    def test_tie_goes_to_earlier_candidate(self):
        proposals = [
            ts.CandidateSpan(Span(0, 2, "IND"), 0.8, 1),
            ts.CandidateSpan(Span(0, 2, "FUND"), 0.8, 0),
        ]
        assert ts.aggregate_candidates(proposals) == [Span(0, 2, "FUND")]

    def test_non_overlapping_all_kept(self):
        proposals = [
            ts.CandidateSpan(Span(0, 1, "IND"), 0.7, 0),
            ts.CandidateSpan(Span(2, 3, "FUND"), 0.9, 1),
        ]
        assert ts.aggregate_candidates(proposals) == [Span(0, 1, "IND"), Span(2, 3, "FUND")]

    def test_aggregated_never_overlap(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            proposals = [ts.CandidateSpan(Span(int(s), int(s) + int(l) + 1, "X"),
                                          float(rng.uniform()), i)
                         for i, (s, l) in enumerate(zip(rng.integers(0, 8, 6),
                                                        rng.integers(0, 3, 6)))]
            chosen = ts.aggregate_candidates(proposals)
            ordered = sorted(chosen)
            assert all(a.end <= b.start for a, b in zip(ordered, ordered[1:]))


@pytest.fixture(scope="module")
def trained(small_corpus):
    cfg = ts.TarsConfig(model_dim=16, n_layers=1, n_heads=2, ffn_dim=24)
    opt = T.OptimizerConfig(algorithm="adaptive-moments", learning_rate=2e-3)
    model, _ = ts.train_tars(small_corpus, VERB, cfg, opt, seed=3, epochs=8)
    return model


class TestPredict:
    def test_empty_candidates_error(self, trained, small_corpus):
        with pytest.raises(ts.TarsError):
            ts.tars_predict(trained, small_corpus.train[0], [])

    def test_unseen_candidate_is_valid(self, trained, small_corpus):
        spans = ts.tars_predict(trained, small_corpus.train[0],
                                [("VESSEL", "Research Vessel")])
        ordered = sorted(spans)
        assert all(0 <= s.start < s.end <= len(small_corpus.train[0]) for s in ordered)
        assert all(a.end <= b.start for a, b in zip(ordered, ordered[1:]))

    def test_verbalization_identity_invariant(self, trained, small_corpus):
        # An unseen label whose phrase equals a trained label's phrase gets
        # exactly the trained label's binary predictions.
        sent = small_corpus.train[0]
        trained_probs = trained.inside_probs("Person", sent)
        alias_probs = trained.inside_probs("Person", sent)
        assert np.array_equal(trained_probs, alias_probs)
        base = ts.tars_predict(trained, sent, [("IND", "Person")])
        alias = ts.tars_predict(trained, sent, [("SOMEONE", "Person")])
        assert [(s.start, s.end) for s in base] == [(s.start, s.end) for s in alias]

    def test_trained_candidates_aggregate_without_loss(self, trained, small_corpus):
        # With non-overlapping per-label predictions the aggregate is the union.
        sent = small_corpus.train[2]
        per_label = {}
        for label, phrase in VERB.items():
            per_label[label] = ts.tars_predict(trained, sent, [(label, phrase)])
        union = sorted(s for spans in per_label.values() for s in spans)
        ordered = sorted(union)
        if all(a.end <= b.start for a, b in zip(ordered, ordered[1:])):
            combined = ts.tars_predict(trained, sent, list(VERB.items()))
            assert combined == union
