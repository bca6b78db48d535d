import pytest

from acklab import synth
from acklab.corpus import corpus_stats, write_conll


@pytest.fixture(scope="module")
def templates():
    return synth.default_templates()


@pytest.fixture(scope="module")
def vocab():
    return synth.default_vocab()


class TestTemplates:
    def test_parse_slots(self):
        tpls = synth.parse_templates("We thank {IND} for comments .\n# comment\n")
        assert len(tpls) == 1
        assert tpls[0].slot_types == ("IND",)

    def test_default_templates_cover_all_types(self, templates, vocab):
        covered = {t for tpl in templates for t in tpl.slot_types}
        assert covered == {"FUND", "COR", "UNI", "IND", "MISC", "GRNB"}
        assert set(vocab) == covered

    def test_undefined_slot_errors(self, vocab):
        tpls = synth.parse_templates("We used {LASER} equipment .")
        with pytest.raises(synth.SynthError, match="LASER"):
            synth.generate_synthetic(tpls, vocab, (2, 1, 1), seed=1)

    def test_template_without_slot_errors(self, vocab):
        tpls = synth.parse_templates("Nothing to see here .")
        with pytest.raises(synth.SynthError, match="slot"):
            synth.generate_synthetic(tpls, vocab, (2, 1, 1), seed=1)


class TestGeneration:
    def test_single_slot_template(self, vocab):
        tpls = synth.parse_templates("We thank {IND} for comments .")
        corpus = synth.generate_synthetic(tpls, vocab, (3, 1, 1), seed=5)
        for sent in corpus.all_sentences():
            assert len(sent.spans) == 1
            assert sent.spans[0].label == "IND"
            assert sent.words[:2] == ["We", "thank"]

    def test_every_sentence_has_an_entity(self, templates, vocab):
        corpus = synth.generate_synthetic(templates, vocab, (40, 10, 10), seed=2)
        assert all(sent.spans for sent in corpus.all_sentences())

    def test_determinism(self, templates, vocab):
        a = synth.generate_synthetic(templates, vocab, (60, 20, 20), seed=7)
        b = synth.generate_synthetic(templates, vocab, (60, 20, 20), seed=7)
        for split in ("train", "dev", "test"):
            assert write_conll(a.split(split)) == write_conll(b.split(split))
            assert [s.meta for s in a.split(split)] == [s.meta for s in b.split(split)]

    def test_seed_changes_output(self, templates, vocab):
        a = synth.generate_synthetic(templates, vocab, (20, 5, 5), seed=1)
        b = synth.generate_synthetic(templates, vocab, (20, 5, 5), seed=2)
        assert write_conll(a.train) != write_conll(b.train)

    def test_sizes_respected(self, templates, vocab):
        corpus = synth.generate_synthetic(templates, vocab, (29, 10, 10), seed=11)
        stats = corpus_stats(corpus)
        assert stats["splits"]["train"]["sentences"] == 29
        assert stats["splits"]["dev"]["sentences"] == 10
        assert stats["splits"]["test"]["sentences"] == 10
        assert stats["total_sentences"] == 49

    def test_larger_corpus_shape(self, templates, vocab):
        # The bigger training corpus: 339 train / 150 dev / 165 test = 654.
        corpus = synth.generate_synthetic(templates, vocab, (339, 150, 165), seed=11)
        stats = corpus_stats(corpus)
        assert stats["splits"]["train"]["sentences"] == 339
        assert stats["splits"]["dev"]["sentences"] == 150
        assert stats["splits"]["test"]["sentences"] == 165
        assert stats["total_sentences"] == 654

    def test_proportions_within_three_points(self, templates, vocab):
        proportions = {"IND": .3, "FUND": .25, "GRNB": .2, "UNI": .15, "MISC": .07, "COR": .03}
        corpus = synth.generate_synthetic(templates, vocab, (800, 100, 100), seed=9,
                                          proportions=proportions)
        counts: dict[str, int] = {}
        for sent in corpus.all_sentences():
            for span in sent.spans:
                counts[span.label] = counts.get(span.label, 0) + 1
        total = sum(counts.values())
        for label, target in proportions.items():
            assert abs(counts.get(label, 0) / total - target) <= 0.03, (label, counts)

    def test_domains_assigned(self, templates, vocab):
        corpus = synth.generate_synthetic(templates, vocab, (30, 5, 5), seed=3)
        domains = {s.meta["domain"] for s in corpus.all_sentences()}
        assert domains <= set(synth.DEFAULT_DOMAIN_WEIGHTS)
        assert len(domains) >= 2

    def test_documents_group_consecutive_sentences(self, templates, vocab):
        corpus = synth.generate_synthetic(templates, vocab, (12, 2, 2), seed=4, doc_size=5)
        sources = [s.meta["source"] for s in corpus.train]
        assert sources[0] == sources[4] and sources[0] != sources[5]
