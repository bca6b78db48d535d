import pytest

from acklab.corpus import Span, make_sentence


@pytest.fixture
def ack_sentences():
    return [
        make_sentence("We thank Ada Wong for comments .".split(),
                      [Span(2, 4, "IND")], {"sent_id": "s0"}),
        make_sentence("Funded by Orion Fund under grant X-99 .".split(),
                      [Span(2, 4, "FUND"), Span(6, 7, "GRNB")], {"sent_id": "s1"}),
        make_sentence("Support from Vega College is acknowledged .".split(),
                      [Span(2, 4, "UNI")], {"sent_id": "s2"}),
    ]
